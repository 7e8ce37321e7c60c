//! Reusable correctness checks. Each returns a one-line summary on success
//! and a description of the first counterexample on failure.

use std::collections::HashSet;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relprove::autodiff::{finite_difference_check, gaussian_kernel};
use relprove::complex::{complex_score, complex_score_on_tape};
use relprove::generator::nns::{nns_complete, nns_order};
use relprove::generator::storage::{capacities, Provenance};
use relprove::generator::{sample_sequences, sequence_loss_on_tape, train_generator_step, GeneratorModel};
use relprove::kb::{split_dataset, Atom, ConstId, ItemId, KbView, KnowledgeBase, PredId, Triple};
use relprove::prover::{
    loss_on_tape, sample_negatives, score_on_tape, training_loss, HighQualityBuffer, HqEntry, LossContext,
    ProofSearch, ProofState,
};
use relprove::trainer::{select_kbs, selection_cap};
use relprove::{
    compute_auc_pr, prove_goal, Adam, Embeddings, KernelTable, LogicPredicates, ParameterStore, ProverConfig,
    RelationStorage,
};

use super::oracle::{auc_pr_sweep, nns_brute_force, thresholded_max, tie_distance, ProofEnumerator};
use super::{random_instance, random_triple, Instance};

pub type Check = Result<String, String>;

/// Minimum gap between competing min/max candidates for gradient checks.
pub const TIE_GAP: f64 = 1e-3;
pub const FD_TOL: f64 = 1e-4;
const FD_EPS: f64 = 1e-6;

/// A random sub-view, the full KB about a third of the time.
fn random_view(inst: &Instance, rng: &mut impl Rng) -> (KbView, HashSet<ItemId>) {
    let items: Vec<ItemId> = if rng.gen_bool(0.35) {
        inst.all_items()
    } else {
        inst.all_items().into_iter().filter(|_| rng.gen_bool(0.7)).collect()
    };
    (KbView::from_items(&inst.kb, items.iter().copied()), items.into_iter().collect())
}

fn random_goal(inst: &Instance, rng: &mut impl Rng) -> Atom {
    if rng.gen_bool(0.5) && !inst.kb.facts().is_empty() {
        inst.kb.facts()[rng.gen_range(0..inst.kb.facts().len())].atom()
    } else {
        random_triple(rng, inst.num_predicates, inst.num_constants).atom()
    }
}

/// `prove_goal` (plain and bounded) against exhaustive enumeration on
/// `n` random KBs with up to 12 facts, 3 rules and depth 2.
pub fn prover_matches_enumeration(n: u64) -> Check {
    let mut goals = 0;
    let mut proved = 0;
    for seed in 0..n {
        let inst = random_instance(seed, 12, 3, 3, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let config = ProverConfig {
            max_depth: rng.gen_range(1..=2),
            seted_min_score: [0.0, 0.2, 0.4, 0.6][rng.gen_range(0..4)],
            beam_cap: None,
        };
        let (view, items) = random_view(&inst, &mut rng);
        let kernels = KernelTable::compute(&inst.store, &inst.emb);
        for _ in 0..3 {
            let goal = random_goal(&inst, &mut rng);
            let scores = ProofEnumerator::new(&inst.kb, &items, &inst.store, &inst.emb).proof_scores(&goal, config.max_depth);
            let expected = thresholded_max(&scores, config.seted_min_score);
            let (got, _, _) = prove_goal(&goal, &inst.kb, &view, &kernels, &config);
            let bounded = ProofSearch::new(&inst.kb, &view, &kernels, &config).with_bound().prove(&goal);
            goals += 1;
            proved += (expected > 0.0) as usize;
            for (what, v) in [("prove_goal", got.score), ("bounded search", bounded.score)] {
                if (v - expected).abs() > 1e-9 {
                    return Err(format!(
                        "seed {seed}: {what} gave {v}, enumeration {expected} ({} proofs, {config:?})",
                        scores.len()
                    ));
                }
            }
            let mut tape = relprove::Tape::new();
            let replay = score_on_tape(&mut tape, &inst.store, &inst.emb, &got);
            if (tape.scalar(replay) - got.score).abs() > 1e-12 {
                return Err(format!("seed {seed}: witness kernel does not reproduce the score"));
            }
        }
    }
    Ok(format!("{n} KBs, {goals} goals ({proved} provable) agree to 1e-9"))
}

/// Threshold 0 over the full KB equals the plain max-min over all proofs.
pub fn unthresholded_matches_ntp(n: u64) -> Check {
    let mut goals = 0;
    for seed in 0..n {
        let inst = random_instance(seed, 12, 3, 3, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11);
        let config = ProverConfig { max_depth: rng.gen_range(1..=2), seted_min_score: 0.0, beam_cap: None };
        let view = inst.kb.full_view();
        let items: HashSet<ItemId> = inst.all_items().into_iter().collect();
        let kernels = KernelTable::compute(&inst.store, &inst.emb);
        for _ in 0..3 {
            let goal = random_goal(&inst, &mut rng);
            let scores = ProofEnumerator::new(&inst.kb, &items, &inst.store, &inst.emb).proof_scores(&goal, config.max_depth);
            let ntp = scores.iter().copied().fold(0.0, f64::max);
            let (got, _, _) = prove_goal(&goal, &inst.kb, &view, &kernels, &config);
            goals += 1;
            if (got.score - ntp).abs() > 1e-9 {
                return Err(format!("seed {seed}: prover {} vs unrestricted {ntp}", got.score));
            }
        }
    }
    Ok(format!("{n} KBs, {goals} goals agree with the unrestricted max-min"))
}

/// `compute_auc_pr` against an explicit threshold sweep, `n <= 64`.
pub fn auc_matches_sweep(cases: u64) -> Check {
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=64);
        // a coarse grid half the time, to force ties
        let grid = rng.gen_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if grid { rng.gen_range(0..5) as f64 / 4.0 } else { rng.gen::<f64>() })
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let i = rng.gen_range(0..n);
        labels[i] = true;
        let got = compute_auc_pr(&scores, &labels).map_err(|e| format!("seed {seed}: {e}"))?;
        let want = auc_pr_sweep(&scores, &labels);
        if (got - want).abs() > 1e-9 {
            return Err(format!("seed {seed}: {got} vs sweep {want}"));
        }
    }
    Ok(format!("{cases} random inputs with n <= 64 agree to 1e-9"))
}

/// `nns_order` and `nns_complete` against a quadratic brute force on
/// instances of 5 to 20 items.
pub fn nns_matches_brute_force(instances: u64) -> Check {
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
        let target = rng.gen_range(5..=20);
        let mut facts = HashSet::new();
        while facts.len() < target {
            facts.insert(random_triple(&mut rng, 3, 6));
        }
        let mut facts: Vec<Triple> = facts.into_iter().collect();
        facts.sort();
        let kb = KnowledgeBase::new(facts, vec![]);
        let mut store = ParameterStore::new();
        let emb = Embeddings::allocate(&mut store, 3, 6, 3);
        for id in [emb.predicates, emb.constants] {
            for x in store.get_mut(id).data.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        let mut ids: Vec<ItemId> = kb.item_ids().collect();
        ids.shuffle(&mut rng);
        let n_anchor = rng.gen_range(1..=ids.len() / 2);
        let mut hq = HighQualityBuffer::new();
        for &item in &ids[..n_anchor] {
            hq.record(HqEntry {
                item,
                score: rng.gen_range(0.1..1.0),
                depth: rng.gen_range(1..=3),
                goal: PredId(rng.gen_range(0..3)),
            });
        }
        let anchors: Vec<ItemId> = ids[..n_anchor].to_vec();
        let all: Vec<ItemId> = kb.item_ids().collect();
        let want = nns_brute_force(&kb, &anchors, &all, &store, &emb);
        let got = nns_order(&hq, &kb, &all, &store, &emb);
        let got_pairs: Vec<(ItemId, f64)> = got.iter().map(|c| (c.item, c.distance)).collect();
        if got_pairs.len() != want.len()
            || got_pairs.iter().zip(&want).any(|(a, b)| a.0 != b.0 || (a.1 - b.1).abs() > 1e-12)
        {
            return Err(format!("seed {seed}: order {got_pairs:?} vs brute force {want:?}"));
        }
        for c in &got {
            let direct = anchors
                .iter()
                .map(|a| {
                    let d = super::oracle::item_vector(&kb, *a, &store, &emb);
                    let v = super::oracle::item_vector(&kb, c.item, &store, &emb);
                    d.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            let anchor_d = {
                let d = super::oracle::item_vector(&kb, c.anchor.item, &store, &emb);
                let v = super::oracle::item_vector(&kb, c.item, &store, &emb);
                d.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            };
            if (anchor_d - direct).abs() > 1e-12 {
                return Err(format!("seed {seed}: anchor of {:?} is not a nearest one", c.item));
            }
        }
        // completion adds a prefix of that order, stopping once full
        let mut storage = RelationStorage::new(vec![1, 1, 1], 1, rng.gen_range(1..=3));
        let added = nns_complete(&mut storage, &hq, &kb, &all, &store, &emb, |i| kb.head_predicate(i));
        let prefix: Vec<ItemId> = want.iter().take(added.len()).map(|w| w.0).collect();
        if added != prefix || (added.len() < want.len() && !storage.is_full()) {
            return Err(format!("seed {seed}: completion added {added:?}, expected a prefix of {prefix:?}"));
        }
        if storage.layers().iter().flatten().any(|e| e.provenance != Provenance::Nns || e.score > 1.0) {
            return Err(format!("seed {seed}: completion entry with wrong provenance or score"));
        }
    }
    Ok(format!("{instances} instances of 5-20 items match the quadratic sort"))
}

fn random_store(rng: &mut impl Rng, np: usize, nc: usize, dim: usize, spread: f64) -> (ParameterStore, Embeddings) {
    let mut store = ParameterStore::new();
    let emb = Embeddings::allocate(&mut store, np, nc, dim);
    for id in [emb.predicates, emb.constants] {
        for x in store.get_mut(id).data.iter_mut() {
            *x = rng.gen_range(-spread..spread);
        }
    }
    (store, emb)
}

fn worst(name: &str, errs: &[f64]) -> Check {
    let w = errs.iter().copied().fold(0.0, f64::max);
    if errs.is_empty() {
        return Err(format!("{name}: no instance checked"));
    }
    if w < FD_TOL {
        Ok(format!("{name} {} cases, worst {w:.1e}", errs.len()))
    } else {
        Err(format!("{name}: relative error {w:.3e}"))
    }
}

pub fn fd_gaussian_kernel(cases: u64) -> Check {
    let mut errs = Vec::new();
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(1..=8);
        let data: Vec<f64> = (0..2 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut store = ParameterStore::new();
        let id = store.add("x", 2, dim, data);
        let value = gaussian_kernel(store.row(id, 0), store.row(id, 1));
        let mut tape = relprove::Tape::new();
        let (u, v) = (tape.param_row(&store, id, 0), tape.param_row(&store, id, 1));
        let k = tape.kernel(u, v);
        if (tape.scalar(k) - value).abs() > 1e-12 {
            return Err(format!("seed {seed}: tape kernel differs from gaussian_kernel"));
        }
        errs.push(finite_difference_check(
            |s, t| {
                let u = t.param_row(s, id, 0);
                let v = t.param_row(s, id, 1);
                t.kernel(u, v)
            },
            &store,
            FD_EPS,
            32,
            seed,
        ));
    }
    worst("gaussian_kernel", &errs)
}

pub fn fd_complex_score(cases: u64) -> Check {
    let mut errs = Vec::new();
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 2 * rng.gen_range(1..=4);
        let (store, emb) = random_store(&mut rng, 3, 4, dim, 1.0);
        let (h, r, t) = (ConstId(rng.gen_range(0..4)), PredId(rng.gen_range(0..3)), ConstId(rng.gen_range(0..4)));
        let value = complex_score(&store, &emb, h, r, t).map_err(|e| e.to_string())?;
        let mut tape = relprove::Tape::new();
        let v = complex_score_on_tape(&mut tape, &store, &emb, h, r, t).map_err(|e| e.to_string())?;
        if (tape.scalar(v) - value).abs() > 1e-12 {
            return Err(format!("seed {seed}: tape score differs from complex_score"));
        }
        errs.push(finite_difference_check(
            |s, tp| complex_score_on_tape(tp, s, &emb, h, r, t).expect("symbols in range"),
            &store,
            FD_EPS,
            48,
            seed,
        ));
    }
    worst("complex_score", &errs)
}

/// Proof-score gradients on random provable goals whose best proof is at
/// least [`TIE_GAP`] away from any change of minimiser or maximiser.
pub fn fd_prove_goal(wanted: usize) -> Check {
    let mut errs = Vec::new();
    let mut seed = 0;
    while errs.len() < wanted && seed < 20 * wanted as u64 {
        seed += 1;
        let inst = random_instance(seed, 10, 3, 3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
        let config = ProverConfig {
            max_depth: rng.gen_range(1..=2),
            seted_min_score: [0.0, 0.2][rng.gen_range(0..2)],
            beam_cap: None,
        };
        let view = inst.kb.full_view();
        let items: HashSet<ItemId> = inst.all_items().into_iter().collect();
        let goal = random_goal(&inst, &mut rng);
        let proofs = ProofEnumerator::new(&inst.kb, &items, &inst.store, &inst.emb).proofs(&goal, config.max_depth);
        let best = proofs.iter().map(|p| p.score()).fold(0.0, f64::max);
        if best < config.seted_min_score.max(1e-6) || best >= 1.0 || tie_distance(&proofs, config.seted_min_score) <= TIE_GAP {
            continue;
        }
        let emb = inst.emb;
        errs.push(finite_difference_check(
            |s, t| {
                let k = KernelTable::compute(s, &emb);
                let (ps, _, _) = prove_goal(&goal, &inst.kb, &view, &k, &config);
                score_on_tape(t, s, &emb, &ps)
            },
            &inst.store,
            FD_EPS,
            40,
            seed,
        ));
    }
    worst("prove_goal", &errs)
}

/// Gradients of the batch loss, on batches where every proof involved is
/// clear of ties.
pub fn fd_training_loss(wanted: usize) -> Check {
    let mut errs = Vec::new();
    let mut seed = 0;
    while errs.len() < wanted && seed < 40 * wanted as u64 {
        seed += 1;
        let inst = random_instance(seed, 8, 2, 3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1055);
        let config = ProverConfig { max_depth: rng.gen_range(1..=2), seted_min_score: 0.0, beam_cap: None };
        let facts = inst.kb.facts().to_vec();
        let known: HashSet<Triple> = facts.iter().copied().collect();
        let positives: Vec<Triple> = facts.choose_multiple(&mut rng, 2.min(facts.len())).copied().collect();
        let negatives: Vec<Vec<Triple>> = positives
            .iter()
            .map(|p| sample_negatives(p, &known, inst.num_constants, 2, &mut rng))
            .collect();
        let clear = positives.iter().zip(&negatives).all(|(p, negs)| {
            let mut items: HashSet<ItemId> = inst.all_items().into_iter().collect();
            if let Some(id) = inst.kb.fact_id(p) {
                items.remove(&id);
            }
            std::iter::once(p).chain(negs).all(|g| {
                let proofs = ProofEnumerator::new(&inst.kb, &items, &inst.store, &inst.emb).proofs(&g.atom(), config.max_depth);
                let best = proofs.iter().map(|p| p.score()).fold(0.0, f64::max);
                proofs.is_empty() || (best > 1e-3 && best < 1.0 - 1e-3 && tie_distance(&proofs, 0.0) > TIE_GAP)
            })
        });
        if !clear || positives.is_empty() {
            continue;
        }
        let view = inst.kb.full_view();
        let kernels = KernelTable::compute(&inst.store, &inst.emb);
        let emb = inst.emb;
        let ctx = LossContext { kb: &inst.kb, view: &view, kernels: &kernels, config: &config, store: &inst.store, emb: &emb };
        let batch = training_loss(&ctx, &positives, &negatives);
        let mut tape = relprove::Tape::new();
        let v = loss_on_tape(&mut tape, &ctx, &positives, &negatives);
        if (tape.scalar(v) - batch.loss).abs() > 1e-9 {
            return Err(format!("seed {seed}: batch loss {} vs tape {}", batch.loss, tape.scalar(v)));
        }
        errs.push(finite_difference_check(
            |s, t| {
                let k = KernelTable::compute(s, &emb);
                let c = LossContext { kb: &inst.kb, view: &view, kernels: &k, config: &config, store: s, emb: &emb };
                loss_on_tape(t, &c, &positives, &negatives)
            },
            &inst.store,
            FD_EPS,
            48,
            seed,
        ));
    }
    worst("training_loss", &errs)
}

fn generator_setup(seed: u64, np: usize, dim: usize) -> (ParameterStore, Embeddings, ParameterStore, GeneratorModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rel, emb) = random_store(&mut rng, np, 2, dim, 1.0);
    let mut store = ParameterStore::new();
    let model = GeneratorModel::init(&mut store, dim, np, &mut rng);
    (rel, emb, store, model)
}

pub fn fd_gru_step(cases: u64) -> Check {
    let mut errs = Vec::new();
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x64);
        let np = rng.gen_range(2..=6);
        let (rel, emb, store, model) = generator_setup(seed, np, rng.gen_range(2..=5));
        let p = |rng: &mut ChaCha8Rng| PredId(rng.gen_range(0..np as u32));
        let (goal, prev, cur, target) = (p(&mut rng), p(&mut rng), p(&mut rng), p(&mut rng));
        errs.push(finite_difference_check(
            |s, t| {
                let h = model.init_hidden_on_tape(t, s, &rel, &emb, goal);
                let (hn, logits) = model.step_on_tape(t, s, &rel, &emb, h, prev, cur);
                let nll = t.neg_log_softmax(logits, target.index());
                let hs = t.sum(hn);
                t.add(nll, hs)
            },
            &store,
            FD_EPS,
            80,
            seed,
        ));
    }
    worst("gru_step", &errs)
}

/// The loss `train_generator_step` reports and differentiates is the
/// teacher-forced loss of the sequences it samples.
pub fn fd_train_generator_step(cases: u64) -> Check {
    let mut errs = Vec::new();
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e);
        let np = rng.gen_range(2..=5);
        let (rel, emb, store, model) = generator_setup(seed, np, rng.gen_range(2..=4));
        let mut storage = RelationStorage::new(vec![2, 2], 2, 16);
        for _ in 0..12 {
            let pred = PredId(rng.gen_range(0..np as u32));
            let goal = PredId(rng.gen_range(0..np as u32));
            storage.insert(rng.gen_range(1..=2), pred, rng.gen_range(0.1..1.0), goal, Provenance::Unify);
        }
        let goals: Vec<PredId> = (0..np as u32).map(PredId).collect();
        let seqs = sample_sequences(&storage, &goals, &mut ChaCha8Rng::seed_from_u64(seed));
        if seqs.is_empty() {
            continue;
        }
        let mut tape = relprove::Tape::new();
        let v = sequence_loss_on_tape(&mut tape, &model, &store, &rel, &emb, &seqs).expect("non-empty");
        let expected = tape.scalar(v);
        let mut trained = store.clone();
        let mut adam = Adam::new(0.01);
        let reported = train_generator_step(
            &storage,
            &goals,
            &model,
            &mut trained,
            &mut adam,
            &rel,
            &emb,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        if (reported - expected).abs() > 1e-12 || trained == store {
            return Err(format!("seed {seed}: step reported {reported}, sequence loss {expected}"));
        }
        errs.push(finite_difference_check(
            |s, t| sequence_loss_on_tape(t, &model, s, &rel, &emb, &seqs).expect("non-empty"),
            &store,
            FD_EPS,
            80,
            seed,
        ));
    }
    worst("train_generator_step", &errs)
}

fn run_property<S: Strategy>(name: &str, cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let ran = std::cell::Cell::new(0u32);
    runner
        .run(&strategy, |v| {
            ran.set(ran.get() + 1);
            test(v)
        })
        .map_err(|e| format!("{name}: {e}"))?;
    if ran.get() < cases {
        return Err(format!("{name}: only {} of {cases} cases ran", ran.get()));
    }
    Ok(format!("{name}: {} cases", ran.get()))
}

/// Layer capacities follow `cap_1 = ep_1 * B`, `cap_l = ep_l * cap_(l-1)`,
/// and no insertion sequence overfills a layer or the total.
pub fn storage_capacity_law(cases: u32) -> Check {
    let strategy = (
        prop::collection::vec(1usize..4, 1..4),
        1usize..6,
        0usize..80,
        prop::collection::vec((1usize..5, 0u32..6, 0.0f64..1.0, 0u32..3), 0..120),
    );
    run_property("storage capacity", cases, strategy, |(ep, b, max, inserts)| {
        let caps = capacities(&ep, b);
        let mut expect = Vec::new();
        let mut prev = b;
        for e in &ep {
            prev *= e;
            expect.push(prev);
        }
        prop_assert_eq!(&caps, &expect);
        let mut s = RelationStorage::new(ep.clone(), b, max);
        prop_assert_eq!(s.effective_max(), max.min(expect.iter().sum()));
        let mut best: Option<f64> = None;
        for (layer, pred, score, goal) in inserts {
            s.insert(layer, PredId(pred), score, PredId(goal), Provenance::Unify);
            for (l, entries) in s.layers().iter().enumerate() {
                prop_assert!(entries.len() <= caps[l]);
                let mut keys = HashSet::new();
                for e in entries {
                    prop_assert!(keys.insert((e.predicate, e.goal)), "duplicate entry in layer {}", l + 1);
                }
            }
            prop_assert!(s.len() <= s.effective_max());
            best = Some(best.map_or(score, |m: f64| m.max(score)));
        }
        if let Some(m) = best {
            if max > 0 {
                let top = s.layers().iter().flatten().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(top, m, "the best entry was evicted");
            }
        }
        Ok(())
    })
}

/// Selected sub-KBs hold at most `ceil(p * |KB|)` items, only with
/// generated head relations, and everything matched when it fits.
pub fn selected_kb_cap(cases: u32) -> Check {
    let strategy = (any::<u64>(), prop_oneof![Just(0.3), 0.0f64..=1.0], prop::collection::vec(0u32..4, 0..4));
    run_property("selected-KB cap", cases, strategy, |(seed, p, gen)| {
        let inst = random_instance(seed, 40, 0, 2, 0.8);
        let kernels = KernelTable::compute(&inst.store, &inst.emb);
        let nr = inst.num_predicates;
        let goal = PredId((seed % nr as u64) as u32);
        let mut lp = LogicPredicates { goal, scores: Default::default() };
        lp.scores.insert(goal, 1.0);
        for (i, g) in gen.iter().enumerate() {
            if (*g as usize) < nr {
                lp.scores.insert(PredId(*g), 0.5 / (i + 1) as f64);
            }
        }
        let sel = select_kbs(&inst.kb, &lp, p, &kernels, nr);
        let cap = ((p * inst.kb.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        prop_assert_eq!(sel.cap, cap);
        prop_assert_eq!(selection_cap(p, inst.kb.len()), cap);
        prop_assert!(sel.view.len() <= cap);
        let allowed: usize = inst
            .kb
            .predicate_index()
            .iter()
            .filter(|(q, _)| lp.contains(**q))
            .map(|(_, v)| v.len())
            .sum();
        prop_assert_eq!(sel.matched, allowed);
        prop_assert_eq!(sel.view.len(), allowed.min(cap));
        for id in sel.view.items() {
            prop_assert!(lp.contains(inst.kb.head_predicate(id)));
        }
        Ok(())
    })
}

fn check_children(
    search: &mut ProofSearch<'_>,
    goals: &[Atom],
    depth: usize,
    parent: &ProofState,
    level: usize,
) -> Result<usize, TestCaseError> {
    let mut n = 0;
    for (i, s) in search.collect_or(&goals[level], depth, parent).into_iter().enumerate() {
        prop_assert!(s.score <= parent.score, "child {} above parent {}", s.score, parent.score);
        prop_assert!(s.score >= 0.0);
        n += 1;
        // descend from a few children only; full fan-out is exponential
        if level + 1 < goals.len() && i < 4 {
            n += check_children(search, goals, depth, &s, level + 1)?;
        }
    }
    Ok(n)
}

/// Along every branch the running score never increases, and proof scores
/// stay in `[0, 1]`.
pub fn proof_score_monotonicity(cases: u32) -> Check {
    let strategy = (any::<u64>(), 1usize..=2, prop_oneof![Just(0.0), 0.0f64..0.6]);
    run_property("proof-score monotonicity", cases, strategy, |(seed, depth, threshold)| {
        let inst = random_instance(seed, 8, 2, 2, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = ProverConfig { max_depth: depth, seted_min_score: threshold, beam_cap: None };
        let view = inst.kb.full_view();
        let kernels = KernelTable::compute(&inst.store, &inst.emb);
        let goals: Vec<Atom> = (0..2).map(|_| random_goal(&inst, &mut rng)).collect();
        let mut search = ProofSearch::new(&inst.kb, &view, &kernels, &config);
        check_children(&mut search, &goals, depth, &ProofState::initial(), 0)?;
        let mut logged = ProofSearch::new(&inst.kb, &view, &kernels, &config).with_proof_log();
        let best = logged.prove(&goals[0]);
        prop_assert!((0.0..=1.0).contains(&best.score));
        for p in logged.logged_proofs() {
            prop_assert!(p.score <= 1.0 && p.score >= threshold);
            prop_assert!(p.score <= best.score);
        }
        Ok(())
    })
}

/// train, valid and test partition the source facts for every seed.
pub fn split_partition_law(cases: u32) -> Check {
    let strategy = (any::<u64>(), 1usize..200, 0.0f64..1.0, 0.0f64..1.0);
    run_property("split partition", cases, strategy, |(seed, n, a, b)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut facts = HashSet::new();
        while facts.len() < n {
            facts.insert(random_triple(&mut rng, 4, 40));
        }
        let facts: Vec<Triple> = facts.into_iter().collect();
        let train = a;
        let valid = (1.0 - train) * b;
        let ratios = [train, valid, 1.0 - train - valid];
        let split = split_dataset(&facts, ratios, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let parts = [&split.train, &split.valid, &split.test];
        prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), facts.len());
        let sets: Vec<HashSet<Triple>> = parts.iter().map(|p| p.iter().copied().collect()).collect();
        for i in 0..3 {
            prop_assert_eq!(sets[i].len(), parts[i].len());
            for j in i + 1..3 {
                prop_assert!(sets[i].is_disjoint(&sets[j]));
            }
        }
        let union: HashSet<Triple> = sets.iter().flatten().copied().collect();
        prop_assert_eq!(union, facts.iter().copied().collect::<HashSet<_>>());
        Ok(())
    })
}
