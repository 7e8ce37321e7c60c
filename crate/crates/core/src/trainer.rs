//! Alternating training of the prover (e-step) and the relation generator
//! (m-step), plus evaluation of a trained state.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Gradients, ParameterStore};
use crate::complex::{pretrain_embeddings, rescale_table, Pretrained};
use crate::config::RunConfig;
use crate::dataset::{load_dataset, resolve_dataset_dir, Dataset};
use crate::embedding::Embeddings;
use crate::error::{Error, Result};
use crate::eval::{compute_auc_pr, compute_mrr_hits, rank_filtered, rank_from_scores, EfficiencyRecord, RankRecord};
use crate::generator::{
    generate_predicates, nns_complete, train_generator_step, update_relation_storage, GeneratorModel, LogicPredicates,
    RelationStorage,
};
use crate::kb::{ConstId, ItemId, KbView, KnowledgeBase, PredId, Triple, Vocab};
use crate::prover::templates::{init_slot_embeddings, instantiate};
use crate::prover::{
    format_proof, sample_negatives, training_loss, HighQualityBuffer, KernelTable, LossContext, ProofSearch, ProverConfig,
    UtilizationCounters,
};

/// Everything about a run that does not change while training.
#[derive(Debug, Clone)]
pub struct TrainContext {
    pub config: RunConfig,
    pub prover: ProverConfig,
    pub dataset: Dataset,
    /// Dataset vocabulary extended with template slots.
    pub vocab: Vocab,
    /// Training facts plus template rules.
    pub kb: KnowledgeBase,
    /// Facts of every split, the filter for corruptions.
    pub known: HashSet<Triple>,
    /// Fixed validation subset ranked after every iteration.
    pub valid_probe: Vec<Triple>,
    /// Region constants for Countries-style tasks.
    pub regions: Option<Vec<ConstId>>,
    items: Vec<ItemId>,
}

impl TrainContext {
    pub fn new(config: RunConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        let prover = config.prover()?;
        let mut vocab = dataset.vocab.clone();
        let rules = instantiate(&config.template_spec()?, &mut vocab);
        let kb = KnowledgeBase::new(dataset.split.train.iter().copied(), rules);
        let known = dataset.known();
        let mut valid_probe = dataset.split.valid.clone();
        valid_probe.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed));
        if config.valid_sample > 0 {
            valid_probe.truncate(config.valid_sample);
        }
        let regions = if dataset.is_countries() { Some(dataset.regions()?) } else { None };
        let items = kb.item_ids().collect();
        Ok(Self { config, prover, dataset, vocab, kb, known, valid_probe, regions, items })
    }

    /// Resolves and loads the configured dataset.
    pub fn from_config(config: RunConfig) -> Result<Self> {
        if config.dataset.is_empty() {
            return Err(Error::Config("no dataset given".into()));
        }
        let dir = resolve_dataset_dir(&config.dataset);
        let dataset = load_dataset(&dir, config.split, config.seed)?;
        Self::new(config, dataset)
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    /// `ceil(proportion * |KB|)`.
    pub fn selection_cap(&self) -> usize {
        selection_cap(self.config.proportion, self.kb.len())
    }

    /// Same context in full-KB baseline mode.
    pub fn as_baseline(&self) -> Self {
        let mut c = self.clone();
        c.config.baseline = true;
        c
    }
}

pub fn selection_cap(proportion: f64, kb_len: usize) -> usize {
    ((proportion * kb_len as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Sub-KB proved against for one goal relation.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedKb {
    pub goal: PredId,
    pub view: KbView,
    pub cap: usize,
    /// Items matching the generated relations before capping.
    pub matched: usize,
}

/// Dataset relation an item counts as: its head relation, or for template
/// rules the relation closest to the head slot.
pub fn relation_of(kb: &KnowledgeBase, kernels: &KernelTable, num_relations: usize, item: ItemId) -> PredId {
    kernels.nearest_relation(kb.head_predicate(item), num_relations)
}

/// Keeps the knowledge whose head relation was generated, capped at
/// `ceil(proportion * |KB|)`. Over the cap, groups with the higher
/// generation score go first, then those whose head is closer to the goal.
pub fn select_kbs(
    kb: &KnowledgeBase,
    predicates: &LogicPredicates,
    proportion: f64,
    kernels: &KernelTable,
    num_relations: usize,
) -> SelectedKb {
    let cap = selection_cap(proportion, kb.len());
    let mut groups: Vec<(f64, f64, PredId, &Vec<ItemId>)> = kb
        .predicate_index()
        .iter()
        .filter_map(|(p, items)| {
            let rel = kernels.nearest_relation(*p, num_relations);
            predicates
                .score(rel)
                .map(|s| (s, kernels.predicate(*p, predicates.goal), *p, items))
        })
        .collect();
    groups.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    let matched = groups.iter().map(|g| g.3.len()).sum();
    let mut left = cap;
    let mut picked = Vec::new();
    for (_, _, p, items) in groups {
        if left == 0 {
            break;
        }
        let take: Vec<ItemId> = items.iter().take(left).copied().collect();
        left -= take.len();
        picked.push((p, take));
    }
    SelectedKb { goal: predicates.goal, view: KbView::from_groups(picked), cap, matched }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub prover_loss: f64,
    pub generator_loss: f64,
    pub valid_mrr: f64,
    pub attp_ms: f64,
    pub utilization: f64,
    pub traversed: u64,
    pub established: u64,
    /// Largest selected sub-KB seen this iteration.
    pub max_selected: usize,
    pub storage_size: usize,
    /// Optimizer step counters at the end of the e-step and the m-step.
    pub prover_steps: u64,
    pub generator_steps: u64,
}

impl IterationRecord {
    pub fn efficiency(&self) -> EfficiencyRecord {
        EfficiencyRecord { traversed: self.traversed, established: self.established, wall_ms: self.attp_ms }
    }
}

/// Columns of `metrics.csv`. Everything here is a pure function of config
/// and seed; wall time goes to `timing.csv` instead.
pub const METRICS_HEADER: &str =
    "iteration,prover_loss,generator_loss,valid_mrr,utilization,traversed,established,max_selected,storage_size";

pub fn metrics_csv(records: &[IterationRecord]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.prover_loss,
            r.generator_loss,
            r.valid_mrr,
            r.utilization,
            r.traversed,
            r.established,
            r.max_selected,
            r.storage_size
        );
    }
    out
}

/// Per-iteration wall time (e-step plus m-step), in milliseconds.
pub fn timing_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,attp_ms\n");
    for r in records {
        let _ = writeln!(out, "{},{}", r.iteration, r.attp_ms);
    }
    out
}

/// Trainable state, replaced wholesale by each iteration.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub iteration: usize,
    pub store: ParameterStore,
    pub emb: Embeddings,
    pub gen_store: ParameterStore,
    pub generator: GeneratorModel,
    pub storage: RelationStorage,
    pub prover_adam: Adam,
    pub gen_adam: Adam,
    pub metrics: Vec<IterationRecord>,
}

/// Pretrains (unless `pretrained` is given) and assembles the initial state.
pub fn initial_state(ctx: &TrainContext, pretrained: Option<&Pretrained>) -> Result<TrainState> {
    let cfg = &ctx.config;
    let owned;
    let pre = match pretrained {
        Some(p) => p,
        None => {
            owned = pretrain_embeddings(&ctx.dataset.split.train, &ctx.dataset.vocab, &cfg.pretrain())?;
            &owned
        }
    };
    let mut pstore = pre.store.clone();
    if cfg.embedding_scale > 0.0 {
        rescale_table(&mut pstore, pre.embeddings.predicates, cfg.embedding_scale);
        rescale_table(&mut pstore, pre.embeddings.constants, cfg.embedding_scale);
    }
    let mut store = ParameterStore::new();
    let emb = Embeddings::allocate(&mut store, ctx.vocab.num_predicates(), ctx.vocab.num_constants(), cfg.dim);
    if pre.embeddings.dim != cfg.dim {
        return Err(Error::Config("pretrained dimension differs from dim".into()));
    }
    for r in 0..ctx.num_relations() {
        let row = pstore.row(pre.embeddings.predicates, r).to_vec();
        store.row_mut(emb.predicates, r).copy_from_slice(&row);
    }
    for c in 0..ctx.vocab.num_constants() {
        let row = pstore.row(pre.embeddings.constants, c).to_vec();
        store.row_mut(emb.constants, c).copy_from_slice(&row);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e3a_11c5);
    init_slot_embeddings(&mut store, &emb, &ctx.vocab, &mut rng, cfg.slot_noise);
    let mut gen_store = ParameterStore::new();
    let generator = GeneratorModel::init(&mut gen_store, cfg.dim, ctx.num_relations(), &mut rng);
    Ok(TrainState {
        iteration: 0,
        store,
        emb,
        gen_store,
        generator,
        storage: RelationStorage::new(cfg.ep.clone(), cfg.batch_size, cfg.max_size()),
        prover_adam: Adam::new(cfg.prover_lr).with_clip_norm(cfg.clip()),
        gen_adam: Adam::new(cfg.generator_lr).with_clip_norm(cfg.clip()),
        metrics: Vec::new(),
    })
}

fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(iteration as u64 + 1))
}

/// Generated relations and selected sub-KB for every goal in `goals`.
/// Baseline mode selects the whole KB.
pub fn select_for_goals(
    ctx: &TrainContext,
    state: &TrainState,
    kernels: &KernelTable,
    goals: &BTreeSet<PredId>,
) -> Result<BTreeMap<PredId, SelectedKb>> {
    if ctx.config.baseline {
        let full = ctx.kb.full_view();
        return Ok(goals
            .iter()
            .map(|g| (*g, SelectedKb { goal: *g, view: full.clone(), cap: ctx.kb.len(), matched: ctx.kb.len() }))
            .collect());
    }
    let goals: Vec<PredId> = goals.iter().copied().collect();
    let selected: Vec<SelectedKb> = goals
        .par_iter()
        .map(|g| {
            let lp = generate_predicates(
                &state.generator,
                &state.gen_store,
                &state.store,
                &state.emb,
                *g,
                ctx.config.width,
                ctx.config.generator_depth,
            )?;
            Ok(select_kbs(&ctx.kb, &lp, ctx.config.proportion, kernels, ctx.num_relations()))
        })
        .collect::<Result<_>>()?;
    Ok(goals.into_iter().zip(selected).collect())
}

/// One e-step followed by one m-step. Works on a copy: on error the input
/// state is untouched.
pub fn em_iteration(ctx: &TrainContext, state: &TrainState) -> Result<TrainState> {
    let cfg = &ctx.config;
    let mut st = state.clone();
    let mut rng = iteration_rng(cfg.seed, st.iteration);
    let start = Instant::now();

    let mut order = ctx.dataset.split.train.clone();
    order.shuffle(&mut rng);
    let mut batches: Vec<&[Triple]> = order.chunks(cfg.batch_size).collect();
    if cfg.max_batches > 0 {
        batches.truncate(cfg.max_batches);
    }
    let nc = ctx.vocab.num_constants();
    let nr = ctx.num_relations();

    let mut counters = UtilizationCounters::default();
    let mut loss_sum = 0.0;
    let mut max_selected = 0;
    for _ in 0..cfg.prover_epochs {
        let mut hq = HighQualityBuffer::new();
        for batch in &batches {
            let kernels = KernelTable::compute(&st.store, &st.emb);
            let goals: BTreeSet<PredId> = batch.iter().map(|f| f.rel).collect();
            let selected = select_for_goals(ctx, &st, &kernels, &goals)?;
            let negatives: Vec<Vec<Triple>> = batch
                .iter()
                .map(|f| sample_negatives(f, &ctx.known, nc, cfg.negatives, &mut rng))
                .collect();
            let mut grads = Gradients::default();
            for (goal, sel) in &selected {
                if sel.view.len() > sel.cap {
                    return Err(Error::Config(format!("selected sub-KB exceeds its cap for {goal}")));
                }
                max_selected = max_selected.max(sel.view.len());
                let (pos, negs): (Vec<Triple>, Vec<Vec<Triple>>) = batch
                    .iter()
                    .zip(&negatives)
                    .filter(|(f, _)| f.rel == *goal)
                    .map(|(f, n)| (*f, n.clone()))
                    .unzip();
                let lctx = LossContext {
                    kb: &ctx.kb,
                    view: &sel.view,
                    kernels: &kernels,
                    config: &ctx.prover,
                    store: &st.store,
                    emb: &st.emb,
                };
                let out = training_loss(&lctx, &pos, &negs);
                loss_sum += out.loss;
                grads.merge(out.grads);
                counters.add(out.counters);
                hq.merge(&out.hq);
            }
            st.prover_adam.step(&mut st.store, &grads);
        }
        if !st.store.is_finite() {
            return Err(Error::Config("prover parameters diverged".into()));
        }
        let kernels = KernelTable::compute(&st.store, &st.emb);
        let rel = |i: ItemId| relation_of(&ctx.kb, &kernels, nr, i);
        update_relation_storage(&mut st.storage, &hq, rel);
        nns_complete(&mut st.storage, &hq, &ctx.kb, &ctx.items, &st.store, &st.emb, rel);
    }
    let prover_steps = st.store.step_count;

    let mut gen_loss = 0.0;
    let mut gen_n = 0usize;
    if !cfg.baseline {
        for _ in 0..cfg.generator_epochs {
            for batch in &batches {
                let goals: Vec<PredId> = batch.iter().map(|f| f.rel).collect();
                gen_loss += train_generator_step(
                    &st.storage,
                    &goals,
                    &st.generator,
                    &mut st.gen_store,
                    &mut st.gen_adam,
                    &st.store,
                    &st.emb,
                    &mut rng,
                );
                gen_n += 1;
            }
        }
        if !st.gen_store.is_finite() {
            return Err(Error::Config("generator parameters diverged".into()));
        }
    }
    debug_assert_eq!(st.store.step_count, prover_steps, "prover updated during the m-step");
    let attp_ms = start.elapsed().as_secs_f64() * 1e3;

    let valid_mrr = validation_mrr(ctx, &st)?;
    let n_pos = (batches.iter().map(|b| b.len()).sum::<usize>() * cfg.prover_epochs).max(1);
    st.metrics.push(IterationRecord {
        iteration: st.iteration + 1,
        prover_loss: loss_sum / n_pos as f64,
        generator_loss: if gen_n > 0 { gen_loss / gen_n as f64 } else { 0.0 },
        valid_mrr,
        attp_ms,
        utilization: if counters.traversed > 0 {
            counters.established as f64 / counters.traversed as f64
        } else {
            0.0
        },
        traversed: counters.traversed,
        established: counters.established,
        max_selected,
        storage_size: st.storage.len(),
        prover_steps,
        generator_steps: st.gen_store.step_count,
    });
    st.iteration += 1;
    Ok(st)
}

fn validation_mrr(ctx: &TrainContext, st: &TrainState) -> Result<f64> {
    if ctx.valid_probe.is_empty() {
        return Ok(0.0);
    }
    let scorer = Scorer::new(ctx, st)?;
    let records = scorer.rank(&ctx.valid_probe);
    Ok(compute_mrr_hits(&records, &[])?["mrr"])
}

/// Result of [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: TrainState,
    pub best: TrainState,
    pub stopped_early: bool,
}

/// Runs up to `config.iterations` EM iterations with early stopping on
/// validation MRR. With `out` set, the metrics log is rewritten after every
/// iteration and the best state is checkpointed to `out/best`.
pub fn run_training(ctx: &TrainContext, initial: TrainState, out: Option<&Path>) -> Result<TrainOutcome> {
    let mut state = initial;
    let mut best = state.clone();
    let mut best_mrr = f64::NEG_INFINITY;
    let mut since = 0;
    let mut stopped_early = false;
    for _ in 0..ctx.config.iterations {
        state = em_iteration(ctx, &state)?;
        let rec = state.metrics.last().expect("iteration logged");
        log::info!(
            "iteration {} prover_loss {:.4} generator_loss {:.4} valid_mrr {:.4} attp_ms {:.0} utilization {:.4}",
            rec.iteration,
            rec.prover_loss,
            rec.generator_loss,
            rec.valid_mrr,
            rec.attp_ms,
            rec.utilization
        );
        let mrr = rec.valid_mrr;
        if let Some(dir) = out {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("metrics.csv"), metrics_csv(&state.metrics))?;
            fs::write(dir.join("timing.csv"), timing_csv(&state.metrics))?;
        }
        if mrr > best_mrr {
            best_mrr = mrr;
            best = state.clone();
            since = 0;
            if let Some(dir) = out {
                save_checkpoint(ctx, &best, &dir.join("best"))?;
            }
        } else {
            since += 1;
            if since > ctx.config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { last: state, best, stopped_early })
}

#[derive(Serialize, Deserialize)]
struct OptimState {
    iteration: usize,
    prover_adam: Adam,
    gen_adam: Adam,
    relations: Vec<String>,
    constants: Vec<String>,
}

/// Writes `store.json`, `generator.json`, `optim.json`, `storage.tsv`,
/// `metrics.csv`, `timing.csv` and `metrics.json` into `dir`.
pub fn save_checkpoint(ctx: &TrainContext, state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("store.json"), state.store.to_json()?)?;
    fs::write(dir.join("generator.json"), state.gen_store.to_json()?)?;
    let optim = OptimState {
        iteration: state.iteration,
        prover_adam: state.prover_adam.clone(),
        gen_adam: state.gen_adam.clone(),
        relations: ctx.vocab.relation_names().to_vec(),
        constants: ctx.vocab.constant_names().to_vec(),
    };
    fs::write(dir.join("optim.json"), serde_json::to_string(&optim)?)?;
    fs::write(dir.join("storage.tsv"), state.storage.dump(&ctx.vocab))?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&state.metrics))?;
    fs::write(dir.join("timing.csv"), timing_csv(&state.metrics))?;
    fs::write(dir.join("metrics.json"), serde_json::to_string(&state.metrics)?)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

/// Restores a state saved by [`save_checkpoint`] for the same dataset.
pub fn load_checkpoint(ctx: &TrainContext, dir: &Path) -> Result<TrainState> {
    let store = ParameterStore::from_json(&read_file(&dir.join("store.json"))?)?;
    let gen_store = ParameterStore::from_json(&read_file(&dir.join("generator.json"))?)?;
    let optim: OptimState = serde_json::from_str(&read_file(&dir.join("optim.json"))?)?;
    if optim.relations != ctx.vocab.relation_names() || optim.constants != ctx.vocab.constant_names() {
        return Err(Error::Checkpoint("checkpoint vocabulary does not match the dataset".into()));
    }
    let emb = Embeddings::from_store(&store)?;
    if emb.num_predicates(&store) != ctx.vocab.num_predicates() {
        return Err(Error::Checkpoint("checkpoint template count does not match the config".into()));
    }
    let generator = GeneratorModel::from_store(&gen_store)?;
    let cfg = &ctx.config;
    let storage = RelationStorage::load(
        &read_file(&dir.join("storage.tsv"))?,
        &ctx.vocab,
        cfg.ep.clone(),
        cfg.batch_size,
        cfg.max_size(),
    )?;
    let metrics = serde_json::from_str(&read_file(&dir.join("metrics.json"))?)?;
    Ok(TrainState {
        iteration: optim.iteration,
        store,
        emb,
        gen_store,
        generator,
        storage,
        prover_adam: optim.prover_adam,
        gen_adam: optim.gen_adam,
        metrics,
    })
}

/// Scores ground atoms with a frozen state; one selected sub-KB per relation.
pub struct Scorer<'a> {
    ctx: &'a TrainContext,
    kernels: KernelTable,
    views: BTreeMap<PredId, SelectedKb>,
}

impl<'a> Scorer<'a> {
    pub fn new(ctx: &'a TrainContext, state: &TrainState) -> Result<Self> {
        let kernels = KernelTable::compute(&state.store, &state.emb);
        let goals: BTreeSet<PredId> = ctx.vocab.relations().collect();
        let views = select_for_goals(ctx, state, &kernels, &goals)?;
        Ok(Self { ctx, kernels, views })
    }

    pub fn selected(&self, rel: PredId) -> &SelectedKb {
        &self.views[&rel]
    }

    /// Max-min proof score of `t`.
    pub fn score(&self, t: &Triple) -> f64 {
        let view = &self.views[&t.rel].view;
        ProofSearch::new(&self.ctx.kb, view, &self.kernels, &self.ctx.prover)
            .with_bound()
            .prove(&t.atom())
            .score
    }

    pub fn score_batch(&self, ts: &[Triple]) -> Vec<f64> {
        ts.par_iter().map(|t| self.score(t)).collect()
    }

    /// Filtered ranks. Countries tasks rank the true region among the
    /// regions; other datasets rank against all head and tail corruptions.
    pub fn rank(&self, facts: &[Triple]) -> Vec<RankRecord> {
        let nc = self.ctx.vocab.num_constants();
        facts
            .par_iter()
            .map(|f| match &self.ctx.regions {
                Some(regions) => {
                    let others: Vec<Triple> = regions
                        .iter()
                        .map(|r| Triple::new(f.head, f.rel, *r))
                        .filter(|t| t != f && !self.ctx.known.contains(t))
                        .collect();
                    let s = self.score(f);
                    let cs: Vec<f64> = others.iter().map(|t| self.score(t)).collect();
                    RankRecord { fact: *f, rank: rank_from_scores(s, &cs), candidate_count: cs.len(), score: s }
                }
                None => rank_filtered(f, &self.ctx.known, nc, |cands| cands.iter().map(|t| self.score(t)).collect()),
            })
            .collect()
    }

    /// AUC-PR of `locatedIn(country, region)` over every test country and
    /// every region.
    pub fn countries_auc(&self, test: &[Triple]) -> Result<f64> {
        let regions = self
            .ctx
            .regions
            .as_ref()
            .ok_or_else(|| Error::Evaluation("not a Countries task".into()))?;
        let rel = self.ctx.dataset.located_in()?;
        let truth: HashSet<Triple> = test.iter().copied().collect();
        let countries: BTreeSet<ConstId> = test.iter().map(|t| t.head).collect();
        let cands: Vec<Triple> = countries
            .iter()
            .flat_map(|c| regions.iter().map(move |r| Triple::new(*c, rel, *r)))
            .collect();
        let scores = self.score_batch(&cands);
        let labels: Vec<bool> = cands.iter().map(|t| truth.contains(t)).collect();
        compute_auc_pr(&scores, &labels)
    }

    /// Proof-trace lines for every proof of `t`.
    pub fn trace(&self, t: &Triple) -> Vec<String> {
        let view = &self.views[&t.rel].view;
        let goal = t.atom();
        let mut search = ProofSearch::new(&self.ctx.kb, view, &self.kernels, &self.ctx.prover).with_proof_log();
        search.prove(&goal);
        search
            .logged_proofs()
            .iter()
            .map(|p| format_proof(&self.ctx.vocab, &self.ctx.kb, &goal, p))
            .collect()
    }
}

/// Test metrics: AUC-PR for Countries tasks, MRR and HITS@{1,3,10}
/// otherwise. `sample > 0` ranks only the first `sample` test facts.
pub fn evaluate(ctx: &TrainContext, state: &TrainState, sample: usize) -> Result<(BTreeMap<String, f64>, Vec<RankRecord>)> {
    let scorer = Scorer::new(ctx, state)?;
    let mut test = ctx.dataset.split.test.clone();
    if sample > 0 && sample < test.len() {
        test.shuffle(&mut ChaCha8Rng::seed_from_u64(ctx.config.seed ^ 0x7e57));
        test.truncate(sample);
    }
    if ctx.regions.is_some() {
        let mut m = BTreeMap::new();
        m.insert("auc_pr".to_string(), scorer.countries_auc(&test)?);
        return Ok((m, Vec::new()));
    }
    let records = scorer.rank(&test);
    Ok((compute_mrr_hits(&records, &[1, 3, 10])?, records))
}
