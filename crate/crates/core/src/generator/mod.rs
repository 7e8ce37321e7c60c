//! GRU relation selector.
//!
//! The generator reads a goal relation and emits, step by step, the
//! relations whose knowledge is likely to help prove it. It is trained on
//! sequences drawn from the [`RelationStorage`].

pub mod nns;
pub mod storage;

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax, Adam, Gradients, ParamId, ParameterStore, Tape, Var};
use crate::embedding::Embeddings;
use crate::error::{Error, Result};
use crate::kb::PredId;

pub use nns::{item_embedding, nns_complete, nns_order};
pub use storage::{capacities, update_relation_storage, Provenance, RelationStorage, StorageEntry};

/// Parameter ids of the selector; the weights live in their own store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorModel {
    /// Hidden size, equal to the relation embedding size.
    pub dim: usize,
    /// Output vocabulary: dataset relations `0..vocab`.
    pub vocab: usize,
    f_w: ParamId,
    f_b: ParamId,
    g_w: ParamId,
    g_b: ParamId,
    wz: ParamId,
    uz: ParamId,
    bz: ParamId,
    wr: ParamId,
    ur: ParamId,
    br: ParamId,
    wh: ParamId,
    uh: ParamId,
    bh: ParamId,
    o_w: ParamId,
    o_b: ParamId,
}

fn uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect()
}

impl GeneratorModel {
    /// Allocates the selector in `store`: `f` starts as the identity, the
    /// remaining matrices are Glorot-uniform, biases are zero.
    pub fn init(store: &mut ParameterStore, dim: usize, vocab: usize, rng: &mut impl Rng) -> Self {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        let f_w = store.add("gen.f.w", dim, dim, eye);
        let f_b = store.add_zeros("gen.f.b", 1, dim);
        let g_w = store.add("gen.g.w", dim, 2 * dim, uniform(dim, 2 * dim, rng));
        let g_b = store.add_zeros("gen.g.b", 1, dim);
        let mut gate = |name: &str, store: &mut ParameterStore| {
            (
                store.add(&format!("gen.{name}.w"), dim, dim, uniform(dim, dim, rng)),
                store.add(&format!("gen.{name}.u"), dim, dim, uniform(dim, dim, rng)),
                store.add_zeros(&format!("gen.{name}.b"), 1, dim),
            )
        };
        let (wz, uz, bz) = gate("z", store);
        let (wr, ur, br) = gate("r", store);
        let (wh, uh, bh) = gate("h", store);
        let o_w = store.add("gen.o.w", vocab, dim, uniform(vocab, dim, rng));
        let o_b = store.add_zeros("gen.o.b", 1, vocab);
        Self { dim, vocab, f_w, f_b, g_w, g_b, wz, uz, bz, wr, ur, br, wh, uh, bh, o_w, o_b }
    }

    /// Recovers the ids from a store written by [`GeneratorModel::init`].
    pub fn from_store(store: &ParameterStore) -> Result<Self> {
        let id = |n: &str| store.id(n);
        let o_w = id("gen.o.w")?;
        let f_w = id("gen.f.w")?;
        Ok(Self {
            dim: store.get(f_w).cols,
            vocab: store.get(o_w).rows,
            f_w,
            f_b: id("gen.f.b")?,
            g_w: id("gen.g.w")?,
            g_b: id("gen.g.b")?,
            wz: id("gen.z.w")?,
            uz: id("gen.z.u")?,
            bz: id("gen.z.b")?,
            wr: id("gen.r.w")?,
            ur: id("gen.r.u")?,
            br: id("gen.r.b")?,
            wh: id("gen.h.w")?,
            uh: id("gen.h.u")?,
            bh: id("gen.h.b")?,
            o_w,
            o_b: id("gen.o.b")?,
        })
    }

    /// Update-gate bias, exposed for gate-saturation experiments.
    pub fn update_bias(&self) -> ParamId {
        self.bz
    }

    fn affine(&self, tape: &mut Tape, store: &ParameterStore, w: ParamId, b: ParamId, x: Var) -> Var {
        let p = store.get(w);
        let (rows, cols) = (p.rows, p.cols);
        let wv = tape.param(store, w);
        let bv = tape.param(store, b);
        let y = tape.matvec(wv, x, rows, cols);
        tape.add(y, bv)
    }

    fn relation_input(&self, tape: &mut Tape, rel_store: &ParameterStore, emb: &Embeddings, r: PredId) -> Var {
        tape.input(emb.predicate(rel_store, r).to_vec())
    }

    /// `h_0 = f(emb(r))` on `tape`.
    pub fn init_hidden_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        rel_store: &ParameterStore,
        emb: &Embeddings,
        goal: PredId,
    ) -> Var {
        let e = self.relation_input(tape, rel_store, emb, goal);
        self.affine(tape, store, self.f_w, self.f_b, e)
    }

    /// One GRU step on `tape`; returns the new hidden state and the logits.
    pub fn step_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        rel_store: &ParameterStore,
        emb: &Embeddings,
        h: Var,
        prev: PredId,
        cur: PredId,
    ) -> (Var, Var) {
        let a = self.relation_input(tape, rel_store, emb, prev);
        let b = self.relation_input(tape, rel_store, emb, cur);
        let ab = tape.concat(a, b);
        let x = self.affine(tape, store, self.g_w, self.g_b, ab);
        let gate = |tape: &mut Tape, w: ParamId, u: ParamId, bias: ParamId, hin: Var| {
            let wx = self.affine(tape, store, w, bias, x);
            let uv = tape.param(store, u);
            let uh = tape.matvec(uv, hin, self.dim, self.dim);
            tape.add(wx, uh)
        };
        let zl = gate(tape, self.wz, self.uz, self.bz, h);
        let z = tape.sigmoid(zl);
        let rl = gate(tape, self.wr, self.ur, self.br, h);
        let r = tape.sigmoid(rl);
        let rh = tape.mul(r, h);
        let cl = gate(tape, self.wh, self.uh, self.bh, rh);
        let c = tape.tanh(cl);
        let keep = tape.one_minus(z);
        let kh = tape.mul(keep, h);
        let zc = tape.mul(z, c);
        let h_next = tape.add(kh, zc);
        let logits = self.affine(tape, store, self.o_w, self.o_b, h_next);
        (h_next, logits)
    }

    fn check_relation(&self, r: PredId) -> Result<()> {
        if r.index() >= self.vocab {
            return Err(Error::Lookup(format!("relation id {} outside the generator vocabulary", r.0)));
        }
        Ok(())
    }

    /// `h_0 = f(emb(goal))`.
    pub fn init_hidden(&self, store: &ParameterStore, rel_store: &ParameterStore, emb: &Embeddings, goal: PredId) -> Result<Vec<f64>> {
        self.check_relation(goal)?;
        let mut tape = Tape::new();
        let h = self.init_hidden_on_tape(&mut tape, store, rel_store, emb, goal);
        Ok(tape.value(h).to_vec())
    }

    /// One recurrent step; returns the next hidden state and the distribution
    /// over the next relation.
    pub fn gru_step(
        &self,
        store: &ParameterStore,
        rel_store: &ParameterStore,
        emb: &Embeddings,
        h_prev: &[f64],
        prev: PredId,
        cur: PredId,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let h = tape.input(h_prev.to_vec());
        let (h_next, logits) = self.step_on_tape(&mut tape, store, rel_store, emb, h, prev, cur);
        (tape.value(h_next).to_vec(), softmax(tape.value(logits)))
    }
}

/// Relations chosen for one goal relation, with generation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicPredicates {
    pub goal: PredId,
    /// Best probability at which each relation was emitted; the goal scores 1.
    pub scores: BTreeMap<PredId, f64>,
}

impl LogicPredicates {
    pub fn contains(&self, p: PredId) -> bool {
        self.scores.contains_key(&p)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn score(&self, p: PredId) -> Option<f64> {
        self.scores.get(&p).copied()
    }
}

struct Beam {
    h: Vec<f64>,
    prev: PredId,
    cur: PredId,
    log_p: f64,
}

/// Indices of the `k` largest entries, ties to the lower index.
fn top_k(dist: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Deterministic beam expansion: each beam emits its `width` most likely
/// next relations for `depth` steps, keeping at most `width²` beams. With
/// `rng` set, successors are sampled instead of taken greedily.
pub fn generate_predicates_with(
    model: &GeneratorModel,
    store: &ParameterStore,
    rel_store: &ParameterStore,
    emb: &Embeddings,
    goal: PredId,
    width: usize,
    depth: usize,
    mut rng: Option<&mut dyn rand::RngCore>,
) -> Result<LogicPredicates> {
    let h0 = model.init_hidden(store, rel_store, emb, goal)?;
    let mut scores = BTreeMap::new();
    scores.insert(goal, 1.0);
    let mut beams = vec![Beam { h: h0, prev: goal, cur: goal, log_p: 0.0 }];
    let cap = width.saturating_mul(width).max(1);
    for _ in 0..depth {
        let mut next = Vec::new();
        for b in &beams {
            let (h, dist) = model.gru_step(store, rel_store, emb, &b.h, b.prev, b.cur);
            let picks = match rng.as_deref_mut() {
                Some(r) => sample_k(&dist, width, r),
                None => top_k(&dist, width),
            };
            for j in picks {
                let p = PredId(j as u32);
                let e = scores.entry(p).or_insert(0.0);
                *e = f64::max(*e, dist[j]);
                next.push(Beam { h: h.clone(), prev: b.cur, cur: p, log_p: b.log_p + dist[j].ln() });
            }
        }
        next.sort_by(|a, b| b.log_p.total_cmp(&a.log_p));
        next.truncate(cap);
        beams = next;
    }
    Ok(LogicPredicates { goal, scores })
}

fn sample_k(dist: &[f64], k: usize, rng: &mut dyn rand::RngCore) -> Vec<usize> {
    let mut out = Vec::new();
    let mut w = dist.to_vec();
    for _ in 0..k.min(dist.len()) {
        let Ok(d) = WeightedIndex::new(&w) else { break };
        let j = d.sample(rng);
        w[j] = 0.0;
        out.push(j);
    }
    out
}

/// Greedy beam generation (see [`generate_predicates_with`]).
pub fn generate_predicates(
    model: &GeneratorModel,
    store: &ParameterStore,
    rel_store: &ParameterStore,
    emb: &Embeddings,
    goal: PredId,
    width: usize,
    depth: usize,
) -> Result<LogicPredicates> {
    generate_predicates_with(model, store, rel_store, emb, goal, width, depth, None)
}

/// Teacher-forced cross-entropy of `seqs` (each starting with its goal) on
/// one tape; returns the mean loss node, or `None` if nothing is predicted.
pub fn sequence_loss_on_tape(
    tape: &mut Tape,
    model: &GeneratorModel,
    store: &ParameterStore,
    rel_store: &ParameterStore,
    emb: &Embeddings,
    seqs: &[Vec<PredId>],
) -> Option<Var> {
    let mut terms = Vec::new();
    for seq in seqs {
        let Some((&goal, rest)) = seq.split_first() else { continue };
        let mut h = model.init_hidden_on_tape(tape, store, rel_store, emb, goal);
        let (mut prev, mut cur) = (goal, goal);
        for &target in rest {
            let (hn, logits) = model.step_on_tape(tape, store, rel_store, emb, h, prev, cur);
            terms.push(tape.neg_log_softmax(logits, target.index()));
            h = hn;
            prev = cur;
            cur = target;
        }
    }
    if terms.is_empty() {
        return None;
    }
    let n = terms.len() as f64;
    let total = tape.sum_all(&terms);
    Some(tape.scale(total, 1.0 / n))
}

/// Draws one training sequence per goal from the storage entries linked to
/// that goal, one entry per layer, weighted by score. Goals with nothing in
/// layer 1 are skipped.
pub fn sample_sequences(storage: &RelationStorage, goals: &[PredId], rng: &mut impl Rng) -> Vec<Vec<PredId>> {
    let mut out = Vec::new();
    for &goal in goals {
        let mut seq = vec![goal];
        for layer in storage.layers() {
            let cands: Vec<&StorageEntry> = layer.iter().filter(|e| e.goal == goal).collect();
            if cands.is_empty() {
                break;
            }
            let weights: Vec<f64> = cands.iter().map(|e| e.score.max(1e-12)).collect();
            let pick = WeightedIndex::new(&weights).map(|d| d.sample(rng)).unwrap_or(0);
            seq.push(cands[pick].predicate);
        }
        if seq.len() > 1 {
            out.push(seq);
        }
    }
    out
}

/// One m-step update: samples sequences for `goals`, applies Adam and returns
/// the mean cross-entropy before the update. Empty storage gives zero loss
/// and leaves the model untouched.
#[allow(clippy::too_many_arguments)]
pub fn train_generator_step(
    storage: &RelationStorage,
    goals: &[PredId],
    model: &GeneratorModel,
    store: &mut ParameterStore,
    adam: &mut Adam,
    rel_store: &ParameterStore,
    emb: &Embeddings,
    rng: &mut impl Rng,
) -> f64 {
    if storage.is_empty() {
        return 0.0;
    }
    let seqs = sample_sequences(storage, goals, rng);
    let mut tape = Tape::new();
    let Some(loss) = sequence_loss_on_tape(&mut tape, model, store, rel_store, emb, &seqs) else {
        return 0.0;
    };
    let value = tape.scalar(loss);
    let grads: Gradients = tape.backward(loss);
    adam.step(store, &grads);
    value
}
