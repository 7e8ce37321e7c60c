//! ComplEx pretraining of symbol embeddings.
//!
//! A complex embedding of dimension `k` is packed into one real row of
//! dimension `2k` as `[re ∥ im]`; the prover's Gaussian kernel later operates
//! directly on these rows.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, softplus, Adam, Gradients, ParameterStore, Tape, Var};
use crate::embedding::Embeddings;
use crate::error::{Error, Result};
use crate::kb::{ConstId, PredId, Triple, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEmbedding {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexEmbedding {
    pub fn pack(&self) -> Vec<f64> {
        let mut v = self.re.clone();
        v.extend_from_slice(&self.im);
        v
    }

    pub fn unpack(row: &[f64]) -> Self {
        let k = row.len() / 2;
        Self {
            re: row[..k].to_vec(),
            im: row[k..].to_vec(),
        }
    }
}

/// `Re(<e_h, w_r, conj(e_t)>)` on packed rows.
pub fn complex_trilinear(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let k = h.len() / 2;
    let (hr, hi) = h.split_at(k);
    let (rr, ri) = r.split_at(k);
    let (tr, ti) = t.split_at(k);
    (0..k)
        .map(|d| {
            hr[d] * rr[d] * tr[d] + hi[d] * rr[d] * ti[d] + hr[d] * ri[d] * ti[d]
                - hi[d] * ri[d] * tr[d]
        })
        .sum()
}

/// Score plus partial derivatives with respect to the three packed rows.
pub fn complex_trilinear_grad(h: &[f64], r: &[f64], t: &[f64]) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = h.len() / 2;
    let (hr, hi) = h.split_at(k);
    let (rr, ri) = r.split_at(k);
    let (tr, ti) = t.split_at(k);
    let mut gh = vec![0.0; 2 * k];
    let mut gr = vec![0.0; 2 * k];
    let mut gt = vec![0.0; 2 * k];
    for d in 0..k {
        gh[d] = rr[d] * tr[d] + ri[d] * ti[d];
        gh[k + d] = rr[d] * ti[d] - ri[d] * tr[d];
        gr[d] = hr[d] * tr[d] + hi[d] * ti[d];
        gr[k + d] = hr[d] * ti[d] - hi[d] * tr[d];
        gt[d] = hr[d] * rr[d] - hi[d] * ri[d];
        gt[k + d] = hi[d] * rr[d] + hr[d] * ri[d];
    }
    (complex_trilinear(h, r, t), gh, gr, gt)
}

fn check_symbols(store: &ParameterStore, emb: &Embeddings, h: ConstId, r: PredId, t: ConstId) -> Result<()> {
    let nc = emb.num_constants(store);
    if h.index() >= nc || t.index() >= nc {
        return Err(Error::Lookup(format!("constant {} or {}", h.0, t.0)));
    }
    if r.index() >= emb.num_predicates(store) {
        return Err(Error::Lookup(format!("predicate {}", r.0)));
    }
    Ok(())
}

pub fn complex_score(
    store: &ParameterStore,
    emb: &Embeddings,
    h: ConstId,
    r: PredId,
    t: ConstId,
) -> Result<f64> {
    check_symbols(store, emb, h, r, t)?;
    Ok(complex_trilinear(
        emb.constant(store, h),
        emb.predicate(store, r),
        emb.constant(store, t),
    ))
}

/// Differentiable version of [`complex_score`].
pub fn complex_score_on_tape(
    tape: &mut Tape,
    store: &ParameterStore,
    emb: &Embeddings,
    h: ConstId,
    r: PredId,
    t: ConstId,
) -> Result<Var> {
    check_symbols(store, emb, h, r, t)?;
    let k = emb.dim / 2;
    let hv = tape.param_row(store, emb.constants, h.index());
    let rv = tape.param_row(store, emb.predicates, r.index());
    let tv = tape.param_row(store, emb.constants, t.index());
    let parts = |tape: &mut Tape, v: Var| (tape.slice(v, 0, k), tape.slice(v, k, k));
    let (hr, hi) = parts(tape, hv);
    let (rr, ri) = parts(tape, rv);
    let (tr, ti) = parts(tape, tv);
    let a = tape.mul(hr, rr);
    let a = tape.mul(a, tr);
    let b = tape.mul(hi, rr);
    let b = tape.mul(b, ti);
    let c = tape.mul(hr, ri);
    let c = tape.mul(c, ti);
    let d = tape.mul(hi, ri);
    let d = tape.mul(d, tr);
    let s = tape.add(a, b);
    let s = tape.add(s, c);
    let s = tape.sub(s, d);
    Ok(tape.sum(s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// Real row dimension (twice the complex dimension).
    pub dim: usize,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// L2 penalty on the rows touched in a batch.
    pub l2: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            epochs: 100,
            negatives_per_positive: 10,
            lr: 0.01,
            batch_size: 128,
            l2: 1e-4,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

/// Result of [`pretrain_embeddings`].
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub store: ParameterStore,
    pub embeddings: Embeddings,
    /// Mean loss per positive, one entry per epoch (plus the initial loss first).
    pub losses: Vec<f64>,
}

/// Uniform head-or-tail corruption not present in `known`.
pub fn sample_negative(
    fact: &Triple,
    known: &HashSet<Triple>,
    num_constants: usize,
    rng: &mut impl Rng,
) -> Option<Triple> {
    for _ in 0..32 {
        let c = ConstId(rng.gen_range(0..num_constants as u32));
        let t = if rng.gen_bool(0.5) {
            Triple::new(c, fact.rel, fact.tail)
        } else {
            Triple::new(fact.head, fact.rel, c)
        };
        if t != *fact && !known.contains(&t) {
            return Some(t);
        }
    }
    None
}

fn example_loss(store: &ParameterStore, emb: &Embeddings, t: &Triple, positive: bool) -> f64 {
    let s = complex_trilinear(
        emb.constant(store, t.head),
        emb.predicate(store, t.rel),
        emb.constant(store, t.tail),
    );
    if positive {
        softplus(-s)
    } else {
        softplus(s)
    }
}

/// Minimises the logistic ComplEx loss over `train` with filtered negatives.
pub fn pretrain_embeddings(train: &[Triple], vocab: &Vocab, config: &PretrainConfig) -> Result<Pretrained> {
    if train.is_empty() {
        return Err(Error::Config("pretraining needs a nonempty training set".into()));
    }
    if config.dim % 2 != 0 {
        return Err(Error::Config("embedding dimension must be even".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParameterStore::new();
    let emb = Embeddings::allocate(&mut store, vocab.num_relations(), vocab.num_constants(), config.dim);
    for id in [emb.predicates, emb.constants] {
        for x in store.get_mut(id).data.iter_mut() {
            *x = rng.gen_range(-config.init_scale..config.init_scale);
        }
    }
    let known: HashSet<Triple> = train.iter().copied().collect();
    let nc = vocab.num_constants();
    let mut adam = Adam::new(config.lr);

    // fixed probe set for loss tracking so epochs are comparable
    let mut probe_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
    let probe: Vec<(Triple, Vec<Triple>)> = train
        .iter()
        .map(|f| {
            let negs = (0..config.negatives_per_positive)
                .filter_map(|_| sample_negative(f, &known, nc, &mut probe_rng))
                .collect();
            (*f, negs)
        })
        .collect();
    let probe_loss = |store: &ParameterStore| -> f64 {
        let total: f64 = probe
            .iter()
            .map(|(p, negs)| {
                example_loss(store, &emb, p, true)
                    + negs.iter().map(|n| example_loss(store, &emb, n, false)).sum::<f64>()
            })
            .sum();
        total / probe.len() as f64
    };

    let mut losses = vec![probe_loss(&store)];
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut grads = Gradients::default();
            let scale = 1.0 / chunk.len() as f64;
            let push = |store: &ParameterStore, t: &Triple, positive: bool, grads: &mut Gradients| {
                let (s, gh, gr, gt) = complex_trilinear_grad(
                    emb.constant(store, t.head),
                    emb.predicate(store, t.rel),
                    emb.constant(store, t.tail),
                );
                // d softplus(-s)/ds = -sigmoid(-s); d softplus(s)/ds = sigmoid(s)
                let dl = if positive { -sigmoid(-s) } else { sigmoid(s) } * scale;
                let mul = |g: Vec<f64>| g.into_iter().map(|x| x * dl).collect::<Vec<_>>();
                grads.add_row(emb.constants, t.head.index(), &mul(gh));
                grads.add_row(emb.predicates, t.rel.index(), &mul(gr));
                grads.add_row(emb.constants, t.tail.index(), &mul(gt));
            };
            for &i in chunk {
                let f = &train[i];
                push(&store, f, true, &mut grads);
                for _ in 0..config.negatives_per_positive {
                    if let Some(n) = sample_negative(f, &known, nc, &mut rng) {
                        push(&store, &n, false, &mut grads);
                    }
                }
            }
            if config.l2 > 0.0 {
                let mut reg = Gradients::default();
                for id in [emb.predicates, emb.constants] {
                    if let Some(pg) = grads.get(id) {
                        for &r in &pg.rows {
                            let row: Vec<f64> =
                                store.row(id, r).iter().map(|x| 2.0 * config.l2 * x).collect();
                            reg.add_row(id, r, &row);
                        }
                    }
                }
                grads.merge(reg);
            }
            adam.step(&mut store, &grads);
        }
        losses.push(probe_loss(&store));
    }
    Ok(Pretrained {
        store,
        embeddings: emb,
        losses,
    })
}

/// Mean pairwise squared distance between rows of a table.
pub fn mean_pairwise_sqdist(store: &ParameterStore, id: crate::autodiff::ParamId) -> f64 {
    let p = store.get(id);
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..p.rows {
        for j in (i + 1)..p.rows {
            total += crate::autodiff::squared_distance(p.row(i), p.row(j));
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Uniformly rescales a table so its mean pairwise squared distance equals
/// `target`. Returns the factor applied.
pub fn rescale_table(store: &mut ParameterStore, id: crate::autodiff::ParamId, target: f64) -> f64 {
    let current = mean_pairwise_sqdist(store, id);
    if current <= 0.0 || target <= 0.0 {
        return 1.0;
    }
    let factor = (target / current).sqrt();
    for x in store.get_mut(id).data.iter_mut() {
        *x *= factor;
    }
    factor
}
