//! Trainable parameters, a small reverse-mode tape and the Adam update.
//!
//! Nodes on the [`Tape`] hold dense vectors; scalars are length-one vectors.
//! The op set is exactly what the prover loss, the ComplEx scorer and the GRU
//! generator need.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// A named dense matrix, row-major. Vectors are `rows == 1` or `cols == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Param {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// All trainable state: symbol embeddings and generator weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    params: Vec<Param>,
    #[serde(skip)]
    by_name: HashMap<String, ParamId>,
    pub step_count: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics on duplicate names or a shape mismatch.
    pub fn add(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> ParamId {
        assert_eq!(data.len(), rows * cols, "shape mismatch for {name}");
        assert!(!self.by_name.contains_key(name), "duplicate parameter {name}");
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_owned(),
            rows,
            cols,
            data,
        });
        self.by_name.insert(name.to_owned(), id);
        id
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, rows, cols, vec![0.0; rows * cols])
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("parameter {name:?}")))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn row(&self, id: ParamId, r: usize) -> &[f64] {
        self.params[id.0].row(r)
    }

    pub fn row_mut(&mut self, id: ParamId, r: usize) -> &mut [f64] {
        let p = &mut self.params[id.0];
        let c = p.cols;
        &mut p.data[r * c..(r + 1) * c]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|x| x.is_finite()))
    }

    pub fn rebuild_index(&mut self) {
        self.by_name = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), ParamId(i)))
            .collect();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut store: ParameterStore = serde_json::from_str(text)?;
        store.rebuild_index();
        for p in &store.params {
            if p.data.len() != p.rows * p.cols {
                return Err(Error::Checkpoint(format!("bad shape for {}", p.name)));
            }
        }
        Ok(store)
    }
}

pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "dimension mismatch");
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-|u - v|^2)`, a Gaussian kernel with bandwidth `1/sqrt(2)`.
pub fn gaussian_kernel(u: &[f64], v: &[f64]) -> f64 {
    (-squared_distance(u, v)).exp()
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param { id: ParamId, row: Option<usize>, cols: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatVec { m: usize, v: usize, cols: usize },
    Concat(usize, usize),
    Slice(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Sum(usize),
    SqDist(usize, usize),
    Clamp(usize, f64, f64),
    Softplus(usize),
    NegLogSoftmax(usize, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_cache: HashMap<(ParamId, Option<usize>), usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.param_cache.clear();
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.nodes[v.0].value;
        assert_eq!(val.len(), 1, "not a scalar");
        val[0]
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn constant(&mut self, x: f64) -> Var {
        self.input(vec![x])
    }

    /// One row of a parameter matrix (an embedding, for instance).
    pub fn param_row(&mut self, store: &ParameterStore, id: ParamId, row: usize) -> Var {
        if let Some(&n) = self.param_cache.get(&(id, Some(row))) {
            return Var(n);
        }
        let v = self.push(store.row(id, row).to_vec(), Op::Param { id, row: Some(row), cols: store.get(id).cols });
        self.param_cache.insert((id, Some(row)), v.0);
        v
    }

    /// A whole parameter, flattened row-major.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&n) = self.param_cache.get(&(id, None)) {
            return Var(n);
        }
        let p = store.get(id);
        let v = self.push(p.data.clone(), Op::Param { id, row: None, cols: p.cols });
        self.param_cache.insert((id, None), v.0);
        v
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(x.len(), y.len(), "dimension mismatch");
        x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect()
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes[a.0].value.iter().map(|x| f(*x)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.binary(a, b, |p, q| p + q);
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.binary(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.binary(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.unary(a, |x| x * k);
        self.push(v, Op::Scale(a.0, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.unary(a, |x| x + k);
        self.push(v, Op::AddScalar(a.0))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.scale(a, -1.0);
        self.add_scalar(n, 1.0)
    }

    /// Matrix (`rows x cols`, row-major) times vector.
    pub fn matvec(&mut self, m: Var, v: Var, rows: usize, cols: usize) -> Var {
        let (mat, vec) = (&self.nodes[m.0].value, &self.nodes[v.0].value);
        assert_eq!(mat.len(), rows * cols, "matrix shape mismatch");
        assert_eq!(vec.len(), cols, "dimension mismatch");
        let out = (0..rows)
            .map(|r| {
                mat[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(vec)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        self.push(out, Op::MatVec { m: m.0, v: v.0, cols })
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        v.extend_from_slice(&self.nodes[b.0].value);
        self.push(v, Op::Concat(a.0, b.0))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.nodes[a.0].value[start..start + len].to_vec();
        self.push(v, Op::Slice(a.0, start))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.unary(a, sigmoid);
        self.push(v, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.unary(a, f64::tanh);
        self.push(v, Op::Tanh(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.unary(a, f64::exp);
        self.push(v, Op::Exp(a.0))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.unary(a, f64::ln);
        self.push(v, Op::Ln(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], Op::Sum(a.0))
    }

    /// Sum of scalar nodes. Empty input yields zero.
    pub fn sum_all(&mut self, vars: &[Var]) -> Var {
        let mut it = vars.iter();
        let Some(&first) = it.next() else {
            return self.constant(0.0);
        };
        it.fold(first, |acc, &v| self.add(acc, v))
    }

    pub fn sq_dist(&mut self, a: Var, b: Var) -> Var {
        let d = squared_distance(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(vec![d], Op::SqDist(a.0, b.0))
    }

    /// Differentiable Gaussian kernel `exp(-|u - v|^2)`.
    pub fn kernel(&mut self, u: Var, v: Var) -> Var {
        let d = self.sq_dist(u, v);
        let n = self.scale(d, -1.0);
        self.exp(n)
    }

    /// Clamp to `[lo, hi]`; gradient is zero outside the range.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.unary(a, |x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a.0, lo, hi))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.unary(a, softplus);
        self.push(v, Op::Softplus(a.0))
    }

    /// `-log softmax(logits)[target]`.
    pub fn neg_log_softmax(&mut self, logits: Var, target: usize) -> Var {
        let x = &self.nodes[logits.0].value;
        let lse = log_sum_exp(x);
        let v = lse - x[target];
        self.push(vec![v], Op::NegLogSoftmax(logits.0, target))
    }

    /// Reverse sweep from `output`, which must be a scalar.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.nodes[output.0].value.len(), 1, "backward needs a scalar");
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);
        let mut grads = Gradients::default();

        fn acc(adj: &mut [Option<Vec<f64>>], i: usize, g: impl Iterator<Item = f64>, n: usize) {
            let slot = adj[i].get_or_insert_with(|| vec![0.0; n]);
            for (s, x) in slot.iter_mut().zip(g) {
                *s += x;
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let val = &node.value;
            let len_of = |j: usize| self.nodes[j].value.len();
            match node.op {
                Op::Input => {}
                Op::Param { id, row, cols } => grads.accumulate(id, row, cols, &g),
                Op::Add(a, b) => {
                    acc(&mut adj, a, g.iter().copied(), len_of(a));
                    acc(&mut adj, b, g.iter().copied(), len_of(b));
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, a, g.iter().copied(), len_of(a));
                    acc(&mut adj, b, g.iter().map(|x| -x), len_of(b));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let ga: Vec<f64> = g.iter().zip(vb).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(va).map(|(x, y)| x * y).collect();
                    acc(&mut adj, a, ga.into_iter(), len_of(a));
                    acc(&mut adj, b, gb.into_iter(), len_of(b));
                }
                Op::Scale(a, k) => acc(&mut adj, a, g.iter().map(|x| x * k), len_of(a)),
                Op::AddScalar(a) => acc(&mut adj, a, g.iter().copied(), len_of(a)),
                Op::MatVec { m, v, cols } => {
                    let (mat, vec) = (&self.nodes[m].value, &self.nodes[v].value);
                    let mut gm = vec![0.0; mat.len()];
                    let mut gv = vec![0.0; cols];
                    for (r, gr) in g.iter().enumerate() {
                        let row = &mat[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            gm[r * cols + c] = gr * vec[c];
                            gv[c] += gr * row[c];
                        }
                    }
                    acc(&mut adj, m, gm.into_iter(), mat.len());
                    acc(&mut adj, v, gv.into_iter(), cols);
                }
                Op::Concat(a, b) => {
                    let na = len_of(a);
                    acc(&mut adj, a, g[..na].iter().copied(), na);
                    acc(&mut adj, b, g[na..].iter().copied(), len_of(b));
                }
                Op::Slice(a, start) => {
                    let n = len_of(a);
                    let mut full = vec![0.0; n];
                    full[start..start + g.len()].copy_from_slice(&g);
                    acc(&mut adj, a, full.into_iter(), n);
                }
                Op::Sigmoid(a) => {
                    acc(&mut adj, a, g.iter().zip(val).map(|(x, s)| x * s * (1.0 - s)), len_of(a))
                }
                Op::Tanh(a) => {
                    acc(&mut adj, a, g.iter().zip(val).map(|(x, t)| x * (1.0 - t * t)), len_of(a))
                }
                Op::Exp(a) => acc(&mut adj, a, g.iter().zip(val).map(|(x, e)| x * e), len_of(a)),
                Op::Ln(a) => {
                    let va = &self.nodes[a].value;
                    acc(&mut adj, a, g.iter().zip(va).map(|(x, y)| x / y), len_of(a))
                }
                Op::Sum(a) => {
                    let n = len_of(a);
                    acc(&mut adj, a, std::iter::repeat(g[0]).take(n), n)
                }
                Op::SqDist(a, b) => {
                    let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let d: Vec<f64> = va.iter().zip(vb).map(|(x, y)| 2.0 * (x - y) * g[0]).collect();
                    acc(&mut adj, a, d.iter().copied(), d.len());
                    acc(&mut adj, b, d.iter().map(|x| -x), d.len());
                }
                Op::Clamp(a, lo, hi) => {
                    let va = &self.nodes[a].value;
                    let gc: Vec<f64> = g
                        .iter()
                        .zip(va)
                        .map(|(x, y)| if *y < lo || *y > hi { 0.0 } else { *x })
                        .collect();
                    acc(&mut adj, a, gc.into_iter(), len_of(a))
                }
                Op::Softplus(a) => {
                    let va = &self.nodes[a].value;
                    acc(&mut adj, a, g.iter().zip(va).map(|(x, y)| x * sigmoid(*y)), len_of(a))
                }
                Op::NegLogSoftmax(a, t) => {
                    let va = &self.nodes[a].value;
                    let lse = log_sum_exp(va);
                    let gs: Vec<f64> = va
                        .iter()
                        .enumerate()
                        .map(|(j, x)| g[0] * ((x - lse).exp() - if j == t { 1.0 } else { 0.0 }))
                        .collect();
                    acc(&mut adj, a, gs.into_iter(), va.len())
                }
            }
        }
        grads
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(x);
    x.iter().map(|v| (v - lse).exp()).collect()
}

/// Gradient buffer for one parameter; only `touched` rows carry data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrad {
    pub cols: usize,
    pub rows: BTreeSet<usize>,
    values: BTreeMap<usize, Vec<f64>>,
}

impl ParamGrad {
    pub fn row(&self, r: usize) -> Option<&[f64]> {
        self.values.get(&r).map(|v| v.as_slice())
    }

    fn add_row(&mut self, r: usize, g: &[f64]) {
        self.rows.insert(r);
        let slot = self.values.entry(r).or_insert_with(|| vec![0.0; g.len()]);
        for (s, x) in slot.iter_mut().zip(g) {
            *s += x;
        }
    }
}

/// Per-parameter gradients collected by [`Tape::backward`]. Ordered maps
/// keep every reduction over them reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    params: BTreeMap<ParamId, ParamGrad>,
}

impl Gradients {
    fn accumulate(&mut self, id: ParamId, row: Option<usize>, cols: usize, g: &[f64]) {
        let pg = self.params.entry(id).or_default();
        pg.cols = cols;
        match row {
            Some(r) => pg.add_row(r, g),
            // whole parameter: split the flattened gradient into rows
            None => {
                for (r, chunk) in g.chunks(cols).enumerate() {
                    pg.add_row(r, chunk);
                }
            }
        }
    }

    /// Adds a gradient row directly (used by hand-derived gradient paths).
    pub fn add_row(&mut self, id: ParamId, row: usize, g: &[f64]) {
        self.accumulate(id, Some(row), g.len(), g);
    }

    /// Merges `other` into `self` by summation.
    pub fn merge(&mut self, other: Gradients) {
        for (id, pg) in other.params {
            for r in pg.rows.iter() {
                self.accumulate(id, Some(*r), pg.cols, &pg.values[r]);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&ParamGrad> {
        self.params.get(&id)
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Gradient of one flat coordinate, zero if never touched.
    pub fn coord(&self, id: ParamId, cols: usize, index: usize) -> f64 {
        let (r, c) = (index / cols, index % cols);
        self.params
            .get(&id)
            .and_then(|pg| pg.row(r))
            .map_or(0.0, |row| row[c])
    }

    pub fn global_norm(&self) -> f64 {
        self.params
            .values()
            .flat_map(|pg| pg.values.values())
            .flat_map(|v| v.iter())
            .filter(|x| x.is_finite())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn ordered(&self) -> impl Iterator<Item = (ParamId, &ParamGrad)> {
        self.params.iter().map(|(k, g)| (*k, g))
    }
}

/// Adam with bias correction, applied lazily to rows with nonzero gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    pub t: u64,
    /// Rows whose update was skipped because of a non-finite gradient.
    pub rejected: u64,
    moments: Vec<(String, Vec<f64>, Vec<f64>)>,
    #[serde(skip)]
    slot: HashMap<ParamId, usize>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            t: 0,
            rejected: 0,
            moments: Vec::new(),
            slot: HashMap::new(),
        }
    }

    pub fn with_clip_norm(mut self, clip: Option<f64>) -> Self {
        self.clip_norm = clip;
        self
    }

    fn slot_for(&mut self, store: &ParameterStore, id: ParamId) -> usize {
        if let Some(&s) = self.slot.get(&id) {
            return s;
        }
        let p = store.get(id);
        if let Some(i) = self.moments.iter().position(|(n, _, _)| *n == p.name) {
            self.slot.insert(id, i);
            return i;
        }
        let n = p.data.len();
        self.moments.push((p.name.clone(), vec![0.0; n], vec![0.0; n]));
        self.slot.insert(id, self.moments.len() - 1);
        self.moments.len() - 1
    }

    /// One optimizer step. Increments both `t` and the store's `step_count`.
    pub fn step(&mut self, store: &mut ParameterStore, grads: &Gradients) {
        self.t += 1;
        store.step_count += 1;
        let scale = match self.clip_norm {
            Some(c) => {
                let n = grads.global_norm();
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (id, pg) in grads.ordered() {
            let slot = self.slot_for(store, id);
            let cols = store.get(id).cols;
            for &r in &pg.rows {
                let g = pg.row(r).expect("touched row");
                if g.iter().any(|x| !x.is_finite()) {
                    self.rejected += 1;
                    continue;
                }
                if g.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let (_, m, v) = &mut self.moments[slot];
                let data = &mut store.get_mut(id).data;
                for c in 0..cols {
                    let k = r * cols + c;
                    let gk = g[c] * scale;
                    m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                    v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                    let mh = m[k] / bc1;
                    let vh = v[k] / bc2;
                    data[k] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
    }
}

/// Compares tape gradients of `f` against central finite differences.
///
/// Checks every coordinate with a nonzero analytic gradient (up to
/// `max_coords`, sampled if there are more) plus a few random coordinates.
/// Returns the maximum of `|a - n| / max(|a|, |n|, 1e-4)`.
pub fn finite_difference_check<F>(
    f: F,
    store: &ParameterStore,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> f64
where
    F: Fn(&ParameterStore, &mut Tape) -> Var,
{
    let mut tape = Tape::new();
    let out = f(store, &mut tape);
    let grads = tape.backward(out);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonzero = Vec::new();
    for id in store.ids() {
        let p = store.get(id);
        for i in 0..p.data.len() {
            if grads.coord(id, p.cols, i) != 0.0 {
                nonzero.push((id, i));
            }
        }
    }
    nonzero.shuffle(&mut rng);
    nonzero.truncate(max_coords);
    let total: usize = store.params().iter().map(|p| p.data.len()).sum();
    let extra = (max_coords / 4).max(1);
    if total > 0 {
        for _ in 0..extra {
            let mut k = rng.gen_range(0..total);
            for id in store.ids() {
                let n = store.get(id).data.len();
                if k < n {
                    nonzero.push((id, k));
                    break;
                }
                k -= n;
            }
        }
    }

    let eval = |s: &ParameterStore| {
        let mut t = Tape::new();
        let v = f(s, &mut t);
        t.scalar(v)
    };
    let mut work = store.clone();
    let mut worst: f64 = 0.0;
    for (id, i) in nonzero {
        let cols = store.get(id).cols;
        let analytic = grads.coord(id, cols, i);
        let orig = work.get(id).data[i];
        work.get_mut(id).data[i] = orig + eps;
        let up = eval(&work);
        work.get_mut(id).data[i] = orig - eps;
        let down = eval(&work);
        work.get_mut(id).data[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}
