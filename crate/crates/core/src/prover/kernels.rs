use crate::autodiff::{gaussian_kernel, ParameterStore};
use crate::embedding::Embeddings;
use crate::kb::{ConstId, PredId};

/// Pairwise kernel values for every predicate pair and every constant pair,
/// computed from one frozen parameter snapshot.
#[derive(Debug, Clone)]
pub struct KernelTable {
    num_predicates: usize,
    num_constants: usize,
    predicates: Vec<f64>,
    constants: Vec<f64>,
}

fn symmetric_table(rows: usize, row: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
    let cache: Vec<Vec<f64>> = (0..rows).map(row).collect();
    let mut table = vec![0.0; rows * rows];
    for i in 0..rows {
        table[i * rows + i] = 1.0;
        for j in (i + 1)..rows {
            let k = gaussian_kernel(&cache[i], &cache[j]);
            table[i * rows + j] = k;
            table[j * rows + i] = k;
        }
    }
    table
}

impl KernelTable {
    pub fn compute(store: &ParameterStore, emb: &Embeddings) -> Self {
        let np = emb.num_predicates(store);
        let nc = emb.num_constants(store);
        Self {
            num_predicates: np,
            num_constants: nc,
            predicates: symmetric_table(np, |i| store.row(emb.predicates, i).to_vec()),
            constants: symmetric_table(nc, |i| store.row(emb.constants, i).to_vec()),
        }
    }

    #[inline]
    pub fn predicate(&self, a: PredId, b: PredId) -> f64 {
        self.predicates[a.index() * self.num_predicates + b.index()]
    }

    #[inline]
    pub fn constant(&self, a: ConstId, b: ConstId) -> f64 {
        self.constants[a.index() * self.num_constants + b.index()]
    }

    pub fn num_predicates(&self) -> usize {
        self.num_predicates
    }

    pub fn num_constants(&self) -> usize {
        self.num_constants
    }

    /// Most similar dataset relation (ids below `num_relations`); ties go to
    /// the lowest id.
    pub fn nearest_relation(&self, p: PredId, num_relations: usize) -> PredId {
        if p.index() < num_relations {
            return p;
        }
        let mut best = PredId(0);
        let mut best_k = f64::NEG_INFINITY;
        for r in 0..num_relations as u32 {
            let k = self.predicate(p, PredId(r));
            if k > best_k {
                best_k = k;
                best = PredId(r);
            }
        }
        best
    }
}
