use crate::autodiff::{ParamId, ParameterStore};
use crate::error::Result;
use crate::kb::{ConstId, PredId};

pub const PREDICATES: &str = "predicates";
pub const CONSTANTS: &str = "constants";

/// Locates the symbol embedding tables inside a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embeddings {
    pub predicates: ParamId,
    pub constants: ParamId,
    pub dim: usize,
}

impl Embeddings {
    /// Adds zeroed predicate and constant tables to `store`.
    pub fn allocate(
        store: &mut ParameterStore,
        num_predicates: usize,
        num_constants: usize,
        dim: usize,
    ) -> Self {
        let predicates = store.add_zeros(PREDICATES, num_predicates, dim);
        let constants = store.add_zeros(CONSTANTS, num_constants, dim);
        Self {
            predicates,
            constants,
            dim,
        }
    }

    pub fn from_store(store: &ParameterStore) -> Result<Self> {
        let predicates = store.id(PREDICATES)?;
        let constants = store.id(CONSTANTS)?;
        Ok(Self {
            predicates,
            constants,
            dim: store.get(predicates).cols,
        })
    }

    pub fn predicate<'s>(&self, store: &'s ParameterStore, p: PredId) -> &'s [f64] {
        store.row(self.predicates, p.index())
    }

    pub fn constant<'s>(&self, store: &'s ParameterStore, c: ConstId) -> &'s [f64] {
        store.row(self.constants, c.index())
    }

    pub fn num_predicates(&self, store: &ParameterStore) -> usize {
        store.get(self.predicates).rows
    }

    pub fn num_constants(&self, store: &ParameterStore) -> usize {
        store.get(self.constants).rows
    }
}
