//! Relation-guided neural theorem proving for knowledge-graph completion.
//!
//! A differentiable backward-chaining prover scores ground facts by soft
//! unification over symbol embeddings. Each training iteration a GRU
//! relation generator picks the relations whose knowledge the prover may
//! search, which keeps proofs confined to a small sub-KB. The two models are
//! trained in alternation: the prover harvests the knowledge that unified
//! well into a layered relation storage, and the generator learns from it.
//!
//! The crate is organised bottom-up:
//!
//! - [`kb`]: symbols, atoms, rules, the knowledge base and dataset splits.
//! - [`autodiff`]: parameter store, reverse-mode tape and Adam.
//! - [`complex`]: ComplEx pretraining of the symbol embeddings.
//! - [`prover`]: unification, OR/AND search, proof scores and the loss.
//! - [`generator`]: the GRU selector, relation storage and NNS completion.
//! - [`trainer`]: the alternating training loop and evaluation driver.
//! - [`eval`]: ranking metrics, AUC-PR and efficiency measures.
//! - [`config`] and [`dataset`]: run configuration and data loading.

pub mod autodiff;
pub mod complex;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod generator;
pub mod kb;
pub mod prover;
pub mod trainer;

pub use autodiff::{Adam, Gradients, ParameterStore, Tape};
pub use config::RunConfig;
pub use dataset::{load_dataset, resolve_dataset_dir, Dataset};
pub use embedding::Embeddings;
pub use error::{Error, Result};
pub use eval::{compute_auc_pr, compute_efficiency, compute_mrr_hits, EfficiencyRecord, RankRecord};
pub use generator::{GeneratorModel, LogicPredicates, RelationStorage};
pub use kb::{Atom, ConstId, ItemId, KbView, KnowledgeBase, PredId, Rule, Term, Triple, VarId, Vocab};
pub use prover::{prove_goal, KernelTable, ProofScore, ProverConfig};
pub use trainer::{em_iteration, initial_state, run_training, TrainContext, TrainState};
