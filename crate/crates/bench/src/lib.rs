//! Shared fixtures for benchmarks.
//!
//! Fixtures are synthetic so the benches run without any dataset on disk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relprove::kb::{Atom, ConstId, KnowledgeBase, PredId, Rule, Term, Triple, VarId};
use relprove::{Embeddings, GeneratorModel, ParameterStore};

/// A random knowledge base with embeddings and a generator over its relations.
pub struct Fixture {
    pub kb: KnowledgeBase,
    pub store: ParameterStore,
    pub emb: Embeddings,
    pub generator_store: ParameterStore,
    pub generator: GeneratorModel,
    pub num_relations: usize,
    pub num_constants: usize,
}

fn var(i: u32) -> Term {
    Term::Var(VarId(i))
}

impl Fixture {
    /// `facts` random triples plus one inverse and one chain rule per
    /// relation. Embedding coordinates are drawn from `[-0.5, 0.5]`.
    pub fn synthetic(num_relations: usize, num_constants: usize, facts: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let facts: Vec<Triple> = (0..facts)
            .map(|_| {
                Triple::new(
                    ConstId(rng.gen_range(0..num_constants as u32)),
                    PredId(rng.gen_range(0..num_relations as u32)),
                    ConstId(rng.gen_range(0..num_constants as u32)),
                )
            })
            .collect();
        let mut rules = Vec::new();
        for h in 0..num_relations as u32 {
            let b1 = PredId(rng.gen_range(0..num_relations as u32));
            let b2 = PredId(rng.gen_range(0..num_relations as u32));
            rules.push(Rule::new(Atom::new(PredId(h), var(0), var(1)), vec![Atom::new(b1, var(1), var(0))], vec![]));
            rules.push(Rule::new(
                Atom::new(PredId(h), var(0), var(1)),
                vec![Atom::new(b1, var(0), var(2)), Atom::new(b2, var(2), var(1))],
                vec![],
            ));
        }
        let kb = KnowledgeBase::new(facts, rules);
        let mut store = ParameterStore::new();
        let emb = Embeddings::allocate(&mut store, num_relations, num_constants, dim);
        for id in [emb.predicates, emb.constants] {
            for x in store.get_mut(id).data.iter_mut() {
                *x = rng.gen_range(-0.5..=0.5);
            }
        }
        let mut generator_store = ParameterStore::new();
        let generator = GeneratorModel::init(&mut generator_store, dim, num_relations, &mut rng);
        Self {
            kb,
            store,
            emb,
            generator_store,
            generator,
            num_relations,
            num_constants,
        }
    }

    /// A ground goal taken from the KB's facts.
    pub fn goal(&self, i: usize) -> Atom {
        let facts = self.kb.facts();
        facts[i % facts.len()].atom()
    }
}
