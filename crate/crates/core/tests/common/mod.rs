//! Independent reference implementations and random instance builders
//! shared by the integration tests.
#![allow(dead_code)]

pub mod checks;
pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relprove::kb::{Atom, ConstId, ItemId, KnowledgeBase, PredId, Rule, Term, Triple, VarId};
use relprove::{Embeddings, ParameterStore};

/// A small random knowledge base with random symbol embeddings.
pub struct Instance {
    pub kb: KnowledgeBase,
    pub store: ParameterStore,
    pub emb: Embeddings,
    pub num_predicates: usize,
    pub num_constants: usize,
}

impl Instance {
    pub fn all_items(&self) -> Vec<ItemId> {
        self.kb.item_ids().collect()
    }
}

fn var(i: u32) -> Term {
    Term::Var(VarId(i))
}

/// One of the rule shapes the prover has to handle, over random predicates.
pub fn random_rule(rng: &mut impl Rng, num_predicates: usize) -> Rule {
    let mut p = || PredId(rng.gen_range(0..num_predicates as u32));
    let (h, b1, b2) = (p(), p(), p());
    match rng.gen_range(0..4) {
        // h(X, Y) :- b(X, Y)
        0 => Rule::new(Atom::new(h, var(0), var(1)), vec![Atom::new(b1, var(0), var(1))], vec![]),
        // h(X, Y) :- b(Y, X)
        1 => Rule::new(Atom::new(h, var(0), var(1)), vec![Atom::new(b1, var(1), var(0))], vec![]),
        // h(X, Y) :- b1(X, Z), b2(Z, Y)
        2 => Rule::new(
            Atom::new(h, var(0), var(1)),
            vec![Atom::new(b1, var(0), var(2)), Atom::new(b2, var(2), var(1))],
            vec![],
        ),
        // h(X, X) :- b(X, Z), repeated head variable
        _ => Rule::new(Atom::new(h, var(0), var(0)), vec![Atom::new(b1, var(0), var(2))], vec![]),
    }
}

pub fn random_triple(rng: &mut impl Rng, num_predicates: usize, num_constants: usize) -> Triple {
    Triple::new(
        ConstId(rng.gen_range(0..num_constants as u32)),
        PredId(rng.gen_range(0..num_predicates as u32)),
        ConstId(rng.gen_range(0..num_constants as u32)),
    )
}

/// Up to `max_facts` facts and `max_rules` rules over a handful of symbols.
/// Embedding coordinates are uniform in `[-spread, spread]`.
pub fn random_instance(seed: u64, max_facts: usize, max_rules: usize, dim: usize, spread: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_predicates = rng.gen_range(1..=3);
    let num_constants = rng.gen_range(2..=5);
    let n_facts = rng.gen_range(1..=max_facts);
    let facts: Vec<Triple> = (0..n_facts)
        .map(|_| random_triple(&mut rng, num_predicates, num_constants))
        .collect();
    let n_rules = rng.gen_range(0..=max_rules);
    let rules = (0..n_rules).map(|_| random_rule(&mut rng, num_predicates)).collect();
    let kb = KnowledgeBase::new(facts, rules);
    let mut store = ParameterStore::new();
    let emb = Embeddings::allocate(&mut store, num_predicates, num_constants, dim);
    for id in [emb.predicates, emb.constants] {
        for x in store.get_mut(id).data.iter_mut() {
            *x = rng.gen_range(-spread..=spread);
        }
    }
    Instance {
        kb,
        store,
        emb,
        num_predicates,
        num_constants,
    }
}
