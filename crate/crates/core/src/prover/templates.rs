//! Parameterised rule templates whose predicate positions are trainable slots.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::ParameterStore;
use crate::embedding::Embeddings;
use crate::error::{Error, Result};
use crate::kb::{Atom, Rule, Term, VarId, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateShape {
    /// `#1(X,Y) :- #2(X,Y)`
    Identity,
    /// `#1(X,Y) :- #2(Y,X)`
    Inverse,
    /// `#1(X,Y) :- #2(X,Z), #3(Z,Y)`
    Chain,
}

impl TemplateShape {
    fn name(self) -> &'static str {
        match self {
            TemplateShape::Identity => "identity",
            TemplateShape::Inverse => "inverse",
            TemplateShape::Chain => "chain",
        }
    }
}

/// Template shapes with multiplicities, written `20*identity,20*inverse,20*chain`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSpec {
    pub shapes: Vec<(TemplateShape, usize)>,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        Self {
            shapes: vec![
                (TemplateShape::Identity, 20),
                (TemplateShape::Inverse, 20),
                (TemplateShape::Chain, 20),
            ],
        }
    }
}

impl TemplateSpec {
    pub fn none() -> Self {
        Self { shapes: vec![] }
    }

    pub fn count(&self) -> usize {
        self.shapes.iter().map(|(_, n)| n).sum()
    }
}

impl FromStr for TemplateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut shapes = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (n, name) = match part.split_once('*') {
                Some((n, name)) => (
                    n.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad template multiplicity in {part:?}")))?,
                    name.trim(),
                ),
                None => (1, part),
            };
            let shape = match name {
                "identity" => TemplateShape::Identity,
                "inverse" => TemplateShape::Inverse,
                "chain" => TemplateShape::Chain,
                other => return Err(Error::Config(format!("unknown template shape {other:?}"))),
            };
            shapes.push((shape, n));
        }
        Ok(Self { shapes })
    }
}

impl fmt::Display for TemplateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .shapes
            .iter()
            .map(|(s, n)| format!("{n}*{}", s.name()))
            .collect();
        f.write_str(&parts.join(","))
    }
}

fn var(i: u32) -> Term {
    Term::Var(VarId(i))
}

/// Builds one rule for `shape`, allocating fresh slots in `vocab`.
pub fn instantiate_shape(shape: TemplateShape, vocab: &mut Vocab) -> Rule {
    match shape {
        TemplateShape::Identity => {
            let (h, b) = (vocab.add_slot(), vocab.add_slot());
            Rule::new(
                Atom::new(h, var(0), var(1)),
                vec![Atom::new(b, var(0), var(1))],
                vec![h, b],
            )
        }
        TemplateShape::Inverse => {
            let (h, b) = (vocab.add_slot(), vocab.add_slot());
            Rule::new(
                Atom::new(h, var(0), var(1)),
                vec![Atom::new(b, var(1), var(0))],
                vec![h, b],
            )
        }
        TemplateShape::Chain => {
            let (h, b1, b2) = (vocab.add_slot(), vocab.add_slot(), vocab.add_slot());
            Rule::new(
                Atom::new(h, var(0), var(1)),
                vec![Atom::new(b1, var(0), var(2)), Atom::new(b2, var(2), var(1))],
                vec![h, b1, b2],
            )
        }
    }
}

/// Instantiates every template of `spec`. Must run after all dataset
/// relations are interned.
pub fn instantiate(spec: &TemplateSpec, vocab: &mut Vocab) -> Vec<Rule> {
    let mut rules = Vec::with_capacity(spec.count());
    for &(shape, n) in &spec.shapes {
        for _ in 0..n {
            rules.push(instantiate_shape(shape, vocab));
        }
    }
    rules
}

/// Seeds each slot with the embedding of a random dataset relation plus
/// uniform noise in `[-noise, noise]`.
pub fn init_slot_embeddings(
    store: &mut ParameterStore,
    emb: &Embeddings,
    vocab: &Vocab,
    rng: &mut impl Rng,
    noise: f64,
) {
    let nr = vocab.num_relations();
    if nr == 0 {
        return;
    }
    for s in nr..vocab.num_predicates() {
        let src = rng.gen_range(0..nr);
        let row: Vec<f64> = store
            .row(emb.predicates, src)
            .iter()
            .map(|x| {
                if noise > 0.0 {
                    x + rng.gen_range(-noise..noise)
                } else {
                    *x
                }
            })
            .collect();
        store.row_mut(emb.predicates, s).copy_from_slice(&row);
    }
}
