//! Brute-force reference implementations. None of these share code with the
//! library beyond plain data types, so agreement is meaningful.

use std::collections::{HashMap, HashSet};

use relprove::kb::{Atom, ConstId, Item, ItemId, KnowledgeBase, PredId, Rule, Term, VarId};
use relprove::{Embeddings, ParameterStore};

fn rbf(u: &[f64], v: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..u.len() {
        d += (u[i] - v[i]).powi(2);
    }
    (-d).exp()
}

type Bindings = HashMap<VarId, Term>;

/// A compared symbol pair, unordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pair {
    Pred(u32, u32),
    Const(u32, u32),
}

impl Pair {
    fn pred(a: PredId, b: PredId) -> Self {
        Pair::Pred(a.0.min(b.0), a.0.max(b.0))
    }

    fn constant(a: ConstId, b: ConstId) -> Self {
        Pair::Const(a.0.min(b.0), a.0.max(b.0))
    }
}

/// One complete derivation: every kernel comparison made along the way.
#[derive(Debug, Clone)]
pub struct Proof {
    pub comparisons: Vec<(Pair, f64)>,
}

impl Proof {
    pub fn score(&self) -> f64 {
        self.comparisons.iter().map(|c| c.1).fold(1.0, f64::min)
    }

    /// The pair attaining the minimum (first one on exact ties).
    pub fn witness(&self) -> Option<Pair> {
        let s = self.score();
        self.comparisons.iter().find(|c| c.1 == s && s < 1.0).map(|c| c.0)
    }
}

type Partial = (Bindings, Vec<(Pair, f64)>);

/// Exhaustive enumeration of every proof of a goal, without any pruning.
///
/// A proof is a complete derivation tree of depth at most `max_depth`; its
/// score is the minimum kernel value over every symbol pair compared on the
/// way. Binding a variable is free; a bound variable meeting a different
/// constant ends the derivation.
pub struct ProofEnumerator<'a> {
    kb: &'a KnowledgeBase,
    items: Vec<ItemId>,
    preds: Vec<Vec<f64>>,
    consts: Vec<Vec<f64>>,
    fresh: u32,
}

impl<'a> ProofEnumerator<'a> {
    pub fn new(kb: &'a KnowledgeBase, items: &HashSet<ItemId>, store: &ParameterStore, emb: &Embeddings) -> Self {
        let mut items: Vec<ItemId> = items.iter().copied().collect();
        items.sort();
        let rows = |id, n: usize| (0..n).map(|r| store.row(id, r).to_vec()).collect::<Vec<_>>();
        Self {
            kb,
            items,
            preds: rows(emb.predicates, emb.num_predicates(store)),
            consts: rows(emb.constants, emb.num_constants(store)),
            fresh: 1_000_000,
        }
    }

    fn kp(&self, a: PredId, b: PredId) -> f64 {
        rbf(&self.preds[a.0 as usize], &self.preds[b.0 as usize])
    }

    fn kc(&self, a: ConstId, b: ConstId) -> f64 {
        rbf(&self.consts[a.0 as usize], &self.consts[b.0 as usize])
    }

    fn deref(b: &Bindings, mut t: Term) -> Term {
        while let Term::Var(v) = t {
            match b.get(&v) {
                Some(next) => t = *next,
                None => break,
            }
        }
        t
    }

    fn match_atoms(&self, head: &Atom, goal: &Atom, b: &Bindings, comps: &[(Pair, f64)]) -> Option<Partial> {
        let mut b = b.clone();
        let mut comps = comps.to_vec();
        comps.push((Pair::pred(head.pred, goal.pred), self.kp(head.pred, goal.pred)));
        for i in 0..2 {
            let h = Self::deref(&b, head.args[i]);
            let g = Self::deref(&b, goal.args[i]);
            match (h, g) {
                (Term::Var(x), _) => {
                    if h != g {
                        b.insert(x, g);
                    }
                }
                (_, Term::Var(y)) => {
                    b.insert(y, h);
                }
                (Term::Const(c), Term::Const(d)) => {
                    let through_var = head.args[i].is_var() || goal.args[i].is_var();
                    if through_var {
                        if c != d {
                            return None;
                        }
                    } else {
                        comps.push((Pair::constant(c, d), self.kc(c, d)));
                    }
                }
            }
        }
        Some((b, comps))
    }

    fn fresh_copy(&mut self, rule: &Rule) -> (Atom, Vec<Atom>) {
        let mut map: HashMap<VarId, VarId> = HashMap::new();
        let mut fresh = self.fresh;
        let mut rn = |a: &Atom| {
            let mut args = a.args;
            for t in args.iter_mut() {
                if let Term::Var(v) = *t {
                    let nv = *map.entry(v).or_insert_with(|| {
                        fresh += 1;
                        VarId(fresh)
                    });
                    *t = Term::Var(nv);
                }
            }
            Atom { pred: a.pred, args }
        };
        let head = rn(&rule.head);
        let body = rule.body.iter().map(&mut rn).collect();
        self.fresh = fresh;
        (head, body)
    }

    fn prove_atom(&mut self, goal: &Atom, depth: usize, b: &Bindings, comps: &[(Pair, f64)]) -> Vec<Partial> {
        let mut out = Vec::new();
        for id in self.items.clone() {
            match self.kb.item(id) {
                Item::Fact(f) => {
                    if let Some(r) = self.match_atoms(&f.atom(), goal, b, comps) {
                        out.push(r);
                    }
                }
                Item::Rule(rule) => {
                    let (head, body) = self.fresh_copy(rule);
                    if let Some((b2, c2)) = self.match_atoms(&head, goal, b, comps) {
                        out.extend(self.prove_all(&body, depth, &b2, &c2));
                    }
                }
            }
        }
        out
    }

    fn prove_all(&mut self, body: &[Atom], depth: usize, b: &Bindings, comps: &[(Pair, f64)]) -> Vec<Partial> {
        if body.is_empty() {
            return vec![(b.clone(), comps.to_vec())];
        }
        if depth == 0 {
            return vec![];
        }
        let first = &body[0];
        let sub = Atom {
            pred: first.pred,
            args: [Self::deref(b, first.args[0]), Self::deref(b, first.args[1])],
        };
        let mut out = Vec::new();
        for (b1, c1) in self.prove_atom(&sub, depth - 1, b, comps) {
            out.extend(self.prove_all(&body[1..], depth, &b1, &c1));
        }
        out
    }

    /// Every proof of `goal` within `max_depth`.
    pub fn proofs(&mut self, goal: &Atom, max_depth: usize) -> Vec<Proof> {
        self.prove_atom(goal, max_depth, &Bindings::new(), &[])
            .into_iter()
            .map(|(_, comparisons)| Proof { comparisons })
            .collect()
    }

    /// Scores of all proofs of `goal`.
    pub fn proof_scores(&mut self, goal: &Atom, max_depth: usize) -> Vec<f64> {
        self.proofs(goal, max_depth).iter().map(Proof::score).collect()
    }
}

/// How far the best proof is from a change of its minimising pair: the gap
/// to the runner-up pair inside the best proof, to the best proof using a
/// different pair, and to `threshold`. Infinite when there is no proof.
pub fn tie_distance(proofs: &[Proof], threshold: f64) -> f64 {
    let Some(best) = proofs.iter().max_by(|a, b| a.score().total_cmp(&b.score())) else {
        return f64::INFINITY;
    };
    let s = best.score();
    let w = best.witness();
    let mut gap = if threshold > 0.0 { (s - threshold).abs() } else { f64::INFINITY };
    for (pair, k) in &best.comparisons {
        if Some(*pair) != w {
            gap = gap.min(k - s);
        }
    }
    for p in proofs {
        if p.witness() != w {
            gap = gap.min((s - p.score()).abs());
        }
    }
    gap
}

/// Best proof score when every branch below `threshold` is discarded:
/// the best proof scoring at least `threshold`, or 0 if there is none.
pub fn thresholded_max(scores: &[f64], threshold: f64) -> f64 {
    scores.iter().copied().filter(|s| *s >= threshold).fold(0.0, f64::max)
}

/// AUC-PR by explicit threshold sweep: one precision/recall point per
/// candidate cut `score >= t` for every distinct `t`, recall-step weighted.
pub fn auc_pr_sweep(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|l| **l).count() as f64;
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for t in ts {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        for (s, l) in scores.iter().zip(labels) {
            if *s >= t {
                predicted += 1.0;
                if *l {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        area += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    area
}

/// Mean embedding of the symbols of an item, computed from scratch.
pub fn item_vector(kb: &KnowledgeBase, item: ItemId, store: &ParameterStore, emb: &Embeddings) -> Vec<f64> {
    let atoms: Vec<Atom> = match kb.item(item) {
        Item::Fact(f) => vec![f.atom()],
        Item::Rule(r) => {
            let mut v = vec![r.head];
            v.extend(r.body.iter().copied());
            v
        }
    };
    let mut rows: Vec<&[f64]> = Vec::new();
    for a in &atoms {
        rows.push(store.row(emb.predicates, a.pred.0 as usize));
        for t in a.args {
            if let Term::Const(c) = t {
                rows.push(store.row(emb.constants, c.0 as usize));
            }
        }
    }
    (0..emb.dim)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Nearest-anchor distances for every non-anchor candidate, sorted by
/// `(distance, item)` with a quadratic selection sort.
pub fn nns_brute_force(
    kb: &KnowledgeBase,
    anchors: &[ItemId],
    candidates: &[ItemId],
    store: &ParameterStore,
    emb: &Embeddings,
) -> Vec<(ItemId, f64)> {
    let anchor_vecs: Vec<Vec<f64>> = anchors.iter().map(|a| item_vector(kb, *a, store, emb)).collect();
    let mut rows: Vec<(ItemId, f64)> = candidates
        .iter()
        .filter(|c| !anchors.contains(c))
        .map(|c| {
            let v = item_vector(kb, *c, store, emb);
            let d = anchor_vecs
                .iter()
                .map(|a| a.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            (*c, d)
        })
        .collect();
    for i in 0..rows.len() {
        let mut m = i;
        for j in i + 1..rows.len() {
            let less = rows[j].1 < rows[m].1 || (rows[j].1 == rows[m].1 && rows[j].0 < rows[m].0);
            if less {
                m = j;
            }
        }
        rows.swap(i, m);
    }
    rows
}
