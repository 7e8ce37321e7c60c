//! Differentiable backward chaining over a selected sub-KB.
//!
//! Scores follow max-min semantics: a branch's score is the minimum kernel
//! value met along it, and a goal's score is the maximum over its proofs.
//! The search runs on a precomputed [`KernelTable`]; the one kernel pair that
//! determines the final score (the [`Witness`]) is replayed on a [`Tape`] to
//! obtain gradients.

pub mod kernels;
pub mod loss;
pub mod templates;

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::autodiff::{ParameterStore, Tape, Var};
use crate::embedding::Embeddings;
use crate::error::{Error, Result};
use crate::kb::{Atom, ConstId, Item, ItemId, KbView, KnowledgeBase, PredId, Rule, Term, VarId, Vocab};

pub use kernels::KernelTable;
pub use loss::{loss_on_tape, sample_negatives, training_loss, BatchOutcome, LossContext, SCORE_EPS};
pub use templates::{TemplateShape, TemplateSpec};

/// Variables of caller-supplied goals must stay below this index; rule
/// variables are renamed apart starting here.
pub const FRESH_VAR_BASE: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ProverConfig {
    /// Recursion budget `d`; rule bodies are proved at `d - 1`.
    pub max_depth: usize,
    /// Branches whose running score drops below this are cut.
    pub seted_min_score: f64,
    /// Optional cap on the states yielded per `or_step` call.
    pub beam_cap: Option<usize>,
}

impl Default for ProverConfig {
    fn default() -> Self {
        Self {
            max_depth: 2,
            seted_min_score: 0.1,
            beam_cap: None,
        }
    }
}

impl ProverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.seted_min_score) {
            return Err(Error::Config("seted_min_score must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Storage layer (1-based) of knowledge unified at recursion budget `depth`.
    pub fn layer_of(&self, depth: usize) -> usize {
        self.max_depth.saturating_sub(depth) + 1
    }
}

/// The symbol pair whose kernel value is the current score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Witness {
    Predicate(PredId, PredId),
    Constant(ConstId, ConstId),
}

/// Variable bindings; lookups follow chains until an unbound term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Substitution {
    bindings: Vec<(VarId, Term)>,
}

impl Substitution {
    pub fn get(&self, v: VarId) -> Option<Term> {
        self.bindings.iter().find(|(k, _)| *k == v).map(|(_, t)| *t)
    }

    pub fn walk(&self, mut t: Term) -> Term {
        while let Term::Var(v) = t {
            match self.get(v) {
                Some(next) => t = next,
                None => break,
            }
        }
        t
    }

    fn bind(&mut self, v: VarId, t: Term) {
        debug_assert!(self.get(v).is_none());
        self.bindings.push((v, t));
    }

    pub fn apply(&self, atom: &Atom) -> Atom {
        Atom::new(atom.pred, self.walk(atom.args[0]), self.walk(atom.args[1]))
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(VarId, Term)> {
        self.bindings.iter()
    }
}

/// Substitutions plus running score along one proof branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofState {
    pub substitutions: Substitution,
    pub score: f64,
    pub witness: Option<Witness>,
    /// Knowledge items used on this branch with their storage layer.
    pub trace: Vec<(ItemId, usize)>,
}

impl ProofState {
    pub fn initial() -> Self {
        Self {
            substitutions: Substitution::default(),
            score: 1.0,
            witness: None,
            trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UtilizationCounters {
    /// Knowledge items iterated by `or_step`.
    pub traversed: u64,
    /// Successful unifications.
    pub established: u64,
}

impl UtilizationCounters {
    pub fn add(&mut self, other: UtilizationCounters) {
        self.traversed += other.traversed;
        self.established += other.established;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HqEntry {
    pub item: ItemId,
    pub score: f64,
    /// Storage layer, 1 for knowledge unified directly against a goal.
    pub depth: usize,
    /// Relation of the top-level goal that led here.
    pub goal: PredId,
}

/// Knowledge whose unification cleared the threshold, one entry per item.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HighQualityBuffer {
    entries: Vec<HqEntry>,
    index: HashMap<ItemId, usize>,
}

impl HighQualityBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps the best score (and its goal) and the shallowest depth per item.
    pub fn record(&mut self, entry: HqEntry) {
        match self.index.get(&entry.item) {
            Some(&i) => {
                let e = &mut self.entries[i];
                if entry.score > e.score {
                    e.score = entry.score;
                    e.goal = entry.goal;
                }
                e.depth = e.depth.min(entry.depth);
            }
            None => {
                self.index.insert(entry.item, self.entries.len());
                self.entries.push(entry);
            }
        }
    }

    pub fn merge(&mut self, other: &HighQualityBuffer) {
        for e in &other.entries {
            self.record(*e);
        }
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.index.contains_key(&item)
    }

    pub fn get(&self, item: ItemId) -> Option<&HqEntry> {
        self.index.get(&item).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[HqEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Soft unification of a knowledge head with a goal.
///
/// Binds variables, folds the kernel value of every non-variable symbol pair
/// (predicates included) into the running minimum, and fails once that
/// minimum falls below `threshold`. A bound variable resolving to a
/// different constant than its counterpart also fails.
pub fn unify(
    head: &Atom,
    goal: &Atom,
    state: &ProofState,
    kernels: &KernelTable,
    threshold: f64,
) -> Option<ProofState> {
    let mut score = state.score;
    let mut witness = state.witness;
    let k = kernels.predicate(head.pred, goal.pred);
    if k < score {
        score = k;
        witness = Some(Witness::Predicate(head.pred, goal.pred));
    }
    if score < threshold {
        return None;
    }
    let mut subs = state.substitutions.clone();
    for i in 0..2 {
        let (h0, g0) = (head.args[i], goal.args[i]);
        let (h, g) = (subs.walk(h0), subs.walk(g0));
        match (h, g) {
            (Term::Var(hv), _) => {
                if h != g {
                    subs.bind(hv, g);
                }
            }
            (_, Term::Var(gv)) => subs.bind(gv, h),
            (Term::Const(hc), Term::Const(gc)) => {
                if h0.is_var() || g0.is_var() {
                    if hc != gc {
                        return None;
                    }
                } else {
                    let k = kernels.constant(hc, gc);
                    if k < score {
                        score = k;
                        witness = Some(Witness::Constant(hc, gc));
                    }
                    if score < threshold {
                        return None;
                    }
                }
            }
        }
    }
    Some(ProofState {
        substitutions: subs,
        score,
        witness,
        trace: state.trace.clone(),
    })
}

/// Best proof of a goal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofScore {
    pub score: f64,
    pub witness: Option<Witness>,
    pub best: Option<ProofState>,
}

impl ProofScore {
    pub fn none() -> Self {
        Self {
            score: 0.0,
            witness: None,
            best: None,
        }
    }
}

type Emit<'e, 'a> = &'e mut dyn FnMut(&mut ProofSearch<'a>, ProofState);

/// One proof search against a frozen kernel snapshot.
///
/// Collects utilization counters and high-quality knowledge as it goes; each
/// goal gets its own search so buffers can be merged deterministically.
pub struct ProofSearch<'a> {
    kb: &'a KnowledgeBase,
    view: &'a KbView,
    kernels: &'a KernelTable,
    config: &'a ProverConfig,
    mask: Option<ItemId>,
    goal_relation: PredId,
    next_var: u32,
    pub counters: UtilizationCounters,
    pub hq: HighQualityBuffer,
    proofs: Option<Vec<ProofState>>,
    bound: bool,
    best: f64,
}

impl<'a> ProofSearch<'a> {
    pub fn new(
        kb: &'a KnowledgeBase,
        view: &'a KbView,
        kernels: &'a KernelTable,
        config: &'a ProverConfig,
    ) -> Self {
        Self {
            kb,
            view,
            kernels,
            config,
            mask: None,
            goal_relation: PredId(0),
            next_var: FRESH_VAR_BASE,
            counters: UtilizationCounters::default(),
            hq: HighQualityBuffer::new(),
            proofs: None,
            bound: false,
            best: f64::NEG_INFINITY,
        }
    }

    /// Prunes branches that can no longer beat the best proof found so far.
    /// The returned score is unchanged; counters and the high-quality buffer
    /// then only reflect the explored part of the search.
    pub fn with_bound(mut self) -> Self {
        self.bound = true;
        self
    }

    fn pruned(&self, score: f64) -> bool {
        self.bound && score <= self.best
    }

    /// Hides one item from the search (used to mask a training fact).
    pub fn with_mask(mut self, item: Option<ItemId>) -> Self {
        self.mask = item;
        self
    }

    /// Keeps every top-level proof for trace dumps.
    pub fn with_proof_log(mut self) -> Self {
        self.proofs = Some(Vec::new());
        self
    }

    pub fn set_goal_relation(&mut self, p: PredId) {
        self.goal_relation = p;
    }

    pub fn logged_proofs(&self) -> &[ProofState] {
        self.proofs.as_deref().unwrap_or(&[])
    }

    fn rename(&mut self, rule: &Rule) -> (Atom, Vec<Atom>) {
        let base = self.next_var;
        self.next_var += rule.num_vars();
        let shift = |a: &Atom| {
            let t = |t: Term| match t {
                Term::Var(v) => Term::Var(VarId(v.0 + base)),
                c => c,
            };
            Atom::new(a.pred, t(a.args[0]), t(a.args[1]))
        };
        (shift(&rule.head), rule.body.iter().map(shift).collect())
    }

    /// Unifies `head` (knowledge item `item`) with `goal` and records the
    /// outcome in the counters and the high-quality buffer.
    pub fn unify_item(
        &mut self,
        item: ItemId,
        head: &Atom,
        goal: &Atom,
        state: &ProofState,
        depth: usize,
    ) -> Option<ProofState> {
        let mut s = unify(head, goal, state, self.kernels, self.config.seted_min_score)?;
        if self.pruned(s.score) {
            return None;
        }
        let layer = self.config.layer_of(depth);
        self.counters.established += 1;
        self.hq.record(HqEntry {
            item,
            score: s.score,
            depth: layer,
            goal: self.goal_relation,
        });
        s.trace.push((item, layer));
        Some(s)
    }

    /// OR: tries every item of the selected view against `goal`.
    pub fn or_step(&mut self, goal: &Atom, depth: usize, state: &ProofState, emit: Emit<'_, 'a>) {
        if let Some(cap) = self.config.beam_cap {
            let mut found = Vec::new();
            self.or_items(goal, depth, state, &mut |_, s| found.push(s));
            found.sort_by(|a, b| b.score.total_cmp(&a.score));
            for s in found.into_iter().take(cap) {
                emit(self, s);
            }
        } else {
            self.or_items(goal, depth, state, emit);
        }
    }

    fn or_items(&mut self, goal: &Atom, depth: usize, state: &ProofState, emit: Emit<'_, 'a>) {
        let view = self.view;
        let kb = self.kb;
        let threshold = self.config.seted_min_score;
        for (pred, items) in view.groups() {
            // Every item of a group shares the head predicate, so a failing
            // predicate comparison fails the whole group.
            let k = self.kernels.predicate(*pred, goal.pred);
            let s = k.min(state.score);
            if s < threshold || self.pruned(s) {
                let masked = self.mask.map_or(0, |m| items.binary_search(&m).is_ok() as u64);
                self.counters.traversed += items.len() as u64 - masked;
                continue;
            }
            for &item in items {
                if Some(item) == self.mask {
                    continue;
                }
                self.counters.traversed += 1;
                match kb.item(item) {
                    Item::Fact(f) => {
                        if let Some(s) = self.unify_item(item, &f.atom(), goal, state, depth) {
                            emit(self, s);
                        }
                    }
                    Item::Rule(rule) => {
                        let (head, body) = self.rename(rule);
                        if let Some(s) = self.unify_item(item, &head, goal, state, depth) {
                            self.and_step(&body, depth, s, emit);
                        }
                    }
                }
            }
        }
    }

    /// AND: proves body atoms left to right, threading each resulting state.
    pub fn and_step(&mut self, body: &[Atom], depth: usize, state: ProofState, emit: Emit<'_, 'a>) {
        let Some((first, rest)) = body.split_first() else {
            emit(self, state);
            return;
        };
        if depth == 0 {
            return;
        }
        let sub_goal = state.substitutions.apply(first);
        self.or_step(&sub_goal, depth - 1, &state, &mut |search, s| {
            search.and_step(rest, depth, s, emit)
        });
    }

    /// Collects the states of `or_step` (mostly for tests and trace dumps).
    pub fn collect_or(&mut self, goal: &Atom, depth: usize, state: &ProofState) -> Vec<ProofState> {
        let mut out = Vec::new();
        self.or_step(goal, depth, state, &mut |_, s| out.push(s));
        out
    }

    pub fn collect_and(&mut self, body: &[Atom], depth: usize, state: ProofState) -> Vec<ProofState> {
        let mut out = Vec::new();
        self.and_step(body, depth, state, &mut |_, s| out.push(s));
        out
    }

    /// Maximum score over all proofs of `goal` at the configured depth;
    /// ties keep the first proof found.
    pub fn prove(&mut self, goal: &Atom) -> ProofScore {
        self.goal_relation = goal.pred;
        self.best = f64::NEG_INFINITY;
        let mut best = ProofScore::none();
        let max_depth = self.config.max_depth;
        self.or_step(goal, max_depth, &ProofState::initial(), &mut |search, s| {
            if best.best.is_none() || s.score > best.score {
                best = ProofScore {
                    score: s.score,
                    witness: s.witness,
                    best: Some(s.clone()),
                };
                search.best = s.score;
            }
            if let Some(log) = search.proofs.as_mut() {
                log.push(s);
            }
        });
        best
    }
}

/// Convenience wrapper: proves a ground goal in a fresh search.
pub fn prove_goal(
    goal: &Atom,
    kb: &KnowledgeBase,
    view: &KbView,
    kernels: &KernelTable,
    config: &ProverConfig,
) -> (ProofScore, UtilizationCounters, HighQualityBuffer) {
    let mut search = ProofSearch::new(kb, view, kernels, config);
    let score = search.prove(goal);
    (score, search.counters, search.hq)
}

/// Replays the witness kernel on `tape` so the proof score is differentiable.
pub fn score_on_tape(tape: &mut Tape, store: &ParameterStore, emb: &Embeddings, score: &ProofScore) -> Var {
    match score.witness {
        None => tape.constant(score.score),
        Some(Witness::Predicate(a, b)) => {
            let u = tape.param_row(store, emb.predicates, a.index());
            let v = tape.param_row(store, emb.predicates, b.index());
            tape.kernel(u, v)
        }
        Some(Witness::Constant(a, b)) => {
            let u = tape.param_row(store, emb.constants, a.index());
            let v = tape.param_row(store, emb.constants, b.index());
            tape.kernel(u, v)
        }
    }
}

/// One trace line per proof: chain, bindings and score in a fixed order.
pub fn format_proof(vocab: &Vocab, kb: &KnowledgeBase, goal: &Atom, proof: &ProofState) -> String {
    let mut line = format!("goal={}\tscore={}\tchain=", vocab.format_atom(goal), proof.score);
    let chain: Vec<String> = proof
        .trace
        .iter()
        .map(|(item, layer)| {
            let what = match kb.item(*item) {
                Item::Fact(f) => vocab.format_triple(f),
                Item::Rule(r) => {
                    let body: Vec<String> = r.body.iter().map(|a| vocab.format_atom(a)).collect();
                    format!("{} :- {}", vocab.format_atom(&r.head), body.join(", "))
                }
            };
            format!("{}@{}[{}]", item.0, layer, what)
        })
        .collect();
    line.push_str(&chain.join(" | "));
    line.push_str("\tbindings=");
    let binds: Vec<String> = proof
        .substitutions
        .iter()
        .map(|(v, _)| {
            let val = match proof.substitutions.walk(Term::Var(*v)) {
                Term::Const(c) => vocab.constant_name(c).to_owned(),
                Term::Var(w) => format!("X{}", w.0),
            };
            format!("X{}={}", v.0, val)
        })
        .collect();
    let _ = write!(line, "{}", binds.join(","));
    line
}
