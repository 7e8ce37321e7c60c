//! Symbol vocabulary, atoms, rules and the indexed knowledge base.
//!
//! Facts are stored as compact ground [`Triple`]s; rules (in practice the
//! parameterised templates built by [`crate::prover::templates`]) are kept
//! separately. Both are addressed through a single [`ItemId`] space: ids below
//! `facts.len()` are facts, the rest are rules.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predicate-like symbol: a relation of the dataset or a trainable template slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstId(pub u32);

/// Rule-local variable. Never appears in stored facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl PredId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ConstId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Predicate,
    Constant,
    Variable,
}

/// A resolved symbol handle with its printable name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub id: u32,
    pub name: String,
    pub kind: SymbolKind,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Interner {
    names: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    fn rebuild(&mut self) {
        self.ids = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
    }
}

/// Symbol tables for relations, template slots and constants.
///
/// Ids are dense per kind and assigned in first-appearance order. Template
/// slots share the predicate id space and always come after every relation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Vocab {
    relations: Interner,
    constants: Interner,
    slots: Vec<String>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns a dataset relation.
    ///
    /// Panics once template slots have been allocated, since slots are laid
    /// out directly after the relations.
    pub fn intern_relation(&mut self, name: &str) -> PredId {
        if let Some(id) = self.relations.get(name) {
            return PredId(id);
        }
        assert!(
            self.slots.is_empty(),
            "relation {name:?} interned after template slots were allocated"
        );
        PredId(self.relations.intern(name))
    }

    pub fn intern_constant(&mut self, name: &str) -> ConstId {
        ConstId(self.constants.intern(name))
    }

    pub fn add_slot(&mut self) -> PredId {
        let id = self.relations.names.len() + self.slots.len();
        self.slots.push(format!("#{}", self.slots.len() + 1));
        PredId(id as u32)
    }

    pub fn relation(&self, name: &str) -> Result<PredId> {
        self.relations
            .get(name)
            .map(PredId)
            .ok_or_else(|| Error::Lookup(format!("relation {name:?}")))
    }

    pub fn constant(&self, name: &str) -> Result<ConstId> {
        self.constants
            .get(name)
            .map(ConstId)
            .ok_or_else(|| Error::Lookup(format!("constant {name:?}")))
    }

    pub fn num_relations(&self) -> usize {
        self.relations.names.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// Relations plus template slots.
    pub fn num_predicates(&self) -> usize {
        self.relations.names.len() + self.slots.len()
    }

    pub fn num_constants(&self) -> usize {
        self.constants.names.len()
    }

    pub fn is_relation(&self, p: PredId) -> bool {
        p.index() < self.num_relations()
    }

    pub fn relations(&self) -> impl Iterator<Item = PredId> {
        (0..self.num_relations() as u32).map(PredId)
    }

    pub fn constants(&self) -> impl Iterator<Item = ConstId> {
        (0..self.num_constants() as u32).map(ConstId)
    }

    pub fn predicate_name(&self, p: PredId) -> &str {
        let i = p.index();
        let n = self.relations.names.len();
        if i < n {
            &self.relations.names[i]
        } else {
            &self.slots[i - n]
        }
    }

    pub fn constant_name(&self, c: ConstId) -> &str {
        &self.constants.names[c.index()]
    }

    pub fn predicate_symbol(&self, p: PredId) -> Symbol {
        Symbol {
            id: p.0,
            name: self.predicate_name(p).to_owned(),
            kind: SymbolKind::Predicate,
        }
    }

    pub fn constant_symbol(&self, c: ConstId) -> Symbol {
        Symbol {
            id: c.0,
            name: self.constant_name(c).to_owned(),
            kind: SymbolKind::Constant,
        }
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations.names
    }

    pub fn constant_names(&self) -> &[String] {
        &self.constants.names
    }

    /// Restores the lookup maps after deserialisation.
    pub fn rebuild_index(&mut self) {
        self.relations.rebuild();
        self.constants.rebuild();
    }

    pub fn format_triple(&self, t: &Triple) -> String {
        format!(
            "{}({}, {})",
            self.predicate_name(t.rel),
            self.constant_name(t.head),
            self.constant_name(t.tail)
        )
    }

    pub fn format_atom(&self, a: &Atom) -> String {
        let term = |t: &Term| match t {
            Term::Const(c) => self.constant_name(*c).to_owned(),
            Term::Var(v) => format!("X{}", v.0),
        };
        format!(
            "{}({}, {})",
            self.predicate_name(a.pred),
            term(&a.args[0]),
            term(&a.args[1])
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Const(ConstId),
    Var(VarId),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

/// A binary atom `pred(arg0, arg1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: PredId,
    pub args: [Term; 2],
}

impl Atom {
    pub fn new(pred: PredId, a: Term, b: Term) -> Self {
        Self { pred, args: [a, b] }
    }

    pub fn is_ground(&self) -> bool {
        !self.args[0].is_var() && !self.args[1].is_var()
    }

    pub fn as_triple(&self) -> Option<Triple> {
        match self.args {
            [Term::Const(h), Term::Const(t)] => Some(Triple::new(h, self.pred, t)),
            _ => None,
        }
    }
}

/// Ground fact `rel(head, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: ConstId,
    pub rel: PredId,
    pub tail: ConstId,
}

impl Triple {
    pub fn new(head: ConstId, rel: PredId, tail: ConstId) -> Self {
        Self { head, rel, tail }
    }

    pub fn atom(&self) -> Atom {
        Atom::new(self.rel, Term::Const(self.head), Term::Const(self.tail))
    }
}

/// `head :- body`. Facts are rules with an empty body and no variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Atom>,
    /// Predicate positions that are trainable template slots.
    pub template_slots: Vec<PredId>,
    num_vars: u32,
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Atom>, template_slots: Vec<PredId>) -> Self {
        let num_vars = std::iter::once(&head)
            .chain(body.iter())
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.0 + 1),
                Term::Const(_) => None,
            })
            .max()
            .unwrap_or(0);
        Self {
            head,
            body,
            template_slots,
            num_vars,
        }
    }

    /// Number of distinct variable indices used (variables are numbered from 0).
    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    /// Every body variable must be reachable from a head variable through
    /// shared body atoms.
    pub fn is_connected(&self) -> bool {
        let mut reached: HashSet<VarId> = self
            .head
            .args
            .iter()
            .filter_map(|t| match t {
                Term::Var(v) => Some(*v),
                _ => None,
            })
            .collect();
        let mut changed = true;
        while changed {
            changed = false;
            for atom in &self.body {
                let vars: Vec<VarId> = atom
                    .args
                    .iter()
                    .filter_map(|t| match t {
                        Term::Var(v) => Some(*v),
                        _ => None,
                    })
                    .collect();
                if vars.iter().any(|v| reached.contains(v)) {
                    for v in vars {
                        changed |= reached.insert(v);
                    }
                }
            }
        }
        self.body
            .iter()
            .flat_map(|a| a.args.iter())
            .all(|t| match t {
                Term::Var(v) => reached.contains(v),
                Term::Const(_) => true,
            })
    }
}

/// Borrowed view of one knowledge item.
#[derive(Debug, Clone, Copy)]
pub enum Item<'a> {
    Fact(&'a Triple),
    Rule(&'a Rule),
}

/// Immutable, indexed store of facts and rules.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    facts: Vec<Triple>,
    rules: Vec<Rule>,
    fact_ids: HashMap<Triple, ItemId>,
    predicate_index: BTreeMap<PredId, Vec<ItemId>>,
}

impl KnowledgeBase {
    /// Builds a KB; duplicate facts are dropped, keeping the first occurrence.
    pub fn new(facts: impl IntoIterator<Item = Triple>, rules: Vec<Rule>) -> Self {
        let mut kb = KnowledgeBase::default();
        for f in facts {
            if kb.fact_ids.contains_key(&f) {
                continue;
            }
            let id = ItemId(kb.facts.len() as u32);
            kb.fact_ids.insert(f, id);
            kb.facts.push(f);
        }
        let n = kb.facts.len() as u32;
        for (i, f) in kb.facts.iter().enumerate() {
            kb.predicate_index.entry(f.rel).or_default().push(ItemId(i as u32));
        }
        for (i, r) in rules.iter().enumerate() {
            kb.predicate_index
                .entry(r.head.pred)
                .or_default()
                .push(ItemId(n + i as u32));
        }
        kb.rules = rules;
        kb
    }

    pub fn facts(&self) -> &[Triple] {
        &self.facts
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.facts.len() + self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn item(&self, id: ItemId) -> Item<'_> {
        let i = id.index();
        if i < self.facts.len() {
            Item::Fact(&self.facts[i])
        } else {
            Item::Rule(&self.rules[i - self.facts.len()])
        }
    }

    pub fn item_ids(&self) -> impl Iterator<Item = ItemId> {
        (0..self.len() as u32).map(ItemId)
    }

    pub fn rule_ids(&self) -> impl Iterator<Item = ItemId> {
        (self.facts.len() as u32..self.len() as u32).map(ItemId)
    }

    pub fn head_predicate(&self, id: ItemId) -> PredId {
        match self.item(id) {
            Item::Fact(t) => t.rel,
            Item::Rule(r) => r.head.pred,
        }
    }

    pub fn fact_id(&self, t: &Triple) -> Option<ItemId> {
        self.fact_ids.get(t).copied()
    }

    pub fn contains_fact(&self, t: &Triple) -> bool {
        self.fact_ids.contains_key(t)
    }

    pub fn predicate_index(&self) -> &BTreeMap<PredId, Vec<ItemId>> {
        &self.predicate_index
    }

    /// View over every item.
    pub fn full_view(&self) -> KbView {
        KbView::from_groups(
            self.predicate_index
                .iter()
                .map(|(p, items)| (*p, items.clone()))
                .collect(),
        )
    }
}

/// Read-only subset of a [`KnowledgeBase`], grouped by head predicate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KbView {
    groups: Vec<(PredId, Vec<ItemId>)>,
    len: usize,
}

impl KbView {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Groups must carry distinct predicates; they are sorted here.
    pub fn from_groups(mut groups: Vec<(PredId, Vec<ItemId>)>) -> Self {
        groups.retain(|(_, items)| !items.is_empty());
        groups.sort_by_key(|(p, _)| *p);
        for (_, items) in groups.iter_mut() {
            items.sort();
        }
        let len = groups.iter().map(|(_, i)| i.len()).sum();
        Self { groups, len }
    }

    /// Groups `items` by their head predicate in `kb`.
    pub fn from_items(kb: &KnowledgeBase, items: impl IntoIterator<Item = ItemId>) -> Self {
        let mut map: BTreeMap<PredId, Vec<ItemId>> = BTreeMap::new();
        for id in items {
            map.entry(kb.head_predicate(id)).or_default().push(id);
        }
        Self::from_groups(map.into_iter().collect())
    }

    pub fn groups(&self) -> &[(PredId, Vec<ItemId>)] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.groups.iter().flat_map(|(_, i)| i.iter().copied())
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.groups.iter().any(|(_, items)| items.binary_search(&id).is_ok())
    }
}

/// Sub-KB of facts and rules whose head predicate is in `predicates`.
pub fn match_predicates(
    kb: &KnowledgeBase,
    vocab: &Vocab,
    predicates: &BTreeSet<PredId>,
) -> Result<KbView> {
    let mut groups = Vec::with_capacity(predicates.len());
    for &p in predicates {
        if p.index() >= vocab.num_predicates() {
            return Err(Error::Lookup(format!("predicate id {}", p.0)));
        }
        if let Some(items) = kb.predicate_index.get(&p) {
            groups.push((p, items.clone()));
        }
    }
    Ok(KbView::from_groups(groups))
}

/// Counts reported by [`parse_triples`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub facts: usize,
    /// Two-token lines (unary atoms), skipped.
    pub unary_skipped: usize,
}

/// Parses whitespace-separated `subject predicate object` lines.
pub fn parse_triples(text: &str, vocab: &mut Vocab) -> Result<(Vec<Triple>, ParseStats)> {
    let mut facts = Vec::new();
    let mut stats = ParseStats::default();
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.len() {
            0 => continue,
            2 => {
                stats.unary_skipped += 1;
                continue;
            }
            3 => {
                let h = vocab.intern_constant(tokens[0]);
                let r = vocab.intern_relation(tokens[1]);
                let t = vocab.intern_constant(tokens[2]);
                facts.push(Triple::new(h, r, t));
            }
            n => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 3 tokens, found {n}"),
                })
            }
        }
    }
    if stats.unary_skipped > 0 {
        log::warn!("skipped {} unary atoms", stats.unary_skipped);
    }
    stats.facts = facts.len();
    Ok((facts, stats))
}

/// Writes facts back in the tab-separated format read by [`parse_triples`].
pub fn write_triples(facts: &[Triple], vocab: &Vocab) -> String {
    let mut out = String::new();
    for f in facts {
        out.push_str(vocab.constant_name(f.head));
        out.push('\t');
        out.push_str(vocab.predicate_name(f.rel));
        out.push('\t');
        out.push_str(vocab.constant_name(f.tail));
        out.push('\n');
    }
    out
}

/// Train/valid/test partition of a fact list.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn all_facts(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

const SPLIT_RETRIES: usize = 100;

/// Split sizes: floor of each ratio times `n`, remainder to the last part.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0) {
        return Err(Error::Config(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    let train = ((ratios[0] * n as f64) + 1e-9).floor() as usize;
    let valid = ((ratios[1] * n as f64) + 1e-9).floor() as usize;
    let train = train.min(n);
    let valid = valid.min(n - train);
    Ok([train, valid, n - train - valid])
}

/// Seeded shuffle-and-cut split.
///
/// Re-draws up to a bounded number of times until every relation of the
/// held-out parts also occurs in training; the last draw is kept otherwise.
pub fn split_dataset(facts: &[Triple], ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let [n_train, n_valid, _] = split_sizes(facts.len(), ratios)?;
    if facts.is_empty() {
        return Err(Error::Config("cannot split an empty fact list".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<Triple> = facts.to_vec();
    for _ in 0..SPLIT_RETRIES {
        order.copy_from_slice(facts);
        order.shuffle(&mut rng);
        let train_rels: HashSet<PredId> = order[..n_train].iter().map(|f| f.rel).collect();
        if order[n_train..].iter().all(|f| train_rels.contains(&f.rel)) {
            break;
        }
    }
    Ok(DatasetSplit {
        train: order[..n_train].to_vec(),
        valid: order[n_train..n_train + n_valid].to_vec(),
        test: order[n_train + n_valid..].to_vec(),
        seed,
    })
}

/// Every head and tail replacement of `fact` that is not a known fact.
///
/// Head replacements come first, each in ascending constant order.
pub fn generate_corruptions(
    fact: &Triple,
    known: &HashSet<Triple>,
    num_constants: usize,
) -> Vec<Triple> {
    let mut out = Vec::with_capacity(2 * num_constants.saturating_sub(1));
    for c in (0..num_constants as u32).map(ConstId) {
        if c == fact.head {
            continue;
        }
        let t = Triple::new(c, fact.rel, fact.tail);
        if !known.contains(&t) {
            out.push(t);
        }
    }
    for c in (0..num_constants as u32).map(ConstId) {
        if c == fact.tail {
            continue;
        }
        let t = Triple::new(fact.head, fact.rel, c);
        if !known.contains(&t) {
            out.push(t);
        }
    }
    out
}

impl fmt::Display for PredId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}
