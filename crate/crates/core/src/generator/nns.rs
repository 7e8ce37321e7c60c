//! Exact nearest-neighbour completion of the relation storage.

use rayon::prelude::*;

use super::storage::{Provenance, RelationStorage};
use crate::autodiff::{squared_distance, ParameterStore};
use crate::embedding::Embeddings;
use crate::kb::{Item, ItemId, KnowledgeBase, PredId, Term};
use crate::prover::{HighQualityBuffer, HqEntry};

/// Mean of the predicate and constant embeddings appearing in an item.
pub fn item_embedding(kb: &KnowledgeBase, item: ItemId, store: &ParameterStore, emb: &Embeddings) -> Vec<f64> {
    let mut sum = vec![0.0; emb.dim];
    let mut n = 0usize;
    let mut add = |row: &[f64]| {
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
        n += 1;
    };
    let atoms = match kb.item(item) {
        Item::Fact(f) => vec![f.atom()],
        Item::Rule(r) => std::iter::once(r.head).chain(r.body.iter().copied()).collect(),
    };
    for a in &atoms {
        add(emb.predicate(store, a.pred));
        for t in a.args {
            if let Term::Const(c) = t {
                add(emb.constant(store, c));
            }
        }
    }
    sum.iter_mut().for_each(|s| *s /= n as f64);
    sum
}

/// A completion candidate with its closest high-quality anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnsCandidate {
    pub item: ItemId,
    pub distance: f64,
    pub anchor: HqEntry,
}

/// Every candidate outside `hq`, ordered by Euclidean distance to its
/// nearest `hq` member (ties by item id, then anchor order).
pub fn nns_order(
    hq: &HighQualityBuffer,
    kb: &KnowledgeBase,
    candidates: &[ItemId],
    store: &ParameterStore,
    emb: &Embeddings,
) -> Vec<NnsCandidate> {
    if hq.is_empty() {
        return Vec::new();
    }
    let anchors: Vec<(HqEntry, Vec<f64>)> = hq
        .entries()
        .iter()
        .map(|e| (*e, item_embedding(kb, e.item, store, emb)))
        .collect();
    let mut out: Vec<NnsCandidate> = candidates
        .par_iter()
        .filter(|c| !hq.contains(**c))
        .map(|&item| {
            let v = item_embedding(kb, item, store, emb);
            let mut best = (f64::INFINITY, anchors[0].0);
            for (a, av) in &anchors {
                let d = squared_distance(&v, av);
                if d < best.0 {
                    best = (d, *a);
                }
            }
            NnsCandidate { item, distance: best.0.sqrt(), anchor: best.1 }
        })
        .collect();
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.item.cmp(&b.item)));
    out
}

/// Adds the closest knowledge to storage until it is full or the candidates
/// run out. Each addition inherits its anchor's layer and goal and scores
/// `anchor.score * exp(-distance²)`. Returns the added items in order.
pub fn nns_complete(
    storage: &mut RelationStorage,
    hq: &HighQualityBuffer,
    kb: &KnowledgeBase,
    candidates: &[ItemId],
    store: &ParameterStore,
    emb: &Embeddings,
    relation_of: impl Fn(ItemId) -> PredId,
) -> Vec<ItemId> {
    let mut added = Vec::new();
    if storage.is_full() {
        return added;
    }
    for c in nns_order(hq, kb, candidates, store, emb) {
        if storage.is_full() {
            break;
        }
        let score = c.anchor.score * (-c.distance * c.distance).exp();
        storage.insert(c.anchor.depth, relation_of(c.item), score, c.anchor.goal, Provenance::Nns);
        added.push(c.item);
    }
    added
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{ConstId, Triple};

    fn world() -> (KnowledgeBase, ParameterStore, Embeddings) {
        let facts = vec![
            Triple::new(ConstId(0), PredId(0), ConstId(1)),
            Triple::new(ConstId(1), PredId(0), ConstId(2)),
        ];
        let kb = KnowledgeBase::new(facts, vec![]);
        let mut store = ParameterStore::new();
        let emb = Embeddings::allocate(&mut store, 1, 3, 2);
        for c in 0..3 {
            store.row_mut(emb.constants, c).copy_from_slice(&[c as f64, 0.0]);
        }
        (kb, store, emb)
    }

    #[test]
    fn item_embedding_is_mean() {
        let (kb, store, emb) = world();
        assert_eq!(item_embedding(&kb, ItemId(1), &store, &emb), vec![1.0, 0.0]);
    }

    #[test]
    fn only_candidate_is_added() {
        let (kb, store, emb) = world();
        let mut hq = HighQualityBuffer::new();
        hq.record(HqEntry { item: ItemId(0), score: 0.5, depth: 2, goal: PredId(0) });
        let mut s = RelationStorage::new(vec![4, 2, 2], 1, 10);
        let ids: Vec<ItemId> = kb.item_ids().collect();
        let added = nns_complete(&mut s, &hq, &kb, &ids, &store, &emb, |_| PredId(0));
        assert_eq!(added, vec![ItemId(1)]);
        assert_eq!(s.layer(2).len(), 1);
        assert_eq!(s.layer(2)[0].provenance, Provenance::Nns);
    }

    #[test]
    fn full_storage_adds_nothing() {
        let (kb, store, emb) = world();
        let mut hq = HighQualityBuffer::new();
        hq.record(HqEntry { item: ItemId(0), score: 0.5, depth: 1, goal: PredId(0) });
        let mut s = RelationStorage::new(vec![1], 1, 1);
        s.insert(1, PredId(0), 1.0, PredId(0), Provenance::Unify);
        let ids: Vec<ItemId> = kb.item_ids().collect();
        assert!(nns_complete(&mut s, &hq, &kb, &ids, &store, &emb, |_| PredId(0)).is_empty());
    }
}
