//! Layered store of useful relations, the generator's training signal.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kb::{ItemId, PredId, Vocab};
use crate::prover::HighQualityBuffer;

/// Where a storage entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// A unification above the threshold.
    Unify,
    /// A nearest-neighbour completion.
    Nns,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Unify => "unify",
            Provenance::Nns => "nns",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unify" => Ok(Provenance::Unify),
            "nns" => Ok(Provenance::Nns),
            other => Err(Error::Config(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageEntry {
    pub predicate: PredId,
    pub score: f64,
    /// Goal relation whose proof produced this entry.
    pub goal: PredId,
    pub provenance: Provenance,
    /// Insertion order, used to break score ties on eviction.
    pub seq: u64,
}

/// Relations grouped by the proof layer at which their knowledge was used.
///
/// Layer `l` (1-based) holds at most `cap_l` entries with
/// `cap_1 = ep_1 * B` and `cap_l = ep_l * cap_{l-1}`; the whole storage holds
/// at most `max_size`. One entry exists per (predicate, goal) pair and layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationStorage {
    ep: Vec<usize>,
    batch_size: usize,
    max_size: usize,
    layers: Vec<Vec<StorageEntry>>,
    next_seq: u64,
}

/// Capacities from the expansion coefficients and batch size.
pub fn capacities(ep: &[usize], batch_size: usize) -> Vec<usize> {
    let mut caps = Vec::with_capacity(ep.len());
    let mut prev = batch_size;
    for &e in ep {
        prev = e * prev;
        caps.push(prev);
    }
    caps
}

impl RelationStorage {
    pub fn new(ep: Vec<usize>, batch_size: usize, max_size: usize) -> Self {
        let n = ep.len();
        Self {
            ep,
            batch_size,
            max_size,
            layers: vec![Vec::new(); n],
            next_seq: 0,
        }
    }

    pub fn capacities(&self) -> Vec<usize> {
        capacities(&self.ep, self.batch_size)
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// `min(max_size, Σ cap_l)`: the size at which completion stops.
    pub fn effective_max(&self) -> usize {
        self.max_size.min(self.capacities().iter().sum())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<StorageEntry>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &[StorageEntry] {
        &self.layers[l - 1]
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.effective_max()
    }

    /// Adds or refreshes an entry in layer `layer` (1-based, clamped to the
    /// last layer), then evicts lowest-score entries (oldest first on ties)
    /// until every bound holds.
    pub fn insert(&mut self, layer: usize, predicate: PredId, score: f64, goal: PredId, provenance: Provenance) {
        if self.layers.is_empty() {
            return;
        }
        let li = layer.clamp(1, self.layers.len()) - 1;
        let entries = &mut self.layers[li];
        if let Some(e) = entries.iter_mut().find(|e| e.predicate == predicate && e.goal == goal) {
            if score > e.score {
                e.score = score;
                e.provenance = provenance;
            }
            return;
        }
        entries.push(StorageEntry { predicate, score, goal, provenance, seq: self.next_seq });
        self.next_seq += 1;
        let cap = self.capacities()[li];
        while self.layers[li].len() > cap {
            Self::evict_from(&mut self.layers[li]);
        }
        while self.len() > self.max_size {
            let li = self.weakest_layer();
            Self::evict_from(&mut self.layers[li]);
        }
    }

    fn lowest(entries: &[StorageEntry]) -> Option<usize> {
        (0..entries.len()).min_by(|&a, &b| {
            entries[a]
                .score
                .total_cmp(&entries[b].score)
                .then(entries[a].seq.cmp(&entries[b].seq))
        })
    }

    fn evict_from(entries: &mut Vec<StorageEntry>) {
        if let Some(i) = Self::lowest(entries) {
            entries.remove(i);
        }
    }

    fn weakest_layer(&self) -> usize {
        let mut best: Option<(usize, StorageEntry)> = None;
        for (li, layer) in self.layers.iter().enumerate() {
            if let Some(i) = Self::lowest(layer) {
                let e = layer[i];
                let better = match &best {
                    None => true,
                    Some((_, b)) => e.score < b.score || (e.score == b.score && e.seq < b.seq),
                };
                if better {
                    best = Some((li, e));
                }
            }
        }
        best.map_or(0, |(li, _)| li)
    }

    /// Predicates stored for `goal` in layer `l`.
    pub fn entries_for(&self, l: usize, goal: PredId) -> impl Iterator<Item = &StorageEntry> {
        self.layers[l - 1].iter().filter(move |e| e.goal == goal)
    }

    /// Text form: one `layer<TAB>predicate<TAB>score<TAB>goal<TAB>provenance`
    /// line per entry, layers in order.
    pub fn dump(&self, vocab: &Vocab) -> String {
        let mut out = String::from("# layer\tpredicate\tscore\tgoal\tprovenance\n");
        for (li, layer) in self.layers.iter().enumerate() {
            for e in layer {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    li + 1,
                    vocab.predicate_name(e.predicate),
                    e.score,
                    vocab.predicate_name(e.goal),
                    e.provenance
                ));
            }
        }
        out
    }

    /// Reads a dump (possibly hand-edited) into an empty storage with the
    /// given shape. Lines starting with `#` are ignored.
    pub fn load(text: &str, vocab: &Vocab, ep: Vec<usize>, batch_size: usize, max_size: usize) -> Result<Self> {
        let mut s = Self::new(ep, batch_size, max_size);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: String| Error::Parse { line: i + 1, message: m };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 tab-separated fields, found {}", f.len())));
            }
            let layer: usize = f[0].parse().map_err(|_| bad(format!("bad layer {:?}", f[0])))?;
            if layer == 0 || layer > s.num_layers() {
                return Err(bad(format!("layer {layer} out of range")));
            }
            let pred = vocab.relation(f[1]).map_err(|e| bad(e.to_string()))?;
            let score: f64 = f[2].parse().map_err(|_| bad(format!("bad score {:?}", f[2])))?;
            let goal = vocab.relation(f[3]).map_err(|e| bad(e.to_string()))?;
            let prov: Provenance = f[4].parse().map_err(|e: Error| bad(e.to_string()))?;
            s.insert(layer, pred, score, goal, prov);
        }
        Ok(s)
    }
}

/// Moves the head relations of high-quality knowledge into storage.
/// `relation_of` maps an item to the dataset relation recorded for it.
pub fn update_relation_storage(
    storage: &mut RelationStorage,
    hq: &HighQualityBuffer,
    relation_of: impl Fn(ItemId) -> PredId,
) {
    for e in hq.entries() {
        storage.insert(e.depth, relation_of(e.item), e.score, e.goal, Provenance::Unify);
    }
}
