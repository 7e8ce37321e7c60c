//! Dataset discovery and loading.
//!
//! A dataset directory holds either one `facts.tsv` (split here with the
//! configured ratios) or ready-made `train.tsv`, `valid.tsv` and `test.tsv`.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kb::{parse_triples, split_dataset, ConstId, DatasetSplit, ParseStats, PredId, Triple, Vocab};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "RELPROVE_DATA_DIR";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub vocab: Vocab,
    pub split: DatasetSplit,
    pub stats: ParseStats,
}

/// Resolves a dataset name: an existing path is used as is, anything else
/// is looked up under `$RELPROVE_DATA_DIR` (default `data`).
pub fn resolve_dataset_dir(name: &str) -> PathBuf {
    let p = PathBuf::from(name);
    if p.is_dir() {
        return p;
    }
    let base = std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from);
    base.join(name)
}

fn read(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingDataset(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn add_stats(a: &mut ParseStats, b: ParseStats) {
    a.facts += b.facts;
    a.unary_skipped += b.unary_skipped;
}

/// Loads the dataset in `dir`.
pub fn load_dataset(dir: &Path, ratios: [f64; 3], seed: u64) -> Result<Dataset> {
    let name = dir
        .file_name()
        .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    let mut vocab = Vocab::new();
    let mut stats = ParseStats::default();
    let single = dir.join("facts.tsv");
    let split = if single.is_file() {
        let (facts, s) = parse_triples(&read(&single)?, &mut vocab)?;
        stats = s;
        split_dataset(&facts, ratios, seed)?
    } else {
        let mut parts = Vec::new();
        for f in ["train.tsv", "valid.tsv", "test.tsv"] {
            let (facts, s) = parse_triples(&read(&dir.join(f))?, &mut vocab)?;
            add_stats(&mut stats, s);
            parts.push(facts);
        }
        let test = parts.pop().unwrap_or_default();
        let valid = parts.pop().unwrap_or_default();
        let train = parts.pop().unwrap_or_default();
        DatasetSplit { train, valid, test, seed: 0 }
    };
    Ok(Dataset { name, vocab, split, stats })
}

impl Dataset {
    /// Every fact of every split, the filter set for ranking.
    pub fn known(&self) -> HashSet<Triple> {
        self.split.all_facts().copied().collect()
    }

    /// Whether this is a Countries-style task (region classification).
    pub fn is_countries(&self) -> bool {
        self.name.starts_with("countries")
    }

    /// Targets of the `locatedIn` task: constants that appear as the tail
    /// of `locatedIn` but never as its head.
    pub fn regions(&self) -> Result<Vec<ConstId>> {
        let rel = self.vocab.relation("locatedIn")?;
        let facts: Vec<&Triple> = self.split.all_facts().filter(|f| f.rel == rel).collect();
        let heads: BTreeSet<ConstId> = facts.iter().map(|f| f.head).collect();
        let tails: BTreeSet<ConstId> = facts.iter().map(|f| f.tail).collect();
        Ok(tails.difference(&heads).copied().collect())
    }

    pub fn located_in(&self) -> Result<PredId> {
        self.vocab.relation("locatedIn")
    }
}
