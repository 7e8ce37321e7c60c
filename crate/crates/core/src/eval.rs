//! Ranking metrics, AUC-PR and efficiency measures.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kb::{generate_corruptions, Triple};

/// Filtered rank of one test fact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankRecord {
    pub fact: Triple,
    pub rank: usize,
    pub candidate_count: usize,
    pub score: f64,
}

/// `1 + #{c > s} + floor(#{c == s} / 2)`.
pub fn rank_from_scores(score: f64, corruption_scores: &[f64]) -> usize {
    let above = corruption_scores.iter().filter(|c| **c > score).count();
    let equal = corruption_scores.iter().filter(|c| **c == score).count();
    1 + above + equal / 2
}

/// Ranks `fact` against all its filtered corruptions. `score_batch` scores
/// a slice of candidates, the fact itself first.
pub fn rank_filtered(
    fact: &Triple,
    known: &HashSet<Triple>,
    num_constants: usize,
    score_batch: impl FnOnce(&[Triple]) -> Vec<f64>,
) -> RankRecord {
    let mut cands = vec![*fact];
    cands.extend(generate_corruptions(fact, known, num_constants));
    let scores = score_batch(&cands);
    RankRecord {
        fact: *fact,
        rank: rank_from_scores(scores[0], &scores[1..]),
        candidate_count: cands.len() - 1,
        score: scores[0],
    }
}

/// MRR and HITS@m for each `m`, keyed `mrr` and `hits@m`.
pub fn compute_mrr_hits(records: &[RankRecord], ms: &[usize]) -> Result<BTreeMap<String, f64>> {
    if records.is_empty() {
        return Err(Error::Evaluation("no rank records".into()));
    }
    let n = records.len() as f64;
    let mut out = BTreeMap::new();
    out.insert("mrr".to_string(), records.iter().map(|r| 1.0 / r.rank as f64).sum::<f64>() / n);
    for &m in ms {
        let hits = records.iter().filter(|r| r.rank <= m).count() as f64;
        out.insert(format!("hits@{m}"), hits / n);
    }
    Ok(out)
}

/// Area under the precision-recall curve with step interpolation.
///
/// Thresholds sweep the distinct scores in descending order; tied scores
/// enter together. Each recall increment is weighted by the precision at
/// that threshold.
pub fn compute_auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Evaluation("scores and labels differ in length".into()));
    }
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(Error::Evaluation("AUC-PR needs at least one positive label".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut prev_recall, mut area) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / seen as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Search statistics and wall time of one training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EfficiencyRecord {
    pub traversed: u64,
    pub established: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    /// Mean iteration time of the model over that of the baseline.
    pub attp_ratio: f64,
    pub utilization: f64,
    pub baseline_utilization: f64,
    pub traversed: u64,
    pub baseline_traversed: u64,
}

/// `Σ established / Σ traversed`.
pub fn utilization(records: &[EfficiencyRecord]) -> Result<f64> {
    let t: u64 = records.iter().map(|r| r.traversed).sum();
    let e: u64 = records.iter().map(|r| r.established).sum();
    if t == 0 {
        return Err(Error::Evaluation("utilization undefined: nothing traversed".into()));
    }
    Ok(e as f64 / t as f64)
}

fn mean_ms(records: &[EfficiencyRecord]) -> f64 {
    records.iter().map(|r| r.wall_ms).sum::<f64>() / records.len() as f64
}

pub fn compute_efficiency(model: &[EfficiencyRecord], baseline: &[EfficiencyRecord]) -> Result<Efficiency> {
    if model.is_empty() || baseline.is_empty() {
        return Err(Error::Evaluation("efficiency needs records for both modes".into()));
    }
    let base_ms = mean_ms(baseline);
    if base_ms <= 0.0 {
        return Err(Error::Evaluation("baseline wall time is zero".into()));
    }
    Ok(Efficiency {
        attp_ratio: mean_ms(model) / base_ms,
        utilization: utilization(model)?,
        baseline_utilization: utilization(baseline)?,
        traversed: model.iter().map(|r| r.traversed).sum(),
        baseline_traversed: baseline.iter().map(|r| r.traversed).sum(),
    })
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("dataset,metric,value,seed,config_hash\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.dataset, r.metric, r.value, r.seed, r.config_hash);
    }
    out
}
