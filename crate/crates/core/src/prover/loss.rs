//! Cross-entropy over masked positives and filtered corruptions.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use super::{score_on_tape, HighQualityBuffer, KernelTable, ProofScore, ProofSearch, ProverConfig, UtilizationCounters};
use crate::autodiff::{Gradients, ParameterStore, Tape, Var};
use crate::embedding::Embeddings;
use crate::kb::{ConstId, KbView, KnowledgeBase, Triple};

/// Scores are clamped to `[SCORE_EPS, 1 - SCORE_EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

/// Draws up to `n` corruptions of `fact`, replacing head or tail with equal
/// probability and rejecting anything in `known`. Fewer are returned when
/// the constant pool is too small.
pub fn sample_negatives(
    fact: &Triple,
    known: &HashSet<Triple>,
    num_constants: usize,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<Triple> {
    let mut out = Vec::with_capacity(n);
    if num_constants < 2 {
        return out;
    }
    let mut attempts = 0;
    while out.len() < n && attempts < 20 * n.max(1) {
        attempts += 1;
        let c = ConstId(rng.gen_range(0..num_constants as u32));
        let cand = if rng.gen_bool(0.5) {
            Triple::new(c, fact.rel, fact.tail)
        } else {
            Triple::new(fact.head, fact.rel, c)
        };
        if cand != *fact && !known.contains(&cand) && !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

/// Loss, gradients and search statistics of one batch.
#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    pub loss: f64,
    pub grads: Gradients,
    pub counters: UtilizationCounters,
    pub hq: HighQualityBuffer,
    /// Proof scores of the positives, in batch order.
    pub positive_scores: Vec<f64>,
}

/// Shared inputs of a loss evaluation.
#[derive(Clone, Copy)]
pub struct LossContext<'a> {
    pub kb: &'a KnowledgeBase,
    pub view: &'a KbView,
    pub kernels: &'a KernelTable,
    pub config: &'a ProverConfig,
    pub store: &'a ParameterStore,
    pub emb: &'a Embeddings,
}

/// `ln(clamp(s))` for a positive, `ln(1 - clamp(s))` for a negative.
fn log_term(tape: &mut Tape, ctx: &LossContext<'_>, score: &ProofScore, positive: bool) -> Var {
    let s = score_on_tape(tape, ctx.store, ctx.emb, score);
    let s = tape.clamp(s, SCORE_EPS, 1.0 - SCORE_EPS);
    let s = if positive { s } else { tape.one_minus(s) };
    tape.ln(s)
}

struct GoalResult {
    ln: f64,
    score: f64,
    grads: Gradients,
    counters: UtilizationCounters,
    hq: HighQualityBuffer,
}

fn prove_term(ctx: &LossContext<'_>, positive: &Triple, goal: &Triple, is_pos: bool) -> GoalResult {
    let mut search =
        ProofSearch::new(ctx.kb, ctx.view, ctx.kernels, ctx.config).with_mask(ctx.kb.fact_id(positive));
    let score = search.prove(&goal.atom());
    let mut tape = Tape::new();
    let ln = log_term(&mut tape, ctx, &score, is_pos);
    let neg = tape.scale(ln, -1.0);
    GoalResult {
        ln: tape.scalar(ln),
        score: score.score,
        grads: tape.backward(neg),
        counters: search.counters,
        hq: search.hq,
    }
}

/// `-Σ_p [ln s(p) + Σ_n ln(1 - s(n))]` where each positive is hidden from
/// its own proof. Goals are proved in parallel and merged in batch order.
/// An empty batch gives zero loss and no gradient.
pub fn training_loss(ctx: &LossContext<'_>, positives: &[Triple], negatives: &[Vec<Triple>]) -> BatchOutcome {
    assert_eq!(positives.len(), negatives.len(), "one negative list per positive");
    let jobs: Vec<(&Triple, &Triple, bool)> = positives
        .iter()
        .zip(negatives)
        .flat_map(|(p, negs)| std::iter::once((p, p, true)).chain(negs.iter().map(move |n| (p, n, false))))
        .collect();
    let results: Vec<GoalResult> = jobs
        .par_iter()
        .map(|(p, g, is_pos)| prove_term(ctx, p, g, *is_pos))
        .collect();
    let mut out = BatchOutcome::default();
    for (r, (_, _, is_pos)) in results.into_iter().zip(&jobs) {
        out.loss -= r.ln;
        out.grads.merge(r.grads);
        out.counters.add(r.counters);
        out.hq.merge(&r.hq);
        if *is_pos {
            out.positive_scores.push(r.score);
        }
    }
    out
}

/// The same loss built on one caller-owned tape (for gradient checks).
pub fn loss_on_tape(tape: &mut Tape, ctx: &LossContext<'_>, positives: &[Triple], negatives: &[Vec<Triple>]) -> Var {
    let mut terms = Vec::new();
    for (p, negs) in positives.iter().zip(negatives) {
        for (g, is_pos) in std::iter::once((p, true)).chain(negs.iter().map(|n| (n, false))) {
            let mut search =
                ProofSearch::new(ctx.kb, ctx.view, ctx.kernels, ctx.config).with_mask(ctx.kb.fact_id(p));
            let score = search.prove(&g.atom());
            terms.push(log_term(tape, ctx, &score, is_pos));
        }
    }
    if terms.is_empty() {
        return tape.constant(0.0);
    }
    let total = tape.sum_all(&terms);
    tape.scale(total, -1.0)
}
