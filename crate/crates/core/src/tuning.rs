//! Hyperparameter selection by rolling-origin cross-validation.
//!
//! For a candidate and a day `up_to`, fold `k` (k = 1..n_folds) trains
//! on data through day `up_to − k·val_horizon`, forecasts `tau` ahead,
//! and scores the percentage error against the value actually observed
//! on that day. Nothing after `up_to` is ever read. ELM candidates are
//! scored as the mean over [`VALIDATION_TRIALS`] weight draws.
//!
//! Grid evaluation shares work aggressively: one feature matrix per
//! (w, h, draw) covers every fold (training prefixes nest, so the Gram
//! matrix grows by column blocks) and every λ (the ridge shift is
//! applied per solve). Scores are bit-identical to evaluating each
//! candidate alone.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::backtest::error_pct;
use crate::linalg::solve_with_gram;
use crate::models::{fit_poly, init_elm_weights, predict_poly, HyperParams, ModelKind};
use crate::rng::mix_seed;
use crate::series::{window_at, LogSeries};
use crate::{Error, Result};

/// Monte-Carlo weight draws averaged into each ELM validation score.
/// Cheaper than the 100 used for reporting; tames selection noise.
pub const VALIDATION_TRIALS: u64 = 10;

const VALIDATION_DRAW_TAG: u64 = 0xA1;

/// Candidate values for the grid search, plus the fold protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchGrid {
    pub w_values: Vec<usize>,
    pub h_values: Vec<usize>,
    pub lambda_values: Vec<f64>,
    /// Days between fold origins; `None` means "use tau", so each fold
    /// validates exactly the target horizon.
    pub val_horizon: Option<usize>,
    pub n_folds: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            w_values: vec![4, 6, 8, 10, 14, 21],
            h_values: vec![5, 10, 20, 40, 80],
            lambda_values: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            val_horizon: None,
            n_folds: 5,
        }
    }
}

impl SearchGrid {
    /// Candidates in canonical order: w ascending, then h ascending,
    /// then λ *descending*. Scanning this order with a strict `<` picks
    /// the tie-break winner (smaller w, smaller h, larger λ).
    pub fn candidates(&self, kind: ModelKind) -> Result<Vec<HyperParams>> {
        if self.w_values.is_empty() {
            return Err(Error::InvalidConfig("empty w grid".into()));
        }
        if self.n_folds == 0 {
            return Err(Error::InvalidConfig("n_folds must be at least 1".into()));
        }
        let mut w_values = self.w_values.clone();
        w_values.sort_unstable();
        w_values.dedup();
        match kind {
            ModelKind::Poly => {
                if let Some(&w) = w_values.iter().find(|&&w| w < 4) {
                    return Err(Error::InvalidConfig(format!(
                        "polynomial window {w} below cubic minimum of 4"
                    )));
                }
                Ok(w_values.into_iter().map(|w| HyperParams::Poly { w }).collect())
            }
            ModelKind::Elm => {
                if self.h_values.is_empty() || self.lambda_values.is_empty() {
                    return Err(Error::InvalidConfig("empty h or lambda grid".into()));
                }
                if self.lambda_values.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "ELM lambda grid must be positive and finite".into(),
                    ));
                }
                let mut h_values = self.h_values.clone();
                h_values.sort_unstable();
                h_values.dedup();
                if h_values[0] == 0 || w_values[0] == 0 {
                    return Err(Error::InvalidConfig("w and h must be at least 1".into()));
                }
                let mut lambdas = self.lambda_values.clone();
                lambdas.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
                lambdas.dedup();
                let mut out = Vec::with_capacity(w_values.len() * h_values.len() * lambdas.len());
                for &w in &w_values {
                    for &h in &h_values {
                        for &lambda in &lambdas {
                            out.push(HyperParams::Elm { w, h, lambda });
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    fn resolve_horizon(&self, tau: usize) -> Result<usize> {
        let vh = self.val_horizon.unwrap_or(tau);
        if vh < tau {
            return Err(Error::InvalidConfig(format!(
                "val_horizon {vh} below tau {tau} would leak future data into folds"
            )));
        }
        Ok(vh)
    }
}

/// One scored candidate, for audit dumps.
#[derive(Debug, Clone, Serialize)]
pub struct ScoredCandidate {
    pub params: HyperParams,
    /// Mean validation error, percent.
    pub score: f64,
}

/// Outcome of a grid search.
#[derive(Debug, Clone, Serialize)]
pub struct TuneResult {
    pub best: HyperParams,
    /// Every feasible candidate with its score, in canonical grid order.
    pub scores: Vec<ScoredCandidate>,
}

/// Mean percentage error of one candidate over the rolling folds.
pub fn validation_score(
    ls: &LogSeries,
    up_to: usize,
    hp: &HyperParams,
    tau: usize,
    grid: &SearchGrid,
    seed: u64,
) -> Result<f64> {
    let scores = evaluate_candidates(ls, up_to, tau, grid, seed, std::slice::from_ref(hp))?;
    scores[0].ok_or_else(|| {
        Error::InsufficientHistory(format!(
            "{hp} cannot run {} folds ending at day {up_to}",
            grid.n_folds
        ))
    })
}

/// Exhaustive grid search at day `up_to`.
///
/// Candidates the history cannot support are dropped from the score
/// map; if none survive the search fails with `InsufficientHistory`.
pub fn tune(
    ls: &LogSeries,
    up_to: usize,
    kind: ModelKind,
    tau: usize,
    grid: &SearchGrid,
    seed: u64,
) -> Result<TuneResult> {
    let candidates = grid.candidates(kind)?;
    let maybe = evaluate_candidates(ls, up_to, tau, grid, seed, &candidates)?;

    let mut scores = Vec::new();
    let mut best: Option<(HyperParams, f64)> = None;
    for (hp, score) in candidates.into_iter().zip(maybe) {
        let Some(score) = score else { continue };
        if best.as_ref().is_none_or(|(_, s)| score < *s) {
            best = Some((hp, score));
        }
        scores.push(ScoredCandidate { params: hp, score });
    }
    match best {
        Some((best, _)) => Ok(TuneResult { best, scores }),
        None => Err(Error::InsufficientHistory(format!(
            "no grid candidate can run {} folds ending at day {up_to}",
            grid.n_folds
        ))),
    }
}

/// Score a candidate list; `None` marks infeasible candidates.
/// Consecutive ELM candidates sharing (w, h) are evaluated together.
fn evaluate_candidates(
    ls: &LogSeries,
    up_to: usize,
    tau: usize,
    grid: &SearchGrid,
    seed: u64,
    candidates: &[HyperParams],
) -> Result<Vec<Option<f64>>> {
    assert!(tau >= 1);
    if up_to >= ls.len() {
        return Err(Error::WindowOutOfRange {
            end: up_to,
            w: ls.len(),
        });
    }
    let vh = grid.resolve_horizon(tau)?;

    // Fold train ends, fold 1 first (largest prefix).
    let train_ends: Vec<i64> = (1..=grid.n_folds as i64)
        .map(|k| up_to as i64 - k * vh as i64)
        .collect();

    let groups = group_consecutive(candidates);
    let results: Result<Vec<Vec<Option<f64>>>> = groups
        .par_iter()
        .map(|group| evaluate_group(ls, tau, seed, &train_ends, group))
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

struct Group<'a> {
    head: &'a HyperParams,
    members: &'a [HyperParams],
}

fn group_consecutive(candidates: &[HyperParams]) -> Vec<Group<'_>> {
    let same_group = |a: &HyperParams, b: &HyperParams| match (a, b) {
        (HyperParams::Elm { w, h, .. }, HyperParams::Elm { w: w2, h: h2, .. }) => {
            w == w2 && h == h2
        }
        _ => false,
    };
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=candidates.len() {
        if i == candidates.len() || !same_group(&candidates[start], &candidates[i]) {
            groups.push(Group {
                head: &candidates[start],
                members: &candidates[start..i],
            });
            start = i;
        }
    }
    groups
}

fn evaluate_group(
    ls: &LogSeries,
    tau: usize,
    seed: u64,
    train_ends: &[i64],
    group: &Group<'_>,
) -> Result<Vec<Option<f64>>> {
    let min_history = group.head.min_history(tau) as i64;
    let feasible = train_ends.iter().all(|&e| e + 1 >= min_history);
    if !feasible {
        return Ok(vec![None; group.members.len()]);
    }
    match *group.head {
        HyperParams::Poly { w } => {
            let mut total = 0.0;
            for &train_end in train_ends {
                let train_end = train_end as usize;
                let model = fit_poly(ls, train_end, w)?;
                let pred = predict_poly(&model, tau);
                let truth = ls.values[train_end + tau];
                total += error_pct(truth.exp(), pred.exp());
            }
            Ok(vec![Some(total / train_ends.len() as f64)])
        }
        HyperParams::Elm { w, h, .. } => {
            let lambdas: Vec<f64> = group
                .members
                .iter()
                .map(|hp| match hp {
                    HyperParams::Elm { lambda, .. } => *lambda,
                    HyperParams::Poly { .. } => unreachable!("mixed tuning group"),
                })
                .collect();
            let sums = elm_group_errors(ls, tau, seed, train_ends, w, h, &lambdas)?;
            let denom = (train_ends.len() as u64 * VALIDATION_TRIALS) as f64;
            Ok(sums.into_iter().map(|s| Some(s / denom)).collect())
        }
    }
}

/// Accumulated validation error per λ for one (w, h) over all folds and
/// weight draws.
fn elm_group_errors(
    ls: &LogSeries,
    tau: usize,
    seed: u64,
    train_ends: &[i64],
    w: usize,
    h: usize,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    let pairs_in = |prefix_len: usize| prefix_len.saturating_sub(w + tau - 1);

    // Largest prefix (fold 1) covers every fold's training columns.
    let max_end = train_ends[0] as usize;
    let full_pairs = pairs_in(max_end + 1);
    debug_assert!(full_pairs >= 1);

    // Column m of `inputs` is the window ending at day w-1+m.
    let inputs = DMatrix::from_fn(w, full_pairs, |i, m| ls.values[m + i]);
    let targets: Vec<f64> = (0..full_pairs)
        .map(|m| ls.values[m + w - 1 + tau])
        .collect();

    let mut errors = vec![0.0; lambdas.len()];
    for draw in 0..VALIDATION_TRIALS {
        let weights = init_elm_weights(mix_seed(seed, &[VALIDATION_DRAW_TAG, draw]), h, w);
        let mut features = &weights.matrix * &inputs;
        for v in features.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }

        let mut gram = DMatrix::zeros(h, h);
        let mut rhs = DMatrix::zeros(1, h);
        let mut accumulated = 0;
        // Folds from the smallest prefix up, adding new columns as the
        // prefix grows.
        for &train_end in train_ends.iter().rev() {
            let train_end = train_end as usize;
            let n_pairs = pairs_in(train_end + 1);
            if n_pairs > accumulated {
                let block = features.columns(accumulated, n_pairs - accumulated);
                let tgt = DMatrix::from_row_slice(
                    1,
                    n_pairs - accumulated,
                    &targets[accumulated..n_pairs],
                );
                gram.gemm(1.0, &block, &block.transpose(), 1.0);
                rhs.gemm(1.0, &tgt, &block.transpose(), 1.0);
                accumulated = n_pairs;
            }

            let x_val = window_at(ls, train_end, w)?;
            let xv = DMatrix::from_column_slice(w, 1, x_val);
            let mut z_val = &weights.matrix * xv;
            for v in z_val.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let truth = ls.values[train_end + tau].exp();

            for (li, &lambda) in lambdas.iter().enumerate() {
                let mut shifted = gram.clone();
                for i in 0..h {
                    shifted[(i, i)] += lambda;
                }
                let output = solve_with_gram(&shifted, &rhs, lambda)?;
                let pred = (&output * &z_val)[(0, 0)];
                errors[li] += error_pct(truth, pred.exp());
            }
        }
    }
    Ok(errors)
}
