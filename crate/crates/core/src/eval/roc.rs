//! ROC curves from two score samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// `(false_positive_rate, true_positive_rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auroc: f64,
    pub n_true: usize,
    pub n_false: usize,
}

/// Sweeps a threshold down through every distinct score.
///
/// Tied true/false scores move both rates in one step, so the trapezoid
/// gives them half credit.
pub fn roc(true_scores: &[f64], false_scores: &[f64]) -> Result<RocResult> {
    if true_scores.is_empty() || false_scores.is_empty() {
        return Err(Error::InvalidArgument("ROC needs non-empty true and false scores".into()));
    }
    if true_scores.iter().chain(false_scores).any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("ROC scores must be finite".into()));
    }
    let mut scored: Vec<(f64, bool)> = true_scores
        .iter()
        .map(|&s| (s, true))
        .chain(false_scores.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (nt, nf) = (true_scores.len() as f64, false_scores.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / nf, tp as f64 / nt));
    }
    let auroc = trapezoid(&points);
    Ok(RocResult {
        points,
        auroc,
        n_true: true_scores.len(),
        n_false: false_scores.len(),
    })
}

/// Area under a piecewise-linear curve of `(x, y)` points.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}
