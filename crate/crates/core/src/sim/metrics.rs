//! Integrated squared errors and per-class recall/precision.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::trapezoid_weights;
use crate::{Error, Result};

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

/// `∫ (est - truth)²` over a one-dimensional covariate grid, trapezoid rule.
pub fn ise_curve(est: &[f64], truth: &[f64], z_grid: &[f64]) -> Result<f64> {
    check_len(est.len(), truth.len(), "ISE")?;
    check_len(est.len(), z_grid.len(), "ISE grid")?;
    let w = trapezoid_weights(z_grid);
    Ok(est
        .iter()
        .zip(truth)
        .zip(&w)
        .map(|((e, t), w)| w * (e - t).powi(2))
        .sum())
}

/// Riemann-cell weights for `n` lattice points covering a region of the
/// given volume: every point stands for an equal share.
pub fn lattice_weights(n: usize, volume: f64) -> Vec<f64> {
    vec![volume / n as f64; n]
}

/// `Σ_i w_i (est_i - truth_i)²` with explicit integration weights.
pub fn ise_weighted(est: &[f64], truth: &[f64], weights: &[f64]) -> Result<f64> {
    check_len(est.len(), truth.len(), "ISE")?;
    check_len(est.len(), weights.len(), "ISE weights")?;
    Ok(est
        .iter()
        .zip(truth)
        .zip(weights)
        .map(|((e, t), w)| w * (e - t).powi(2))
        .sum())
}

/// `∫∫∫ (Γ̂(s, t, z) - Υ(s, t, z))² ds dt dz`: trapezoid in `s, t` on
/// `t_grid`, and the supplied weights over the covariate points. `est(i)`
/// and `truth(i)` return the surfaces at covariate point `i`.
pub fn ise_cov3<E, T>(est: E, truth: T, t_grid: &[f64], z_weights: &[f64]) -> Result<f64>
where
    E: Fn(usize) -> DMatrix<f64> + Sync,
    T: Fn(usize) -> DMatrix<f64> + Sync,
{
    let m = t_grid.len();
    let w = trapezoid_weights(t_grid);
    let parts: Vec<Result<f64>> = (0..z_weights.len())
        .into_par_iter()
        .map(|i| {
            let (a, b) = (est(i), truth(i));
            if a.shape() != (m, m) || b.shape() != (m, m) {
                return Err(Error::invalid(format!(
                    "covariance surfaces at point {i} are not {m}x{m}"
                )));
            }
            let mut acc = 0.0;
            for s in 0..m {
                for t in 0..m {
                    acc += w[s] * w[t] * (a[(s, t)] - b[(s, t)]).powi(2);
                }
            }
            Ok(z_weights[i] * acc)
        })
        .collect();
    parts.into_iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

/// Per-class recall `TP/(TP+FN)` and precision `TP/(TP+FP)` after mapping
/// predicted cluster `c` to class `mapping[c]`. Zero denominators give
/// `None`.
pub fn recall_precision(
    pred: &[usize],
    truth: &[usize],
    mapping: &[usize],
    n_classes: usize,
) -> Result<Vec<ClassMetrics>> {
    check_len(pred.len(), truth.len(), "recall/precision")?;
    let mut tp = vec![0usize; n_classes];
    let mut pred_count = vec![0usize; n_classes];
    let mut true_count = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        let c = *mapping
            .get(p)
            .ok_or_else(|| Error::invalid(format!("cluster {p} has no class mapping")))?;
        if c >= n_classes || t >= n_classes {
            return Err(Error::invalid(format!("class index out of range ({c}, {t})")));
        }
        pred_count[c] += 1;
        true_count[t] += 1;
        if c == t {
            tp[c] += 1;
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok((0..n_classes)
        .map(|c| ClassMetrics {
            recall: ratio(tp[c], true_count[c]),
            precision: ratio(tp[c], pred_count[c]),
        })
        .collect())
}
