//! Subject-level K-fold cross-validation over a list of bandwidth candidates.
//!
//! Every candidate is scored by the average over folds of the weighted mean
//! squared error on the held-out subjects. Held-out points the training fit
//! cannot reach (no local data) are skipped; a fold in which more than
//! [`MAX_UNREACHED`] of the held-out weight is skipped scores `+∞`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{Bandwidths, KernelSpec};
use crate::data::FunctionalDataset;
use crate::eigen::EigenBasis;
use crate::eigenmap::{build_design, DesignBlock, WlsEstimator};
use crate::smooth::{self, Degree, LocalSmoother, MeanField, SampleSet, DEFAULT_RIDGE};
use crate::{Error, Result};

/// Largest fraction of held-out weight a fold may fail to predict.
pub const MAX_UNREACHED: f64 = 0.1;

/// Relative tolerance under which two CV scores count as tied.
const TIE_TOL: f64 = 1e-9;

/// Stream offset keeping fold shuffles apart from data-generation streams.
const FOLD_STREAM: u64 = 0xF01D;

/// What the bandwidth is chosen for.
#[derive(Debug, Clone)]
pub enum CvTarget<'a> {
    /// `(h_t, h_z)`: held-out observations against the training mean.
    Mean,
    /// `h_gamma`: held-out raw cross-products `Û_ij Û_ik` against the
    /// training covariance surface. The mean is refitted on the training
    /// folds with the candidate's `(h_t, h_z)` on the given grids.
    Covariance { t_grid: &'a [f64], z_axes: &'a [Vec<f64>] },
    /// `h_lambda`: held-out cross-products against `Σ_ℓ λ̂_ℓ(z_i) φ_ℓ φ_ℓ`
    /// from the training subjects, for a fixed mean and basis.
    Eigenvalues {
        mean: &'a MeanField,
        basis: &'a EigenBasis,
        l: usize,
    },
}

/// Fold index for every subject: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::stream(seed, FOLD_STREAM));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// `errors[c][f]`: weighted held-out MSE of candidate `c` on fold `f`.
pub fn cv_fold_errors(
    d: &FunctionalDataset,
    target: &CvTarget<'_>,
    spec: KernelSpec,
    candidates: &[Bandwidths],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if candidates.is_empty() {
        return Err(Error::invalid("cross-validation needs at least one candidate"));
    }
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least two folds"));
    }
    if d.n_subjects() < 2 * folds {
        return Err(Error::invalid(format!(
            "{} subjects are too few for {folds}-fold cross-validation",
            d.n_subjects()
        )));
    }
    for c in candidates {
        c.validate()?;
    }
    let assign = fold_assignment(d.n_subjects(), folds, seed);
    let split = |f: usize| -> (FunctionalDataset, FunctionalDataset) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (s, &a) in d.subjects.iter().zip(&assign) {
            if a == f {
                test.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
        let (lo, hi) = d.time_domain;
        (
            FunctionalDataset::new(train, d.covariate_dim).with_time_domain(lo, hi),
            FunctionalDataset::new(test, d.covariate_dim).with_time_domain(lo, hi),
        )
    };
    let splits: Vec<_> = (0..folds).map(split).collect();

    // Training means are shared by candidates with equal (h_t, h_z).
    let mut mean_keys: Vec<(usize, usize)> = Vec::new();
    if matches!(target, CvTarget::Covariance { .. }) {
        for f in 0..folds {
            for (c, cand) in candidates.iter().enumerate() {
                let dup = mean_keys
                    .iter()
                    .any(|&(g, o)| g == f && candidates[o].mean_vector() == cand.mean_vector());
                if !dup {
                    mean_keys.push((f, c));
                }
            }
        }
    }
    let means: Vec<Option<MeanField>> = mean_keys
        .par_iter()
        .map(|&(f, c)| match target {
            CvTarget::Covariance { t_grid, z_axes } => {
                match smooth::estimate_mean(&splits[f].0, &candidates[c], spec, t_grid, z_axes) {
                    Ok(m) => Ok(Some(m)),
                    Err(Error::InsufficientLocalData { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            }
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    let mean_for = |f: usize, c: usize| -> Option<&MeanField> {
        mean_keys
            .iter()
            .position(|&(g, o)| g == f && candidates[o].mean_vector() == candidates[c].mean_vector())
            .and_then(|i| means[i].as_ref())
    };

    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..folds).map(move |f| (c, f)))
        .collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (train, test) = &splits[f];
            fold_error(train, test, target, spec, &candidates[c], mean_for(f, c))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errors.chunks(folds).map(<[f64]>::to_vec).collect())
}

/// Weighted held-out squared error accumulated as `(Σ w e², Σ w reached,
/// Σ w total)`.
#[derive(Default)]
struct Accum {
    sse: f64,
    reached: f64,
    total: f64,
}

impl Accum {
    fn add(&mut self, w: f64, err: Option<f64>) {
        self.total += w;
        if let Some(e) = err {
            self.sse += w * e * e;
            self.reached += w;
        }
    }

    fn score(&self) -> f64 {
        if self.total <= 0.0 || self.reached < (1.0 - MAX_UNREACHED) * self.total {
            f64::INFINITY
        } else {
            self.sse / self.reached
        }
    }
}

fn fold_error(
    train: &FunctionalDataset,
    test: &FunctionalDataset,
    target: &CvTarget<'_>,
    spec: KernelSpec,
    b: &Bandwidths,
    training_mean: Option<&MeanField>,
) -> Result<f64> {
    let mut acc = Accum::default();
    match target {
        CvTarget::Mean => {
            let samples = mean_samples(train);
            let sm = LocalSmoother::new(&samples, &b.mean_vector(), spec, DEFAULT_RIDGE)?;
            let mut x = vec![0.0; 1 + train.covariate_dim];
            for s in &test.subjects {
                let w = 1.0 / s.n_obs() as f64;
                x[1..].copy_from_slice(&s.z);
                for (&t, &y) in s.t.iter().zip(&s.y) {
                    x[0] = t;
                    acc.add(w, sm.fit(&x, Degree::Linear).ok().map(|m| y - m));
                }
            }
        }
        CvTarget::Covariance { .. } => {
            let Some(mean) = training_mean else {
                return Ok(f64::INFINITY);
            };
            let resid = smooth::residuals(train, mean);
            let samples = smooth::cross_product_samples(train, &resid);
            let sm = LocalSmoother::new(&samples, &[b.h_gamma, b.h_gamma], spec, DEFAULT_RIDGE)?;
            let held = smooth::residuals(test, mean);
            // held-out pairs merged by location: Σ w (y - g)² needs only
            // Σ w, Σ w y and Σ w y² per location
            let mut cells: HashMap<[u64; 2], (f64, f64, f64, [f64; 2])> = HashMap::new();
            let mut keys = Vec::new();
            for (s, u) in test.subjects.iter().zip(&held) {
                let ni = s.n_obs();
                if ni < 2 {
                    continue;
                }
                let w = 1.0 / (ni * (ni - 1)) as f64;
                for j in 0..ni {
                    for k in 0..ni {
                        if j == k {
                            continue;
                        }
                        let key = [s.t[j].to_bits(), s.t[k].to_bits()];
                        let y = u[j] * u[k];
                        let cell = cells.entry(key).or_insert_with(|| {
                            keys.push(key);
                            (0.0, 0.0, 0.0, [s.t[j], s.t[k]])
                        });
                        cell.0 += w;
                        cell.1 += w * y;
                        cell.2 += w * y * y;
                    }
                }
            }
            for key in keys {
                let (w, wy, wyy, x) = cells[&key];
                acc.total += w;
                if let Ok(g) = sm.fit(&x, Degree::Linear) {
                    acc.sse += (wyy - 2.0 * g * wy + g * g * w).max(0.0);
                    acc.reached += w;
                }
            }
        }
        CvTarget::Eigenvalues { mean, basis, l } => {
            let blocks: Vec<DesignBlock> = train
                .subjects
                .iter()
                .filter(|s| s.n_obs() >= 2)
                .map(|s| build_design(s, mean, basis, *l))
                .collect::<Result<_>>()?;
            if blocks.is_empty() {
                return Ok(f64::INFINITY);
            }
            let est = WlsEstimator::new(&blocks)?;
            for s in test.subjects.iter().filter(|s| s.n_obs() >= 2) {
                let blk = build_design(s, mean, basis, *l)?;
                let rows = blk.x.nrows() as f64;
                match est.estimate(&s.z, &b.h_lambda, spec, true) {
                    Ok(e) => {
                        let lam = nalgebra::DVector::from_vec(e.value);
                        let pred = &blk.x * lam;
                        for r in 0..blk.x.nrows() {
                            acc.add(1.0 / rows, Some(blk.y[r] - pred[r]));
                        }
                    }
                    Err(_) => acc.add(1.0, None),
                }
            }
        }
    }
    Ok(acc.score())
}

fn mean_samples(d: &FunctionalDataset) -> SampleSet {
    let dim = 1 + d.covariate_dim;
    let mut samples = SampleSet::with_capacity(dim, d.total_obs());
    let mut x = vec![0.0; dim];
    for s in &d.subjects {
        let w = 1.0 / s.n_obs() as f64;
        x[1..].copy_from_slice(&s.z);
        for (&t, &y) in s.t.iter().zip(&s.y) {
            x[0] = t;
            samples.push(&x, y, w);
        }
    }
    samples
}

/// The candidate with the smallest average fold error. Scores within a
/// relative `1e-9` of each other tie, and ties go to the lexicographically
/// smallest [`Bandwidths::as_vec`].
pub fn cv_bandwidth(
    d: &FunctionalDataset,
    target: &CvTarget<'_>,
    spec: KernelSpec,
    candidates: &[Bandwidths],
    folds: usize,
    seed: u64,
) -> Result<Bandwidths> {
    let table = cv_fold_errors(d, target, spec, candidates, folds, seed)?;
    let scores: Vec<f64> = table.iter().map(|r| r.iter().sum::<f64>() / folds as f64).collect();
    select(candidates, &scores).cloned()
}

pub(crate) fn select<'c>(candidates: &'c [Bandwidths], scores: &[f64]) -> Result<&'c Bandwidths> {
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::invalid(
            "every bandwidth candidate left held-out data without local support; try larger bandwidths",
        ));
    }
    let tol = TIE_TOL * best.abs() + f64::MIN_POSITIVE;
    candidates
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s <= best + tol)
        .map(|(c, _)| c)
        .min_by(|a, b| {
            a.as_vec()
                .iter()
                .zip(b.as_vec().iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .ok_or_else(|| Error::invalid("no bandwidth candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;
    use crate::grid::uniform;
    use rand::Rng;

    fn affine_data(n: usize) -> FunctionalDataset {
        let mut rng = crate::rng::stream(1, 0);
        let subjects = (0..n)
            .map(|i| {
                let z: f64 = rng.random_range(0.0..1.0);
                let t = uniform(0.0, 1.0, 11);
                let y = t.iter().map(|&v| 1.0 + 2.0 * v - z).collect();
                Subject::new(i.to_string(), vec![z], t, y)
            })
            .collect();
        FunctionalDataset::new(subjects, 1)
    }

    fn bw(h: f64) -> Bandwidths {
        Bandwidths::new(h, vec![h], h, vec![h]).unwrap()
    }

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let a = fold_assignment(23, 5, 9);
        assert_eq!(a, fold_assignment(23, 5, 9));
        for f in 0..5 {
            let c = a.iter().filter(|&&x| x == f).count();
            assert!(c == 4 || c == 5);
        }
        assert_ne!(a, fold_assignment(23, 5, 10));
    }

    #[test]
    fn single_candidate_is_returned() {
        let d = affine_data(20);
        let got = cv_bandwidth(&d, &CvTarget::Mean, KernelSpec::EPANECHNIKOV, &[bw(0.4)], 5, 1).unwrap();
        assert_eq!(got, bw(0.4));
    }

    #[test]
    fn exact_fits_tie_toward_smaller_bandwidth() {
        let d = affine_data(40);
        let cands = [bw(50.0), bw(0.6)];
        let table = cv_fold_errors(&d, &CvTarget::Mean, KernelSpec::EPANECHNIKOV, &cands, 5, 2).unwrap();
        assert!(table.iter().flatten().all(|&e| e < 1e-20));
        let got = cv_bandwidth(&d, &CvTarget::Mean, KernelSpec::EPANECHNIKOV, &cands, 5, 2).unwrap();
        assert_eq!(got, bw(0.6));
    }

    #[test]
    fn unreachable_candidates_are_an_error() {
        let d = affine_data(20);
        let err = cv_bandwidth(&d, &CvTarget::Mean, KernelSpec::EPANECHNIKOV, &[bw(1e-4)], 4, 3).unwrap_err();
        assert!(err.to_string().contains("larger bandwidths"));
    }

    #[test]
    fn too_few_subjects_for_folds() {
        let d = affine_data(5);
        assert!(cv_fold_errors(&d, &CvTarget::Mean, KernelSpec::EPANECHNIKOV, &[bw(0.5)], 5, 0).is_err());
    }
}
