//! Covariate-specific eigenvalues `λ_k(z)`.
//!
//! The weighted least squares estimator regresses centred cross-products
//! `Û_ij Û_ik` (`j < k`) on eigenfunction products `φ_ℓ(t_ij) φ_ℓ(t_ik)`
//! with subject weights `∏ K_h(z_i - z)`. The score-based alternative
//! smooths squared principal component scores over `z`; scores come from
//! trapezoid integration (dense data) or conditional expectation (sparse).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{classify_scheme, FunctionalDataset, SchemeKind, Subject, DEFAULT_DENSE_THRESHOLD};
use crate::eigen::{eval_all, EigenBasis};
use crate::kernel::{product_weight, KernelSpec};
use crate::kv::fmt_f64;
use crate::linalg::solve_psd;
use crate::smooth::{CovSurface, Degree, LocalSmoother, MeanField, SampleSet, DEFAULT_RIDGE};
use crate::{Error, Result};

/// Default cap on the fraction of field points allowed to fail.
pub const DEFAULT_MAX_FAILURE_FRACTION: f64 = 0.1;

/// One subject's rows of the stacked regression.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    pub id: String,
    pub z: Vec<f64>,
    /// `N_i(N_i-1)/2 × L`, pairs `j < k` in lexicographic order.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

fn centred(s: &Subject, mean: &MeanField) -> Vec<f64> {
    s.t.iter().zip(&s.y).map(|(&t, &y)| y - mean.eval(t, &s.z)).collect()
}

fn check_time_range(s: &Subject, basis: &EigenBasis) -> Result<()> {
    let g = &basis.t_grid;
    let (lo, hi) = (g[0], g[g.len() - 1]);
    match s.t.iter().find(|&&t| !(t >= lo && t <= hi)) {
        Some(t) => Err(Error::invalid(format!(
            "subject {}: time {t} outside eigenfunction grid [{lo}, {hi}]",
            s.id
        ))),
        None => Ok(()),
    }
}

fn check_l(basis: &EigenBasis, l: usize) -> Result<()> {
    if l == 0 || l > basis.len() {
        return Err(Error::invalid(format!(
            "L = {l} but the basis has {} components",
            basis.len()
        )));
    }
    Ok(())
}

/// Design rows and responses for one subject.
pub fn build_design(s: &Subject, mean: &MeanField, basis: &EigenBasis, l: usize) -> Result<DesignBlock> {
    check_l(basis, l)?;
    let n = s.n_obs();
    if n < 2 {
        return Err(Error::invalid(format!(
            "subject {} has {n} observation(s); at least two are needed",
            s.id
        )));
    }
    check_time_range(s, basis)?;
    let u = centred(s, mean);
    let phi: Vec<Vec<f64>> = s.t.iter().map(|&t| eval_all(basis, t)).collect();
    let rows = n * (n - 1) / 2;
    let mut x = DMatrix::zeros(rows, l);
    let mut y = DVector::zeros(rows);
    let mut r = 0;
    for j in 0..n {
        for k in j + 1..n {
            for c in 0..l {
                x[(r, c)] = phi[j][c] * phi[k][c];
            }
            y[r] = u[j] * u[k];
            r += 1;
        }
    }
    Ok(DesignBlock {
        id: s.id.clone(),
        z: s.z.clone(),
        x,
        y,
    })
}

/// Blocks for every subject with at least two observations; others are
/// skipped with a warning.
pub fn build_designs(
    d: &FunctionalDataset,
    mean: &MeanField,
    basis: &EigenBasis,
    l: usize,
) -> Result<Vec<DesignBlock>> {
    check_l(basis, l)?;
    let skipped = d.subjects.iter().filter(|s| s.n_obs() < 2).count();
    if skipped > 0 {
        log::warn!("{skipped} subject(s) with fewer than two observations skipped in the eigenvalue regression");
    }
    d.subjects
        .par_iter()
        .filter(|s| s.n_obs() >= 2)
        .map(|s| build_design(s, mean, basis, l))
        .collect()
}

/// Weighted least squares over precomputed per-subject normal equations.
#[derive(Debug, Clone)]
pub struct WlsEstimator {
    l: usize,
    z: Vec<Vec<f64>>,
    gram: Vec<DMatrix<f64>>,
    rhs: Vec<DVector<f64>>,
}

/// Eigenvalues at one covariate point, before and after clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueEstimate {
    pub raw: Vec<f64>,
    pub value: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl EigenvalueEstimate {
    fn new(raw: Vec<f64>, clamp: bool) -> Self {
        let clamped: Vec<bool> = raw.iter().map(|&v| clamp && v < 0.0).collect();
        let value = raw
            .iter()
            .zip(&clamped)
            .map(|(&v, &c)| if c { 0.0 } else { v })
            .collect();
        Self { raw, value, clamped }
    }
}

impl WlsEstimator {
    pub fn new(blocks: &[DesignBlock]) -> Result<Self> {
        let l = blocks
            .first()
            .map(|b| b.x.ncols())
            .ok_or_else(|| Error::invalid("no design blocks"))?;
        if blocks.iter().any(|b| b.x.ncols() != l) {
            return Err(Error::invalid("design blocks disagree on L"));
        }
        let (gram, rhs) = blocks.par_iter().map(|b| (b.x.tr_mul(&b.x), b.x.tr_mul(&b.y))).unzip();
        Ok(Self {
            l,
            z: blocks.iter().map(|b| b.z.clone()).collect(),
            gram,
            rhs,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.z.len()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn block_z(&self, i: usize) -> &[f64] {
        &self.z[i]
    }

    /// Solve `Σ w_i X_iᵀX_i λ = Σ w_i X_iᵀY_i` for explicit subject weights.
    pub fn solve_weighted(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.n_blocks() {
            return Err(Error::invalid("one weight per design block is required"));
        }
        let mut a = DMatrix::zeros(self.l, self.l);
        let mut b = DVector::zeros(self.l);
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                a += w * &self.gram[i];
                b += w * &self.rhs[i];
                total += w;
            }
        }
        if !(total > 0.0) {
            return Err(Error::Singular("all subject weights are zero".into()));
        }
        Ok(solve_psd(&a, &b, DEFAULT_RIDGE)?.iter().copied().collect())
    }

    pub fn kernel_weights(&self, z: &[f64], h_lambda: &[f64], spec: KernelSpec) -> Result<Vec<f64>> {
        self.z
            .iter()
            .map(|zi| {
                if zi.len() != z.len() {
                    return Err(Error::invalid("covariate dimension mismatch in eigenvalue query"));
                }
                let diffs: Vec<f64> = zi.iter().zip(z).map(|(a, b)| a - b).collect();
                product_weight(spec, &diffs, h_lambda)
            })
            .collect()
    }

    pub fn estimate(&self, z: &[f64], h_lambda: &[f64], spec: KernelSpec, clamp: bool) -> Result<EigenvalueEstimate> {
        let w = self.kernel_weights(z, h_lambda, spec)?;
        if !w.iter().any(|&v| v > 0.0) {
            return Err(Error::EmptyNeighborhood { z: z.to_vec() });
        }
        Ok(EigenvalueEstimate::new(self.solve_weighted(&w)?, clamp))
    }
}

/// WLS eigenvalues at `z`; negatives set to zero when `clamp` is true.
pub fn wls_eigenvalues(
    blocks: &[DesignBlock],
    z: &[f64],
    h_lambda: &[f64],
    spec: KernelSpec,
    clamp: bool,
) -> Result<Vec<f64>> {
    Ok(WlsEstimator::new(blocks)?.estimate(z, h_lambda, spec, clamp)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    Trapezoid,
    Conditional,
}

/// Principal component scores, one row of `L` per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub ids: Vec<String>,
    pub z: Vec<Vec<f64>>,
    pub scores: Vec<Vec<f64>>,
    pub method: ScoreMethod,
}

/// `Â_ik` by the trapezoid rule over the subject's own time points.
pub fn pc_scores_trapezoid(s: &Subject, mean: &MeanField, basis: &EigenBasis, l: usize) -> Result<Vec<f64>> {
    check_l(basis, l)?;
    if s.n_obs() < 2 {
        return Err(Error::invalid(format!(
            "subject {} needs two observations for trapezoid scores",
            s.id
        )));
    }
    check_time_range(s, basis)?;
    let u = centred(s, mean);
    let phi: Vec<Vec<f64>> = s.t.iter().map(|&t| eval_all(basis, t)).collect();
    let mut a = vec![0.0; l];
    for j in 0..s.n_obs() - 1 {
        let dt = 0.5 * (s.t[j + 1] - s.t[j]);
        for k in 0..l {
            a[k] += (u[j] * phi[j][k] + u[j + 1] * phi[j + 1][k]) * dt;
        }
    }
    Ok(a)
}

/// Conditional-expectation scores `Λ Φᵀ (Φ Λ Φᵀ + σ² I)⁻¹ Û`.
pub fn pace_scores(
    s: &Subject,
    mean: &MeanField,
    basis: &EigenBasis,
    lambda_at_z: &[f64],
    sigma2: f64,
) -> Result<Vec<f64>> {
    let l = lambda_at_z.len();
    check_l(basis, l)?;
    if s.n_obs() == 0 {
        return Err(Error::invalid(format!("subject {} has no observations", s.id)));
    }
    if !(sigma2 >= 0.0) || lambda_at_z.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::invalid(
            "conditional scores need σ² ≥ 0 and nonnegative eigenvalues",
        ));
    }
    check_time_range(s, basis)?;
    let n = s.n_obs();
    let u = DVector::from_vec(centred(s, mean));
    let phi = DMatrix::from_fn(n, l, |j, k| eval_all(basis, s.t[j])[k]);
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(lambda_at_z));
    let mut sigma = &phi * &lam * phi.transpose();
    for j in 0..n {
        sigma[(j, j)] += sigma2;
    }
    let solved = match (sigma2 > 0.0).then(|| sigma.clone().cholesky()).flatten() {
        Some(chol) => chol.solve(&u),
        None => {
            let svd = sigma.svd(true, true);
            let top = svd.singular_values.max();
            let pinv = svd
                .pseudo_inverse(1e-10 * top.max(f64::MIN_POSITIVE))
                .map_err(|e| Error::Singular(e.to_string()))?;
            pinv * &u
        }
    };
    let a = lam * phi.transpose() * solved;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("conditional scores for subject {}", s.id)));
    }
    Ok(a.iter().copied().collect())
}

/// Local linear smooth over `z` of `Â_ik²`, unit sample weights.
#[derive(Debug, Clone)]
pub struct PcEstimator {
    samples: Vec<SampleSet>,
}

impl PcEstimator {
    pub fn new(scores: &ScoreSet) -> Result<Self> {
        let l = scores
            .scores
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("empty score set"))?;
        let p = scores.z.first().map_or(0, Vec::len);
        let samples = (0..l)
            .map(|k| {
                let mut s = SampleSet::with_capacity(p, scores.z.len());
                for (z, a) in scores.z.iter().zip(&scores.scores) {
                    s.push(z, a[k] * a[k], 1.0);
                }
                s
            })
            .collect();
        Ok(Self { samples })
    }

    pub fn estimate(&self, z: &[f64], h_lambda: &[f64], spec: KernelSpec, clamp: bool) -> Result<EigenvalueEstimate> {
        let raw = self
            .samples
            .iter()
            .map(|s| LocalSmoother::new(s, h_lambda, spec, DEFAULT_RIDGE)?.fit(z, Degree::Linear))
            .collect::<Result<Vec<f64>>>()?;
        Ok(EigenvalueEstimate::new(raw, clamp))
    }

    fn field(
        &self,
        z_points: &[Vec<f64>],
        h_lambda: &[f64],
        spec: KernelSpec,
        clamp: bool,
    ) -> Result<Vec<Result<EigenvalueEstimate>>> {
        let smoothers = self
            .samples
            .iter()
            .map(|s| LocalSmoother::new(s, h_lambda, spec, DEFAULT_RIDGE))
            .collect::<Result<Vec<_>>>()?;
        Ok(z_points
            .par_iter()
            .map(|z| {
                let raw = smoothers
                    .iter()
                    .map(|sm| sm.fit(z, Degree::Linear))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(EigenvalueEstimate::new(raw, clamp))
            })
            .collect())
    }
}

/// Smoothed `λ_k(z)` from squared scores at `z`.
pub fn pc_eigenvalues(scores: &ScoreSet, z: &[f64], h_lambda: &[f64], spec: KernelSpec) -> Result<Vec<f64>> {
    Ok(PcEstimator::new(scores)?.estimate(z, h_lambda, spec, false)?.raw)
}

/// Scores for every subject. Dense data use the trapezoid rule; sparse data
/// fall back to conditional scores seeded with the pooled eigenvalues, with
/// a warning.
pub fn score_set(
    d: &FunctionalDataset,
    mean: &MeanField,
    basis: &EigenBasis,
    l: usize,
    sigma2: f64,
) -> Result<ScoreSet> {
    check_l(basis, l)?;
    let scheme = classify_scheme(d, DEFAULT_DENSE_THRESHOLD)?;
    let method = match scheme.kind {
        SchemeKind::Dense => ScoreMethod::Trapezoid,
        SchemeKind::Sparse => {
            log::warn!(
                "score-based eigenvalues need dense data (median {} observations per subject); \
                 using conditional-expectation scores",
                scheme.median_obs
            );
            ScoreMethod::Conditional
        }
    };
    let lambda_star = &basis.lambda_star[..l];
    let scores = d
        .subjects
        .par_iter()
        .map(|s| match method {
            ScoreMethod::Trapezoid => pc_scores_trapezoid(s, mean, basis, l),
            ScoreMethod::Conditional => pace_scores(s, mean, basis, lambda_star, sigma2),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSet {
        ids: d.subjects.iter().map(|s| s.id.clone()).collect(),
        z: d.subjects.iter().map(|s| s.z.clone()).collect(),
        scores,
        method,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Kernel-weighted least squares on cross-products.
    Wls,
    /// Local linear smoothing of squared scores.
    Pc,
    /// Unsmoothed squared scores, one row per subject.
    PcSquared,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Wls => "wls",
            Method::Pc => "pc",
            Method::PcSquared => "pc2",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wls" => Ok(Method::Wls),
            "pc" => Ok(Method::Pc),
            "pc2" | "pcsquared" | "pc_squared" => Ok(Method::PcSquared),
            other => Err(Error::invalid(format!("unknown eigenvalue method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldOptions {
    pub h_lambda: Vec<f64>,
    pub kernel: KernelSpec,
    pub clamp: bool,
    /// Noise variance for conditional scores on sparse data.
    pub sigma2: f64,
    pub max_failure_fraction: f64,
}

impl FieldOptions {
    pub fn new(h_lambda: Vec<f64>) -> Self {
        Self {
            h_lambda,
            kernel: KernelSpec::default(),
            clamp: true,
            sigma2: 0.0,
            max_failure_fraction: DEFAULT_MAX_FAILURE_FRACTION,
        }
    }
}

/// `λ̂(z)` over a list of covariate points. Points where the estimator
/// fails are left out and listed in `failures`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueField {
    pub z_points: Vec<Vec<f64>>,
    /// `n_z × L`.
    pub lambda: DMatrix<f64>,
    pub raw: DMatrix<f64>,
    /// Row-major `n_z × L`.
    pub clamped: Vec<bool>,
    pub method: Method,
    /// `(original point index, message)`.
    pub failures: Vec<(usize, String)>,
}

impl EigenvalueField {
    pub fn len(&self) -> usize {
        self.z_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_points.is_empty()
    }

    pub fn l(&self) -> usize {
        self.lambda.ncols()
    }

    /// Rows as plain vectors, e.g. clustering features.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.lambda.row(i).iter().copied().collect())
            .collect()
    }

    fn from_estimates(
        z_points: &[Vec<f64>],
        results: Vec<Result<EigenvalueEstimate>>,
        l: usize,
        method: Method,
        max_failure_fraction: f64,
    ) -> Result<Self> {
        let mut kept = Vec::new();
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(e) => {
                    kept.push(z_points[i].clone());
                    rows.push(e);
                }
                Err(e) => failures.push((i, e.to_string())),
            }
        }
        let n = z_points.len();
        if n > 0 && failures.len() as f64 > max_failure_fraction * n as f64 {
            let (i, msg) = &failures[0];
            return Err(Error::invalid(format!(
                "{} of {n} eigenvalue points failed (first at {:?}: {msg})",
                failures.len(),
                z_points[*i]
            )));
        }
        if !failures.is_empty() {
            log::warn!("{} of {n} eigenvalue points failed and were dropped", failures.len());
        }
        let m = rows.len();
        Ok(Self {
            z_points: kept,
            lambda: DMatrix::from_fn(m, l, |i, k| rows[i].value[k]),
            raw: DMatrix::from_fn(m, l, |i, k| rows[i].raw[k]),
            clamped: rows.iter().flat_map(|r| r.clamped.iter().copied()).collect(),
            method,
            failures,
        })
    }

    /// `z_1..z_p, lambda_1..lambda_L, clamped_mask`, plus a diagnostics
    /// file with the unclamped values.
    pub fn save(&self, path: &Path, diagnostics: &Path) -> Result<()> {
        let p = self.z_points.first().map_or(0, Vec::len);
        let l = self.l();
        let header = |prefix: &str, tail: &str| {
            let mut h: Vec<String> = (1..=p).map(|k| format!("z_{k}")).collect();
            h.extend((1..=l).map(|k| format!("{prefix}_{k}")));
            if !tail.is_empty() {
                h.push(tail.to_string());
            }
            h.join(",") + "\n"
        };
        let mut out = header("lambda", "clamped_mask");
        let mut diag = header("raw", "");
        for (i, z) in self.z_points.iter().enumerate() {
            let zs: Vec<String> = z.iter().map(|&v| fmt_f64(v)).collect();
            let vals: Vec<String> = (0..l).map(|k| fmt_f64(self.lambda[(i, k)])).collect();
            let raws: Vec<String> = (0..l).map(|k| fmt_f64(self.raw[(i, k)])).collect();
            let mask: String = self.clamped[i * l..(i + 1) * l]
                .iter()
                .map(|&c| if c { '1' } else { '0' })
                .collect();
            out.push_str(&format!("{},{},{mask}\n", zs.join(","), vals.join(",")));
            diag.push_str(&format!("{},{}\n", zs.join(","), raws.join(",")));
        }
        std::fs::write(path, out)?;
        std::fs::write(diagnostics, diag)?;
        Ok(())
    }

    /// Read a field written by [`EigenvalueField::save`]; `p` is the
    /// covariate dimension.
    pub fn load(path: &Path, p: usize, method: Method) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("{}: empty file", path.display())))?;
        let cols = header.split(',').count();
        if cols < p + 2 {
            return Err(Error::invalid(format!("{}: too few columns", path.display())));
        }
        let l = cols - p - 1;
        let mut z_points = Vec::new();
        let mut vals = Vec::new();
        let mut clamped = Vec::new();
        for (no, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let bad = |m: String| Error::Parse {
                path: path.to_path_buf(),
                line: no as u64 + 2,
                message: m,
            };
            if fields.len() != cols {
                return Err(bad(format!("expected {cols} fields, found {}", fields.len())));
            }
            let nums = fields[..p + l]
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(format!("`{f}` is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            z_points.push(nums[..p].to_vec());
            vals.push(nums[p..].to_vec());
            let mask = fields[p + l].trim();
            if mask.len() != l || !mask.chars().all(|c| c == '0' || c == '1') {
                return Err(bad(format!("bad clamped mask `{mask}`")));
            }
            clamped.extend(mask.chars().map(|c| c == '1'));
        }
        let n = z_points.len();
        let lambda = DMatrix::from_fn(n, l, |i, k| vals[i][k]);
        Ok(Self {
            z_points,
            raw: lambda.clone(),
            lambda,
            clamped,
            method,
            failures: Vec::new(),
        })
    }
}

/// Estimate `λ(z)` at every point of `z_points` with the chosen method.
/// For [`Method::PcSquared`] the points are ignored: one row per subject
/// holds its squared scores at its own covariate.
pub fn eigenvalue_field(
    d: &FunctionalDataset,
    mean: &MeanField,
    basis: &EigenBasis,
    l: usize,
    method: Method,
    z_points: &[Vec<f64>],
    options: &FieldOptions,
) -> Result<EigenvalueField> {
    check_l(basis, l)?;
    let results: Vec<Result<EigenvalueEstimate>> = match method {
        Method::Wls => {
            let blocks = build_designs(d, mean, basis, l)?;
            let est = WlsEstimator::new(&blocks)?;
            z_points
                .par_iter()
                .map(|z| est.estimate(z, &options.h_lambda, options.kernel, options.clamp))
                .collect()
        }
        Method::Pc => {
            let scores = score_set(d, mean, basis, l, options.sigma2)?;
            PcEstimator::new(&scores)?.field(z_points, &options.h_lambda, options.kernel, options.clamp)?
        }
        Method::PcSquared => {
            let scores = score_set(d, mean, basis, l, options.sigma2)?;
            let rows: Vec<Result<EigenvalueEstimate>> = scores
                .scores
                .iter()
                .map(|a| Ok(EigenvalueEstimate::new(a.iter().map(|v| v * v).collect(), false)))
                .collect();
            return EigenvalueField::from_estimates(&scores.z, rows, l, method, options.max_failure_fraction);
        }
    };
    EigenvalueField::from_estimates(z_points, results, l, method, options.max_failure_fraction)
}

/// `Σ_k λ_k φ_k(s) φ_k(t)` on the basis grid.
pub fn reconstruct_cov(basis: &EigenBasis, lambda_z: &[f64]) -> Result<CovSurface> {
    check_l(basis, lambda_z.len())?;
    let m = basis.t_grid.len();
    let mut v = DMatrix::zeros(m, m);
    for (k, &lam) in lambda_z.iter().enumerate() {
        let c = basis.phi.column(k);
        for a in 0..m {
            let ca = lam * c[a];
            for b in 0..m {
                v[(a, b)] += ca * c[b];
            }
        }
    }
    CovSurface::new(basis.t_grid.clone(), v, f64::NAN, KernelSpec::default())
}

#[cfg(test)]
mod tests;
