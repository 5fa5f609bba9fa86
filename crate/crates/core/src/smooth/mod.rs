//! Smoothing estimators for the mean `μ(t, z)`, the pooled covariance
//! `Γ*(s, t)` and the measurement-error variance `σ²`.
//!
//! All three are built on [`LocalSmoother`]. Each subject gets equal total
//! weight: observations carry `1 / (n N_i)` in the mean smoother and ordered
//! cross-product pairs `j ≠ k` carry `1 / (n N_i (N_i - 1))` in the
//! covariance smoother. Squared residuals on the diagonal `j = k` hold
//! `Γ(t, t) + σ²` and are left out of `Γ*`.

mod index;
mod local;

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::FunctionalDataset;
use crate::grid::{self, TensorGrid};
use crate::kernel::{Bandwidths, KernelFamily, KernelSpec};
use crate::kv::{fmt_f64, fmt_list, KeyValues};
use crate::{Error, Result};

pub use local::{local_linear_fit, Degree, LocalSmoother, SampleSet, DEFAULT_RIDGE};

/// Fraction of the time domain, centred, over which `σ²` is averaged.
pub const SIGMA2_INTERIOR: f64 = 0.8;

/// Mean surface on a tensor grid over `(t, z_1, .., z_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField {
    grid: TensorGrid,
    /// Row-major over the grid axes: `values[it * m_z + iz]`.
    pub values: Vec<f64>,
    pub h_t: f64,
    pub h_z: Vec<f64>,
    pub kernel: KernelSpec,
    pub degree: Degree,
}

impl MeanField {
    pub fn t_grid(&self) -> &[f64] {
        &self.grid.axes()[0]
    }

    pub fn z_axes(&self) -> &[Vec<f64>] {
        &self.grid.axes()[1..]
    }

    pub fn covariate_dim(&self) -> usize {
        self.grid.dim() - 1
    }

    /// Multilinear interpolation at `(t, z)`, clamped to the grid box.
    pub fn eval(&self, t: f64, z: &[f64]) -> f64 {
        let mut x = Vec::with_capacity(1 + z.len());
        x.push(t);
        x.extend_from_slice(z);
        self.grid.interpolate(&self.values, &x)
    }

    /// Assemble from precomputed values, e.g. a known truth.
    pub fn from_values(t_grid: Vec<f64>, z_axes: Vec<Vec<f64>>, values: Vec<f64>, kernel: KernelSpec) -> Result<Self> {
        let mut axes = vec![t_grid];
        axes.extend(z_axes);
        let grid = TensorGrid::new(axes)?;
        if values.len() != grid.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "mean field needs {} finite values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let p = grid.dim() - 1;
        Ok(Self {
            grid,
            values,
            h_t: f64::NAN,
            h_z: vec![f64::NAN; p],
            kernel,
            degree: Degree::Linear,
        })
    }

    /// Zero mean on a grid; for data known to be centred.
    pub fn zero(t_grid: Vec<f64>, z_axes: Vec<Vec<f64>>) -> Result<Self> {
        let len = t_grid.len() * z_axes.iter().map(Vec::len).product::<usize>();
        Self::from_values(t_grid, z_axes, vec![0.0; len], KernelSpec::default())
    }

    /// Long CSV `t,z_1..z_p,value` plus a `key = value` sidecar.
    pub fn save(&self, csv_path: &Path, meta_path: &Path) -> Result<()> {
        let p = self.covariate_dim();
        let mut out = String::from("t");
        for k in 1..=p {
            out.push_str(&format!(",z_{k}"));
        }
        out.push_str(",value\n");
        for (i, v) in self.values.iter().enumerate() {
            let point = self.grid.point(i);
            out.push_str(&fmt_list(&point));
            out.push(',');
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
        std::fs::write(csv_path, out)?;

        let mut meta = KeyValues::new();
        meta.set("artifact", "mean");
        meta.set("kernel.family", self.kernel.family);
        meta.set("degree", degree_name(self.degree));
        meta.set("bandwidth.h_t", fmt_f64(self.h_t));
        meta.set("bandwidth.h_z", fmt_list(&self.h_z));
        meta.set("grid.t_points", self.t_grid().len());
        for (k, axis) in self.z_axes().iter().enumerate() {
            meta.set(format!("grid.z_{}_points", k + 1), axis.len());
        }
        meta.write(meta_path)
    }

    pub fn load(csv_path: &Path, meta_path: &Path) -> Result<Self> {
        let meta = KeyValues::read(meta_path)?;
        let rows = read_numeric_csv(csv_path)?;
        let width = rows.first().map_or(0, Vec::len);
        if width < 3 {
            return Err(Error::invalid(format!(
                "{}: mean field needs columns t,z_1..z_p,value",
                csv_path.display()
            )));
        }
        let dims = width - 1;
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dims];
        for row in &rows {
            for k in 0..dims {
                if !axes[k].iter().any(|&a| a.to_bits() == row[k].to_bits()) {
                    axes[k].push(row[k]);
                }
            }
        }
        for axis in &mut axes {
            axis.sort_by(f64::total_cmp);
        }
        let values: Vec<f64> = rows.iter().map(|r| r[dims]).collect();
        let t_grid = axes.remove(0);
        let kernel = KernelSpec::new(meta.parsed_or("kernel.family", KernelFamily::Epanechnikov)?);
        let mut field = Self::from_values(t_grid, axes, values, kernel)?;
        field.h_t = meta.parsed_or("bandwidth.h_t", f64::NAN)?;
        field.h_z = meta.list("bandwidth.h_z")?.unwrap_or_default();
        field.degree = match meta.get("degree") {
            Some("constant") => Degree::Constant,
            _ => Degree::Linear,
        };
        Ok(field)
    }
}

fn degree_name(d: Degree) -> &'static str {
    match d {
        Degree::Constant => "constant",
        Degree::Linear => "linear",
    }
}

/// Symmetric surface on a `t_grid × t_grid` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSurface {
    pub t_grid: Vec<f64>,
    pub values: DMatrix<f64>,
    pub h_gamma: f64,
    pub kernel: KernelSpec,
}

impl CovSurface {
    pub fn new(t_grid: Vec<f64>, values: DMatrix<f64>, h_gamma: f64, kernel: KernelSpec) -> Result<Self> {
        let m = t_grid.len();
        if values.nrows() != m || values.ncols() != m {
            return Err(Error::invalid(format!(
                "covariance surface is {}x{}, grid has {m} points",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self {
            t_grid,
            values,
            h_gamma,
            kernel,
        })
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    /// Bilinear interpolation at `(s, t)`.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let (i, fs) = grid::locate(&self.t_grid, s);
        let (j, ft) = grid::locate(&self.t_grid, t);
        let m = self.t_grid.len();
        let v = |a: usize, b: usize| self.values[(a.min(m - 1), b.min(m - 1))];
        (1.0 - fs) * ((1.0 - ft) * v(i, j) + ft * v(i, j + 1)) + fs * ((1.0 - ft) * v(i + 1, j) + ft * v(i + 1, j + 1))
    }

    /// Largest `|V[a,b] - V[b,a]|`.
    pub fn asymmetry(&self) -> f64 {
        let m = self.len();
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in a + 1..m {
                worst = worst.max((self.values[(a, b)] - self.values[(b, a)]).abs());
            }
        }
        worst
    }

    /// Long CSV `s,t,value` plus a sidecar.
    pub fn save(&self, csv_path: &Path, meta_path: &Path) -> Result<()> {
        let mut out = String::from("s,t,value\n");
        for (a, &s) in self.t_grid.iter().enumerate() {
            for (b, &t) in self.t_grid.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{}\n",
                    fmt_f64(s),
                    fmt_f64(t),
                    fmt_f64(self.values[(a, b)])
                ));
            }
        }
        std::fs::write(csv_path, out)?;
        let mut meta = KeyValues::new();
        meta.set("artifact", "covariance");
        meta.set("kernel.family", self.kernel.family);
        meta.set("bandwidth.h_gamma", fmt_f64(self.h_gamma));
        meta.set("grid.t_points", self.len());
        meta.write(meta_path)
    }

    pub fn load(csv_path: &Path, meta_path: &Path) -> Result<Self> {
        let meta = KeyValues::read(meta_path)?;
        let rows = read_numeric_csv(csv_path)?;
        let m = (rows.len() as f64).sqrt().round() as usize;
        if m * m != rows.len() || rows.iter().any(|r| r.len() != 3) {
            return Err(Error::invalid(format!(
                "{}: expected m*m rows of s,t,value",
                csv_path.display()
            )));
        }
        let t_grid: Vec<f64> = (0..m).map(|b| rows[b][1]).collect();
        let values = DMatrix::from_fn(m, m, |a, b| rows[a * m + b][2]);
        let kernel = KernelSpec::new(meta.parsed_or("kernel.family", KernelFamily::Epanechnikov)?);
        Self::new(t_grid, values, meta.parsed_or("bandwidth.h_gamma", f64::NAN)?, kernel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimate {
    pub sigma2: f64,
}

/// Residuals `Y_ij - μ̂(t_ij, z_i)` per subject.
pub fn residuals(d: &FunctionalDataset, mean: &MeanField) -> Vec<Vec<f64>> {
    d.subjects
        .par_iter()
        .map(|s| s.t.iter().zip(&s.y).map(|(&t, &y)| y - mean.eval(t, &s.z)).collect())
        .collect()
}

fn mean_samples(d: &FunctionalDataset) -> SampleSet {
    let n = d.n_subjects() as f64;
    let dim = 1 + d.covariate_dim;
    let mut samples = SampleSet::with_capacity(dim, d.total_obs());
    let mut x = vec![0.0; dim];
    for s in &d.subjects {
        let w = 1.0 / (n * s.n_obs() as f64);
        x[1..].copy_from_slice(&s.z);
        for (&t, &y) in s.t.iter().zip(&s.y) {
            x[0] = t;
            samples.push(&x, y, w);
        }
    }
    samples
}

fn fit_on_grid(
    samples: &SampleSet,
    h: &[f64],
    spec: KernelSpec,
    degree: Degree,
    grid: &TensorGrid,
) -> Result<Vec<f64>> {
    let smoother = LocalSmoother::new(samples, h, spec, DEFAULT_RIDGE)?;
    let results: Vec<Result<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| smoother.fit(&grid.point(i), degree))
        .collect();
    results.into_iter().collect()
}

fn smooth_mean(
    d: &FunctionalDataset,
    b: &Bandwidths,
    spec: KernelSpec,
    t_grid: &[f64],
    z_axes: &[Vec<f64>],
    degree: Degree,
) -> Result<MeanField> {
    if d.is_empty() {
        return Err(Error::invalid("mean estimation needs at least one subject"));
    }
    if z_axes.len() != d.covariate_dim || b.h_z.len() != d.covariate_dim {
        return Err(Error::invalid(format!(
            "covariate dimension {} but {} grid axes and {} z-bandwidths",
            d.covariate_dim,
            z_axes.len(),
            b.h_z.len()
        )));
    }
    let mut axes = vec![t_grid.to_vec()];
    axes.extend(z_axes.iter().cloned());
    let grid = TensorGrid::new(axes)?;
    let samples = mean_samples(d);
    let values = fit_on_grid(&samples, &b.mean_vector(), spec, degree, &grid)?;
    Ok(MeanField {
        grid,
        values,
        h_t: b.h_t,
        h_z: b.h_z.clone(),
        kernel: spec,
        degree,
    })
}

/// Local linear mean over `(t, z)` with per-subject weight `1 / (n N_i)`,
/// evaluated on `t_grid × z_axes`.
pub fn estimate_mean(
    d: &FunctionalDataset,
    b: &Bandwidths,
    spec: KernelSpec,
    t_grid: &[f64],
    z_axes: &[Vec<f64>],
) -> Result<MeanField> {
    smooth_mean(d, b, spec, t_grid, z_axes, Degree::Linear)
}

/// Degree-0 (Nadaraya-Watson) product-kernel mean, otherwise as
/// [`estimate_mean`].
pub fn nadaraya_watson_mean(
    d: &FunctionalDataset,
    b: &Bandwidths,
    spec: KernelSpec,
    t_grid: &[f64],
    z_axes: &[Vec<f64>],
) -> Result<MeanField> {
    smooth_mean(d, b, spec, t_grid, z_axes, Degree::Constant)
}

/// Raw off-diagonal cross-products `(t_ij, t_ik) → Û_ij Û_ik`, `j ≠ k`,
/// merged by location.
pub(crate) fn cross_product_samples(d: &FunctionalDataset, resid: &[Vec<f64>]) -> SampleSet {
    let n = d.n_subjects() as f64;
    let mut samples = SampleSet::new(2);
    for (s, u) in d.subjects.iter().zip(resid) {
        let ni = s.n_obs();
        if ni < 2 {
            continue;
        }
        let w = 1.0 / (n * (ni * (ni - 1)) as f64);
        for j in 0..ni {
            for k in 0..ni {
                if j != k {
                    samples.push(&[s.t[j], s.t[k]], u[j] * u[k], w);
                }
            }
        }
    }
    samples.aggregated()
}

/// Pooled covariance: 2D local linear smoothing of the off-diagonal raw
/// covariances on `t_grid × t_grid`, then symmetrised as `(V + Vᵀ) / 2`.
pub fn estimate_pooled_cov(
    d: &FunctionalDataset,
    mean: &MeanField,
    h_gamma: f64,
    spec: KernelSpec,
    t_grid: &[f64],
) -> Result<CovSurface> {
    if !d.subjects.iter().any(|s| s.is_covariance_eligible()) {
        return Err(Error::invalid(
            "pooled covariance needs a subject with at least two observations",
        ));
    }
    if !grid::is_strictly_ascending(t_grid) || t_grid.len() < 2 {
        return Err(Error::invalid("covariance grid must be strictly ascending with m >= 2"));
    }
    let resid = residuals(d, mean);
    let samples = cross_product_samples(d, &resid);
    let grid = TensorGrid::new(vec![t_grid.to_vec(), t_grid.to_vec()])?;
    let raw = fit_on_grid(&samples, &[h_gamma, h_gamma], spec, Degree::Linear, &grid)?;
    let m = t_grid.len();
    let values = DMatrix::from_fn(m, m, |a, b| 0.5 * (raw[a * m + b] + raw[b * m + a]));
    CovSurface::new(t_grid.to_vec(), values, h_gamma, spec)
}

/// Measurement-error variance: the local linear smooth of squared residuals
/// on the diagonal minus `Γ̂*(t, t)`, averaged over grid points in the
/// central [`SIGMA2_INTERIOR`] of the time domain and clamped at zero.
/// Uses the covariance surface's kernel and bandwidth.
pub fn estimate_sigma2(d: &FunctionalDataset, mean: &MeanField, cov: &CovSurface) -> Result<NoiseEstimate> {
    let resid = residuals(d, mean);
    let n = d.n_subjects() as f64;
    let mut samples = SampleSet::with_capacity(1, d.total_obs());
    for (s, u) in d.subjects.iter().zip(&resid) {
        let w = 1.0 / (n * s.n_obs() as f64);
        for (&t, &uj) in s.t.iter().zip(u) {
            samples.push(&[t], uj * uj, w);
        }
    }
    if samples.is_empty() {
        return Err(Error::invalid("noise variance needs diagonal data"));
    }
    let samples = samples.aggregated();
    let smoother = LocalSmoother::new(&samples, &[cov.h_gamma], cov.kernel, DEFAULT_RIDGE)?;
    let (lo, hi) = d.time_domain;
    let margin = 0.5 * (1.0 - SIGMA2_INTERIOR) * (hi - lo);
    let (a, b) = (lo + margin, hi - margin);
    let mut total = 0.0;
    let mut count = 0usize;
    for (g, &t) in cov.t_grid.iter().enumerate() {
        if t < a || t > b {
            continue;
        }
        if let Ok(diag) = smoother.fit(&[t], Degree::Linear) {
            total += diag - cov.values[(g, g)];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid(
            "noise variance: no interior grid point with diagonal data",
        ));
    }
    Ok(NoiseEstimate {
        sigma2: (total / count as f64).max(0.0),
    })
}

/// Rows of a CSV with a header line, every field numeric.
pub(crate) fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
