//! Quadrature eigen-decomposition of the pooled covariance surface.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::grid::{self, trapezoid_weights};
use crate::kv::{fmt_f64, fmt_list, KeyValues};
use crate::smooth::{read_numeric_csv, CovSurface};
use crate::{Error, Result};

/// Tolerance on orthonormality checks used across the crate.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

const SIGN_TIE: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenfunctions on a time grid, orthonormal under trapezoid quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub t_grid: Vec<f64>,
    pub quad_weights: Vec<f64>,
    /// `m × L`; column `k` holds `φ_k` on the grid.
    pub phi: DMatrix<f64>,
    /// Pooled eigenvalues `λ*_k`, nonincreasing and nonnegative.
    pub lambda_star: Vec<f64>,
    /// Cumulative fraction of variance explained.
    pub fve: Vec<f64>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.lambda_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_star.is_empty()
    }

    /// Basis restricted to the first `l` components.
    pub fn truncated(&self, l: usize) -> Result<Self> {
        if l == 0 || l > self.len() {
            return Err(Error::invalid(format!("cannot keep {l} of {} components", self.len())));
        }
        Ok(Self {
            t_grid: self.t_grid.clone(),
            quad_weights: self.quad_weights.clone(),
            phi: self.phi.columns(0, l).into_owned(),
            lambda_star: self.lambda_star[..l].to_vec(),
            fve: self.fve[..l].to_vec(),
        })
    }

    /// Build from known eigenfunction values, e.g. a simulation truth.
    /// Columns are used as given; `fve` is computed from `lambda_star`.
    pub fn from_columns(t_grid: Vec<f64>, phi: DMatrix<f64>, lambda_star: Vec<f64>) -> Result<Self> {
        if phi.nrows() != t_grid.len() || phi.ncols() != lambda_star.len() {
            return Err(Error::invalid(
                "eigenfunction matrix does not match grid and eigenvalues",
            ));
        }
        let quad_weights = trapezoid_weights(&t_grid);
        let fve = cumulative_fve(&lambda_star);
        Ok(Self {
            t_grid,
            quad_weights,
            phi,
            lambda_star,
            fve,
        })
    }

    /// Largest deviation of `ΦᵀWΦ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let l = self.len();
        let mut worst = 0.0f64;
        for a in 0..l {
            for b in a..l {
                let ip: f64 = (0..self.t_grid.len())
                    .map(|g| self.quad_weights[g] * self.phi[(g, a)] * self.phi[(g, b)])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// `t, phi_1..phi_L` CSV plus a sidecar with `lambda_star` and `fve`.
    pub fn save(&self, csv_path: &Path, meta_path: &Path) -> Result<()> {
        let mut out = String::from("t");
        for k in 1..=self.len() {
            out.push_str(&format!(",phi_{k}"));
        }
        out.push('\n');
        for (g, &t) in self.t_grid.iter().enumerate() {
            out.push_str(&fmt_f64(t));
            for k in 0..self.len() {
                out.push(',');
                out.push_str(&fmt_f64(self.phi[(g, k)]));
            }
            out.push('\n');
        }
        std::fs::write(csv_path, out)?;
        let mut meta = KeyValues::new();
        meta.set("artifact", "basis");
        meta.set("lambda_star", fmt_list(&self.lambda_star));
        meta.set("fve", fmt_list(&self.fve));
        meta.write(meta_path)
    }

    pub fn load(csv_path: &Path, meta_path: &Path) -> Result<Self> {
        let meta = KeyValues::read(meta_path)?;
        let rows = read_numeric_csv(csv_path)?;
        let lambda_star: Vec<f64> = meta.list("lambda_star")?.unwrap_or_default();
        let l = lambda_star.len();
        if rows.is_empty() || rows.iter().any(|r| r.len() != l + 1) {
            return Err(Error::invalid(format!(
                "{}: expected columns t,phi_1..phi_{l}",
                csv_path.display()
            )));
        }
        let t_grid: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let phi = DMatrix::from_fn(rows.len(), l, |g, k| rows[g][k + 1]);
        let mut basis = Self::from_columns(t_grid, phi, lambda_star)?;
        if let Some(fve) = meta.list("fve")? {
            basis.fve = fve;
        }
        Ok(basis)
    }
}

fn cumulative_fve(lambda: &[f64]) -> Vec<f64> {
    let total: f64 = lambda.iter().sum();
    let mut acc = 0.0;
    lambda
        .iter()
        .map(|&v| {
            acc += v;
            if total > 0.0 {
                acc / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Solve `∫ Γ̂*(s, t) φ(s) ds = λ φ(t)` on the grid by the symmetric
/// eigenproblem of `W^{1/2} V W^{1/2}` with trapezoid weights `W`.
///
/// Every grid eigenpair is returned. Eigenvectors are mapped back by
/// `W^{-1/2}`, normalised to unit quadrature norm and signed so that
/// `Σ w φ ≥ 0` (or, when that sum vanishes, so that the largest-magnitude
/// value is positive). Negative eigenvalues are clamped to zero.
pub fn eigendecompose(cov: &CovSurface) -> Result<EigenBasis> {
    let m = cov.len();
    if m < 2 {
        return Err(Error::invalid("eigen-decomposition needs at least two grid points"));
    }
    let v = &cov.values;
    let scale = v.amax().max(1.0);
    if cov.asymmetry() > SYMMETRY_TOL * scale {
        return Err(Error::invalid(format!(
            "covariance surface is not symmetric (max asymmetry {:e})",
            cov.asymmetry()
        )));
    }
    let w = trapezoid_weights(&cov.t_grid);
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("time grid has zero-width cells"));
    }
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |i, j| sw[i] * 0.5 * (v[(i, j)] + v[(j, i)]) * sw[j]);
    let eig = SymmetricEigen::new(a);

    let mut order: Vec<usize> = (0..m).collect();
    let clamped: Vec<f64> = eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    // stable: equal eigenvalues keep the solver's order
    order.sort_by(|&i, &j| clamped[j].total_cmp(&clamped[i]));
    for pair in order.windows(2) {
        let (a, b) = (clamped[pair[0]], clamped[pair[1]]);
        if a > 0.0 && (a - b).abs() <= 1e-10 * a {
            log::warn!("tied pooled eigenvalues near {a:e}; component order is arbitrary");
        }
    }

    let mut phi = DMatrix::zeros(m, m);
    let mut lambda_star = Vec::with_capacity(m);
    for (k, &src) in order.iter().enumerate() {
        let mut col: Vec<f64> = (0..m).map(|g| eig.eigenvectors[(g, src)] / sw[g]).collect();
        let norm: f64 = col.iter().zip(&w).map(|(x, wg)| wg * x * x).sum::<f64>().sqrt();
        for x in &mut col {
            *x /= norm;
        }
        apply_sign_convention(&mut col, &w);
        phi.set_column(k, &nalgebra::DVector::from_vec(col));
        lambda_star.push(clamped[src]);
    }
    let fve = cumulative_fve(&lambda_star);
    Ok(EigenBasis {
        t_grid: cov.t_grid.clone(),
        quad_weights: w,
        phi,
        lambda_star,
        fve,
    })
}

fn apply_sign_convention(col: &mut [f64], w: &[f64]) {
    let integral: f64 = col.iter().zip(w).map(|(x, wg)| x * wg).sum();
    let flip = if integral.abs() > SIGN_TIE {
        integral < 0.0
    } else {
        let mut peak = 0.0f64;
        for &x in col.iter() {
            if x.abs() > peak.abs() {
                peak = x;
            }
        }
        peak < 0.0
    };
    if flip {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}

/// Smallest `L` whose cumulative FVE reaches `fve_target` (inclusive).
pub fn select_truncation(basis: &EigenBasis, fve_target: f64) -> Result<usize> {
    if !(fve_target > 0.0 && fve_target <= 1.0) {
        return Err(Error::invalid(format!("FVE target {fve_target} not in (0, 1]")));
    }
    let total: f64 = basis.lambda_star.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("all pooled eigenvalues are zero"));
    }
    let mut acc = 0.0;
    for (k, &v) in basis.lambda_star.iter().enumerate() {
        acc += v;
        // a relative slack absorbs rounding in sums such as 9 / (9 + 1)
        if acc / total >= fve_target - 1e-12 {
            return Ok(k + 1);
        }
    }
    Ok(basis.len())
}

/// `φ_k(t)` by linear interpolation; `t` must lie within the grid.
pub fn eval_eigenfunction(basis: &EigenBasis, k: usize, t: f64) -> Result<f64> {
    let g = &basis.t_grid;
    if k >= basis.len() {
        return Err(Error::invalid(format!("component {k} of {}", basis.len())));
    }
    if !(t >= g[0] && t <= g[g.len() - 1]) {
        return Err(Error::invalid(format!(
            "t = {t} outside eigenfunction grid [{}, {}]",
            g[0],
            g[g.len() - 1]
        )));
    }
    let (i, f) = grid::locate(g, t);
    let v = |r: usize| basis.phi[(r, k)];
    Ok(if f == 0.0 {
        v(i)
    } else if f == 1.0 {
        v(i + 1)
    } else {
        v(i) * (1.0 - f) + v(i + 1) * f
    })
}

/// All `L` eigenfunction values at `t` (clamped to the grid).
pub(crate) fn eval_all(basis: &EigenBasis, t: f64) -> Vec<f64> {
    let (i, f) = grid::locate(&basis.t_grid, t);
    let m = basis.t_grid.len();
    (0..basis.len())
        .map(|k| {
            let a = basis.phi[(i, k)];
            if f == 0.0 || m == 1 {
                a
            } else {
                let b = basis.phi[(i + 1, k)];
                if f == 1.0 {
                    b
                } else {
                    a * (1.0 - f) + b * f
                }
            }
        })
        .collect()
}
