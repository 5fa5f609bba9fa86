//! Kernel functions, product kernels over covariates and bandwidth
//! selection by subject-level cross-validation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod cv;

pub use cv::{cv_bandwidth, cv_fold_errors, fold_assignment, CvTarget};

/// Kernel family. Epanechnikov and Uniform are symmetric densities on
/// `[-1, 1]`; Gaussian has unbounded support and is only offered for
/// Nadaraya-Watson style smoothing and field smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Epanechnikov,
    Uniform,
    Gaussian,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Uniform => "uniform",
            KernelFamily::Gaussian => "gaussian",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(KernelFamily::Epanechnikov),
            "uniform" | "box" => Ok(KernelFamily::Uniform),
            "gaussian" | "normal" => Ok(KernelFamily::Gaussian),
            other => Err(Error::invalid(format!("unknown kernel family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub const EPANECHNIKOV: KernelSpec = KernelSpec {
        family: KernelFamily::Epanechnikov,
    };
    pub const UNIFORM: KernelSpec = KernelSpec {
        family: KernelFamily::Uniform,
    };
    pub const GAUSSIAN: KernelSpec = KernelSpec {
        family: KernelFamily::Gaussian,
    };

    pub fn new(family: KernelFamily) -> Self {
        Self { family }
    }

    /// Unscaled kernel value `K(u)`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelFamily::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelFamily::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
        }
    }

    /// Scaled kernel `K_h(d) = K(d / h) / h`.
    #[inline]
    pub fn eval_scaled(&self, d: f64, h: f64) -> f64 {
        self.eval(d / h) / h
    }

    /// Second moment `∫ u² K(u) du`.
    pub fn second_moment(&self) -> f64 {
        match self.family {
            KernelFamily::Epanechnikov => 0.2,
            KernelFamily::Uniform => 1.0 / 3.0,
            KernelFamily::Gaussian => 1.0,
        }
    }

    /// Half-width of the support in units of `u`, `None` for unbounded kernels.
    pub fn support_radius(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Epanechnikov | KernelFamily::Uniform => Some(1.0),
            KernelFamily::Gaussian => None,
        }
    }

    pub fn is_compact(&self) -> bool {
        self.support_radius().is_some()
    }
}

/// `K(u)` for the given kernel.
pub fn eval_kernel(spec: KernelSpec, u: f64) -> f64 {
    spec.eval(u)
}

/// Product kernel weight `∏_k K(diffs_k / h_k) / h_k`.
pub fn product_weight(spec: KernelSpec, diffs: &[f64], h: &[f64]) -> Result<f64> {
    if diffs.len() != h.len() {
        return Err(Error::invalid(format!(
            "product_weight: {} differences but {} bandwidths",
            diffs.len(),
            h.len()
        )));
    }
    Ok(product_weight_unchecked(spec, diffs, h))
}

#[inline]
pub(crate) fn product_weight_unchecked(spec: KernelSpec, diffs: &[f64], h: &[f64]) -> f64 {
    let mut w = 1.0;
    for (&d, &hk) in diffs.iter().zip(h) {
        w *= spec.eval_scaled(d, hk);
        if w == 0.0 {
            break;
        }
    }
    w
}

/// Smoothing bandwidths: `h_t` and `h_z` for the mean, `h_gamma` for the
/// pooled covariance, `h_lambda` for the covariate-specific eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub h_t: f64,
    pub h_z: Vec<f64>,
    pub h_gamma: f64,
    pub h_lambda: Vec<f64>,
}

impl Bandwidths {
    pub fn new(h_t: f64, h_z: Vec<f64>, h_gamma: f64, h_lambda: Vec<f64>) -> Result<Self> {
        let b = Self {
            h_t,
            h_z,
            h_gamma,
            h_lambda,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.h_t)
            || !ok(self.h_gamma)
            || !self.h_z.iter().all(|&x| ok(x))
            || !self.h_lambda.iter().all(|&x| ok(x))
        {
            return Err(Error::invalid(format!(
                "bandwidths must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    /// Flattened `(h_t, h_z.., h_gamma, h_lambda..)`; the order used for
    /// lexicographic tie-breaking in cross-validation.
    pub fn as_vec(&self) -> Vec<f64> {
        let mut v = vec![self.h_t];
        v.extend(&self.h_z);
        v.push(self.h_gamma);
        v.extend(&self.h_lambda);
        v
    }

    /// Mean-smoother bandwidth vector over `(t, z_1, .., z_p)`.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.h_z.len());
        v.push(self.h_t);
        v.extend(&self.h_z);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [KernelSpec; 3] = [KernelSpec::EPANECHNIKOV, KernelSpec::UNIFORM, KernelSpec::GAUSSIAN];

    #[test]
    fn analytic_values() {
        assert_eq!(eval_kernel(KernelSpec::EPANECHNIKOV, 0.0), 0.75);
        assert_eq!(eval_kernel(KernelSpec::EPANECHNIKOV, 1.5), 0.0);
        assert_eq!(eval_kernel(KernelSpec::UNIFORM, -0.3), 0.5);
        let g0 = eval_kernel(KernelSpec::GAUSSIAN, 0.0);
        assert!((g0 - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn product_weight_examples() {
        let w = product_weight(KernelSpec::EPANECHNIKOV, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((w - 0.5625).abs() < 1e-15);
        let w = product_weight(KernelSpec::EPANECHNIKOV, &[0.1, 0.6], &[0.5, 0.5]).unwrap();
        assert_eq!(w, 0.0);
        assert!(product_weight(KernelSpec::EPANECHNIKOV, &[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn product_weight_matches_sequential_product() {
        let diffs = [0.13, -0.42, 0.07];
        let h = [0.5, 0.9, 0.2];
        for spec in ALL {
            let direct: f64 = diffs
                .iter()
                .zip(&h)
                .map(|(d, hk)| eval_kernel(spec, d / hk) / hk)
                .product();
            let w = product_weight(spec, &diffs, &h).unwrap();
            assert!((w - direct).abs() <= 1e-14 * direct.abs().max(1.0));
        }
    }

    /// Composite Simpson on [-1, 1] with many panels; the Epanechnikov and
    /// uniform densities are piecewise polynomials of degree <= 2 so the rule
    /// is exact up to rounding.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut s = f(a) + f(b);
        for i in 1..panels {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn compact_kernels_integrate_to_one() {
        for spec in [KernelSpec::EPANECHNIKOV, KernelSpec::UNIFORM] {
            let mass = simpson(|u| spec.eval(u), -1.0, 1.0, 2000);
            assert!((mass - 1.0).abs() < 1e-10, "{spec:?}: {mass}");
            let m2 = simpson(|u| u * u * spec.eval(u), -1.0, 1.0, 2000);
            assert!((m2 - spec.second_moment()).abs() < 1e-10);
        }
        let g = KernelSpec::GAUSSIAN;
        let m2 = simpson(|u| u * u * g.eval(u), -12.0, 12.0, 20000);
        assert!((m2 - g.second_moment()).abs() < 1e-10);
    }

    #[test]
    fn bandwidths_reject_nonpositive() {
        assert!(Bandwidths::new(1.0, vec![0.2], 1.0, vec![0.2]).is_ok());
        assert!(Bandwidths::new(0.0, vec![0.2], 1.0, vec![0.2]).is_err());
        assert!(Bandwidths::new(1.0, vec![f64::NAN], 1.0, vec![0.2]).is_err());
        assert!(Bandwidths::new(1.0, vec![0.2], 1.0, vec![-0.1]).is_err());
    }

    proptest! {
        #[test]
        fn kernels_are_symmetric(u in -5.0f64..5.0) {
            for spec in ALL {
                prop_assert_eq!(spec.eval(u), spec.eval(-u));
            }
        }

        #[test]
        fn compact_support(u in 1.0f64..100.0) {
            prop_assume!(u > 1.0);
            prop_assert_eq!(KernelSpec::EPANECHNIKOV.eval(u), 0.0);
            prop_assert_eq!(KernelSpec::UNIFORM.eval(-u), 0.0);
        }

        #[test]
        fn product_weight_permutation_invariant(
            d in proptest::collection::vec(-1.0f64..1.0, 3),
            h in proptest::collection::vec(0.1f64..2.0, 3),
        ) {
            let perm = [2usize, 0, 1];
            let dp: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
            let hp: Vec<f64> = perm.iter().map(|&i| h[i]).collect();
            for spec in ALL {
                let a = product_weight(spec, &d, &h).unwrap();
                let b = product_weight(spec, &dp, &hp).unwrap();
                prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
            }
        }
    }
}
