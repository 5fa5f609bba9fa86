//! Kernel-weighted local polynomial regression (degree 0 or 1) in any
//! number of dimensions.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::index::CellIndex;
use crate::kernel::KernelSpec;
use crate::linalg::solve_psd;
use crate::{Error, Result};

/// Ridge factor (relative to the trace) applied only to singular local systems.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// Samples `(x, y, w)` with `x` of fixed dimension, stored contiguously.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            x: Vec::with_capacity(n * dim),
            y: Vec::with_capacity(n),
            w: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, x: &[f64], y: f64, w: f64) {
        debug_assert_eq!(x.len(), self.dim);
        self.x.extend_from_slice(x);
        self.y.push(y);
        self.w.push(w);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn w(&self, i: usize) -> f64 {
        self.w[i]
    }

    /// Merge samples sharing the same `x` (bitwise) into one sample carrying
    /// the summed weight and the weighted mean response. Local polynomial
    /// fits depend on the data only through these sums, so the merged set
    /// gives the same estimate at every query.
    pub fn aggregated(&self) -> SampleSet {
        let mut slots: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out = SampleSet::new(self.dim);
        let mut wy: Vec<f64> = Vec::new();
        for i in 0..self.len() {
            let key: Vec<u64> = self.x(i).iter().map(|v| v.to_bits()).collect();
            let slot = *slots.entry(key).or_insert_with(|| {
                out.push(self.x(i), 0.0, 0.0);
                wy.push(0.0);
                out.len() - 1
            });
            out.w[slot] += self.w[i];
            wy[slot] += self.w[i] * self.y[i];
        }
        for (slot, s) in wy.into_iter().enumerate() {
            let w = out.w[slot];
            out.y[slot] = if w > 0.0 { s / w } else { 0.0 };
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degree {
    /// Nadaraya-Watson: local constant.
    Constant,
    /// Local linear.
    Linear,
}

/// A kernel smoother bound to a sample set and bandwidth vector. Compact
/// kernels use a cell index so each query only touches nearby samples.
#[derive(Debug, Clone)]
pub struct LocalSmoother<'a> {
    samples: &'a SampleSet,
    h: Vec<f64>,
    spec: KernelSpec,
    ridge: f64,
    index: Option<CellIndex>,
}

impl<'a> LocalSmoother<'a> {
    pub fn new(samples: &'a SampleSet, h: &[f64], spec: KernelSpec, ridge: f64) -> Result<Self> {
        if h.len() != samples.dim() {
            return Err(Error::invalid(format!(
                "bandwidth vector has length {}, samples have dimension {}",
                h.len(),
                samples.dim()
            )));
        }
        if !h.iter().all(|&v| v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("bandwidths must be positive: {h:?}")));
        }
        let index = spec.support_radius().map(|r| {
            let radius: Vec<f64> = h.iter().map(|&v| v * r).collect();
            CellIndex::build(&samples.x, samples.dim(), &radius)
        });
        Ok(Self {
            samples,
            h: h.to_vec(),
            spec,
            ridge,
            index,
        })
    }

    fn for_each_neighbor(&self, query: &[f64], mut f: impl FnMut(usize)) {
        match (&self.index, self.spec.support_radius()) {
            (Some(index), Some(r)) => {
                let radius: Vec<f64> = self.h.iter().map(|&v| v * r).collect();
                index.for_each_candidate(query, &radius, f);
            }
            _ => (0..self.samples.len()).for_each(&mut f),
        }
    }

    /// Estimated intercept `b_0` of the local fit at `query`.
    pub fn fit(&self, query: &[f64], degree: Degree) -> Result<f64> {
        let d = self.samples.dim();
        if query.len() != d {
            return Err(Error::invalid(format!(
                "query has dimension {}, samples have {d}",
                query.len()
            )));
        }
        let p = match degree {
            Degree::Constant => 1,
            Degree::Linear => d + 1,
        };
        // Regressors are (1, (x - query) / h): the intercept is unchanged and
        // the normal equations stay well scaled.
        let mut gram = vec![0.0; p * p];
        let mut rhs = vec![0.0; p];
        let mut v = vec![0.0; p];
        let mut positive = 0usize;
        self.for_each_neighbor(query, |i| {
            let x = self.samples.x(i);
            let mut w = self.samples.w(i);
            if w <= 0.0 {
                return;
            }
            v[0] = 1.0;
            for k in 0..d {
                let u = (x[k] - query[k]) / self.h[k];
                w *= self.spec.eval(u) / self.h[k];
                if w == 0.0 {
                    return;
                }
                if p > 1 {
                    v[k + 1] = u;
                }
            }
            positive += 1;
            let y = self.samples.y(i);
            for a in 0..p {
                let wa = w * v[a];
                rhs[a] += wa * y;
                for b in a..p {
                    gram[a * p + b] += wa * v[b];
                }
            }
        });
        if positive < p || gram[0] <= 0.0 {
            return Err(Error::InsufficientLocalData { query: query.to_vec() });
        }
        if p == 1 {
            return Ok(rhs[0] / gram[0]);
        }
        for a in 0..p {
            for b in 0..a {
                gram[a * p + b] = gram[b * p + a];
            }
        }
        let a = DMatrix::from_row_slice(p, p, &gram);
        let b = DVector::from_vec(rhs);
        match solve_psd(&a, &b, self.ridge) {
            Ok(sol) => Ok(sol[0]),
            Err(_) => Err(Error::InsufficientLocalData { query: query.to_vec() }),
        }
    }
}

/// Local linear estimate at `query`: the intercept of the weighted least
/// squares fit of `y` on `(1, x - query)` with weights `w · ∏ K_h`.
pub fn local_linear_fit(samples: &SampleSet, query: &[f64], h: &[f64], spec: KernelSpec, ridge: f64) -> Result<f64> {
    LocalSmoother::new(samples, h, spec, ridge)?.fit(query, Degree::Linear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_samples(n: usize, d: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> SampleSet {
        let mut rng = crate::rng::stream(seed, 0);
        let mut s = SampleSet::new(d);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let w = rng.random_range(0.5..2.0);
            let y = f(&x);
            s.push(&x, y, w);
        }
        s
    }

    #[test]
    fn reproduces_constants() {
        let s = random_samples(200, 2, 1, |_| 3.25);
        let v = local_linear_fit(&s, &[0.4, 0.6], &[0.3, 0.3], KernelSpec::EPANECHNIKOV, DEFAULT_RIDGE).unwrap();
        assert!((v - 3.25).abs() < 1e-12);
    }

    #[test]
    fn reproduces_affine_functions() {
        let f = |x: &[f64]| 2.0 + 3.0 * x[0] - x[1];
        let s = random_samples(300, 2, 2, f);
        for q in [[0.5, 0.5], [0.3, 0.7], [0.8, 0.2]] {
            let v = local_linear_fit(&s, &q, &[0.25, 0.25], KernelSpec::EPANECHNIKOV, DEFAULT_RIDGE).unwrap();
            assert!((v - f(&q)).abs() < 1e-8, "{v} vs {}", f(&q));
        }
    }

    /// Independent oracle: assemble the unscaled weighted normal equations
    /// over all samples and solve them densely with LU.
    #[test]
    fn matches_dense_normal_equations() {
        let mut rng = crate::rng::stream(3, 0);
        let mut s = SampleSet::new(1);
        for _ in 0..50 {
            let x = rng.random_range(0.0..1.0);
            s.push(
                &[x],
                (6.0 * x).sin() + rng.random_range(-0.1..0.1),
                rng.random_range(0.2..1.0),
            );
        }
        let spec = KernelSpec::EPANECHNIKOV;
        for &(q, h) in &[(0.5, 0.2), (0.05, 0.15), (0.9, 0.4)] {
            let mut a = DMatrix::<f64>::zeros(2, 2);
            let mut b = DVector::<f64>::zeros(2);
            for i in 0..s.len() {
                let dx = s.x(i)[0] - q;
                let w = s.w(i) * spec.eval(dx / h) / h;
                let v = DVector::from_vec(vec![1.0, dx]);
                a += w * &v * v.transpose();
                b += w * s.y(i) * &v;
            }
            let oracle = a.lu().solve(&b).unwrap()[0];
            let got = local_linear_fit(&s, &[q], &[h], spec, DEFAULT_RIDGE).unwrap();
            assert!((got - oracle).abs() < 1e-10, "q={q}: {got} vs {oracle}");
        }
    }

    #[test]
    fn deficiency_reports_query() {
        let mut s = SampleSet::new(1);
        s.push(&[0.0], 1.0, 1.0);
        s.push(&[0.05], 1.0, 1.0);
        match local_linear_fit(&s, &[0.9], &[0.1], KernelSpec::EPANECHNIKOV, DEFAULT_RIDGE) {
            Err(Error::InsufficientLocalData { query }) => assert_eq!(query, vec![0.9]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nadaraya_watson_is_weighted_ratio() {
        let s = random_samples(80, 1, 4, |x| (3.0 * x[0]).cos());
        let spec = KernelSpec::GAUSSIAN;
        let h = 0.15;
        let smoother = LocalSmoother::new(&s, &[h], spec, DEFAULT_RIDGE).unwrap();
        for q in [0.1, 0.5, 0.77] {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..s.len() {
                let w = s.w(i) * spec.eval((s.x(i)[0] - q) / h) / h;
                num += w * s.y(i);
                den += w;
            }
            let got = smoother.fit(&[q], Degree::Constant).unwrap();
            assert!((got - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_is_exact() {
        let mut s = SampleSet::new(2);
        let mut rng = crate::rng::stream(5, 0);
        for _ in 0..400 {
            let x = [rng.random_range(0..6) as f64 / 5.0, rng.random_range(0..6) as f64 / 5.0];
            s.push(&x, rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0));
        }
        let agg = s.aggregated();
        assert!(agg.len() <= 36);
        for q in [[0.5, 0.5], [0.1, 0.9]] {
            let a = local_linear_fit(&s, &q, &[0.45, 0.45], KernelSpec::EPANECHNIKOV, DEFAULT_RIDGE).unwrap();
            let b = local_linear_fit(&agg, &q, &[0.45, 0.45], KernelSpec::EPANECHNIKOV, DEFAULT_RIDGE).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn affine_exactness_property(
            c in proptest::collection::vec(-5.0f64..5.0, 3),
            q in proptest::collection::vec(0.35f64..0.65, 2),
            seed in 0u64..1000,
        ) {
            let f = |x: &[f64]| c[0] + c[1] * x[0] + c[2] * x[1];
            let s = random_samples(150, 2, seed, f);
            let v = local_linear_fit(&s, &q, &[0.35, 0.35], KernelSpec::EPANECHNIKOV, DEFAULT_RIDGE).unwrap();
            prop_assert!((v - f(&q)).abs() < 1e-8);
        }

        #[test]
        fn common_weight_scale_is_irrelevant(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let s = random_samples(120, 1, seed, |x| (4.0 * x[0]).sin());
            let mut scaled = SampleSet::new(1);
            for i in 0..s.len() {
                scaled.push(s.x(i), s.y(i), s.w(i) * scale);
            }
            let a = local_linear_fit(&s, &[0.5], &[0.2], KernelSpec::EPANECHNIKOV, DEFAULT_RIDGE).unwrap();
            let b = local_linear_fit(&scaled, &[0.5], &[0.2], KernelSpec::EPANECHNIKOV, DEFAULT_RIDGE).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
