//! Seeded generators for the simulation studies and their ground truth.
//!
//! * Simulation 1: one scalar covariate, two shared eigenfunctions on
//!   `[0, 10]`, eigenvalues varying smoothly with `z`.
//! * Simulation 2: one curve per location of a `q × q` lattice, eigenvalues
//!   by phantom region, eigenfunctions depending on `‖z‖` (so the shared
//!   eigenfunction model is only an approximation).
//! * Simulation 3: as 2 with shared eigenfunctions (A), smoothed eigenvalue
//!   maps (B), region-specific eigenfunctions (C) or both (D).
//!
//! Subject `i` draws from its own random stream, so datasets can be built
//! in parallel and do not depend on scheduling.

mod metrics;
mod phantom;

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalDataset, SchemeKind, Subject};
use crate::grid::uniform;
use crate::rng::stream;
use crate::{Error, Result};

pub use metrics::{ise_cov3, ise_curve, ise_weighted, lattice_weights, recall_precision, ClassMetrics};
pub use phantom::{classify, gen_phantom, intensity, lattice_point, Region, RegionMap, ELLIPSES};

/// Noise standard deviation in simulation 2.
pub const SIM2_NOISE_SD: f64 = 0.2;
/// Noise variance in simulation 3.
pub const SIM3_NOISE_VAR: f64 = 0.4;
/// Gaussian smoothing scale for the eigenvalue maps of variants B and D.
pub const SIM3_FIELD_SIGMA: f64 = 0.03;
/// Time points per location in simulations 2 and 3.
pub const LATTICE_TIME_POINTS: usize = 31;
/// Time points of the complete design in simulation 1.
pub const SIM1_TIME_POINTS: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
    C,
    D,
}

impl Variant {
    /// Eigenvalue maps are Gaussian-smoothed.
    pub fn smoothed(self) -> bool {
        matches!(self, Variant::B | Variant::D)
    }

    /// Eigenfunctions differ between regions.
    pub fn regional_basis(self) -> bool {
        matches!(self, Variant::C | Variant::D)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Variant::A),
            "B" => Ok(Variant::B),
            "C" => Ok(Variant::C),
            "D" => Ok(Variant::D),
            other => Err(Error::invalid(format!("unknown simulation 3 variant `{other}`"))),
        }
    }
}

/// Generating model, recorded in the truth file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Sim1 { n: usize, scheme: SchemeKind, p: usize },
    Sim2 { q: usize },
    Sim3 { variant: Variant, q: usize },
}

impl Model {
    pub fn time_domain(&self) -> (f64, f64) {
        match self {
            Model::Sim1 { .. } => (0.0, 10.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            Model::Sim1 { .. } => 1.0,
            Model::Sim2 { .. } => SIM2_NOISE_SD * SIM2_NOISE_SD,
            Model::Sim3 { .. } => SIM3_NOISE_VAR,
        }
    }

    pub fn covariate_dim(&self) -> usize {
        match self {
            Model::Sim1 { p, .. } => *p,
            _ => 2,
        }
    }

    pub fn n_components(&self) -> usize {
        2
    }

    /// Observation grid of the complete design.
    pub fn time_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.time_domain();
        match self {
            Model::Sim1 { .. } => uniform(lo, hi, SIM1_TIME_POINTS),
            _ => uniform(lo, hi, LATTICE_TIME_POINTS),
        }
    }

    /// Eigenfunction `k` (0-based) at time `t` for a subject at `z` in
    /// `region`.
    pub fn eigenfunction(&self, k: usize, t: f64, z: &[f64], region: Option<Region>) -> f64 {
        match self {
            Model::Sim1 { .. } => sim1_phi(k, t),
            Model::Sim2 { .. } => {
                let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
                let arg = 2.0 * PI * r * t;
                let v = if k == 0 { arg.sin() } else { arg.cos() };
                std::f64::consts::SQRT_2 * v / 2.0
            }
            Model::Sim3 { variant, .. } => {
                let kk = (k + 1) as f64;
                if !variant.regional_basis() {
                    return (2.0 * PI * kk * t).sin() + (2.0 * PI * kk * t).cos();
                }
                match region.unwrap_or(Region::S0) {
                    Region::S0 => 0.0,
                    Region::S1 => (2.0 * PI * kk * t).sin() + (2.0 * PI * kk * t).cos(),
                    Region::S2 => (2.0 * PI * kk * t).sin() + (4.0 * PI * kk * t).cos(),
                }
            }
        }
    }

    /// Unsmoothed eigenvalues at `z`.
    pub fn eigenvalues(&self, z: &[f64], region: Option<Region>) -> Vec<f64> {
        match self {
            Model::Sim1 { .. } => sim1_lambda(z[0]).to_vec(),
            Model::Sim2 { .. } | Model::Sim3 { .. } => table2_lambda(z, region.unwrap_or(Region::S0)).to_vec(),
        }
    }
}

fn sim1_phi(k: usize, t: f64) -> f64 {
    let s5 = 5f64.sqrt();
    if k == 0 {
        -(PI * t / 10.0).cos() / s5
    } else {
        (PI * t / 10.0).sin() / s5
    }
}

/// `λ_1(z), λ_2(z)` of simulation 1.
pub fn sim1_lambda(z: f64) -> [f64; 2] {
    [
        4.0 * (1.0 + 2.0 * (0.1 + PI * z * z / 2.0).sin()),
        2.0 * (2.0 + (2.0 * PI * z).sin()),
    ]
}

/// Region-wise eigenvalues shared by simulations 2 and 3.
pub fn table2_lambda(z: &[f64], region: Region) -> [f64; 2] {
    match region {
        Region::S2 => [
            8.0 + (2.0 * PI * z[0]).cos() / 2.0,
            4.0 + ((0.5 + z[0]) * 2.0 * PI).sin() / 8.0,
        ],
        Region::S1 => {
            let g = (PI * z[0]).cos() * (0.5 + z[1]).sin();
            [3.0 + g, 1.5 + g / 2.0]
        }
        Region::S0 => [0.0, 0.0],
    }
}

/// Truth for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: String,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Region>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TruthHeader {
    model: Model,
    sigma2: f64,
    seed: u64,
}

/// Everything known about a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub model: Model,
    pub sigma2: f64,
    pub seed: u64,
    pub subjects: Vec<SubjectTruth>,
}

impl SimTruth {
    /// True eigenvalues at `z`. Smoothed variants only know them at the
    /// lattice points, so the nearest lattice point is used.
    pub fn lambda_at(&self, z: &[f64]) -> Vec<f64> {
        match self.model {
            Model::Sim1 { .. } => self.model.eigenvalues(z, None),
            Model::Sim2 { q } | Model::Sim3 { q, .. } => self.subjects[nearest_lattice_index(q, z)].lambda.clone(),
        }
    }

    /// True covariance surface of subject `i` on `t_grid`.
    pub fn covariance(&self, i: usize, t_grid: &[f64]) -> DMatrix<f64> {
        let s = &self.subjects[i];
        let m = t_grid.len();
        let phi: Vec<Vec<f64>> = (0..s.lambda.len())
            .map(|k| {
                t_grid
                    .iter()
                    .map(|&t| self.model.eigenfunction(k, t, &s.z, s.label))
                    .collect()
            })
            .collect();
        DMatrix::from_fn(m, m, |a, b| {
            (0..s.lambda.len()).map(|k| s.lambda[k] * phi[k][a] * phi[k][b]).sum()
        })
    }

    pub fn labels(&self) -> Option<Vec<Region>> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    /// Header line, then one JSON object per subject.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        let header = TruthHeader {
            model: self.model,
            sigma2: self.sigma2,
            seed: self.seed,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for s in &self.subjects {
            writeln!(out, "{}", serde_json::to_string(s)?)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
            path: path.to_path_buf(),
            line: line as u64 + 1,
            message: e.to_string(),
        };
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("{}: empty truth file", path.display())))?;
        let header: TruthHeader = serde_json::from_str(&first?).map_err(|e| parse_err(0, e))?;
        let mut subjects = Vec::new();
        for (no, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            subjects.push(serde_json::from_str(&line).map_err(|e| parse_err(no, e))?);
        }
        Ok(Self {
            model: header.model,
            sigma2: header.sigma2,
            seed: header.seed,
            subjects,
        })
    }
}

fn nearest_lattice_index(q: usize, z: &[f64]) -> usize {
    let s = (q - 1) as f64;
    let idx = |v: f64| ((v * s).round().max(0.0) as usize).min(q - 1);
    idx(z[1]) * q + idx(z[0])
}

fn normal_scores(rng: &mut impl Rng, lambda: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .map(|&l| {
            let u: f64 = StandardNormal.sample(rng);
            u * l.max(0.0).sqrt()
        })
        .collect()
}

/// Simulation 1 with `n` subjects, covariate dimension `p` (eigenvalues
/// depend on the first coordinate only).
pub fn gen_sim1(n: usize, scheme: SchemeKind, p: usize, seed: u64) -> Result<(FunctionalDataset, SimTruth)> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("simulation 1 needs n >= 1 and p >= 1"));
    }
    let model = Model::Sim1 { n, scheme, p };
    let grid = model.time_grid();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let (subjects, truths): (Vec<Subject>, Vec<SubjectTruth>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let z: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
            let lambda = model.eigenvalues(&z, None);
            let scores = normal_scores(&mut rng, &lambda);
            let t: Vec<f64> = match scheme {
                SchemeKind::Dense => grid.clone(),
                SchemeKind::Sparse => {
                    let ni = rng.random_range(4..=10);
                    let mut idx = sample(&mut rng, grid.len(), ni).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|j| grid[j]).collect()
                }
            };
            let y = t
                .iter()
                .map(|&tj| {
                    let x: f64 = (0..2).map(|k| scores[k] * sim1_phi(k, tj)).sum();
                    x + noise.sample(&mut rng)
                })
                .collect();
            let id = format!("s{i:04}");
            (
                Subject::new(id.clone(), z.clone(), t, y),
                SubjectTruth {
                    id,
                    z,
                    lambda,
                    label: None,
                    scores,
                },
            )
        })
        .unzip();
    finish(model, seed, subjects, truths)
}

fn finish(
    model: Model,
    seed: u64,
    subjects: Vec<Subject>,
    truths: Vec<SubjectTruth>,
) -> Result<(FunctionalDataset, SimTruth)> {
    let (lo, hi) = model.time_domain();
    let d = FunctionalDataset::new(subjects, model.covariate_dim()).with_time_domain(lo, hi);
    let truth = SimTruth {
        model,
        sigma2: model.sigma2(),
        seed,
        subjects: truths,
    };
    Ok((d, truth))
}

/// One curve per lattice location: eigenvalues `lambda[i]`, region
/// `labels[i]`, shared time grid.
fn gen_lattice(
    model: Model,
    q: usize,
    labels: &[Region],
    lambda: &[[f64; 2]],
    seed: u64,
) -> Result<(FunctionalDataset, SimTruth)> {
    let grid = model.time_grid();
    let sd = model.sigma2().sqrt();
    let (subjects, truths): (Vec<Subject>, Vec<SubjectTruth>) = (0..q * q)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let z = lattice_point(q, i).to_vec();
            let region = labels[i];
            let lam = lambda[i].to_vec();
            let scores = normal_scores(&mut rng, &lam);
            let y = grid
                .iter()
                .map(|&t| {
                    let x: f64 = (0..2)
                        .map(|k| scores[k] * model.eigenfunction(k, t, &z, Some(region)))
                        .sum();
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x + sd * e
                })
                .collect();
            let id = format!("r{:03}c{:03}", i / q, i % q);
            (
                Subject::new(id.clone(), z.clone(), grid.clone(), y),
                SubjectTruth {
                    id,
                    z,
                    lambda: lam,
                    label: Some(region),
                    scores,
                },
            )
        })
        .unzip();
    finish(model, seed, subjects, truths)
}

/// Simulation 2 on a `q × q` lattice.
pub fn gen_sim2(q: usize, seed: u64) -> Result<(FunctionalDataset, SimTruth)> {
    if q > 128 {
        return Err(Error::invalid(format!("simulation 2 supports q <= 128, got {q}")));
    }
    let map = gen_phantom(q)?;
    let lambda: Vec<[f64; 2]> = (0..q * q).map(|i| table2_lambda(&map.z(i), map.labels[i])).collect();
    gen_lattice(Model::Sim2 { q }, q, &map.labels, &lambda, seed)
}

/// Simulation 3 on a `q × q` lattice.
pub fn gen_sim3(variant: Variant, q: usize, seed: u64) -> Result<(FunctionalDataset, SimTruth)> {
    let map = gen_phantom(q)?;
    let mut labels = map.labels.clone();
    let mut lambda: Vec<[f64; 2]> = (0..q * q).map(|i| table2_lambda(&map.z(i), map.labels[i])).collect();
    if variant.smoothed() {
        for k in 0..2 {
            let field: Vec<f64> = lambda.iter().map(|l| l[k]).collect();
            let smoothed = smooth_field(&field, q, SIM3_FIELD_SIGMA)?;
            for (l, v) in lambda.iter_mut().zip(smoothed) {
                l[k] = v;
            }
        }
        labels = smoothed_labels(&map, SIM3_FIELD_SIGMA)?;
    }
    gen_lattice(Model::Sim3 { variant, q }, q, &labels, &lambda, seed)
}

/// Ground truth after smoothing: the region whose smoothed indicator field
/// is largest at each point (ties to the lower region index).
pub fn smoothed_labels(map: &RegionMap, sigma: f64) -> Result<Vec<Region>> {
    let q = map.q;
    let fields = Region::ALL
        .iter()
        .map(|&r| {
            let ind: Vec<f64> = map.labels.iter().map(|&l| if l == r { 1.0 } else { 0.0 }).collect();
            smooth_field(&ind, q, sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..q * q)
        .map(|i| {
            let mut best = Region::S0;
            for r in Region::ALL {
                if fields[r.index()][i] > fields[best.index()][i] {
                    best = r;
                }
            }
            best
        })
        .collect())
}

/// Separable Gaussian smoothing of a `q × q` row-major field whose points
/// sit at spacing `1 / (q - 1)`. Weights are renormalised at every output
/// point, so constants are preserved up to the boundary.
pub fn smooth_field(field: &[f64], q: usize, sigma: f64) -> Result<Vec<f64>> {
    if field.len() != q * q || q < 2 {
        return Err(Error::invalid(format!(
            "field of {} values is not {q}x{q}",
            field.len()
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("smoothing scale must be positive, got {sigma}")));
    }
    let step = 1.0 / (q - 1) as f64;
    // w[d] = K(d · step); normalisers per output index
    let w: Vec<f64> = (0..q)
        .map(|d| (-0.5 * (d as f64 * step / sigma).powi(2)).exp())
        .collect();
    let norm: Vec<f64> = (0..q).map(|i| (0..q).map(|j| w[i.abs_diff(j)]).sum()).collect();
    let pass = |input: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; q * q];
        for a in 0..q {
            for i in 0..q {
                let mut acc = 0.0;
                for j in 0..q {
                    let v = if along_rows { input[a * q + j] } else { input[j * q + a] };
                    acc += w[i.abs_diff(j)] * v;
                }
                let idx = if along_rows { a * q + i } else { i * q + a };
                out[idx] = acc / norm[i];
            }
        }
        out
    };
    Ok(pass(&pass(field, true), false))
}

#[cfg(test)]
mod tests;
