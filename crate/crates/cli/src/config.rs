//! Pipeline configuration read from a flat `key = value` file.
//!
//! ```text
//! # data source: exactly one of data.path or sim.model
//! data.path = curves.csv
//! sim.model = sim1            # sim1 | sim2 | sim3
//! sim.n = 200
//! sim.scheme = sparse         # dense | sparse
//! sim.p = 1
//! sim.q = 64
//! sim.variant = A             # A | B | C | D
//!
//! kernel = epanechnikov
//! bandwidth.h_t = 1.0
//! bandwidth.h_z = 0.3         # one value, or one per covariate
//! bandwidth.h_gamma = 1.0
//! bandwidth.h_lambda = 0.2
//!
//! cv.folds = 5                # 0 disables cross-validation
//! cv.h_t = 0.5, 1, 2          # candidate lists; unset keys keep the fixed value
//! cv.h_z = 0.2, 0.3
//! cv.h_gamma = 0.5, 1, 2
//! cv.h_lambda = 0.1, 0.2
//!
//! grid.t_points = 51
//! grid.z_points = 11          # per covariate axis, for the mean surface
//! eigen.l = 2                 # fixed truncation; otherwise eigen.fve is used
//! eigen.fve = 0.95
//! eigenmap.method = wls, pc   # wls | pc | pc2
//! eigenmap.points = grid      # grid | subjects
//! eigenmap.z_points = 101
//! eigenmap.clamp = true
//! cluster.k = 3               # a list sweeps k
//! cluster.method = wls       # defaults to every eigenmap method
//! cluster.restarts = 20
//! cluster.max_iter = 300
//! cluster.tol = 1e-6
//! cluster.standardize = false
//! seed = 1
//! out = out
//! ```
//!
//! Command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use eafpca::data::{DataFormat, SchemeKind};
use eafpca::eigenmap::Method;
use eafpca::kernel::{Bandwidths, KernelFamily, KernelSpec};
use eafpca::kv::KeyValues;
use eafpca::sim::{Model, Variant};

/// Every key the pipeline understands.
pub const KNOWN_KEYS: &[&str] = &[
    "data.path",
    "data.format",
    "sim.model",
    "sim.n",
    "sim.scheme",
    "sim.p",
    "sim.q",
    "sim.variant",
    "kernel",
    "bandwidth.h_t",
    "bandwidth.h_z",
    "bandwidth.h_gamma",
    "bandwidth.h_lambda",
    "cv.folds",
    "cv.h_t",
    "cv.h_z",
    "cv.h_gamma",
    "cv.h_lambda",
    "grid.t_points",
    "grid.z_points",
    "eigen.l",
    "eigen.fve",
    "eigenmap.method",
    "eigenmap.points",
    "eigenmap.z_points",
    "eigenmap.clamp",
    "cluster.k",
    "cluster.method",
    "cluster.restarts",
    "cluster.max_iter",
    "cluster.tol",
    "cluster.standardize",
    "seed",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File { path: PathBuf, format: DataFormat },
    Sim(Model),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPoints {
    /// Uniform grid over the covariate range.
    Grid,
    /// The subjects' own covariates.
    Subjects,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub h_t: Option<Vec<f64>>,
    pub h_z: Option<Vec<f64>>,
    pub h_gamma: Option<Vec<f64>>,
    pub h_lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub k: Vec<usize>,
    pub methods: Vec<Method>,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source: Source,
    pub kernel: KernelSpec,
    pub bandwidths: Bandwidths,
    pub cv: CvConfig,
    pub t_points: usize,
    pub z_points: usize,
    pub l: Option<usize>,
    pub fve: f64,
    pub methods: Vec<Method>,
    pub eval_points: EvalPoints,
    pub field_points: usize,
    pub clamp: bool,
    pub cluster: ClusterConfig,
    pub seed: u64,
    pub out: PathBuf,
}

fn model_from(kv: &KeyValues, name: &str) -> Result<Model> {
    Ok(match name.trim().to_ascii_lowercase().as_str() {
        "sim1" => Model::Sim1 {
            n: kv.parsed_or("sim.n", 200)?,
            scheme: kv.parsed_or("sim.scheme", SchemeKind::Dense)?,
            p: kv.parsed_or("sim.p", 1)?,
        },
        "sim2" => Model::Sim2 {
            q: kv.parsed_or("sim.q", 64)?,
        },
        "sim3" => Model::Sim3 {
            variant: kv.parsed_or("sim.variant", Variant::A)?,
            q: kv.parsed_or("sim.q", 64)?,
        },
        other => bail!("unknown simulation model `{other}` (expected sim1, sim2 or sim3)"),
    })
}

/// Per-model defaults, picked from pilot runs.
fn default_bandwidths(model: Option<&Model>, p: usize) -> (f64, f64, f64, f64) {
    match model {
        Some(Model::Sim1 {
            scheme: SchemeKind::Sparse,
            ..
        }) => (1.5, 0.3, 1.5, 0.2),
        Some(Model::Sim1 { .. }) => (1.0, 0.3, 1.0, 0.2),
        // the skull ring is one or two pixels wide at q = 64, so the field
        // bandwidth must stay near the lattice spacing
        Some(Model::Sim3 { .. }) => (0.1, 0.2, 0.07, 0.02),
        Some(_) => (0.1, 0.2, 0.1, 0.05),
        None => (0.1, 0.3, 0.1, if p == 1 { 0.2 } else { 0.1 }),
    }
}

fn per_axis(v: Vec<f64>, p: usize, key: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; p]),
        n if n == p => Ok(v),
        n => bail!("`{key}` has {n} values but there are {p} covariates"),
    }
}

impl PipelineConfig {
    /// Build from merged key-values. `p_hint` is the covariate dimension of
    /// a file source when it is already known.
    pub fn from_kv(kv: &KeyValues, p_hint: Option<usize>) -> Result<Self> {
        for (k, _) in kv.iter() {
            if !KNOWN_KEYS.contains(&k) {
                bail!("unknown configuration key `{k}`");
            }
        }
        let source = match (kv.get("data.path"), kv.get("sim.model")) {
            (Some(_), Some(_)) => bail!("`data.path` and `sim.model` are mutually exclusive"),
            (None, None) => bail!("no data source: set `data.path` or `sim.model`"),
            (Some(p), None) => {
                let path = PathBuf::from(p);
                let format = match kv.get("data.format") {
                    Some(f) => f.parse()?,
                    None => DataFormat::from_path(&path),
                };
                Source::File { path, format }
            }
            (None, Some(m)) => Source::Sim(model_from(kv, m)?),
        };
        let model = match &source {
            Source::Sim(m) => Some(*m),
            Source::File { .. } => None,
        };
        let p = model.map(|m| m.covariate_dim()).or(p_hint).unwrap_or(1);
        let (dt, dz, dg, dl) = default_bandwidths(model.as_ref(), p);
        // a file source's dimension is only known once it is loaded
        let known_p = model.map(|m| m.covariate_dim()).or(p_hint);
        let axes = |key: &str, default: f64| -> Result<Vec<f64>> {
            let v = kv.list(key)?.unwrap_or(vec![default]);
            match known_p {
                Some(p) => per_axis(v, p, key),
                None => Ok(v),
            }
        };
        let h_z = axes("bandwidth.h_z", dz)?;
        let h_lambda = axes("bandwidth.h_lambda", dl)?;
        let bandwidths = Bandwidths::new(
            kv.parsed_or("bandwidth.h_t", dt)?,
            h_z,
            kv.parsed_or("bandwidth.h_gamma", dg)?,
            h_lambda,
        )?;
        let default_t = model.map_or(51, |m| m.time_grid().len());
        let default_points = if p == 1 { EvalPoints::Grid } else { EvalPoints::Subjects };
        let eval_points = match kv.get("eigenmap.points") {
            None => default_points,
            Some("grid") => EvalPoints::Grid,
            Some("subjects") => EvalPoints::Subjects,
            Some(other) => bail!("`eigenmap.points` must be grid or subjects, got `{other}`"),
        };
        let methods: Vec<Method> = kv.list("eigenmap.method")?.unwrap_or(vec![Method::Wls]);
        if methods.is_empty() {
            bail!("`eigenmap.method` is empty");
        }
        let cluster = ClusterConfig {
            k: kv.list("cluster.k")?.unwrap_or(vec![3]),
            methods: kv.list("cluster.method")?.unwrap_or(methods.clone()),
            restarts: kv.parsed_or("cluster.restarts", 20)?,
            max_iter: kv.parsed_or("cluster.max_iter", 300)?,
            tol: kv.parsed_or("cluster.tol", 1e-6)?,
            standardize: kv.parsed_or("cluster.standardize", false)?,
        };
        let fve: f64 = kv.parsed_or("eigen.fve", 0.95)?;
        if !(fve > 0.0 && fve <= 1.0) {
            bail!("`eigen.fve` must lie in (0, 1], got {fve}");
        }
        let cfg = Self {
            source,
            kernel: KernelSpec::new(kv.parsed_or("kernel", KernelFamily::Epanechnikov)?),
            bandwidths,
            cv: CvConfig {
                folds: kv.parsed_or("cv.folds", 0)?,
                h_t: kv.list("cv.h_t")?,
                h_z: kv.list("cv.h_z")?,
                h_gamma: kv.list("cv.h_gamma")?,
                h_lambda: kv.list("cv.h_lambda")?,
            },
            t_points: kv.parsed_or("grid.t_points", default_t)?,
            z_points: kv.parsed_or("grid.z_points", if p == 1 { 21 } else { 11 })?,
            l: kv.parsed("eigen.l")?,
            fve,
            methods,
            eval_points,
            field_points: kv.parsed_or("eigenmap.z_points", 101)?,
            clamp: kv.parsed_or("eigenmap.clamp", true)?,
            cluster,
            seed: kv.parsed_or("seed", 1)?,
            out: PathBuf::from(kv.get("out").unwrap_or("out")),
        };
        if cfg.t_points < 2 || cfg.z_points < 2 || cfg.field_points < 1 {
            bail!("grids need at least two points");
        }
        Ok(cfg)
    }

    /// Read `path` (if any) and overlay `overrides`.
    pub fn load(path: Option<&Path>, overrides: &KeyValues) -> Result<Self> {
        let mut kv = match path {
            Some(p) => KeyValues::read(p).with_context(|| format!("cli: reading config {}", p.display()))?,
            None => KeyValues::new(),
        };
        kv.merge(overrides);
        Self::from_kv(&kv, None)
    }

    /// Bandwidths for `p` covariates; single per-axis values are repeated.
    pub fn bandwidths_for(&self, p: usize) -> Result<Bandwidths> {
        let b = &self.bandwidths;
        Ok(Bandwidths::new(
            b.h_t,
            per_axis(b.h_z.clone(), p, "bandwidth.h_z")?,
            b.h_gamma,
            per_axis(b.h_lambda.clone(), p, "bandwidth.h_lambda")?,
        )?)
    }

    pub fn model(&self) -> Option<Model> {
        match &self.source {
            Source::Sim(m) => Some(*m),
            Source::File { .. } => None,
        }
    }

    pub fn covariate_dim(&self) -> Option<usize> {
        match &self.source {
            Source::Sim(m) => Some(m.covariate_dim()),
            Source::File { .. } => None,
        }
    }

    /// Key-values that reproduce this configuration, for artifact sidecars.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        match &self.source {
            Source::File { path, .. } => kv.set("data.path", path.display()),
            Source::Sim(m) => match *m {
                Model::Sim1 { n, scheme, p } => {
                    kv.set("sim.model", "sim1");
                    kv.set("sim.n", n);
                    kv.set("sim.scheme", scheme);
                    kv.set("sim.p", p);
                }
                Model::Sim2 { q } => {
                    kv.set("sim.model", "sim2");
                    kv.set("sim.q", q);
                }
                Model::Sim3 { variant, q } => {
                    kv.set("sim.model", "sim3");
                    kv.set("sim.variant", variant);
                    kv.set("sim.q", q);
                }
            },
        }
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        kv.set("kernel", self.kernel.family);
        kv.set("bandwidth.h_t", self.bandwidths.h_t);
        kv.set("bandwidth.h_z", list(&self.bandwidths.h_z));
        kv.set("bandwidth.h_gamma", self.bandwidths.h_gamma);
        kv.set("bandwidth.h_lambda", list(&self.bandwidths.h_lambda));
        kv.set("cv.folds", self.cv.folds);
        kv.set("grid.t_points", self.t_points);
        kv.set("grid.z_points", self.z_points);
        if let Some(l) = self.l {
            kv.set("eigen.l", l);
        }
        kv.set("eigen.fve", self.fve);
        kv.set(
            "eigenmap.method",
            self.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.set("seed", self.seed);
        kv
    }
}
