//! Pipeline stages: in-memory functions and their on-disk command wrappers.
//!
//! Artifacts of one run live in a single directory:
//!
//! | stage    | files                                                        |
//! |----------|--------------------------------------------------------------|
//! | simulate | `data.csv`, `truth.ndjson`                                   |
//! | fit      | `mean.csv`, `cov.csv`, `basis.csv` (+ `.meta`), `fit.meta`   |
//! | eigenmap | `field_<method>.csv`, `field_<method>_raw.csv`, SVG          |
//! | cluster  | `clusters_<method>_k<k>.csv`, `.json`, SVG                   |
//! | evaluate | `metrics.csv`, `metrics.json`                                |

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use eafpca::cluster::{kmeans, match_clusters, save_labels, Clustering, KmeansOptions};
use eafpca::data::{load_dataset, save_dataset, DataFormat, FunctionalDataset};
use eafpca::eigen::{eigendecompose, select_truncation, EigenBasis};
use eafpca::eigenmap::{eigenvalue_field, reconstruct_cov, EigenvalueField, FieldOptions, Method};
use eafpca::grid::{uniform, TensorGrid};
use eafpca::kernel::{cv_bandwidth, Bandwidths, CvTarget};
use eafpca::kv::{fmt_f64, fmt_list, KeyValues};
use eafpca::rng::run_seed;
use eafpca::sim::{
    gen_sim1, gen_sim2, gen_sim3, ise_cov3, ise_curve, ise_weighted, lattice_weights, recall_precision, Model, Region,
    SimTruth,
};
use eafpca::smooth::{estimate_mean, estimate_pooled_cov, estimate_sigma2, CovSurface, MeanField};
use rayon::prelude::*;

use crate::config::{EvalPoints, PipelineConfig, Source};
use crate::svg;

pub type Metrics = BTreeMap<String, f64>;

/// Per metric: mean, sample SD and number of runs.
pub type Summary = BTreeMap<String, (f64, f64, usize)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Simulate,
    Fit,
    Eigenmap,
    Cluster,
    Evaluate,
}

/// Fitted pooled quantities.
#[derive(Debug, Clone)]
pub struct Fit {
    pub bandwidths: Bandwidths,
    pub mean: MeanField,
    pub cov: CovSurface,
    /// All components; the first `l` are used downstream.
    pub basis: EigenBasis,
    pub l: usize,
    pub sigma2: f64,
}

pub fn simulate(model: Model, seed: u64) -> Result<(FunctionalDataset, SimTruth)> {
    let out = match model {
        Model::Sim1 { n, scheme, p } => gen_sim1(n, scheme, p, seed),
        Model::Sim2 { q } => gen_sim2(q, seed),
        Model::Sim3 { variant, q } => gen_sim3(variant, q, seed),
    };
    out.context("sim: generating dataset")
}

/// Covariate box: the unit cube for simulated data, the observed ranges
/// otherwise.
fn covariate_box(d: &FunctionalDataset, model: Option<Model>) -> Vec<(f64, f64)> {
    match model {
        Some(_) => vec![(0.0, 1.0); d.covariate_dim],
        None => d.covariate_ranges(),
    }
}

fn volume(bx: &[(f64, f64)]) -> f64 {
    bx.iter().map(|(lo, hi)| hi - lo).product()
}

fn candidates(base: &Bandwidths, h_t: &[f64], h_z: &[f64], h_gamma: &[f64], h_lambda: &[f64]) -> Vec<Bandwidths> {
    let mut out = Vec::new();
    for &t in h_t {
        for &z in h_z {
            for &g in h_gamma {
                for &l in h_lambda {
                    out.push(Bandwidths {
                        h_t: t,
                        h_z: vec![z; base.h_z.len()],
                        h_gamma: g,
                        h_lambda: vec![l; base.h_lambda.len()],
                    });
                }
            }
        }
    }
    out
}

pub fn fit(d: &FunctionalDataset, cfg: &PipelineConfig) -> Result<Fit> {
    let p = d.covariate_dim;
    let spec = cfg.kernel;
    let mut b = cfg.bandwidths_for(p)?;
    let (lo, hi) = d.time_domain;
    let t_grid = uniform(lo, hi, cfg.t_points);
    let z_axes: Vec<Vec<f64>> = covariate_box(d, cfg.model())
        .into_iter()
        .map(|(a, c)| uniform(a, c, cfg.z_points))
        .collect();
    let cv = &cfg.cv;
    let cv_on = |list: &Option<Vec<f64>>| cv.folds >= 2 && list.as_ref().is_some_and(|l| l.len() > 1);

    if cv_on(&cv.h_t) || cv_on(&cv.h_z) {
        let cands = candidates(
            &b,
            cv.h_t.as_deref().unwrap_or(&[b.h_t]),
            cv.h_z.as_deref().unwrap_or(&[b.h_z[0]]),
            &[b.h_gamma],
            &[b.h_lambda[0]],
        );
        b = cv_bandwidth(d, &CvTarget::Mean, spec, &cands, cv.folds, cfg.seed)
            .context("kernel: cross-validating the mean bandwidth")?;
    }
    let mean = estimate_mean(d, &b, spec, &t_grid, &z_axes).context("smooth: estimating the mean surface")?;
    if cv_on(&cv.h_gamma) {
        let cands: Vec<Bandwidths> = cv
            .h_gamma
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|&g| Bandwidths {
                h_gamma: g,
                ..b.clone()
            })
            .collect();
        let target = CvTarget::Covariance {
            t_grid: &t_grid,
            z_axes: &z_axes,
        };
        b = cv_bandwidth(d, &target, spec, &cands, cv.folds, cfg.seed)
            .context("kernel: cross-validating the covariance bandwidth")?;
    }
    let cov =
        estimate_pooled_cov(d, &mean, b.h_gamma, spec, &t_grid).context("smooth: estimating the pooled covariance")?;
    let basis = eigendecompose(&cov).context("eigen: decomposing the pooled covariance")?;
    let l = match cfg.l {
        Some(l) if l == 0 || l > basis.len() => bail!("eigen: L = {l} is outside 1..={}", basis.len()),
        Some(l) => l,
        None => select_truncation(&basis, cfg.fve).context("eigen: choosing the truncation")?,
    };
    let sigma2 = estimate_sigma2(d, &mean, &cov)
        .context("smooth: estimating the noise variance")?
        .sigma2;
    if cv_on(&cv.h_lambda) {
        let cands: Vec<Bandwidths> = cv
            .h_lambda
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|&h| Bandwidths {
                h_lambda: vec![h; p],
                ..b.clone()
            })
            .collect();
        let target = CvTarget::Eigenvalues {
            mean: &mean,
            basis: &basis,
            l,
        };
        b = cv_bandwidth(d, &target, spec, &cands, cv.folds, cfg.seed)
            .context("kernel: cross-validating the eigenvalue bandwidth")?;
    }
    log::info!(
        "bandwidths: h_t = {}, h_z = {:?}, h_gamma = {}, h_lambda = {:?}",
        b.h_t,
        b.h_z,
        b.h_gamma,
        b.h_lambda
    );
    for (k, (lam, f)) in basis
        .lambda_star
        .iter()
        .zip(&basis.fve)
        .enumerate()
        .take(l.max(5).min(basis.len()))
    {
        log::info!("component {}: lambda* = {lam:.6}, FVE = {f:.4}", k + 1);
    }
    log::info!("L = {l}, sigma2 = {sigma2:.6}");
    Ok(Fit {
        bandwidths: b,
        mean,
        cov,
        basis,
        l,
        sigma2,
    })
}

/// Covariate points at which eigenvalue fields are estimated.
pub fn field_points(d: &FunctionalDataset, cfg: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    Ok(match cfg.eval_points {
        EvalPoints::Subjects => d.subjects.iter().map(|s| s.z.clone()).collect(),
        EvalPoints::Grid => {
            let axes = covariate_box(d, cfg.model())
                .into_iter()
                .map(|(lo, hi)| uniform(lo, hi, cfg.field_points))
                .collect();
            TensorGrid::new(axes)?.points()
        }
    })
}

pub fn eigenmap(d: &FunctionalDataset, fit: &Fit, cfg: &PipelineConfig, method: Method) -> Result<EigenvalueField> {
    let points = field_points(d, cfg)?;
    let options = FieldOptions {
        h_lambda: fit.bandwidths.h_lambda.clone(),
        kernel: cfg.kernel,
        clamp: cfg.clamp,
        sigma2: fit.sigma2,
        ..FieldOptions::new(fit.bandwidths.h_lambda.clone())
    };
    eigenvalue_field(d, &fit.mean, &fit.basis, fit.l, method, &points, &options)
        .with_context(|| format!("eigenmap: estimating the {method} eigenvalue field"))
}

pub fn cluster(field: &EigenvalueField, cfg: &PipelineConfig, k: usize) -> Result<Clustering> {
    let c = &cfg.cluster;
    let opts = KmeansOptions {
        k,
        restarts: c.restarts,
        max_iter: c.max_iter,
        tol: c.tol,
        seed: cfg.seed,
        standardize: c.standardize,
    };
    kmeans(&field.rows(), &opts).with_context(|| format!("cluster: k-means with k = {k}"))
}

/// Exact-bit lookup from covariate vectors to subject indices.
fn subject_index(truth: &SimTruth) -> HashMap<Vec<u64>, usize> {
    truth
        .subjects
        .iter()
        .enumerate()
        .map(|(i, s)| (s.z.iter().map(|v| v.to_bits()).collect(), i))
        .collect()
}

fn locate_all(index: &HashMap<Vec<u64>, usize>, points: &[Vec<f64>]) -> Option<Vec<usize>> {
    points
        .iter()
        .map(|z| index.get(&z.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).copied())
        .collect()
}

/// A clustering together with the field it was computed from.
pub struct LabeledField<'a> {
    pub k: usize,
    pub field: &'a EigenvalueField,
    pub clustering: &'a Clustering,
}

/// ISE of every eigenvalue field against the truth, covariance ISE where
/// the field points are subjects, and recall/precision of clusterings.
pub fn evaluate(
    truth: &SimTruth,
    fit: &Fit,
    fields: &[EigenvalueField],
    clusterings: &[LabeledField<'_>],
) -> Result<Metrics> {
    let p = truth.model.covariate_dim();
    let bx = vec![(0.0, 1.0); p];
    let vol = volume(&bx);
    let index = subject_index(truth);
    let t_grid = &fit.basis.t_grid;
    let mut m = Metrics::new();
    let mut pooled_done = false;
    for field in fields {
        if let Some(z) = field.z_points.iter().find(|z| z.len() != p) {
            bail!(
                "evaluate: dimension mismatch: the {} field has {} covariates, the truth has {p}",
                field.method,
                z.len()
            );
        }
        let n = field.len();
        if n == 0 {
            bail!("evaluate: the {} field is empty", field.method);
        }
        let truth_rows: Vec<Vec<f64>> = field.z_points.iter().map(|z| truth.lambda_at(z)).collect();
        let on_line =
            p == 1 && field.z_points.windows(2).all(|w| w[0][0] < w[1][0]) && field.method != Method::PcSquared;
        for k in 0..field.l().min(truth.model.n_components()) {
            let est: Vec<f64> = (0..n).map(|i| field.lambda[(i, k)]).collect();
            let tru: Vec<f64> = truth_rows.iter().map(|r| r[k]).collect();
            let ise = if on_line {
                let z: Vec<f64> = field.z_points.iter().map(|z| z[0]).collect();
                ise_curve(&est, &tru, &z)?
            } else {
                ise_weighted(&est, &tru, &lattice_weights(n, vol))?
            };
            m.insert(format!("ise.lambda{}.{}", k + 1, field.method), ise);
        }
        m.insert(format!("failures.{}", field.method), field.failures.len() as f64);
        if let Some(idx) = locate_all(&index, &field.z_points) {
            let w = lattice_weights(n, vol);
            let est = |i: usize| {
                let row: Vec<f64> = field.lambda.row(i).iter().copied().collect();
                reconstruct_cov(&fit.basis, &row)
                    .map(|c| c.values)
                    .unwrap_or_else(|_| fit.cov.values.map(|_| f64::NAN))
            };
            let tru = |i: usize| truth.covariance(idx[i], t_grid);
            m.insert(format!("ise.cov.{}", field.method), ise_cov3(est, tru, t_grid, &w)?);
            if !pooled_done {
                let pooled = ise_cov3(|_| fit.cov.values.clone(), tru, t_grid, &w)?;
                m.insert("ise.cov.pooled".into(), pooled);
                pooled_done = true;
            }
        }
    }
    for c in clusterings {
        let Some(labels) = truth.labels() else { break };
        let idx = locate_all(&index, &c.field.z_points)
            .context("evaluate: clustered points do not match the simulated subjects")?;
        let truth_labels: Vec<usize> = idx.iter().map(|&i| labels[i].index()).collect();
        let mapping = match_clusters(&c.clustering.labels, &truth_labels)?;
        let rp = recall_precision(&c.clustering.labels, &truth_labels, &mapping, Region::ALL.len())?;
        let tag = format!("{}.k{}", c.field.method, c.k);
        for (r, cm) in Region::ALL.iter().zip(&rp) {
            if let Some(v) = cm.recall {
                m.insert(format!("recall.{r}.{tag}"), v);
            }
            if let Some(v) = cm.precision {
                m.insert(format!("precision.{r}.{tag}"), v);
            }
        }
        let hits = c
            .clustering
            .labels
            .iter()
            .zip(&truth_labels)
            .filter(|(&p, &t)| mapping[p] == t)
            .count();
        m.insert(format!("accuracy.{tag}"), hits as f64 / truth_labels.len() as f64);
    }
    m.insert("sigma2".into(), fit.sigma2);
    m.insert("l".into(), fit.l as f64);
    Ok(m)
}

/// Pair clusterings, produced method by method and k by k, with their
/// fields.
fn label<'a>(
    fields: &'a [EigenvalueField],
    clusterings: &'a [(usize, Clustering)],
    methods: &[Method],
) -> Vec<LabeledField<'a>> {
    let clustered: Vec<&EigenvalueField> = fields.iter().filter(|f| methods.contains(&f.method)).collect();
    let per = if clustered.is_empty() {
        1
    } else {
        clusterings.len() / clustered.len()
    };
    clusterings
        .iter()
        .enumerate()
        .map(|(i, (k, c))| LabeledField {
            k: *k,
            field: clustered[i / per],
            clustering: c,
        })
        .collect()
}

/// Everything one in-memory run produces.
pub struct RunOutput {
    pub data: FunctionalDataset,
    pub truth: SimTruth,
    pub fit: Fit,
    pub fields: Vec<EigenvalueField>,
    /// `(k, clustering)` for every clustered method, in method order.
    pub clusterings: Vec<(usize, Clustering)>,
    pub metrics: Metrics,
}

/// simulate → fit → eigenmap → (cluster) → evaluate without touching disk.
/// Clustering runs when the truth has region labels.
pub fn run_in_memory(cfg: &PipelineConfig) -> Result<RunOutput> {
    let Source::Sim(model) = cfg.source else {
        bail!("cli: an in-memory run needs a simulated source");
    };
    let (data, truth) = simulate(model, cfg.seed)?;
    let fit = fit(&data, cfg)?;
    let fields = cfg
        .methods
        .iter()
        .map(|&m| eigenmap(&data, &fit, cfg, m))
        .collect::<Result<Vec<_>>>()?;
    let mut clusterings = Vec::new();
    if truth.labels().is_some() {
        for f in fields.iter().filter(|f| cfg.cluster.methods.contains(&f.method)) {
            for &k in &cfg.cluster.k {
                clusterings.push((k, cluster(f, cfg, k)?));
            }
        }
    }
    let labeled = label(&fields, &clusterings, &cfg.cluster.methods);
    let metrics = evaluate(&truth, &fit, &fields, &labeled)?;
    drop(labeled);
    Ok(RunOutput {
        data,
        truth,
        fit,
        fields,
        clusterings,
        metrics,
    })
}

/// Artifact locations inside one run directory.
#[derive(Debug, Clone)]
pub struct Paths {
    pub dir: PathBuf,
}

impl Paths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn f(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn data(&self) -> PathBuf {
        self.f("data.csv")
    }
    pub fn truth(&self) -> PathBuf {
        self.f("truth.ndjson")
    }
    pub fn mean(&self) -> (PathBuf, PathBuf) {
        (self.f("mean.csv"), self.f("mean.meta"))
    }
    pub fn cov(&self) -> (PathBuf, PathBuf) {
        (self.f("cov.csv"), self.f("cov.meta"))
    }
    pub fn basis(&self) -> (PathBuf, PathBuf) {
        (self.f("basis.csv"), self.f("basis.meta"))
    }
    pub fn fit_meta(&self) -> PathBuf {
        self.f("fit.meta")
    }
    pub fn field(&self, m: Method) -> PathBuf {
        self.f(&format!("field_{m}.csv"))
    }
    pub fn field_raw(&self, m: Method) -> PathBuf {
        self.f(&format!("field_{m}_raw.csv"))
    }
    pub fn clusters(&self, m: Method, k: usize) -> PathBuf {
        self.f(&format!("clusters_{m}_k{k}.csv"))
    }
    pub fn metrics(&self) -> (PathBuf, PathBuf) {
        (self.f("metrics.csv"), self.f("metrics.json"))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cli: creating output directory {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cli: writing {}", path.display()))
}

/// Summary line printed by `simulate`.
pub struct SimSummary {
    pub n: usize,
    pub total_obs: usize,
    pub model: Model,
    pub seed: u64,
}

pub fn cmd_simulate(cfg: &PipelineConfig, dir: &Path) -> Result<SimSummary> {
    let Source::Sim(model) = cfg.source else {
        bail!("sim: `simulate` needs `sim.model` in the configuration");
    };
    ensure_dir(dir)?;
    let paths = Paths::new(dir);
    let (d, truth) = simulate(model, cfg.seed)?;
    save_dataset(&d, &paths.data(), DataFormat::Csv).context("data: writing the simulated dataset")?;
    truth.save(&paths.truth()).context("sim: writing the truth sidecar")?;
    Ok(SimSummary {
        n: d.n_subjects(),
        total_obs: d.total_obs(),
        model,
        seed: cfg.seed,
    })
}

pub fn load_data(cfg: &PipelineConfig, dir: &Path) -> Result<FunctionalDataset> {
    match &cfg.source {
        Source::File { path, format } => {
            load_dataset(path, *format).with_context(|| format!("data: loading {}", path.display()))
        }
        Source::Sim(model) => {
            let path = Paths::new(dir).data();
            let (lo, hi) = model.time_domain();
            let d = load_dataset(&path, DataFormat::Csv)
                .with_context(|| format!("data: loading {} (run `simulate` first)", path.display()))?;
            Ok(d.with_time_domain(lo, hi))
        }
    }
}

pub fn cmd_fit(cfg: &PipelineConfig, dir: &Path) -> Result<Fit> {
    let d = load_data(cfg, dir)?;
    let fit = fit(&d, cfg)?;
    ensure_dir(dir)?;
    let paths = Paths::new(dir);
    let (a, b) = paths.mean();
    fit.mean.save(&a, &b).context("smooth: writing the mean surface")?;
    let (a, b) = paths.cov();
    fit.cov.save(&a, &b).context("smooth: writing the covariance surface")?;
    let (a, b) = paths.basis();
    fit.basis.save(&a, &b).context("eigen: writing the basis")?;
    let mut meta = KeyValues::new();
    let bw = &fit.bandwidths;
    meta.set("bandwidth.h_t", fmt_f64(bw.h_t));
    meta.set("bandwidth.h_z", fmt_list(&bw.h_z));
    meta.set("bandwidth.h_gamma", fmt_f64(bw.h_gamma));
    meta.set("bandwidth.h_lambda", fmt_list(&bw.h_lambda));
    meta.set("l", fit.l);
    meta.set("sigma2", fmt_f64(fit.sigma2));
    meta.set("fve", fmt_f64(fit.basis.fve[fit.l - 1]));
    meta.write(&paths.fit_meta()).context("cli: writing fit.meta")?;
    let series: Vec<(String, Vec<f64>)> = (0..fit.l)
        .map(|k| {
            (
                format!("phi_{}", k + 1),
                fit.basis.phi.column(k).iter().copied().collect(),
            )
        })
        .collect();
    write(
        &dir.join("eigenfunctions.svg"),
        &svg::line_plot(&fit.basis.t_grid, &series, "eigenfunctions"),
    )?;
    Ok(fit)
}

pub fn load_fit(dir: &Path) -> Result<Fit> {
    let paths = Paths::new(dir);
    let ctx = |what: &str| format!("cli: loading {what} from {} (run `fit` first)", dir.display());
    let (a, b) = paths.mean();
    let mean = MeanField::load(&a, &b).with_context(|| ctx("the mean surface"))?;
    let (a, b) = paths.cov();
    let cov = CovSurface::load(&a, &b).with_context(|| ctx("the covariance surface"))?;
    let (a, b) = paths.basis();
    let basis = EigenBasis::load(&a, &b).with_context(|| ctx("the basis"))?;
    let meta = KeyValues::read(&paths.fit_meta()).with_context(|| ctx("fit.meta"))?;
    let need = |k: &str| -> Result<f64> { meta.parsed(k)?.with_context(|| format!("fit.meta: missing `{k}`")) };
    let bandwidths = Bandwidths::new(
        need("bandwidth.h_t")?,
        meta.list("bandwidth.h_z")?.unwrap_or_default(),
        need("bandwidth.h_gamma")?,
        meta.list("bandwidth.h_lambda")?.unwrap_or_default(),
    )?;
    Ok(Fit {
        bandwidths,
        mean,
        cov,
        basis,
        l: need("l")? as usize,
        sigma2: need("sigma2")?,
    })
}

fn field_svg(field: &EigenvalueField, dir: &Path) -> Result<()> {
    let p = field.z_points.first().map_or(0, Vec::len);
    let m = field.method;
    if p == 1 && m != Method::PcSquared {
        let z: Vec<f64> = field.z_points.iter().map(|z| z[0]).collect();
        let series: Vec<(String, Vec<f64>)> = (0..field.l())
            .map(|k| {
                (
                    format!("lambda_{}", k + 1),
                    field.lambda.column(k).iter().copied().collect(),
                )
            })
            .collect();
        write(
            &dir.join(format!("field_{m}.svg")),
            &svg::line_plot(&z, &series, &format!("{m} eigenvalues")),
        )?;
    } else if p == 2 {
        for k in 0..field.l() {
            let v: Vec<f64> = field.lambda.column(k).iter().copied().collect();
            let title = format!("{m} lambda_{}", k + 1);
            write(
                &dir.join(format!("field_{m}_l{}.svg", k + 1)),
                &svg::heatmap(&field.z_points, &v, &title, false),
            )?;
        }
    }
    Ok(())
}

pub fn cmd_eigenmap(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<EigenvalueField>> {
    let d = load_data(cfg, dir)?;
    let fit = load_fit(dir)?;
    let paths = Paths::new(dir);
    let mut fields = Vec::new();
    for &m in &cfg.methods {
        let field = eigenmap(&d, &fit, cfg, m)?;
        field
            .save(&paths.field(m), &paths.field_raw(m))
            .with_context(|| format!("eigenmap: writing the {m} field"))?;
        field_svg(&field, dir)?;
        fields.push(field);
    }
    Ok(fields)
}

fn field_dim(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cli: reading {} (run `eigenmap` first)", path.display()))?;
    let header = text.lines().next().unwrap_or_default();
    Ok(header.split(',').filter(|c| c.starts_with("z_")).count())
}

fn load_field(paths: &Paths, m: Method) -> Result<EigenvalueField> {
    let path = paths.field(m);
    let p = field_dim(&path)?;
    EigenvalueField::load(&path, p, m).with_context(|| format!("eigenmap: reading {}", path.display()))
}

pub fn cmd_cluster(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<(usize, Clustering)>> {
    let paths = Paths::new(dir);
    let mut out = Vec::new();
    for &m in &cfg.cluster.methods {
        let field = load_field(&paths, m)?;
        for &k in &cfg.cluster.k {
            let c = cluster(&field, cfg, k)?;
            let csv = paths.clusters(m, k);
            save_labels(&csv, &field.z_points, &c.labels).context("cluster: writing labels")?;
            let mut sizes = vec![0usize; k];
            for &l in &c.labels {
                sizes[l] += 1;
            }
            let summary = serde_json::json!({
                "method": m.to_string(),
                "k": c.k,
                "seed": c.seed,
                "restarts": c.restarts,
                "best_restart": c.best_restart,
                "inertia": c.inertia,
                "iterations": c.history.len(),
                "sizes": sizes,
                "centroids": c.centroids,
                "standardized": cfg.cluster.standardize,
            });
            write(
                &csv.with_extension("json"),
                &(serde_json::to_string_pretty(&summary)? + "\n"),
            )?;
            if field.z_points.first().map_or(0, Vec::len) == 2 {
                let v: Vec<f64> = c.labels.iter().map(|&l| l as f64).collect();
                write(
                    &csv.with_extension("svg"),
                    &svg::heatmap(&field.z_points, &v, &format!("{m} k-means, k = {k}"), true),
                )?;
            }
            out.push((k, c));
        }
    }
    Ok(out)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cli: reading {}", path.display()))?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, line)| {
            line.rsplit(',')
                .next()
                .and_then(|v| v.trim().parse().ok())
                .with_context(|| format!("{}:{}: bad label", path.display(), i + 2))
        })
        .collect()
}

pub fn write_metrics(m: &Metrics, csv: &Path, json: &Path) -> Result<()> {
    let mut text = String::from("metric,value\n");
    for (k, v) in m {
        text.push_str(&format!("{k},{}\n", fmt_f64(*v)));
    }
    write(csv, &text)?;
    write(json, &(serde_json::to_string_pretty(m)? + "\n"))
}

pub fn cmd_evaluate(cfg: &PipelineConfig, dir: &Path) -> Result<Metrics> {
    let paths = Paths::new(dir);
    let truth_path = paths.truth();
    if !truth_path.exists() {
        bail!("evaluate: no truth sidecar at {}", truth_path.display());
    }
    let truth = SimTruth::load(&truth_path).context("sim: reading the truth sidecar")?;
    let fit = load_fit(dir)?;
    let fields = cfg
        .methods
        .iter()
        .map(|&m| load_field(&paths, m))
        .collect::<Result<Vec<_>>>()?;
    let mut clusterings = Vec::new();
    let mut methods = Vec::new();
    for &m in cfg.methods.iter().filter(|m| cfg.cluster.methods.contains(m)) {
        let paths_k: Vec<(usize, PathBuf)> = cfg.cluster.k.iter().map(|&k| (k, paths.clusters(m, k))).collect();
        // a method counts as clustered only when every k is on disk
        if !paths_k.iter().all(|(_, p)| p.exists()) {
            continue;
        }
        methods.push(m);
        for (k, path) in paths_k {
            clusterings.push((
                k,
                Clustering {
                    labels: read_labels(&path)?,
                    centroids: Vec::new(),
                    inertia: f64::NAN,
                    k,
                    restarts: 0,
                    seed: cfg.seed,
                    best_restart: 0,
                    history: Vec::new(),
                },
            ));
        }
    }
    let labeled = label(&fields, &clusterings, &methods);
    for l in &labeled {
        if l.clustering.labels.len() != l.field.len() {
            bail!(
                "evaluate: dimension mismatch: {} cluster labels for {} field points",
                l.clustering.labels.len(),
                l.field.len()
            );
        }
    }
    let m = evaluate(&truth, &fit, &fields, &labeled)?;
    let (csv, json) = paths.metrics();
    write_metrics(&m, &csv, &json)?;
    Ok(m)
}

/// Run `stage` alone in `dir`.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    match stage {
        Stage::Simulate => cmd_simulate(cfg, dir).map(drop),
        Stage::Fit => cmd_fit(cfg, dir).map(drop),
        Stage::Eigenmap => cmd_eigenmap(cfg, dir).map(drop),
        Stage::Cluster => cmd_cluster(cfg, dir).map(drop),
        Stage::Evaluate => cmd_evaluate(cfg, dir).map(drop),
    }
}

/// Stages a batch run executes to reach `last`.
fn chain(cfg: &PipelineConfig, last: Stage) -> Vec<Stage> {
    let labeled = matches!(cfg.model(), Some(Model::Sim2 { .. } | Model::Sim3 { .. }));
    [
        Stage::Simulate,
        Stage::Fit,
        Stage::Eigenmap,
        Stage::Cluster,
        Stage::Evaluate,
    ]
    .into_iter()
    .filter(|&s| s <= last)
    .filter(|&s| s != Stage::Simulate || matches!(cfg.source, Source::Sim(_)))
    .filter(|&s| s != Stage::Cluster || labeled || last == Stage::Cluster)
    .collect()
}

/// Mean, sample SD and count of every metric over runs.
pub fn aggregate(runs: &[Metrics]) -> Summary {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (k, v) in r {
            acc.entry(k.clone()).or_default().push(*v);
        }
    }
    acc.into_iter()
        .map(|(k, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            (k, (mean, sd, n))
        })
        .collect()
}

/// `runs` independent runs of every stage up to `last`, in
/// `out/run_000`, `out/run_001`, ... with seeds `seed + run`. When `last`
/// is evaluation, the per-run metrics are summarised in `out/summary.csv`.
pub fn run_batch(last: Stage, cfg: &PipelineConfig, runs: usize) -> Result<Option<Summary>> {
    ensure_dir(&cfg.out)?;
    let stages = chain(cfg, last);
    let metrics: Vec<Option<Metrics>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut c = cfg.clone();
            c.seed = run_seed(cfg.seed, r);
            let dir = cfg.out.join(format!("run_{r:03}"));
            let mut m = None;
            for &s in &stages {
                if s == Stage::Evaluate {
                    m = Some(cmd_evaluate(&c, &dir)?);
                } else {
                    run_stage(s, &c, &dir)?;
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    if last != Stage::Evaluate {
        return Ok(None);
    }
    let all: Vec<Metrics> = metrics.into_iter().flatten().collect();
    let summary = aggregate(&all);
    let mut text = String::from("metric,mean,sd,runs\n");
    for (k, (mean, sd, n)) in &summary {
        text.push_str(&format!("{k},{},{},{n}\n", fmt_f64(*mean), fmt_f64(*sd)));
    }
    write(&cfg.out.join("summary.csv"), &text)?;
    let json: BTreeMap<&String, serde_json::Value> = summary
        .iter()
        .map(|(k, (mean, sd, n))| (k, serde_json::json!({"mean": mean, "sd": sd, "runs": n})))
        .collect();
    write(
        &cfg.out.join("summary.json"),
        &(serde_json::to_string_pretty(&json)? + "\n"),
    )?;
    Ok(Some(summary))
}
