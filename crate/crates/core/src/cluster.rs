//! k-means on eigenvalue vectors and matching of clusters to known classes.

use std::path::Path;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kv::fmt_f64;
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansOptions {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the relative inertia change falls to this level.
    pub tol: f64,
    pub seed: u64,
    /// z-score every feature column before clustering.
    pub standardize: bool,
}

impl KmeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 20,
            max_iter: 300,
            tol: 1e-6,
            seed,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<usize>,
    /// `k` centroids in the clustering feature space (standardised units
    /// when standardisation is on).
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Restart that produced the result.
    pub best_restart: usize,
    /// Inertia after every iteration of the winning restart.
    pub history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = dist2(x, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn standardized(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let mut out = rows.to_vec();
    for j in 0..dim {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for r in &mut out {
            r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

fn plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids = vec![rows[rng.random_range(0..n)].clone()];
    let mut d: Vec<f64> = rows.iter().map(|r| dist2(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    chosen = i;
                    break;
                }
                u -= di;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(rows[pick].clone());
        for (di, r) in d.iter_mut().zip(rows) {
            *di = di.min(dist2(r, &rows[pick]));
        }
    }
    centroids
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    history: Vec<f64>,
}

fn lloyd(rows: &[Vec<f64>], opts: &KmeansOptions, restart: usize) -> Run {
    let mut rng = stream(opts.seed, restart as u64);
    let (n, dim, k) = (rows.len(), rows[0].len(), opts.k);
    let mut centroids = plus_plus(rows, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..opts.max_iter {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let (c, _) = nearest(r, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &c) in rows.iter().zip(&labels) {
            counts[c] += 1;
            for j in 0..dim {
                sums[c][j] += r[j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let inertia: f64 = rows.iter().zip(&labels).map(|(r, &c)| dist2(r, &centroids[c])).sum();
        // an empty cluster takes over the point farthest from its centroid;
        // the point keeps its label until the next assignment, so the
        // recorded inertia stays valid
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(&rows[a], &centroids[labels[a]]).total_cmp(&dist2(&rows[b], &centroids[labels[b]]))
                    })
                    .unwrap_or(0);
                centroids[c] = rows[far].clone();
                changed = true;
            }
        }
        let prev = history.last().copied();
        history.push(inertia);
        if !changed {
            break;
        }
        if let Some(p) = prev {
            if p - inertia <= opts.tol * p.abs() && counts.iter().all(|&c| c > 0) {
                break;
            }
        }
    }
    let inertia = *history.last().unwrap_or(&0.0);
    Run {
        labels,
        centroids,
        inertia,
        history,
    }
}

/// Best of `restarts` Lloyd runs with k-means++ seeding. Ties in inertia go
/// to the lowest restart index.
pub fn kmeans(rows: &[Vec<f64>], opts: &KmeansOptions) -> Result<Clustering> {
    let n = rows.len();
    if opts.k == 0 || opts.k > n {
        return Err(Error::invalid(format!("k = {} but there are {n} points", opts.k)));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("k-means rows must have equal length and finite values"));
    }
    let restarts = opts.restarts.max(1);
    let work = if opts.standardize {
        standardized(rows)
    } else {
        rows.to_vec()
    };
    let runs: Vec<Run> = (0..restarts).into_par_iter().map(|r| lloyd(&work, opts, r)).collect();
    let (best_restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.inertia < a.1.inertia { b } else { a })
        .expect("at least one restart");
    Ok(Clustering {
        labels: best.labels,
        centroids: best.centroids,
        inertia: best.inertia,
        k: opts.k,
        restarts,
        seed: opts.seed,
        best_restart,
        history: best.history,
    })
}

/// Map every predicted cluster to a class so that the total number of
/// points on matching labels is largest. With more clusters than classes,
/// the clusters left over after the one-to-one assignment go to their
/// majority class.
pub fn match_clusters(pred: &[usize], truth: &[usize]) -> Result<Vec<usize>> {
    if pred.len() != truth.len() {
        return Err(Error::invalid("predicted and true labels differ in length"));
    }
    if pred.is_empty() {
        return Ok(Vec::new());
    }
    let k = pred.iter().max().unwrap() + 1;
    let c = truth.iter().max().unwrap() + 1;
    let mut tp = vec![vec![0i64; c]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        tp[p][t] += 1;
    }
    let majority = |row: &[i64]| {
        (0..row.len())
            .max_by(|&a, &b| row[a].cmp(&row[b]).then(b.cmp(&a)))
            .unwrap()
    };
    if k <= c {
        let m = Matrix::from_rows(tp.iter().cloned()).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(kuhn_munkres(&m).1)
    } else {
        let cols: Vec<Vec<i64>> = (0..c).map(|j| (0..k).map(|i| tp[i][j]).collect()).collect();
        let m = Matrix::from_rows(cols).map_err(|e| Error::invalid(e.to_string()))?;
        let class_to_cluster = kuhn_munkres(&m).1;
        let mut mapping: Vec<usize> = tp.iter().map(|row| majority(row)).collect();
        for (class, &cluster) in class_to_cluster.iter().enumerate() {
            mapping[cluster] = class;
        }
        Ok(mapping)
    }
}

/// `z_1..z_p,label` rows.
pub fn save_labels(path: &Path, z_points: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    let p = z_points.first().map_or(0, Vec::len);
    let mut out: Vec<String> = (1..=p).map(|k| format!("z_{k}")).collect();
    out.push("label".into());
    let mut text = out.join(",") + "\n";
    for (z, l) in z_points.iter().zip(labels) {
        for v in z {
            text.push_str(&fmt_f64(*v));
            text.push(',');
        }
        text.push_str(&format!("{l}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}
