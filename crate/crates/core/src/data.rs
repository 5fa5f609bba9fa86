//! Functional datasets: per-subject irregular observations with a covariate
//! vector, plus file I/O and sampling-scheme classification.
//!
//! ## File formats
//!
//! CSV, header required, one row per observation:
//!
//! ```text
//! subject_id,z_1,...,z_p,t,y
//! ```
//!
//! `p` is inferred from the header. Rows of one subject need not be
//! contiguous; subjects keep the order of their first row.
//!
//! NDJSON, one object per subject:
//!
//! ```text
//! {"id":"s0","z":[0.25],"t":[0.0,0.2],"y":[1.5,-0.3]}
//! ```
//!
//! Numbers are written with 17 significant digits so a save/load cycle is
//! bit-exact. The time domain is not stored; on load it defaults to
//! `[min t, max t]` and can be overridden with
//! [`FunctionalDataset::with_time_domain`].

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kv::fmt_f64;
use crate::{Error, Result};

/// Default median-observation count separating dense from sparse designs.
pub const DEFAULT_DENSE_THRESHOLD: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub z: Vec<f64>,
    /// Observation times, ascending.
    pub t: Vec<f64>,
    /// Observed values, aligned with `t`.
    pub y: Vec<f64>,
}

impl Subject {
    pub fn new(id: impl Into<String>, z: Vec<f64>, t: Vec<f64>, y: Vec<f64>) -> Self {
        Self { id: id.into(), z, t, y }
    }

    pub fn n_obs(&self) -> usize {
        self.t.len()
    }

    /// At least two observations, so the subject contributes cross-products.
    pub fn is_covariance_eligible(&self) -> bool {
        self.n_obs() >= 2
    }

    /// Sort observations by time, keeping the relative order of ties.
    pub fn sort_by_time(&mut self) {
        if self.t.windows(2).all(|w| w[0] <= w[1]) {
            return;
        }
        let mut order: Vec<usize> = (0..self.t.len()).collect();
        order.sort_by(|&a, &b| self.t[a].total_cmp(&self.t[b]));
        self.t = order.iter().map(|&i| self.t[i]).collect();
        self.y = order.iter().map(|&i| self.y[i]).collect();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    pub subjects: Vec<Subject>,
    /// Closed time interval `[lo, hi]`.
    pub time_domain: (f64, f64),
    pub covariate_dim: usize,
}

impl FunctionalDataset {
    /// Build a dataset with the time domain spanning the observed times.
    pub fn new(subjects: Vec<Subject>, covariate_dim: usize) -> Self {
        let (lo, hi) = subjects
            .iter()
            .flat_map(|s| s.t.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
        Self {
            subjects,
            time_domain: (lo, hi),
            covariate_dim,
        }
    }

    pub fn with_time_domain(mut self, lo: f64, hi: f64) -> Self {
        self.time_domain = (lo, hi);
        self
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn total_obs(&self) -> usize {
        self.subjects.iter().map(Subject::n_obs).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Covariate range per dimension over all subjects.
    pub fn covariate_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.covariate_dim)
            .map(|k| {
                self.subjects
                    .iter()
                    .map(|s| s.z[k])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z), hi.max(z)))
            })
            .collect()
    }

    /// Fail unless [`validate`] reports no violations.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate(self);
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::invalid(format!(
                "dataset has {} violation(s), first: {v}",
                report.violations.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    CovariateDimension,
    OutOfDomain,
    NoObservations,
    NonFinite,
    UnsortedTimes,
    LengthMismatch,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::CovariateDimension => "covariate-dimension",
            Rule::OutOfDomain => "out-of-domain",
            Rule::NoObservations => "no-observations",
            Rule::NonFinite => "non-finite",
            Rule::UnsortedTimes => "unsorted-times",
            Rule::LengthMismatch => "length-mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subject: String,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subject {}: {}: {}", self.subject, self.rule, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }
}

/// Check every dataset invariant; violations are returned, never raised.
pub fn validate(d: &FunctionalDataset) -> ValidationReport {
    let (lo, hi) = d.time_domain;
    let mut violations = Vec::new();
    let mut push = |s: &Subject, rule: Rule, detail: String| {
        violations.push(Violation {
            subject: s.id.clone(),
            rule,
            detail,
        })
    };
    for s in &d.subjects {
        if s.z.len() != d.covariate_dim {
            push(
                s,
                Rule::CovariateDimension,
                format!("covariate has length {}, expected {}", s.z.len(), d.covariate_dim),
            );
        }
        if s.z.iter().any(|z| !z.is_finite()) {
            push(s, Rule::NonFinite, "non-finite covariate".into());
        }
        if s.t.len() != s.y.len() {
            push(
                s,
                Rule::LengthMismatch,
                format!("{} times but {} values", s.t.len(), s.y.len()),
            );
        }
        if s.t.is_empty() {
            push(s, Rule::NoObservations, "subject has no observations".into());
        }
        for (j, (&t, &y)) in s.t.iter().zip(&s.y).enumerate() {
            if !t.is_finite() || !y.is_finite() {
                push(s, Rule::NonFinite, format!("observation {j}: (t={t}, y={y})"));
            } else if t < lo || t > hi {
                push(
                    s,
                    Rule::OutOfDomain,
                    format!("observation {j}: t={t} outside [{lo}, {hi}]"),
                );
            }
        }
        if s.t.windows(2).any(|w| w[0] > w[1]) {
            push(s, Rule::UnsortedTimes, "observation times not ascending".into());
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Dense,
    Sparse,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Dense => "dense",
            SchemeKind::Sparse => "sparse",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" | "complete" => Ok(SchemeKind::Dense),
            "sparse" => Ok(SchemeKind::Sparse),
            other => Err(Error::invalid(format!("unknown sampling scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingScheme {
    pub kind: SchemeKind,
    pub min_obs: usize,
    pub median_obs: f64,
    pub max_obs: usize,
}

/// Dense iff the median number of observations per subject reaches
/// `dense_threshold` (inclusive). The median of an even count is the mean
/// of the two middle values.
pub fn classify_scheme(d: &FunctionalDataset, dense_threshold: usize) -> Result<SamplingScheme> {
    if d.is_empty() {
        return Err(Error::invalid("cannot classify an empty dataset"));
    }
    let mut counts: Vec<usize> = d.subjects.iter().map(Subject::n_obs).collect();
    counts.sort_unstable();
    let n = counts.len();
    let median = if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        0.5 * (counts[n / 2 - 1] + counts[n / 2]) as f64
    };
    let kind = if median >= dense_threshold as f64 {
        SchemeKind::Dense
    } else {
        SchemeKind::Sparse
    };
    Ok(SamplingScheme {
        kind,
        min_obs: counts[0],
        median_obs: median,
        max_obs: counts[n - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataFormat {
    #[default]
    Csv,
    Ndjson,
}

impl DataFormat {
    /// Guess from the file extension; anything but `.ndjson`/`.jsonl` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ndjson") | Some("jsonl") => DataFormat::Ndjson,
            _ => DataFormat::Csv,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "ndjson" | "jsonl" => Ok(DataFormat::Ndjson),
            other => Err(Error::invalid(format!("unknown dataset format `{other}`"))),
        }
    }
}

/// Load a dataset; the result passes [`validate`] or an error is returned.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<FunctionalDataset> {
    let d = match format {
        DataFormat::Csv => read_csv(path)?,
        DataFormat::Ndjson => read_ndjson(path)?,
    };
    if let Some(v) = validate(&d).violations.into_iter().next() {
        return Err(match v.rule {
            Rule::CovariateDimension => Error::DimensionMismatch {
                subject: v.subject,
                what: "covariates",
                expected: d.covariate_dim,
                found: d
                    .subjects
                    .iter()
                    .find(|s| s.z.len() != d.covariate_dim)
                    .map_or(0, |s| s.z.len()),
            },
            _ => Error::invalid(format!("{}: {v}", path.display())),
        });
    }
    Ok(d)
}

pub fn save_dataset(d: &FunctionalDataset, path: &Path, format: DataFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        DataFormat::Csv => {
            let mut header = vec!["subject_id".to_string()];
            header.extend((1..=d.covariate_dim).map(|k| format!("z_{k}")));
            header.push("t".into());
            header.push("y".into());
            writeln!(out, "{}", header.join(","))?;
            for s in &d.subjects {
                let z: String = s.z.iter().map(|&v| format!("{},", fmt_f64(v))).collect();
                for (&t, &y) in s.t.iter().zip(&s.y) {
                    writeln!(out, "{},{}{},{}", s.id, z, fmt_f64(t), fmt_f64(y))?;
                }
            }
        }
        DataFormat::Ndjson => {
            for s in &d.subjects {
                let list = |xs: &[f64]| xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",");
                writeln!(
                    out,
                    "{{\"id\":{},\"z\":[{}],\"t\":[{}],\"y\":[{}]}}",
                    serde_json::to_string(&s.id)?,
                    list(&s.z),
                    list(&s.t),
                    list(&s.y)
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<FunctionalDataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(1, e.to_string()))?;
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let ncol = header.len();
    if ncol < 4 || &header[0] != "subject_id" || &header[ncol - 2] != "t" || &header[ncol - 1] != "y" {
        return Err(parse_err(
            1,
            format!(
                "header must be `subject_id,z_1,...,z_p,t,y`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let p = ncol - 3;

    let mut subjects: Vec<Subject> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |col: usize| -> Result<f64> {
            record[col].parse::<f64>().map_err(|_| {
                parse_err(
                    line,
                    format!("column `{}`: `{}` is not a number", &header[col], &record[col]),
                )
            })
        };
        let id = record[0].to_string();
        let z = (1..=p).map(num).collect::<Result<Vec<f64>>>()?;
        let t = num(ncol - 2)?;
        let y = num(ncol - 1)?;
        match index.get(&id) {
            Some(&i) => {
                let s = &mut subjects[i];
                if s.z.iter().zip(&z).any(|(a, b)| a.to_bits() != b.to_bits()) {
                    return Err(parse_err(
                        line,
                        format!("subject {id}: covariate differs from its earlier rows"),
                    ));
                }
                s.t.push(t);
                s.y.push(y);
            }
            None => {
                index.insert(id.clone(), subjects.len());
                subjects.push(Subject::new(id, z, vec![t], vec![y]));
            }
        }
    }
    for s in &mut subjects {
        s.sort_by_time();
    }
    Ok(FunctionalDataset::new(subjects, p))
}

#[derive(Deserialize)]
struct SubjectRecord {
    id: String,
    z: Vec<f64>,
    t: Vec<f64>,
    y: Vec<f64>,
}

fn read_ndjson(path: &Path) -> Result<FunctionalDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut subjects = Vec::new();
    let mut p = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SubjectRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        let p = *p.get_or_insert(rec.z.len());
        if rec.z.len() != p {
            return Err(Error::DimensionMismatch {
                subject: rec.id,
                what: "covariates",
                expected: p,
                found: rec.z.len(),
            });
        }
        if rec.t.len() != rec.y.len() {
            return Err(Error::DimensionMismatch {
                subject: rec.id,
                what: "values (one per time)",
                expected: rec.t.len(),
                found: rec.y.len(),
            });
        }
        let mut s = Subject::new(rec.id, rec.z, rec.t, rec.y);
        s.sort_by_time();
        subjects.push(s);
    }
    Ok(FunctionalDataset::new(subjects, p.unwrap_or(0)))
}
