use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Approach;
use crate::error::{Error, Result};

/// Test-set outcome of the selected run for one (approach, noise, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub approach: Approach,
    pub noise: f64,
    pub seed: u64,
    pub eta_theta: f64,
    pub eta_lambda: f64,
    pub eta_p: f64,
    pub eta_w: f64,
    pub beta: f64,
    /// `None` for mixtures.
    pub best_iterate: Option<usize>,
    /// Whether the selected run met its constraints on validation.
    pub validation_feasible: bool,
    pub error: f64,
    /// Per-group violations, maximised over constraint kinds.
    pub viol_true: Vec<f64>,
    pub viol_noisy: Vec<f64>,
    /// The approach's own constraint on test; empty when it has none.
    pub viol_robust: Vec<f64>,
}

fn max_of(v: &[f64]) -> Option<f64> {
    v.iter().copied().reduce(f64::max)
}

impl RunRecord {
    pub fn viol_true_max(&self) -> f64 {
        max_of(&self.viol_true).unwrap_or(f64::NAN)
    }

    pub fn viol_robust_max(&self) -> Option<f64> {
        max_of(&self.viol_robust)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub approach: Approach,
    pub noise: f64,
    pub seed: u64,
    pub runs: usize,
    pub seconds: f64,
}

/// Mean and standard error over seeds for one (approach, noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub approach: Approach,
    pub noise: f64,
    pub seeds: usize,
    pub error_mean: f64,
    pub error_se: f64,
    /// Group with the largest mean true violation.
    pub viol_true_group: usize,
    pub viol_true_mean: f64,
    pub viol_true_se: f64,
    pub viol_noisy_group: usize,
    pub viol_noisy_mean: f64,
    pub viol_noisy_se: f64,
    pub viol_robust_mean: Option<f64>,
    pub viol_robust_se: Option<f64>,
}

/// Sample mean and `stdev / sqrt(n)` (zero for a single value).
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error of the group whose mean is largest.
fn worst_group(rows: &[&RunRecord], pick: impl Fn(&RunRecord) -> &[f64]) -> Option<(usize, f64, f64)> {
    let m = pick(rows.first()?).len();
    if m == 0 || rows.iter().any(|r| pick(r).len() != m) {
        return None;
    }
    let stats: Vec<(f64, f64)> = (0..m)
        .map(|j| mean_se(&rows.iter().map(|r| pick(r)[j]).collect::<Vec<_>>()))
        .collect();
    let (j, &(mean, se)) = stats
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &(f64, f64))>, (j, s)| match acc {
            Some((_, b)) if b.0 >= s.0 => acc,
            _ => Some((j, s)),
        })?;
    Some((j, mean, se))
}

/// Groups records by (approach, noise) in first-appearance order.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Approach, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(a, g)| a == r.approach && g == r.noise) {
            keys.push((r.approach, r.noise));
        }
    }
    keys.into_iter()
        .map(|(approach, noise)| {
            let rows: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.approach == approach && r.noise == noise)
                .collect();
            let (error_mean, error_se) = mean_se(&rows.iter().map(|r| r.error).collect::<Vec<_>>());
            let nan = (0, f64::NAN, f64::NAN);
            let (viol_true_group, viol_true_mean, viol_true_se) = worst_group(&rows, |r| &r.viol_true).unwrap_or(nan);
            let (viol_noisy_group, viol_noisy_mean, viol_noisy_se) =
                worst_group(&rows, |r| &r.viol_noisy).unwrap_or(nan);
            let robust = worst_group(&rows, |r| &r.viol_robust);
            SummaryRow {
                approach,
                noise,
                seeds: rows.len(),
                error_mean,
                error_se,
                viol_true_group,
                viol_true_mean,
                viol_true_se,
                viol_noisy_group,
                viol_noisy_mean,
                viol_noisy_se,
                viol_robust_mean: robust.map(|r| r.1),
                viol_robust_se: robust.map(|r| r.2),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn split_floats(s: &str, row: usize, column: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|x| {
            x.parse().map_err(|_| Error::BadNumber {
                row,
                column: column.to_string(),
                value: x.to_string(),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const RAW_HEADER: [&str; 15] = [
    "approach",
    "noise",
    "seed",
    "eta_theta",
    "eta_lambda",
    "eta_p",
    "eta_w",
    "beta",
    "best_iterate",
    "validation_feasible",
    "error",
    "viol_true",
    "viol_noisy",
    "viol_robust",
    "viol_true_max",
];

pub fn raw_to_bytes(records: &[RunRecord], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(records)?;
            v.push(b'\n');
            Ok(v)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(RAW_HEADER)?;
            for r in records {
                w.write_record([
                    r.approach.name().to_string(),
                    r.noise.to_string(),
                    r.seed.to_string(),
                    r.eta_theta.to_string(),
                    r.eta_lambda.to_string(),
                    r.eta_p.to_string(),
                    r.eta_w.to_string(),
                    r.beta.to_string(),
                    r.best_iterate.map(|b| b.to_string()).unwrap_or_default(),
                    r.validation_feasible.to_string(),
                    r.error.to_string(),
                    join(&r.viol_true),
                    join(&r.viol_noisy),
                    join(&r.viol_robust),
                    r.viol_true_max().to_string(),
                ])?;
            }
            w.into_inner().map_err(|e| Error::Numerical(format!("csv buffer: {e}")))
        }
    }
}

/// Parses a raw report written by [`raw_to_bytes`].
pub fn raw_from_bytes(bytes: &[u8], format: Format) -> Result<Vec<RunRecord>> {
    match format {
        Format::Json => Ok(serde_json::from_slice(bytes)?),
        Format::Csv => {
            let mut rdr = csv::Reader::from_reader(bytes);
            let mut out = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let row = i + 1;
                if rec.len() != RAW_HEADER.len() {
                    return Err(Error::RaggedRow {
                        row,
                        expected: RAW_HEADER.len(),
                        found: rec.len(),
                    });
                }
                let num = |c: usize| -> Result<f64> {
                    rec[c].parse().map_err(|_| Error::BadNumber {
                        row,
                        column: RAW_HEADER[c].to_string(),
                        value: rec[c].to_string(),
                    })
                };
                let bad = |c: usize| Error::BadNumber {
                    row,
                    column: RAW_HEADER[c].to_string(),
                    value: rec[c].to_string(),
                };
                out.push(RunRecord {
                    approach: Approach::parse(&rec[0]).ok_or_else(|| bad(0))?,
                    noise: num(1)?,
                    seed: rec[2].parse().map_err(|_| bad(2))?,
                    eta_theta: num(3)?,
                    eta_lambda: num(4)?,
                    eta_p: num(5)?,
                    eta_w: num(6)?,
                    beta: num(7)?,
                    best_iterate: if rec[8].is_empty() {
                        None
                    } else {
                        Some(rec[8].parse().map_err(|_| bad(8))?)
                    },
                    validation_feasible: rec[9].parse().map_err(|_| bad(9))?,
                    error: num(10)?,
                    viol_true: split_floats(&rec[11], row, RAW_HEADER[11])?,
                    viol_noisy: split_floats(&rec[12], row, RAW_HEADER[12])?,
                    viol_robust: split_floats(&rec[13], row, RAW_HEADER[13])?,
                });
            }
            Ok(out)
        }
    }
}

pub fn summary_to_bytes(rows: &[SummaryRow], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            // Non-finite means serialise as null.
            let mut v = serde_json::to_vec_pretty(rows)?;
            v.push(b'\n');
            Ok(v)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "approach",
                "noise",
                "seeds",
                "error_mean",
                "error_se",
                "viol_true_group",
                "viol_true_mean",
                "viol_true_se",
                "viol_noisy_group",
                "viol_noisy_mean",
                "viol_noisy_se",
                "viol_robust_mean",
                "viol_robust_se",
            ])?;
            for r in rows {
                w.write_record([
                    r.approach.name().to_string(),
                    r.noise.to_string(),
                    r.seeds.to_string(),
                    r.error_mean.to_string(),
                    r.error_se.to_string(),
                    r.viol_true_group.to_string(),
                    r.viol_true_mean.to_string(),
                    r.viol_true_se.to_string(),
                    r.viol_noisy_group.to_string(),
                    r.viol_noisy_mean.to_string(),
                    r.viol_noisy_se.to_string(),
                    opt(r.viol_robust_mean),
                    opt(r.viol_robust_se),
                ])?;
            }
            w.into_inner().map_err(|e| Error::Numerical(format!("csv buffer: {e}")))
        }
    }
}

pub fn timings_to_csv(timings: &[Timing]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["approach", "noise", "seed", "runs", "seconds"])?;
    for t in timings {
        w.write_record([
            t.approach.name().to_string(),
            t.noise.to_string(),
            t.seed.to_string(),
            t.runs.to_string(),
            format!("{:.3}", t.seconds),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Numerical(format!("csv buffer: {e}")))
}

/// Writes `raw.<ext>` and `summary.<ext>` into `dir`.
pub fn emit(records: &[RunRecord], format: Format, dir: &Path) -> Result<()> {
    let ext = format.extension();
    write_atomic(&dir.join(format!("raw.{ext}")), &raw_to_bytes(records, format)?)?;
    write_atomic(
        &dir.join(format!("summary.{ext}")),
        &summary_to_bytes(&aggregate(records), format)?,
    )
}
