//! Per-iteration trace CSV and JSON run summary.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::elbo::ElboBreakdown;
use crate::optimizers::Optimizer;
use crate::scalar::Scalar;
use crate::trainer::{TraceRecord, TrainingTrace};

pub const TRACE_HEADER: [&str; 12] = [
    "iter", "elbo", "lp_x", "lp_mu", "lp_zv", "lp_v", "lq_z", "lq_v", "lq_mu", "k_active",
    "time_ms", "bb_eta",
];

/// One trace line. `elbo` holds the bound of the iteration's batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub elbo: ElboBreakdown<f64>,
    pub k_active: usize,
    pub time_ms: f64,
    pub bb_eta: Option<f64>,
}

impl TraceRow {
    pub fn from_record<T: Scalar>(r: &TraceRecord<T>) -> Self {
        let e = &r.elbo;
        let f = |x: T| x.to_f64_lossy();
        TraceRow {
            iter: r.iter,
            elbo: ElboBreakdown {
                lp_x: f(e.lp_x),
                lp_mu: f(e.lp_mu),
                lp_zv: f(e.lp_zv),
                lp_v: f(e.lp_v),
                lq_z: f(e.lq_z),
                lq_v: f(e.lq_v),
                lq_mu: f(e.lq_mu),
                total: f(e.total),
            },
            k_active: r.k_active,
            time_ms: r.time_ms,
            bb_eta: r.bb.joint.map(f),
        }
    }
}

// 17 significant digits: enough to round-trip any f64
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace<W: Write, T: Scalar>(out: W, trace: &TrainingTrace<T>) -> Result<(), DataError> {
    let csv_err = |e: csv::Error| DataError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace.records.iter().map(TraceRow::from_record) {
        let e = r.elbo;
        w.write_record([
            r.iter.to_string(),
            real(e.total),
            real(e.lp_x),
            real(e.lp_mu),
            real(e.lp_zv),
            real(e.lp_v),
            real(e.lq_z),
            real(e.lq_v),
            real(e.lq_mu),
            r.k_active.to_string(),
            real(r.time_ms),
            r.bb_eta.map(real).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}

pub fn emit_trace<T: Scalar>(
    trace: &TrainingTrace<T>,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    write_trace(BufWriter::new(file), trace)
}

/// Parses a trace written by [`write_trace`].
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>, DataError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(DataError::Csv(format!(
            "unexpected trace header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        let row = i + 2;
        let cell = |c: usize| -> Result<f64, DataError> {
            rec[c].parse().map_err(|_| DataError::Parse {
                row,
                col: c + 1,
                cell: rec[c].to_string(),
            })
        };
        let int = |c: usize| -> Result<usize, DataError> {
            rec[c].parse().map_err(|_| DataError::Parse {
                row,
                col: c + 1,
                cell: rec[c].to_string(),
            })
        };
        if rec.len() != TRACE_HEADER.len() {
            return Err(DataError::Ragged {
                row,
                expected: TRACE_HEADER.len(),
                found: rec.len(),
            });
        }
        rows.push(TraceRow {
            iter: int(0)?,
            elbo: ElboBreakdown {
                total: cell(1)?,
                lp_x: cell(2)?,
                lp_mu: cell(3)?,
                lp_zv: cell(4)?,
                lp_v: cell(5)?,
                lq_z: cell(6)?,
                lq_v: cell(7)?,
                lq_mu: cell(8)?,
            },
            k_active: int(9)?,
            time_ms: cell(10)?,
            bb_eta: if rec[11].is_empty() {
                None
            } else {
                Some(cell(11)?)
            },
        });
    }
    Ok(rows)
}

/// Metrics of one training run. `nmi` and `acc` are `None` without labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub k_est: usize,
    pub nmi: Option<f64>,
    pub acc: Option<f64>,
    pub iters_run: usize,
    pub total_time_ms: f64,
}

/// Run summary. With several repeats the top-level metrics are medians
/// (lower median for the integer fields) and `repeats` lists every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub optimizer: String,
    pub seed: u64,
    pub k_est: usize,
    pub nmi: Option<f64>,
    pub acc: Option<f64>,
    pub iters_run: usize,
    pub total_time_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repeats: Vec<RunMetrics>,
}

fn median_f64(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn lower_median(mut xs: Vec<usize>) -> usize {
    xs.sort_unstable();
    xs[(xs.len() - 1) / 2]
}

impl Summary {
    pub fn single(optimizer: Optimizer, run: RunMetrics) -> Self {
        Summary {
            optimizer: optimizer.to_string(),
            seed: run.seed,
            k_est: run.k_est,
            nmi: run.nmi,
            acc: run.acc,
            iters_run: run.iters_run,
            total_time_ms: run.total_time_ms,
            repeats: Vec::new(),
        }
    }

    /// Median summary over `runs`; `seed` is the base seed the runs were
    /// derived from.
    pub fn from_repeats(optimizer: Optimizer, seed: u64, runs: Vec<RunMetrics>) -> Self {
        assert!(!runs.is_empty(), "at least one run");
        if runs.len() == 1 {
            return Summary::single(optimizer, runs.into_iter().next().unwrap());
        }
        let opt = |f: fn(&RunMetrics) -> Option<f64>| -> Option<f64> {
            let xs: Option<Vec<f64>> = runs.iter().map(f).collect();
            xs.map(median_f64)
        };
        Summary {
            optimizer: optimizer.to_string(),
            seed,
            k_est: lower_median(runs.iter().map(|r| r.k_est).collect()),
            nmi: opt(|r| r.nmi),
            acc: opt(|r| r.acc),
            iters_run: lower_median(runs.iter().map(|r| r.iters_run).collect()),
            total_time_ms: median_f64(runs.iter().map(|r| r.total_time_ms).collect()),
            repeats: runs,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary is serializable");
        s.push('\n');
        s
    }
}

pub fn emit_summary(summary: &Summary, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, summary.to_json()).map_err(|e| DataError::io(path, e))
}
