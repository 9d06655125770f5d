//! Dataset loading, synthetic data, and run outputs.

mod binary;
mod output;
mod synth;
mod text;

pub use binary::{load_binary, read_binary, write_binary, MAGIC};
pub use output::{
    emit_summary, emit_trace, read_trace, write_trace, RunMetrics, Summary, TraceRow, TRACE_HEADER,
};
pub use synth::{synth_generate, SynthSpec};
pub use text::{load_csv, load_labels, parse_csv, parse_labels};

use std::path::PathBuf;

use ndarray::{Array2, Axis};
use thiserror::Error;

use crate::error::DpmError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, column {col}: cannot parse {cell:?} as a number")]
    Parse {
        row: usize,
        col: usize,
        cell: String,
    },

    #[error("row {row}, column {col}: non-finite value {value}")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("row {row} has {found} columns, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("label line {line}: cannot parse {cell:?} as a non-negative integer")]
    Label { line: usize, cell: String },

    #[error("{found} labels for {expected} samples")]
    LabelCount { expected: usize, found: usize },

    #[error("bad magic bytes {0:?}, expected \"DPMF\"")]
    BadMagic([u8; 4]),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("{actual} bytes where {expected} were expected; trailing data")]
    Trailing { expected: u64, actual: u64 },

    #[error("dataset has no samples")]
    Empty,

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("json: {0}")]
    Json(String),

    #[error(transparent)]
    Model(#[from] DpmError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetMeta {
    pub name: String,
    pub n: usize,
    pub dim: usize,
    pub classes: Option<usize>,
}

/// Features plus optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub features: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    pub meta: DatasetMeta,
}

impl DatasetBundle {
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self, DataError> {
        if features.nrows() == 0 {
            return Err(DataError::Empty);
        }
        if let Some((idx, &value)) = features.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            let d = features.ncols();
            return Err(DataError::NonFinite {
                row: idx / d + 1,
                col: idx % d + 1,
                value,
            });
        }
        let mut bundle = DatasetBundle {
            meta: DatasetMeta {
                name: name.into(),
                n: features.nrows(),
                dim: features.ncols(),
                classes: None,
            },
            features,
            labels: None,
        };
        if let Some(l) = labels {
            bundle = bundle.with_labels(l)?;
        }
        Ok(bundle)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self, DataError> {
        if labels.len() != self.meta.n {
            return Err(DataError::LabelCount {
                expected: self.meta.n,
                found: labels.len(),
            });
        }
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        self.meta.classes = Some(distinct.len());
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }
}

/// Centers every column and scales it to unit (population) standard
/// deviation. Constant columns are only centered.
pub fn standardize(features: &Array2<f64>) -> Array2<f64> {
    let n = features.nrows();
    if n == 0 {
        return features.clone();
    }
    let mean = features.mean_axis(Axis(0)).expect("non-empty");
    let std = features.std_axis(Axis(0), 0.0);
    let mut out = features - &mean;
    for (mut col, &s) in out.axis_iter_mut(Axis(1)).zip(std.iter()) {
        if s > 0.0 {
            col /= s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardized_columns() {
        let x = array![[1.0, 5.0, 2.0], [3.0, 5.0, 4.0], [5.0, 5.0, 9.0]];
        let z = standardize(&x);
        for c in 0..3 {
            let col = z.column(c);
            assert!(col.mean().unwrap().abs() < 1e-12);
        }
        assert!((z.column(0).std(0.0) - 1.0).abs() < 1e-12);
        assert!((z.column(2).std(0.0) - 1.0).abs() < 1e-12);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bundle_checks() {
        let x = array![[1.0, 2.0], [3.0, f64::INFINITY]];
        assert!(matches!(
            DatasetBundle::new("x", x, None),
            Err(DataError::NonFinite { row: 2, col: 2, .. })
        ));
        let x = array![[1.0], [2.0], [3.0]];
        let b = DatasetBundle::new("x", x.clone(), Some(vec![4, 4, 1])).unwrap();
        assert_eq!(b.meta.classes, Some(2));
        assert_eq!((b.n(), b.dim()), (3, 1));
        assert!(matches!(
            DatasetBundle::new("x", x, Some(vec![0])),
            Err(DataError::LabelCount {
                expected: 3,
                found: 1
            })
        ));
        assert!(matches!(
            DatasetBundle::new("x", Array2::zeros((0, 3)), None),
            Err(DataError::Empty)
        ));
    }
}
