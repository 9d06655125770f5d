//! Clustering quality metrics: normalized mutual information, accuracy under
//! the best one-to-one label mapping, and the selected model size.

mod hungarian;

pub use hungarian::{hungarian, Matching};

use std::collections::BTreeMap;

use crate::error::{DpmError, Result};
use crate::model::ModelState;

/// Joint counts of (ground-truth label, predicted label). Labels are mapped
/// to dense indices in increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
}

fn dense(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        ids.entry(l).or_insert(0usize);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let mapped = labels.iter().map(|l| ids[l]).collect();
    (mapped, ids.into_keys().collect())
}

impl ContingencyTable {
    pub fn new(gt: &[usize], mo: &[usize]) -> Result<Self> {
        if gt.len() != mo.len() {
            return Err(DpmError::DimensionMismatch {
                what: "predicted labels",
                expected: gt.len(),
                found: mo.len(),
            });
        }
        if gt.is_empty() {
            return Err(DpmError::Empty("label vectors"));
        }
        let (g, row_labels) = dense(gt);
        let (m, col_labels) = dense(mo);
        let mut counts = vec![vec![0; col_labels.len()]; row_labels.len()];
        for (&i, &j) in g.iter().zip(&m) {
            counts[i][j] += 1;
        }
        Ok(ContingencyTable {
            counts,
            row_labels,
            col_labels,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

fn entropy(marginal: &[usize], n: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `MI(gt, mo) / max(H(gt), H(mo))`, natural logarithms.
///
/// When both partitions are a single class the ratio is 0/0; that case
/// returns 1 since the partitions are identical.
pub fn nmi(gt: &[usize], mo: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(gt, mo)?;
    let n = table.total() as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let h = entropy(&rows, n).max(entropy(&cols, n));
    if h <= 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / h).clamp(0.0, 1.0))
}

/// Fraction of samples whose predicted cluster maps to their true class
/// under the best one-to-one mapping. Surplus clusters map to nothing.
pub fn accuracy(gt: &[usize], mo: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(gt, mo)?;
    // rows: predicted clusters, columns: classes
    let cost: Vec<Vec<f64>> = (0..table.col_labels.len())
        .map(|j| table.counts.iter().map(|r| -(r[j] as f64)).collect())
        .collect();
    let matching = hungarian(&cost)?;
    Ok(-matching.cost / table.total() as f64)
}

/// Number of clusters retained by a (pruned) state.
pub fn model_count<T: crate::scalar::Scalar>(state: &ModelState<T>) -> usize {
    state.k_active()
}
