//! Minimum-cost assignment (Kuhn-Munkres with potentials, `O(n^3)`).

use crate::error::{DpmError, Result};

/// Optimal row-to-column assignment of a rectangular cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `pairs[i] = Some(j)` when row `i` is matched to column `j`. Rows beyond
    /// the column count may stay unmatched.
    pub pairs: Vec<Option<usize>>,
    pub cost: f64,
}

/// Solves the assignment problem after padding `cost` to a square matrix with
/// zero-cost dummy rows or columns. Dummy matches are reported as `None`.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Matching> {
    let rows = cost.len();
    if rows == 0 {
        return Err(DpmError::Empty("cost matrix"));
    }
    let cols = cost[0].len();
    if cols == 0 {
        return Err(DpmError::Empty("cost matrix"));
    }
    if cost.iter().any(|r| r.len() != cols) {
        return Err(DpmError::InvalidConfig(
            "cost matrix rows differ in length".into(),
        ));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(DpmError::InvalidConfig(
            "cost matrix has non-finite entries".into(),
        ));
    }
    let n = rows.max(cols);
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost[i][j]
        } else {
            0.0
        }
    };

    // 1-based potentials; column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = owner[j];
        if i >= 1 && i <= rows && j <= cols {
            pairs[i - 1] = Some(j - 1);
            total += cost[i - 1][j - 1];
        }
    }
    Ok(Matching { pairs, cost: total })
}
