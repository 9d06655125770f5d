//! Parameters, hyperparameters and state of the truncated stick-breaking
//! Dirichlet process Gaussian mixture.
//!
//! Every cluster shares one isotropic observation scale `sigma`. The mean of
//! cluster `k` has a Gaussian prior centred on `m0` with precision scale
//! `lambda0`, and each stick length `v_k` has a `Beta(1, a0)` prior. The
//! weight of cluster `k` is `pi_k = v_k * prod_{l<k} (1 - v_l)`.

use std::fmt;

use ndarray::{Array1, Array2};

use crate::error::{DpmError, Result};
use crate::scalar::Scalar;

/// Lower clamp for stick lengths; the upper clamp is `1 - V_CLAMP`.
pub const V_CLAMP: f64 = 1e-6;

/// Fixed constants of the model and of the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams<T> {
    /// Shared observation standard deviation, applied to every dimension.
    pub sigma: T,
    /// Prior precision scale on the cluster means.
    pub lambda0: T,
    /// Prior mean on the cluster means, one entry per feature dimension.
    pub m0: Array1<T>,
    /// Beta prior concentration on the stick lengths.
    pub a0: T,
    /// Truncation level `K`.
    pub trunc_k: usize,
    /// Pruning threshold on `E[v_k]`.
    pub thr: T,
    /// Learning rate.
    pub eta: T,
    /// Momentum coefficient.
    pub alpha: T,
    /// Minibatch size.
    pub minibatch_m: usize,
}

impl<T: Scalar> Hyperparams<T> {
    /// Defaults for a dataset with `n` samples of dimension `dim`.
    ///
    /// `a0` is set to `n`, `m0` to the origin, and the minibatch to the full
    /// dataset capped at 1000 samples.
    pub fn for_dataset(n: usize, dim: usize) -> Self {
        Hyperparams {
            sigma: T::one(),
            lambda0: T::lit(1e-2),
            m0: Array1::zeros(dim),
            a0: T::count(n.max(1)),
            trunc_k: 50,
            thr: T::lit(1e-3),
            eta: T::lit(0.1),
            alpha: T::lit(0.9),
            minibatch_m: n.clamp(1, 1000),
        }
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: impl Into<String>) -> DpmError {
            DpmError::InvalidHyperparam {
                name,
                reason: reason.into(),
            }
        }
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(bad(
                "sigma",
                format!("must be positive, got {}", self.sigma),
            ));
        }
        if !(self.lambda0 >= T::zero()) || !self.lambda0.is_finite() {
            return Err(bad(
                "lambda0",
                format!("must be nonnegative, got {}", self.lambda0),
            ));
        }
        if !(self.a0 > T::zero()) || !self.a0.is_finite() {
            return Err(bad("a0", format!("must be positive, got {}", self.a0)));
        }
        if self.trunc_k == 0 {
            return Err(bad("trunc_k", "must be at least 1"));
        }
        if !(self.thr >= T::zero()) {
            return Err(bad("thr", format!("must be nonnegative, got {}", self.thr)));
        }
        if !(self.eta > T::zero()) || !self.eta.is_finite() {
            return Err(bad("eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.alpha >= T::zero() && self.alpha <= T::one()) {
            return Err(bad(
                "alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        if self.minibatch_m == 0 {
            return Err(bad("minibatch_m", "must be at least 1"));
        }
        if self.m0.iter().any(|m| !m.is_finite()) {
            return Err(bad("m0", "entries must be finite"));
        }
        Ok(())
    }

    /// Checks `m0` against the dataset dimension.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.m0.len() != dim {
            return Err(DpmError::DimensionMismatch {
                what: "m0",
                expected: dim,
                found: self.m0.len(),
            });
        }
        Ok(())
    }
}

/// Clamps a stick length into `[V_CLAMP, 1 - V_CLAMP]`.
#[inline]
pub fn clamp_v<T: Scalar>(v: T) -> T {
    let lo = T::lit(V_CLAMP);
    let hi = T::one() - lo;
    if v.is_nan() {
        return lo;
    }
    v.max(lo).min(hi)
}

/// Current expectations `E[mu]` (one row per retained cluster) and `E[v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub mu: Array2<T>,
    pub v: Array1<T>,
}

impl<T: Scalar> ModelState<T> {
    /// Builds a state, clamping the stick lengths.
    pub fn new(mu: Array2<T>, v: Array1<T>) -> Result<Self> {
        if mu.nrows() != v.len() {
            return Err(DpmError::DimensionMismatch {
                what: "v",
                expected: mu.nrows(),
                found: v.len(),
            });
        }
        if v.is_empty() {
            return Err(DpmError::Empty("model state"));
        }
        Ok(ModelState {
            mu,
            v: v.mapv(clamp_v),
        })
    }

    pub fn k_active(&self) -> usize {
        self.v.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn clamp_sticks(&mut self) {
        self.v.mapv_inplace(clamp_v);
    }

    /// Mixture weights of the current sticks.
    pub fn weights(&self) -> Result<Array1<T>> {
        stick_weights(&self.v)
    }

    /// Keeps only the clusters listed in `keep`, in the given order.
    pub fn select(&self, keep: &[usize]) -> Self {
        ModelState {
            mu: self.mu.select(ndarray::Axis(0), keep),
            v: self.v.select(ndarray::Axis(0), keep),
        }
    }
}

fn check_open_unit<T: Scalar>(v: &Array1<T>) -> Result<()> {
    for (index, &value) in v.iter().enumerate() {
        if !(value > T::zero() && value < T::one()) {
            return Err(DpmError::StickOutOfRange {
                index,
                value: value.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// Stick-breaking weights `pi_k = v_k * prod_{l<k} (1 - v_l)`.
pub fn stick_weights<T: Scalar>(v: &Array1<T>) -> Result<Array1<T>> {
    check_open_unit(v)?;
    let mut remaining = T::one();
    Ok(v.mapv(|vk| {
        let pi = vk * remaining;
        remaining *= T::one() - vk;
        pi
    }))
}

/// `ln pi_k`, accumulated in log space so long truncations do not underflow.
pub fn ln_stick_weights<T: Scalar>(v: &Array1<T>) -> Result<Array1<T>> {
    check_open_unit(v)?;
    let mut ln_remaining = T::zero();
    Ok(v.mapv(|vk| {
        let out = vk.ln() + ln_remaining;
        ln_remaining += (-vk).ln_1p();
        out
    }))
}

/// Hard 1-of-K assignments for a batch, stored as one label per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignments {
    labels: Vec<usize>,
    k: usize,
}

impl Assignments {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(DpmError::InvalidState(format!(
                "assignment label {bad} out of range for {k} clusters"
            )));
        }
        Ok(Assignments { labels, k })
    }

    /// Reads a `K x M` indicator matrix; every column must sum to exactly one.
    pub fn from_indicator(z: &Array2<u8>) -> Result<Self> {
        let k = z.nrows();
        let mut labels = Vec::with_capacity(z.ncols());
        for (n, col) in z.columns().into_iter().enumerate() {
            let ones: Vec<usize> = col
                .iter()
                .enumerate()
                .filter(|(_, &e)| e != 0)
                .map(|(i, _)| i)
                .collect();
            if ones.len() != 1 || col[ones[0]] != 1 {
                return Err(DpmError::InvalidState(format!(
                    "column {n} is not a 1-of-K indicator"
                )));
            }
            labels.push(ones[0]);
        }
        Ok(Assignments { labels, k })
    }

    pub fn to_indicator(&self) -> Array2<u8> {
        let mut z = Array2::zeros((self.k, self.labels.len()));
        for (n, &l) in self.labels.iter().enumerate() {
            z[[l, n]] = 1;
        }
        z
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of samples assigned to each cluster.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// One broken invariant of a [`ModelState`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoClusters,
    StickOutOfRange { index: usize, value: f64 },
    ShapeMismatch { mu_rows: usize, v_len: usize },
    DimensionMismatch { mu_cols: usize, m0_len: usize },
    NonFiniteMean { row: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoClusters => write!(f, "state has no clusters"),
            Violation::StickOutOfRange { index, value } => {
                write!(f, "range violation: v[{index}] = {value} is outside (0, 1)")
            }
            Violation::ShapeMismatch { mu_rows, v_len } => write!(
                f,
                "shape mismatch: mu has {mu_rows} rows but v has {v_len} entries"
            ),
            Violation::DimensionMismatch { mu_cols, m0_len } => write!(
                f,
                "dimension mismatch: mu has {mu_cols} columns but m0 has {m0_len} entries"
            ),
            Violation::NonFiniteMean { row } => write!(f, "mu row {row} is not finite"),
        }
    }
}

/// Lists every violated state invariant; an empty list means the state is valid.
pub fn validate_state<T: Scalar>(state: &ModelState<T>, hp: &Hyperparams<T>) -> Vec<Violation> {
    let mut report = Vec::new();
    if state.v.is_empty() || state.mu.nrows() == 0 {
        report.push(Violation::NoClusters);
    }
    if state.mu.nrows() != state.v.len() {
        report.push(Violation::ShapeMismatch {
            mu_rows: state.mu.nrows(),
            v_len: state.v.len(),
        });
    }
    if state.mu.ncols() != hp.m0.len() {
        report.push(Violation::DimensionMismatch {
            mu_cols: state.mu.ncols(),
            m0_len: hp.m0.len(),
        });
    }
    for (index, &value) in state.v.iter().enumerate() {
        if !(value > T::zero() && value < T::one()) {
            report.push(Violation::StickOutOfRange {
                index,
                value: value.to_f64_lossy(),
            });
        }
    }
    for (row, mu_k) in state.mu.rows().into_iter().enumerate() {
        if mu_k.iter().any(|m| !m.is_finite()) {
            report.push(Violation::NonFiniteMean { row });
        }
    }
    report
}

pub(crate) fn ensure_valid<T: Scalar>(state: &ModelState<T>, hp: &Hyperparams<T>) -> Result<()> {
    let report = validate_state(state, hp);
    if report.is_empty() {
        Ok(())
    } else {
        let msg: Vec<String> = report.iter().map(|v| v.to_string()).collect();
        Err(DpmError::InvalidState(msg.join("; ")))
    }
}
