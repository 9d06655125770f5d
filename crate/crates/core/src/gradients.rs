//! Gradients of the variational log posteriors `ln q(mu)` and `ln q(v)`,
//! their minibatch averages, MAP cluster assignment and second-derivative
//! (concavity) diagnostics.
//!
//! Assignments are hard: `E[z_nk]` is 1 for the MAP cluster of sample `n`
//! and 0 elsewhere, so a sample's 1-of-K column is carried as its label.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{DpmError, Result};
use crate::model::{ensure_valid, ln_stick_weights, Assignments, Hyperparams, ModelState};
use crate::scalar::Scalar;

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(DpmError::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn check_stick<T: Scalar>(k: usize, v_k: T) -> Result<()> {
    if v_k > T::zero() && v_k < T::one() {
        Ok(())
    } else {
        Err(DpmError::StickOutOfRange {
            index: k,
            value: v_k.to_f64_lossy(),
        })
    }
}

fn check_batch<T: Scalar>(
    batch: &ArrayView2<'_, T>,
    assignments: &Assignments,
    state: &ModelState<T>,
    hp: &Hyperparams<T>,
) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(DpmError::Empty("minibatch"));
    }
    check_len("assignments", batch.nrows(), assignments.len())?;
    check_len(
        "assignment cluster count",
        state.k_active(),
        assignments.k(),
    )?;
    check_len("sample dimension", state.dim(), batch.ncols())?;
    ensure_valid(state, hp)
}

/// Per-sample gradient of `ln q(mu_k)`:
/// `(x_n - mu_k) z_nk / sigma^2 - lambda0 (mu_k - m0) / sigma^2`.
pub fn grad_mu_sample<T: Scalar>(
    x_n: ArrayView1<'_, T>,
    mu_k: ArrayView1<'_, T>,
    z_nk: bool,
    hp: &Hyperparams<T>,
) -> Result<Array1<T>> {
    check_len("mu_k", x_n.len(), mu_k.len())?;
    check_len("m0", x_n.len(), hp.m0.len())?;
    let inv_var = (hp.sigma * hp.sigma).recip();
    let z = if z_nk { T::one() } else { T::zero() };
    let mut out = Array1::zeros(x_n.len());
    Zip::from(&mut out)
        .and(&x_n)
        .and(&mu_k)
        .and(&hp.m0)
        .for_each(|o, &x, &m, &m0| {
            *o = (x - m) * inv_var * z - hp.lambda0 * (m - m0) * inv_var;
        });
    Ok(out)
}

/// Per-sample gradient of `ln q(v_k)` for a sample assigned to cluster `label`:
/// `z_nk / v_k - (sum_{j>k} z_nj) / (1 - v_k) - (a0 - 1) / (1 - v_k)`.
pub fn grad_v_sample<T: Scalar>(label: usize, k: usize, v_k: T, hp: &Hyperparams<T>) -> Result<T> {
    check_stick(k, v_k)?;
    let one = T::one();
    let own = if label == k { one } else { T::zero() };
    let later = if label > k { one } else { T::zero() };
    Ok(own / v_k - later / (one - v_k) - (hp.a0 - one) / (one - v_k))
}

/// Minibatch-averaged gradients plus the mean of squared per-sample gradients
/// (the diagonal empirical Fisher).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch<T> {
    pub g_mu: Array2<T>,
    pub g_v: Array1<T>,
    pub per_sample_sq_mu: Array2<T>,
    pub per_sample_sq_v: Array1<T>,
}

impl<T: Scalar> GradientBatch<T> {
    pub fn zeros(k: usize, dim: usize) -> Self {
        GradientBatch {
            g_mu: Array2::zeros((k, dim)),
            g_v: Array1::zeros(k),
            per_sample_sq_mu: Array2::zeros((k, dim)),
            per_sample_sq_v: Array1::zeros(k),
        }
    }
}

/// Averages the per-sample gradients of every cluster over the minibatch.
///
/// Each sample contributes to every cluster: the data term only to its own
/// cluster (and to `v` of earlier clusters), the prior terms to all of them.
/// The contributions are grouped by cluster so the cost is `O(M D + K D)`.
pub fn average_gradients<T: Scalar>(
    batch: ArrayView2<'_, T>,
    assignments: &Assignments,
    state: &ModelState<T>,
    hp: &Hyperparams<T>,
) -> Result<GradientBatch<T>> {
    check_batch(&batch, assignments, state, hp)?;
    let k = state.k_active();
    let dim = state.dim();
    let m = T::count(batch.nrows());
    let one = T::one();
    let inv_var = (hp.sigma * hp.sigma).recip();

    // prior part of the mu gradient, identical for every sample
    let mut prior_mu = Array2::zeros((k, dim));
    Zip::from(prior_mu.rows_mut())
        .and(state.mu.rows())
        .for_each(|mut p, mu_k| {
            Zip::from(&mut p)
                .and(&mu_k)
                .and(&hp.m0)
                .for_each(|p, &mu, &m0| {
                    *p = -hp.lambda0 * (mu - m0) * inv_var;
                });
        });

    let mut sum = Array2::<T>::zeros((k, dim));
    let mut sum_sq = Array2::<T>::zeros((k, dim));
    for (x, &c) in batch.rows().into_iter().zip(assignments.labels()) {
        let mu_c = state.mu.row(c);
        let prior_c = prior_mu.row(c);
        let mut s = sum.row_mut(c);
        let mut s2 = sum_sq.row_mut(c);
        for d in 0..dim {
            let g = (x[d] - mu_c[d]) * inv_var + prior_c[d];
            s[d] += g;
            s2[d] += g * g;
        }
    }

    let counts = assignments.counts();
    let mut out = GradientBatch::zeros(k, dim);
    // number of samples assigned to a cluster after k
    let mut later = batch.nrows();
    for kk in 0..k {
        let n_own = counts[kk];
        later -= n_own;
        let n_rest = T::count(batch.nrows() - n_own);
        for d in 0..dim {
            let p = prior_mu[[kk, d]];
            out.g_mu[[kk, d]] = (sum[[kk, d]] + n_rest * p) / m;
            out.per_sample_sq_mu[[kk, d]] = (sum_sq[[kk, d]] + n_rest * p * p) / m;
        }

        let v = state.v[kk];
        let prior_v = (hp.a0 - one) / (one - v);
        let own = one / v - prior_v;
        let after = -one / (one - v) - prior_v;
        let before = -prior_v;
        let n_own = T::count(n_own);
        let n_later = T::count(later);
        let n_before = m - n_own - n_later;
        out.g_v[kk] = (n_own * own + n_later * after + n_before * before) / m;
        out.per_sample_sq_v[kk] =
            (n_own * own * own + n_later * after * after + n_before * before * before) / m;
    }
    Ok(out)
}

/// Gradient of the whole-batch objective, where the data terms are summed
/// over the batch and each prior enters once:
/// `sum_n z_nk (x_n - mu_k) / sigma^2 - lambda0 (mu_k - m0) / sigma^2` and
/// `N_k / v_k - N_{>k} / (1 - v_k) - (a0 - 1) / (1 - v_k)`.
///
/// The closed-form coordinate-ascent updates are the zeros of this gradient.
/// The sticks are not range-checked so pre-clamp stationary points can be
/// evaluated.
pub fn batch_objective_gradients<T: Scalar>(
    batch: ArrayView2<'_, T>,
    assignments: &Assignments,
    mu: &Array2<T>,
    v: &Array1<T>,
    hp: &Hyperparams<T>,
) -> Result<(Array2<T>, Array1<T>)> {
    check_len("assignments", batch.nrows(), assignments.len())?;
    check_len("v", mu.nrows(), v.len())?;
    check_len("assignment cluster count", mu.nrows(), assignments.k())?;
    let inv_var = (hp.sigma * hp.sigma).recip();
    let one = T::one();
    let mut g_mu = Array2::<T>::zeros(mu.raw_dim());
    for (x, &c) in batch.rows().into_iter().zip(assignments.labels()) {
        let mut g = g_mu.row_mut(c);
        Zip::from(&mut g)
            .and(&x)
            .and(&mu.row(c))
            .for_each(|g, &x, &m| {
                *g += (x - m) * inv_var;
            });
    }
    for (mut g, mu_k) in g_mu.rows_mut().into_iter().zip(mu.rows()) {
        Zip::from(&mut g)
            .and(&mu_k)
            .and(&hp.m0)
            .for_each(|g, &m, &m0| {
                *g -= hp.lambda0 * (m - m0) * inv_var;
            });
    }
    let counts = assignments.counts();
    let mut later = assignments.len();
    let mut g_v = Array1::zeros(v.len());
    for k in 0..v.len() {
        later -= counts[k];
        g_v[k] = T::count(counts[k]) / v[k]
            - T::count(later) / (one - v[k])
            - (hp.a0 - one) / (one - v[k]);
    }
    Ok((g_mu, g_v))
}

/// Precomputed per-cluster constants of the MAP assignment score.
#[derive(Debug, Clone)]
pub struct AssignmentScorer<'a, T> {
    state: &'a ModelState<T>,
    // ln pi_k + D ln(1 / sigma)
    offset: Array1<T>,
    inv_two_var: T,
}

impl<'a, T: Scalar> AssignmentScorer<'a, T> {
    pub fn new(state: &'a ModelState<T>, hp: &Hyperparams<T>) -> Result<Self> {
        ensure_valid(state, hp)?;
        let ln_inv_sigma = T::count(state.dim()) * hp.sigma.recip().ln();
        let offset = ln_stick_weights(&state.v)? + ln_inv_sigma;
        Ok(AssignmentScorer {
            state,
            offset,
            inv_two_var: (T::lit(2.0) * hp.sigma * hp.sigma).recip(),
        })
    }

    /// `ln E[v_k] + sum_{l<k} ln(1 - E[v_l]) + D ln(1/sigma) - |x - E[mu_k]|^2 / (2 sigma^2)`.
    pub fn scores(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        Array1::from_iter(
            self.state
                .mu
                .rows()
                .into_iter()
                .zip(self.offset.iter())
                .map(|(mu_k, &off)| off - sq_dist(x, mu_k) * self.inv_two_var),
        )
    }

    /// Highest-scoring cluster; ties go to the lowest index.
    pub fn assign(&self, x: ArrayView1<'_, T>) -> usize {
        argmax_first(self.scores(x).iter().copied())
    }
}

pub(crate) fn sq_dist<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, d| acc + d)
}

pub(crate) fn argmax_first<T: Scalar>(values: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_val = T::neg_infinity();
    for (i, s) in values.enumerate() {
        if s > best_val {
            best = i;
            best_val = s;
        }
    }
    best
}

/// MAP cluster of a single sample under the current state.
pub fn map_assign<T: Scalar>(
    x_n: ArrayView1<'_, T>,
    state: &ModelState<T>,
    hp: &Hyperparams<T>,
) -> Result<usize> {
    check_len("sample dimension", state.dim(), x_n.len())?;
    Ok(AssignmentScorer::new(state, hp)?.assign(x_n))
}

/// MAP clusters for every row of `batch`.
pub fn map_assign_batch<T: Scalar>(
    batch: ArrayView2<'_, T>,
    state: &ModelState<T>,
    hp: &Hyperparams<T>,
) -> Result<Assignments> {
    check_len("sample dimension", state.dim(), batch.ncols())?;
    let scorer = AssignmentScorer::new(state, hp)?;
    let labels = batch.axis_iter(Axis(0)).map(|x| scorer.assign(x)).collect();
    Assignments::new(labels, state.k_active())
}

/// Second derivative of the per-sample `ln q(mu_k)` (same in every dimension).
pub fn hessian_mu<T: Scalar>(z_nk: bool, hp: &Hyperparams<T>) -> T {
    let var = hp.sigma * hp.sigma;
    let z = if z_nk { T::one() } else { T::zero() };
    -z / var - hp.lambda0 / var
}

/// Second derivative of the per-sample `ln q(v_k)`:
/// `-z_nk / v_k^2 - (sum_{j>k} z_nj + a0 - 1) / (1 - v_k)^2`.
pub fn hessian_v<T: Scalar>(label: usize, k: usize, v_k: T, hp: &Hyperparams<T>) -> Result<T> {
    check_stick(k, v_k)?;
    let one = T::one();
    let own = if label == k { one } else { T::zero() };
    let later = if label > k { one } else { T::zero() };
    let rest = one - v_k;
    Ok(-own / (v_k * v_k) - (later + hp.a0 - one) / (rest * rest))
}

/// Whether every per-sample second derivative in the batch is `<= 0`, per cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcavityReport {
    pub mu_concave: Vec<bool>,
    pub v_concave: Vec<bool>,
}

impl ConcavityReport {
    pub fn all_concave(&self) -> bool {
        self.mu_concave.iter().chain(&self.v_concave).all(|&c| c)
    }

    /// Clusters whose `ln q(v_k)` has a positive second derivative somewhere in the batch.
    pub fn non_concave_v(&self) -> Vec<usize> {
        self.v_concave
            .iter()
            .enumerate()
            .filter(|(_, &c)| !c)
            .map(|(k, _)| k)
            .collect()
    }
}

pub fn concavity_report<T: Scalar>(
    batch: ArrayView2<'_, T>,
    assignments: &Assignments,
    state: &ModelState<T>,
    hp: &Hyperparams<T>,
) -> Result<ConcavityReport> {
    check_batch(&batch, assignments, state, hp)?;
    let k = state.k_active();
    let mut mu_concave = vec![true; k];
    let mut v_concave = vec![true; k];
    for &label in assignments.labels() {
        for kk in 0..k {
            if hessian_mu(label == kk, hp) > T::zero() {
                mu_concave[kk] = false;
            }
            if hessian_v(label, kk, state.v[kk], hp)? > T::zero() {
                v_concave[kk] = false;
            }
        }
    }
    Ok(ConcavityReport {
        mu_concave,
        v_concave,
    })
}
