//! Closed-form coordinate ascent baseline.
//!
//! The mean and stick updates are the zeros of the whole-batch gradients
//! (see [`batch_objective_gradients`](crate::gradients::batch_objective_gradients)):
//!
//! * `mu_k = (sum_{n in k} x_n + lambda0 m0) / (N_k + lambda0)`
//! * `v_k = N_k / (N_k + N_{>k} + a0 - 1)`

use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::error::{DpmError, Result};
use crate::gradients::map_assign_batch;
use crate::model::{clamp_v, Assignments, Hyperparams, ModelState, V_CLAMP};
use crate::optimizers::Optimizer;
use crate::scalar::Scalar;
use crate::trainer::{train, TrainConfig, TrainOutcome};

/// Per-cluster sums of the hard assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T> {
    /// `N_k`
    pub n_k: Array1<T>,
    /// `sum_n z_nk x_n`
    pub sum_x_k: Array2<T>,
    /// `N_{>k} = sum_{j>k} N_j`
    pub n_gt_k: Array1<T>,
}

pub fn accumulate_stats<T: Scalar>(
    batch: ArrayView2<'_, T>,
    assignments: &Assignments,
) -> Result<SufficientStats<T>> {
    if assignments.len() != batch.nrows() {
        return Err(DpmError::DimensionMismatch {
            what: "assignments",
            expected: batch.nrows(),
            found: assignments.len(),
        });
    }
    let k = assignments.k();
    let mut n_k = Array1::<T>::zeros(k);
    let mut sum_x_k = Array2::<T>::zeros((k, batch.ncols()));
    for (x, &c) in batch.rows().into_iter().zip(assignments.labels()) {
        n_k[c] += T::one();
        let mut row = sum_x_k.row_mut(c);
        row += &x;
    }
    let mut n_gt_k = Array1::<T>::zeros(k);
    let mut acc = T::zero();
    for kk in (0..k).rev() {
        n_gt_k[kk] = acc;
        acc += n_k[kk];
    }
    Ok(SufficientStats {
        n_k,
        sum_x_k,
        n_gt_k,
    })
}

/// Closed-form means. `flagged` lists clusters whose denominator vanished
/// (empty cluster with `lambda0 = 0`); those keep their previous mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MuUpdate<T> {
    pub mu: Array2<T>,
    pub flagged: Vec<usize>,
}

pub fn mm_update_mu<T: Scalar>(
    stats: &SufficientStats<T>,
    hp: &Hyperparams<T>,
    previous: &Array2<T>,
) -> Result<MuUpdate<T>> {
    if previous.dim() != stats.sum_x_k.dim() {
        return Err(DpmError::DimensionMismatch {
            what: "previous means",
            expected: stats.sum_x_k.nrows(),
            found: previous.nrows(),
        });
    }
    hp.check_dim(stats.sum_x_k.ncols())?;
    let mut mu = previous.clone();
    let mut flagged = Vec::new();
    for (k, mut row) in mu.rows_mut().into_iter().enumerate() {
        let denom = stats.n_k[k] + hp.lambda0;
        if denom == T::zero() {
            flagged.push(k);
            continue;
        }
        Zip::from(&mut row)
            .and(&stats.sum_x_k.row(k))
            .and(&hp.m0)
            .for_each(|m, &s, &m0| *m = (s + hp.lambda0 * m0) / denom);
    }
    Ok(MuUpdate { mu, flagged })
}

/// Closed-form sticks, before and after clamping. `flagged` lists clusters
/// whose denominator was not positive (only possible with `a0 < 1`); those
/// are set to the lower clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct VUpdate<T> {
    pub v: Array1<T>,
    pub unclamped: Array1<T>,
    pub flagged: Vec<usize>,
}

pub fn mm_update_v<T: Scalar>(stats: &SufficientStats<T>, hp: &Hyperparams<T>) -> VUpdate<T> {
    let one = T::one();
    let k = stats.n_k.len();
    let mut unclamped = Array1::zeros(k);
    let mut v = Array1::zeros(k);
    let mut flagged = Vec::new();
    for kk in 0..k {
        let denom = stats.n_k[kk] + stats.n_gt_k[kk] + hp.a0 - one;
        if denom <= T::zero() {
            flagged.push(kk);
            unclamped[kk] = T::nan();
            v[kk] = T::lit(V_CLAMP);
        } else {
            unclamped[kk] = stats.n_k[kk] / denom;
            v[kk] = clamp_v(unclamped[kk]);
        }
    }
    VUpdate {
        v,
        unclamped,
        flagged,
    }
}

/// One coordinate-ascent sweep in the trainer's order: means from the
/// previous assignments, then MAP assignments, then sticks.
pub fn mm_step<T: Scalar>(
    batch: ArrayView2<'_, T>,
    previous: &Assignments,
    state: &ModelState<T>,
    hp: &Hyperparams<T>,
) -> Result<(ModelState<T>, Assignments)> {
    let stats = accumulate_stats(batch, previous)?;
    let mu = mm_update_mu(&stats, hp, &state.mu)?.mu;
    let mut next = ModelState {
        mu,
        v: state.v.clone(),
    };
    let z = map_assign_batch(batch, &next, hp)?;
    let stats = accumulate_stats(batch, &z)?;
    next.v = mm_update_v(&stats, hp).v;
    Ok((next, z))
}

/// Trains with the closed-form learner; same contract as [`train`].
pub fn mm_train<T: Scalar>(
    data: ArrayView2<'_, T>,
    hp: &Hyperparams<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let cfg = TrainConfig {
        optimizer: Optimizer::Mm,
        ..cfg.clone()
    };
    train(data, hp, &cfg)
}
