//! Lower bound used to monitor convergence.
//!
//! The seven expectation terms are evaluated with hard assignments and
//! without the observation scale or any additive constant, so the total is
//! only meaningful as a trend across iterations. Because `E[ln q(z)]`,
//! `E[ln q(v)]` and `E[ln q(mu)]` repeat terms of the model expectations,
//! the total reduces to `-(lp_x + lp_zv)`; the terms are still computed
//! separately.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{DpmError, Result};
use crate::gradients::sq_dist;
use crate::model::{ensure_valid, ln_stick_weights, Assignments, Hyperparams, ModelState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ElboBreakdown<T> {
    /// `E[ln p(x | z, mu)]`
    pub lp_x: T,
    /// `E[ln p(mu)]`
    pub lp_mu: T,
    /// `E[ln p(z | v)]`
    pub lp_zv: T,
    /// `E[ln p(v)]`
    pub lp_v: T,
    /// `E[ln q(z)]`
    pub lq_z: T,
    /// `E[ln q(v)]`
    pub lq_v: T,
    /// `E[ln q(mu)]`
    pub lq_mu: T,
    pub total: T,
}

impl<T: Scalar> ElboBreakdown<T> {
    pub fn from_terms(lp_x: T, lp_mu: T, lp_zv: T, lp_v: T, lq_z: T, lq_v: T, lq_mu: T) -> Self {
        ElboBreakdown {
            lp_x,
            lp_mu,
            lp_zv,
            lp_v,
            lq_z,
            lq_v,
            lq_mu,
            total: lp_x + lp_mu + lp_zv + lp_v - lq_z - lq_v - lq_mu,
        }
    }
}

/// Evaluates the bound on `batch` under hard `assignments`.
pub fn elbo<T: Scalar>(
    batch: ArrayView2<'_, T>,
    assignments: &Assignments,
    state: &ModelState<T>,
    hp: &Hyperparams<T>,
) -> Result<ElboBreakdown<T>> {
    if batch.nrows() == 0 {
        return Err(DpmError::Empty("batch"));
    }
    if assignments.len() != batch.nrows() || assignments.k() != state.k_active() {
        return Err(DpmError::DimensionMismatch {
            what: "assignments",
            expected: batch.nrows(),
            found: assignments.len(),
        });
    }
    if batch.ncols() != state.dim() {
        return Err(DpmError::DimensionMismatch {
            what: "sample dimension",
            expected: state.dim(),
            found: batch.ncols(),
        });
    }
    ensure_valid(state, hp)?;

    let half = T::lit(0.5);
    let one = T::one();

    // sum_n -1/2 |x_n - mu_{z_n}|^2
    let quad: T = batch
        .rows()
        .into_iter()
        .zip(assignments.labels())
        .map(|(x, &c)| -half * sq_dist(x, state.mu.row(c)))
        .fold(T::zero(), |a, b| a + b);

    // sum_n [ln v_{z_n} + sum_{l < z_n} ln(1 - v_l)] = sum_k N_k ln pi_k
    let ln_pi = ln_stick_weights(&state.v)?;
    let stick: T = assignments
        .counts()
        .iter()
        .zip(ln_pi.iter())
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &l)| T::count(n) * l)
        .fold(T::zero(), |a, b| a + b);

    let prior_mu: T = state
        .mu
        .rows()
        .into_iter()
        .map(|mu_k| -half * hp.lambda0 * sq_dist(mu_k, hp.m0.view()))
        .fold(T::zero(), |a, b| a + b);

    let prior_v: T = state
        .v
        .iter()
        .map(|&v| (hp.a0 - one) * (-v).ln_1p())
        .fold(T::zero(), |a, b| a + b);

    Ok(ElboBreakdown::from_terms(
        quad,
        prior_mu,
        stick,
        prior_v,
        quad + stick,
        prior_v + stick,
        quad + prior_mu,
    ))
}
