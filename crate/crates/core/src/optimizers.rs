//! Stochastic ascent update rules for `E[mu]` and `E[v]`.
//!
//! * constant stepsize: `theta <- theta + eta * g`
//! * momentum: `gamma <- alpha * gamma + eta * g`, `theta <- theta + gamma`
//! * Fisher-adaptive: `theta <- theta + eta * g / (F + eps)` where `F` is the
//!   minibatch mean of squared per-sample gradients (a diagonal empirical
//!   Fisher, so the inverse is elementwise)
//!
//! The Barzilai-Borwein stepsize is computed alongside as a diagnostic only.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

use crate::error::DpmError;
use crate::gradients::GradientBatch;
use crate::model::{clamp_v, Hyperparams, ModelState};
use crate::scalar::Scalar;

/// Default Fisher regularizer.
pub const FISHER_EPSILON: f64 = 1e-8;

/// Learner selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Optimizer {
    /// Constant stepsize stochastic gradient ascent.
    Sga,
    Momentum,
    Fisher,
    /// Closed-form coordinate ascent baseline.
    Mm,
}

impl Optimizer {
    pub const ALL: [Optimizer; 4] = [
        Optimizer::Sga,
        Optimizer::Momentum,
        Optimizer::Fisher,
        Optimizer::Mm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Sga => "sga",
            Optimizer::Momentum => "momentum",
            Optimizer::Fisher => "fisher",
            Optimizer::Mm => "mm",
        }
    }

    /// The gradient rule behind a stochastic learner; `None` for `mm`.
    pub fn ascent_rule(self) -> Option<AscentRule> {
        match self {
            Optimizer::Sga => Some(AscentRule::Constant),
            Optimizer::Momentum => Some(AscentRule::Momentum),
            Optimizer::Fisher => Some(AscentRule::Fisher),
            Optimizer::Mm => None,
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Optimizer {
    type Err = DpmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Optimizer::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                DpmError::InvalidConfig(format!(
                    "unknown optimizer `{s}` (expected sga, momentum, fisher or mm)"
                ))
            })
    }
}

/// Which parameter block an update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Mu,
    V,
    Both,
}

impl Block {
    fn mu(self) -> bool {
        matches!(self, Block::Mu | Block::Both)
    }

    fn v(self) -> bool {
        matches!(self, Block::V | Block::Both)
    }
}

/// Parameters and gradients of one iteration, kept for the BB diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub mu: Array2<T>,
    pub v: Array1<T>,
    pub g_mu: Array2<T>,
    pub g_v: Array1<T>,
}

/// Momentum buffers, Fisher regularizer and the previous BB snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub gamma_mu: Array2<T>,
    pub gamma_v: Array1<T>,
    pub epsilon: T,
    pub prev: Option<Snapshot<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(k: usize, dim: usize) -> Self {
        OptimizerState {
            gamma_mu: Array2::zeros((k, dim)),
            gamma_v: Array1::zeros(k),
            epsilon: T::lit(FISHER_EPSILON),
            prev: None,
        }
    }

    pub fn for_state(state: &ModelState<T>) -> Self {
        Self::new(state.k_active(), state.dim())
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Keeps the buffers of the clusters in `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> Self {
        OptimizerState {
            gamma_mu: self.gamma_mu.select(Axis(0), keep),
            gamma_v: self.gamma_v.select(Axis(0), keep),
            epsilon: self.epsilon,
            prev: self.prev.as_ref().map(|s| Snapshot {
                mu: s.mu.select(Axis(0), keep),
                v: s.v.select(Axis(0), keep),
                g_mu: s.g_mu.select(Axis(0), keep),
                g_v: s.g_v.select(Axis(0), keep),
            }),
        }
    }

    fn matches(&self, state: &ModelState<T>) -> bool {
        self.gamma_mu.dim() == state.mu.dim() && self.gamma_v.len() == state.v.len()
    }

    /// Stores the current parameters and gradients and returns the BB
    /// stepsize against the previous snapshot.
    pub fn record_bb(
        &mut self,
        state: &ModelState<T>,
        g_mu: &Array2<T>,
        g_v: &Array1<T>,
    ) -> BbStepsize<T> {
        let current = Snapshot {
            mu: state.mu.clone(),
            v: state.v.clone(),
            g_mu: g_mu.clone(),
            g_v: g_v.clone(),
        };
        let out = match &self.prev {
            Some(prev) if prev.mu.dim() == current.mu.dim() => bb_between(prev, &current),
            _ => BbStepsize::default(),
        };
        self.prev = Some(current);
        out
    }
}

/// One of the three stochastic ascent rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AscentRule {
    Constant,
    Momentum,
    Fisher,
}

impl AscentRule {
    /// Applies the rule to the selected block, updating `opt` in place.
    pub fn apply<T: Scalar>(
        self,
        block: Block,
        state: &ModelState<T>,
        grads: &GradientBatch<T>,
        opt: &mut OptimizerState<T>,
        hp: &Hyperparams<T>,
    ) -> ModelState<T> {
        assert_eq!(state.mu.dim(), grads.g_mu.dim(), "gradient shape");
        assert_eq!(state.v.len(), grads.g_v.len(), "gradient shape");
        if !opt.matches(state) {
            *opt = OptimizerState::for_state(state).with_epsilon(opt.epsilon);
        }
        let eta = hp.eta;
        let mut next = state.clone();
        match self {
            AscentRule::Constant => {
                if block.mu() {
                    Zip::from(&mut next.mu)
                        .and(&grads.g_mu)
                        .for_each(|p, &g| *p += eta * g);
                }
                if block.v() {
                    Zip::from(&mut next.v)
                        .and(&grads.g_v)
                        .for_each(|p, &g| *p += eta * g);
                }
            }
            AscentRule::Momentum => {
                let alpha = hp.alpha;
                if block.mu() {
                    Zip::from(&mut next.mu)
                        .and(&mut opt.gamma_mu)
                        .and(&grads.g_mu)
                        .for_each(|p, gamma, &g| {
                            *gamma = alpha * *gamma + eta * g;
                            *p += *gamma;
                        });
                }
                if block.v() {
                    Zip::from(&mut next.v)
                        .and(&mut opt.gamma_v)
                        .and(&grads.g_v)
                        .for_each(|p, gamma, &g| {
                            *gamma = alpha * *gamma + eta * g;
                            *p += *gamma;
                        });
                }
            }
            AscentRule::Fisher => {
                let eps = opt.epsilon;
                if block.mu() {
                    Zip::from(&mut next.mu)
                        .and(&grads.g_mu)
                        .and(&grads.per_sample_sq_mu)
                        .for_each(|p, &g, &f| *p += eta * g / (f + eps));
                }
                if block.v() {
                    Zip::from(&mut next.v)
                        .and(&grads.g_v)
                        .and(&grads.per_sample_sq_v)
                        .for_each(|p, &g, &f| *p += eta * g / (f + eps));
                }
            }
        }
        next.v.mapv_inplace(clamp_v);
        next
    }
}

/// `E[theta] <- E[theta] + eta * g` on both blocks.
pub fn step_constant<T: Scalar>(
    state: &ModelState<T>,
    grads: &GradientBatch<T>,
    hp: &Hyperparams<T>,
) -> ModelState<T> {
    let mut scratch = OptimizerState::for_state(state);
    AscentRule::Constant.apply(Block::Both, state, grads, &mut scratch, hp)
}

/// Momentum step on both blocks.
pub fn step_momentum<T: Scalar>(
    state: &ModelState<T>,
    grads: &GradientBatch<T>,
    opt: &OptimizerState<T>,
    hp: &Hyperparams<T>,
) -> (ModelState<T>, OptimizerState<T>) {
    let mut opt = opt.clone();
    let next = AscentRule::Momentum.apply(Block::Both, state, grads, &mut opt, hp);
    (next, opt)
}

/// Fisher-preconditioned step on both blocks.
pub fn step_fisher<T: Scalar>(
    state: &ModelState<T>,
    grads: &GradientBatch<T>,
    opt: &OptimizerState<T>,
    hp: &Hyperparams<T>,
) -> (ModelState<T>, OptimizerState<T>) {
    let mut opt = opt.clone();
    let next = AscentRule::Fisher.apply(Block::Both, state, grads, &mut opt, hp);
    (next, opt)
}

/// `|s|^2 / (s . y)` with `s = x_t - x_{t-1}` and `y = g_t - g_{t-1}`.
///
/// Returns `None` when `s . y` is zero (including `s = 0` or `y = 0`) or the
/// inputs have different lengths.
pub fn bb_stepsize<T: Scalar>(
    prev_params: ArrayView1<'_, T>,
    params: ArrayView1<'_, T>,
    prev_grads: ArrayView1<'_, T>,
    grads: ArrayView1<'_, T>,
) -> Option<T> {
    let n = params.len();
    if prev_params.len() != n || prev_grads.len() != n || grads.len() != n {
        return None;
    }
    let mut ss = T::zero();
    let mut sy = T::zero();
    for i in 0..n {
        let s = params[i] - prev_params[i];
        let y = grads[i] - prev_grads[i];
        ss += s * s;
        sy += s * y;
    }
    if sy == T::zero() || !sy.is_finite() {
        None
    } else {
        Some(ss / sy)
    }
}

/// BB stepsize per parameter block and over all parameters jointly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbStepsize<T> {
    pub mu: Option<T>,
    pub v: Option<T>,
    pub joint: Option<T>,
}

impl<T> Default for BbStepsize<T> {
    fn default() -> Self {
        BbStepsize {
            mu: None,
            v: None,
            joint: None,
        }
    }
}

fn flat<T: Scalar>(mu: &Array2<T>, v: &Array1<T>) -> Array1<T> {
    mu.iter().chain(v.iter()).copied().collect()
}

fn bb_between<T: Scalar>(prev: &Snapshot<T>, cur: &Snapshot<T>) -> BbStepsize<T> {
    let flat_mu = |a: &Array2<T>| a.iter().copied().collect::<Array1<T>>();
    BbStepsize {
        mu: bb_stepsize(
            flat_mu(&prev.mu).view(),
            flat_mu(&cur.mu).view(),
            flat_mu(&prev.g_mu).view(),
            flat_mu(&cur.g_mu).view(),
        ),
        v: bb_stepsize(prev.v.view(), cur.v.view(), prev.g_v.view(), cur.g_v.view()),
        joint: bb_stepsize(
            flat(&prev.mu, &prev.v).view(),
            flat(&cur.mu, &cur.v).view(),
            flat(&prev.g_mu, &prev.g_v).view(),
            flat(&cur.g_mu, &cur.g_v).view(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::V_CLAMP;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hp() -> Hyperparams<f64> {
        Hyperparams::for_dataset(10, 2)
    }

    fn grads_from(g_mu: Array2<f64>, g_v: Array1<f64>) -> GradientBatch<f64> {
        GradientBatch {
            per_sample_sq_mu: g_mu.mapv(|g| g * g),
            per_sample_sq_v: g_v.mapv(|g| g * g),
            g_mu,
            g_v,
        }
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (ModelState<f64>, GradientBatch<f64>) {
        let k = rng.random_range(1..6);
        let mu = Array2::from_shape_fn((k, 2), |_| rng.random_range(-5.0..5.0));
        let v = Array1::from_shape_fn(k, |_| rng.random_range(0.01..0.99));
        let g_mu = Array2::from_shape_fn((k, 2), |_| rng.random_range(-2.0..2.0));
        let g_v = Array1::from_shape_fn(k, |_| rng.random_range(-2.0..2.0));
        (ModelState::new(mu, v).unwrap(), grads_from(g_mu, g_v))
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let state = ModelState::new(array![[1.0, 2.0]], array![0.3]).unwrap();
        let grads = GradientBatch::zeros(1, 2);
        assert_eq!(step_constant(&state, &grads, &hp()), state);
    }

    #[test]
    fn constant_step_is_one_multiply_add() {
        let state = ModelState::new(array![[0.0, 0.0]], array![0.5]).unwrap();
        let grads = grads_from(array![[0.0, 0.0]], array![1.0]);
        let next = step_constant(&state, &grads, &hp());
        assert!((next.v[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn overshoot_is_clamped() {
        let state = ModelState::new(array![[0.0, 0.0]], array![0.5]).unwrap();
        let grads = grads_from(array![[0.0, 0.0]], array![5.5]);
        let next = step_constant(&state, &grads, &hp());
        assert_eq!(next.v[0], 1.0 - V_CLAMP);
    }

    #[test]
    fn momentum_without_alpha_is_constant_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut h = hp();
        h.alpha = 0.0;
        for _ in 0..100 {
            let (state, grads) = random_case(&mut rng);
            let mut opt = OptimizerState::for_state(&state);
            opt.gamma_mu.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            opt.gamma_v.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            let (a, _) = step_momentum(&state, &grads, &opt, &h);
            let b = step_constant(&state, &grads, &h);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn first_momentum_step_equals_constant_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (state, grads) = random_case(&mut rng);
        let opt = OptimizerState::for_state(&state);
        let (a, next_opt) = step_momentum(&state, &grads, &opt, &hp());
        assert_eq!(a, step_constant(&state, &grads, &hp()));
        assert_eq!(next_opt.gamma_v, grads.g_v.mapv(|g| 0.1 * g));
    }

    #[test]
    fn momentum_displacement_approaches_geometric_limit() {
        // large truncation of the geometric series: eta * g / (1 - alpha)
        let mut h = hp();
        h.alpha = 0.9;
        h.eta = 0.01;
        let g = 0.37;
        let mut state = ModelState::new(array![[0.0, 0.0]], array![0.5]).unwrap();
        let grads = grads_from(array![[g, -g]], array![0.0]);
        let mut opt = OptimizerState::for_state(&state);
        let mut last = 0.0;
        for _ in 0..200 {
            let before = state.mu[[0, 0]];
            let (s, o) = step_momentum(&state, &grads, &opt, &h);
            state = s;
            opt = o;
            last = state.mu[[0, 0]] - before;
        }
        let limit = h.eta * g / (1.0 - h.alpha);
        assert!((limit - 10.0 * h.eta * g).abs() < 1e-12);
        assert!((last - limit).abs() < 1e-6, "{last} vs {limit}");
    }

    #[test]
    fn fisher_step_on_identical_samples_is_eta_over_g() {
        let mut h = hp();
        h.eta = 0.05;
        let state = ModelState::new(array![[0.0, 0.0]], array![0.5]).unwrap();
        let grads = grads_from(array![[2.0, -0.5]], array![4.0]);
        let opt = OptimizerState::for_state(&state).with_epsilon(0.0);
        let (next, _) = step_fisher(&state, &grads, &opt, &h);
        assert!((next.mu[[0, 0]] - 0.05 / 2.0).abs() < 1e-15);
        assert!((next.mu[[0, 1]] + 0.05 / 0.5).abs() < 1e-15);
        assert!((next.v[0] - (0.5 + 0.05 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn fisher_step_with_cancelling_samples_is_zero() {
        let state = ModelState::new(array![[1.0, 1.0]], array![0.5]).unwrap();
        let grads = GradientBatch {
            g_mu: array![[0.0, 0.0]],
            g_v: array![0.0],
            per_sample_sq_mu: array![[9.0, 9.0]],
            per_sample_sq_v: array![1.0],
        };
        let (next, _) = step_fisher(&state, &grads, &OptimizerState::for_state(&state), &hp());
        assert_eq!(next, state);
    }

    #[test]
    fn fisher_keeps_empty_clusters_finite() {
        let state = ModelState::new(array![[1.0, 1.0]], array![0.5]).unwrap();
        let grads = GradientBatch::zeros(1, 2);
        let (next, _) = step_fisher(&state, &grads, &OptimizerState::for_state(&state), &hp());
        assert_eq!(next, state);
    }

    #[test]
    fn every_rule_keeps_sticks_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = hp();
        for _ in 0..50 {
            let (state, mut grads) = random_case(&mut rng);
            grads.g_v.mapv_inplace(|g| g * 100.0);
            let opt = OptimizerState::for_state(&state);
            for next in [
                step_constant(&state, &grads, &h),
                step_momentum(&state, &grads, &opt, &h).0,
                step_fisher(&state, &grads, &opt, &h).0,
            ] {
                assert!(next.v.iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (state, grads) = random_case(&mut rng);
        let opt = OptimizerState::for_state(&state);
        assert_eq!(
            step_fisher(&state, &grads, &opt, &hp()),
            step_fisher(&state, &grads, &opt, &hp())
        );
        assert_eq!(
            step_momentum(&state, &grads, &opt, &hp()),
            step_momentum(&state, &grads, &opt, &hp())
        );
    }

    #[test]
    fn block_selection_touches_only_that_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (state, grads) = random_case(&mut rng);
        let mut opt = OptimizerState::for_state(&state);
        let mu_only = AscentRule::Fisher.apply(Block::Mu, &state, &grads, &mut opt, &hp());
        assert_eq!(mu_only.v, state.v);
        let v_only = AscentRule::Momentum.apply(Block::V, &state, &grads, &mut opt, &hp());
        assert_eq!(v_only.mu, state.mu);
        assert!(opt.gamma_mu.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn bb_on_a_quadratic() {
        // f(x) = -a x^2 / 2, gradient -a x
        let a = 2.5;
        let xs = [array![1.0, -2.0], array![0.4, 0.7]];
        let gs: Vec<Array1<f64>> = xs.iter().map(|x| x.mapv(|e| -a * e)).collect();
        let eta = bb_stepsize(xs[0].view(), xs[1].view(), gs[0].view(), gs[1].view()).unwrap();
        assert!((eta.abs() - 1.0 / a).abs() < 1e-12);
    }

    #[test]
    fn bb_undefined_cases() {
        let x = array![1.0, 2.0];
        let g0 = array![0.5, 0.5];
        let g1 = array![0.1, 0.3];
        assert_eq!(bb_stepsize(x.view(), x.view(), g0.view(), g1.view()), None);
        let y = array![2.0, 0.0];
        assert_eq!(bb_stepsize(x.view(), y.view(), g0.view(), g0.view()), None);
    }

    #[test]
    fn optimizer_names_round_trip() {
        for o in Optimizer::ALL {
            assert_eq!(o.as_str().parse::<Optimizer>().unwrap(), o);
        }
        assert!("adam".parse::<Optimizer>().is_err());
    }
}
