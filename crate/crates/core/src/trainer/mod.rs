//! End-to-end training loop.
//!
//! Each iteration draws a minibatch, updates `E[mu]` from the assignments
//! the batch had under the incoming state, recomputes the MAP assignments,
//! updates `E[v]`, evaluates the bound, prunes clusters whose stick fell
//! below the threshold, and reorders the survivors by descending stick length.

mod kmeans;

pub use kmeans::{inertia, kmeans_fit, kmeans_init, KMeansFit, INERTIA_TOL, MAX_LLOYD_ITERS};

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elbo::{elbo, ElboBreakdown};
use crate::error::{DpmError, Result};
use crate::gradients::{average_gradients, map_assign_batch};
use crate::mm::{accumulate_stats, mm_update_mu, mm_update_v};
use crate::model::{clamp_v, ensure_valid, Assignments, Hyperparams, ModelState};
use crate::optimizers::{BbStepsize, Block, Optimizer, OptimizerState};
use crate::scalar::Scalar;

/// Default size of the fixed batch used by the closed-form learner.
pub const MM_SUBSET: usize = 5000;
/// Samples per expected class in the default minibatch.
pub const SAMPLES_PER_CLASS: usize = 20;

/// How the Beta prior on the sticks enters the averaged minibatch gradient
/// of the stochastic learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StickPrior {
    /// `a0` describes the whole dataset; each of the `N` per-sample
    /// gradients carries `1/N` of its `a0 - 1` term, so the averaged
    /// gradient estimates the full-data gradient divided by `N`.
    #[default]
    Dataset,
    /// Every per-sample gradient carries the full `a0 - 1` term.
    Sample,
}

impl StickPrior {
    pub fn as_str(self) -> &'static str {
        match self {
            StickPrior::Dataset => "dataset",
            StickPrior::Sample => "sample",
        }
    }

    /// Concentration to use in per-sample gradients for a dataset of `n` rows.
    pub fn per_sample_a0<T: Scalar>(self, a0: T, n: usize) -> T {
        match self {
            StickPrior::Dataset => T::one() + (a0 - T::one()) / T::count(n),
            StickPrior::Sample => a0,
        }
    }
}

impl std::fmt::Display for StickPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StickPrior {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dataset" => Ok(StickPrior::Dataset),
            "sample" => Ok(StickPrior::Sample),
            other => Err(format!(
                "unknown stick prior {other:?}; expected dataset or sample"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Evaluate the bound on the whole dataset every this many iterations.
    pub full_elbo_every: Option<usize>,
    pub reorder: bool,
    /// Size of the fixed random subset used by `mm` (default `min(N, 5000)`).
    pub mm_subset: Option<usize>,
    /// Relative bound change regarded as a plateau.
    pub tol: f64,
    /// Consecutive plateau iterations before stopping.
    pub patience: usize,
    pub stick_prior: StickPrior,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 60,
            optimizer: Optimizer::Fisher,
            seed: 0,
            full_elbo_every: None,
            reorder: true,
            mm_subset: None,
            tol: 1e-5,
            patience: 5,
            stick_prior: StickPrior::Dataset,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(DpmError::InvalidConfig(
                "max_iters must be at least 1".into(),
            ));
        }
        if self.full_elbo_every == Some(0) {
            return Err(DpmError::InvalidConfig(
                "full_elbo_every must be positive".into(),
            ));
        }
        if self.mm_subset == Some(0) {
            return Err(DpmError::InvalidConfig("mm_subset must be positive".into()));
        }
        Ok(())
    }
}

/// `min(N, 20 * expected_classes)`.
pub fn default_minibatch(n: usize, expected_classes: usize) -> usize {
    n.min(SAMPLES_PER_CLASS * expected_classes.max(1)).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T> {
    /// 1-based iteration index.
    pub iter: usize,
    /// Bound on the iteration's batch.
    pub elbo: ElboBreakdown<T>,
    /// Bound on the whole dataset, when requested for this iteration.
    pub full_elbo: Option<ElboBreakdown<T>>,
    /// Clusters retained after pruning.
    pub k_active: usize,
    pub time_ms: f64,
    pub bb: BbStepsize<T>,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace<T> {
    pub records: Vec<TraceRecord<T>>,
}

impl<T: Scalar> TrainingTrace<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_time_ms(&self) -> f64 {
        self.records.iter().map(|r| r.time_ms).sum()
    }

    pub fn k_active(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.k_active).collect()
    }

    pub fn totals(&self) -> Vec<T> {
        self.records.iter().map(|r| r.elbo.total).collect()
    }

    /// Whole-dataset totals, for iterations where they were computed.
    pub fn full_totals(&self) -> Vec<Option<T>> {
        self.records
            .iter()
            .map(|r| r.full_elbo.map(|e| e.total))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub state: ModelState<T>,
    pub trace: TrainingTrace<T>,
    /// MAP assignment of every dataset row under the final state.
    pub labels: Vec<usize>,
    /// True when the bound plateaued before the iteration budget ran out.
    pub converged: bool,
}

/// `m` distinct indices drawn uniformly without replacement from `0..n`.
pub fn sample_minibatch<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(DpmError::InvalidConfig(
            "minibatch size must be at least 1".into(),
        ));
    }
    if m > n {
        return Err(DpmError::TooMany {
            requested: m,
            available: n,
        });
    }
    Ok(index::sample(rng, n, m).into_vec())
}

/// Drops every cluster with `E[v_k] < THR` along with its mean and optimizer
/// buffers. The cluster with the largest stick always survives.
pub fn prune<T: Scalar>(
    state: &ModelState<T>,
    opt: &OptimizerState<T>,
    hp: &Hyperparams<T>,
) -> (ModelState<T>, OptimizerState<T>) {
    let keep = surviving(&state.v, hp.thr);
    if keep.len() == state.k_active() {
        return (state.clone(), opt.clone());
    }
    (state.select(&keep), opt.select(&keep))
}

fn surviving<T: Scalar>(v: &Array1<T>, thr: T) -> Vec<usize> {
    let protected = crate::gradients::argmax_first(v.iter().copied());
    (0..v.len())
        .filter(|&k| k == protected || v[k] >= thr)
        .collect()
}

/// Stable sort of the clusters by descending stick length, permuting the
/// means and optimizer buffers alike.
pub fn reorder<T: Scalar>(
    state: &ModelState<T>,
    opt: &OptimizerState<T>,
) -> (ModelState<T>, OptimizerState<T>) {
    let order = descending_order(&state.v);
    if order.iter().enumerate().all(|(i, &k)| i == k) {
        return (state.clone(), opt.clone());
    }
    (state.select(&order), opt.select(&order))
}

fn descending_order<T: Scalar>(v: &Array1<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

/// Sticks that give every one of `k` clusters the weight `1/k`.
fn uniform_sticks<T: Scalar>(k: usize) -> Array1<T> {
    Array1::from_shape_fn(k, |i| clamp_v(T::one() / T::count(k - i)))
}

fn rows<T: Scalar>(data: ArrayView2<'_, T>, idx: &[usize]) -> Array2<T> {
    data.select(Axis(0), idx)
}

fn init_with_rng<T: Scalar, R: Rng + ?Sized>(
    data: ArrayView2<'_, T>,
    hp: &Hyperparams<T>,
    rng: &mut R,
) -> Result<(ModelState<T>, Assignments)> {
    hp.validate()?;
    hp.check_dim(data.ncols())?;
    let mu = kmeans_init(data, hp.trunc_k, rng)?;
    let provisional = ModelState {
        mu,
        v: uniform_sticks(hp.trunc_k),
    };
    let z = map_assign_batch(data, &provisional, hp)?;
    let stats = accumulate_stats(data, &z)?;
    let state = ModelState {
        mu: provisional.mu,
        v: mm_update_v(&stats, hp).v,
    };
    Ok((state, z))
}

fn master_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Initial state: k-means means, MAP assignments under uniform weights, then
/// closed-form sticks from those assignments.
pub fn init_state<T: Scalar>(
    data: ArrayView2<'_, T>,
    hp: &Hyperparams<T>,
    cfg: &TrainConfig,
) -> Result<(ModelState<T>, Assignments)> {
    let mut rng = master_rng(cfg.seed);
    init_with_rng(data, hp, &mut rng)
}

pub fn train<T: Scalar>(
    data: ArrayView2<'_, T>,
    hp: &Hyperparams<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with_observer(data, hp, cfg, |_| {})
}

/// Like [`train`], calling `observer` with each trace row as soon as it exists.
pub fn train_with_observer<T: Scalar, F: FnMut(&TraceRecord<T>)>(
    data: ArrayView2<'_, T>,
    hp: &Hyperparams<T>,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    hp.validate()?;
    let n = data.nrows();
    if n == 0 {
        return Err(DpmError::Empty("data"));
    }
    hp.check_dim(data.ncols())?;
    if data.iter().any(|x| !x.is_finite()) {
        return Err(DpmError::InvalidConfig(
            "data contains non-finite values".into(),
        ));
    }
    let mut rng = master_rng(cfg.seed);

    let rule = cfg.optimizer.ascent_rule();
    // the closed-form learner works on one fixed subset
    let pool: Option<Vec<usize>> = match rule {
        None => {
            let size = cfg.mm_subset.unwrap_or(MM_SUBSET).min(n);
            if size < n {
                let mut idx = sample_minibatch(n, size, &mut rng)?;
                idx.sort_unstable();
                Some(idx)
            } else {
                None
            }
        }
        Some(_) => {
            if hp.minibatch_m > n {
                return Err(DpmError::TooMany {
                    requested: hp.minibatch_m,
                    available: n,
                });
            }
            None
        }
    };
    let pool_data: Array2<T>;
    let init_data = match &pool {
        Some(idx) => {
            pool_data = rows(data, idx);
            pool_data.view()
        }
        None => data,
    };

    let (mut state, init_z) = init_with_rng(init_data, hp, &mut rng)?;
    let step_hp = Hyperparams {
        a0: cfg.stick_prior.per_sample_a0(hp.a0, n),
        ..hp.clone()
    };
    let mut opt = OptimizerState::for_state(&state);
    let mut trace = TrainingTrace::default();
    let mut plateau = 0usize;
    let mut converged = false;
    let mut previous_total: Option<T> = None;

    for iter in 1..=cfg.max_iters {
        let started = Instant::now();
        let (batch, prev_z) = match rule {
            None => {
                let batch = init_data.to_owned();
                let z = if iter == 1 {
                    init_z.clone()
                } else {
                    map_assign_batch(batch.view(), &state, hp)?
                };
                (batch, z)
            }
            Some(_) => {
                let idx = sample_minibatch(n, hp.minibatch_m, &mut rng)?;
                let batch = rows(data, &idx);
                let z = if iter == 1 {
                    Assignments::new(
                        idx.iter().map(|&i| init_z.labels()[i]).collect(),
                        state.k_active(),
                    )?
                } else {
                    map_assign_batch(batch.view(), &state, hp)?
                };
                (batch, z)
            }
        };

        let (z, bb) = match rule {
            None => {
                let stats = accumulate_stats(batch.view(), &prev_z)?;
                state.mu = mm_update_mu(&stats, hp, &state.mu)?.mu;
                let z = map_assign_batch(batch.view(), &state, hp)?;
                let stats = accumulate_stats(batch.view(), &z)?;
                state.v = mm_update_v(&stats, hp).v;
                (z, BbStepsize::default())
            }
            Some(rule) => {
                let g = average_gradients(batch.view(), &prev_z, &state, &step_hp)?;
                state = rule.apply(Block::Mu, &state, &g, &mut opt, &step_hp);
                let z = map_assign_batch(batch.view(), &state, hp)?;
                let g_v = average_gradients(batch.view(), &z, &state, &step_hp)?;
                state = rule.apply(Block::V, &state, &g_v, &mut opt, &step_hp);
                let bb = opt.record_bb(&state, &g.g_mu, &g_v.g_v);
                (z, bb)
            }
        };

        let bound = elbo(batch.view(), &z, &state, hp)?;
        let full_elbo = match cfg.full_elbo_every {
            Some(every) if iter % every == 0 => {
                let all = map_assign_batch(data, &state, hp)?;
                Some(elbo(data, &all, &state, hp)?)
            }
            _ => None,
        };

        let (pruned, pruned_opt) = prune(&state, &opt, hp);
        state = pruned;
        opt = pruned_opt;
        if cfg.reorder {
            let (sorted, sorted_opt) = reorder(&state, &opt);
            state = sorted;
            opt = sorted_opt;
        }
        debug_assert!(ensure_valid(&state, hp).is_ok());

        let record = TraceRecord {
            iter,
            elbo: bound,
            full_elbo,
            k_active: state.k_active(),
            time_ms: started.elapsed().as_secs_f64() * 1e3,
            bb,
            batch_size: batch.nrows(),
        };
        observer(&record);
        trace.records.push(record);

        if let Some(prev) = previous_total {
            let scale = prev.abs().max(T::min_positive_value());
            if ((bound.total - prev).abs() / scale).to_f64_lossy() < cfg.tol {
                plateau += 1;
            } else {
                plateau = 0;
            }
        }
        previous_total = Some(bound.total);
        if plateau >= cfg.patience {
            converged = true;
            break;
        }
    }

    let labels = map_assign_batch(data, &state, hp)?.into_labels();
    Ok(TrainOutcome {
        state,
        trace,
        labels,
        converged,
    })
}
