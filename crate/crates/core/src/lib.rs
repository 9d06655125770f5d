//! Truncated stick-breaking Dirichlet process Gaussian mixture, fitted by
//! stochastic gradient ascent on the variational log posteriors with
//! constant, momentum or empirical-Fisher stepsizes, or by closed-form
//! coordinate ascent. Clusters whose stick length falls below a
//! threshold are pruned, so the number of clusters is selected automatically.
//!
//! ```
//! use dpm_sga::{train, HyperparamsF64, Optimizer, TrainConfig};
//! use dpm_sga::io::{synth_generate, SynthSpec};
//!
//! let (data, _) = synth_generate(&SynthSpec::new(3, 2, 300, 10.0, 1.0, 7)).unwrap();
//! let mut hp = HyperparamsF64::for_dataset(data.n(), data.dim());
//! hp.trunc_k = 10;
//! let cfg = TrainConfig { optimizer: Optimizer::Mm, max_iters: 10, ..Default::default() };
//! let out = train(data.features.view(), &hp, &cfg).unwrap();
//! assert!(out.state.k_active() <= 10);
//! ```

pub mod cli;
pub mod elbo;
pub mod error;
pub mod eval;
pub mod gradients;
pub mod io;
pub mod mm;
pub mod model;
pub mod optimizers;
pub mod scalar;
pub mod trainer;

pub use elbo::{elbo, ElboBreakdown};
pub use error::{DpmError, Result};
pub use eval::{accuracy, hungarian, model_count, nmi, ContingencyTable, Matching};
pub use gradients::{
    average_gradients, concavity_report, grad_mu_sample, grad_v_sample, hessian_mu, hessian_v,
    map_assign, map_assign_batch, GradientBatch,
};
pub use mm::{mm_step, mm_train, mm_update_mu, mm_update_v, SufficientStats};
pub use model::{
    stick_weights, validate_state, Assignments, Hyperparams, ModelState, Violation, V_CLAMP,
};
pub use optimizers::{
    bb_stepsize, step_constant, step_fisher, step_momentum, Optimizer, OptimizerState,
};
pub use scalar::Scalar;
pub use trainer::{init_state, train, StickPrior, TrainConfig, TrainOutcome, TrainingTrace};

pub type HyperparamsF64 = Hyperparams<f64>;
pub type HyperparamsF32 = Hyperparams<f32>;
pub type ModelStateF64 = ModelState<f64>;
pub type ModelStateF32 = ModelState<f32>;
pub type GradientBatchF64 = GradientBatch<f64>;
pub type ElboF64 = ElboBreakdown<f64>;
pub type TrainingTraceF64 = TrainingTrace<f64>;
