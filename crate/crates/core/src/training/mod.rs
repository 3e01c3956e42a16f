//! Reconstructor pretraining, A2C sampler training, on-policy
//! reconstructor refitting, the alternating frameworks built from them and
//! evaluation.

mod a2c;
mod config;
mod evaluate;
mod frameworks;
mod prepared;
mod pretrain;
mod report;
mod retrain;
mod rng;

pub use a2c::train_sampler_a2c;
pub use config::{decayed_lr, TrainConfig};
pub use evaluate::{evaluate, report_metric, EvalPolicy, EvalSummary, ImageRecord, PSNR_CAP_DB};
pub use frameworks::{baseline_dense, baseline_random, greedy_baseline, l2s, l2sr, Trained};
pub use prepared::PreparedSplit;
pub use pretrain::pretrain_reconstructor;
pub use report::{EvalStats, PhaseReport, RoundEval, TrainReport};
pub use retrain::{
    frozen_gradient, frozen_objective, retrain_reconstructor_on_policy, sample_frozen_set, FrozenItem, FrozenSet,
};
pub use rng::rng_stream;
