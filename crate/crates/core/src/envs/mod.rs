//! Dense- and sparse-reward sampling environments, heuristic mask samplers
//! and the greedy one-step oracle.

mod config;
mod env;
mod greedy;
mod heuristic;

pub use config::{centered_columns, EnvConfig, HorizonPreset, RewardMode};
pub use env::{
    dense_step, episode_return, init_state, init_state_from_kspace, rollout, rollout_from, sparse_step, step,
    ActionRule, CountingReconstructor, CountingSampler, Reconstructor, Sampler, SamplingState, StepOutcome, Trajectory,
    UniformSampler, ZeroFilled,
};
pub use greedy::{greedy_oracle_choice, greedy_oracle_step, greedy_rollout, GreedyChoice};
pub use heuristic::{heuristic_sample, HeuristicKind, HeuristicPolicyCfg};
