use std::time::Instant;

use rayon::prelude::*;

use super::config::TrainConfig;
use super::prepared::PreparedSplit;
use super::report::{PhaseReport, TrainReport};
use super::rng::rng_stream;
use crate::envs::{heuristic_sample, EnvConfig, HeuristicPolicyCfg};
use crate::error::{Error, Result};
use crate::harness::{Dataset, Split};
use crate::models::{
    optimizer_step, recon_backward_trace, recon_trace_masked, sum_in_order, OptimizerState, ParamSet, ReconParams,
};
use crate::numerics::{apply_mask, similarity_and_grad, ColumnMask, ComplexKSpace, MetricConfig, RealImage};

/// Similarity of the reconstruction from `(full, mask)` and its gradient
/// with respect to the reconstructor parameters.
pub(crate) fn recon_score_grad(
    r: &ReconParams,
    x: &RealImage,
    full: &ComplexKSpace,
    mask: &ColumnMask,
    metric: &MetricConfig,
) -> Result<(f64, ParamSet)> {
    let y = apply_mask(full, mask)?;
    let trace = recon_trace_masked(r, &y, mask)?;
    let (s, g) = similarity_and_grad(&trace.output, x, metric)?;
    let mut grad = r.params.zeros_like();
    recon_backward_trace(r, &trace, &g, &mut grad)?;
    Ok((s, grad))
}

/// Minimizes `-S(R(mask(y)), x)` over heuristic masks with Adam at `lr`.
pub(crate) fn pretrain_phase(
    r: &ReconParams,
    hp: &HeuristicPolicyCfg,
    train: &PreparedSplit,
    env: &EnvConfig,
    cfg: &TrainConfig,
    iters: usize,
    lr: f64,
    label: &str,
) -> Result<(ReconParams, PhaseReport)> {
    let start = Instant::now();
    hp.validate(env)?;
    let mut r = r.clone();
    let mut opt = OptimizerState::for_params(&r.params, lr);
    let b = cfg.batch_size;
    let mut losses = Vec::with_capacity(iters);
    for it in 0..iters {
        let parts = (0..b)
            .into_par_iter()
            .map(|j| -> Result<(f64, ParamSet)> {
                let mut rng = rng_stream(cfg.seed, label, (it * b + j) as u64);
                let idx = rand::Rng::gen_range(&mut rng, 0..train.len());
                let mask = heuristic_sample(hp, env, &mut rng)?;
                recon_score_grad(&r, &train.images[idx], &train.kspaces[idx], &mask, &env.metric)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean_score = parts.iter().map(|p| p.0).sum::<f64>() / b as f64;
        let mut grad = sum_in_order(&r.params, parts.into_iter().map(|p| p.1));
        grad.scale(-1.0 / b as f64);
        let loss = -mean_score;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "{label}: loss became {loss} at iteration {it}"
            )));
        }
        losses.push(loss);
        optimizer_step(&mut opt, &mut r.params, &grad)?;
    }
    let report = PhaseReport {
        name: label.to_string(),
        lr,
        iterations: iters,
        loss_curve: losses,
        recon_calls: (iters * b) as u64,
        wall_seconds: start.elapsed().as_secs_f64(),
        ..PhaseReport::default()
    };
    Ok((r, report))
}

/// Trains the reconstructor on masks drawn from a heuristic policy using the
/// training split, for `cfg.pretrain_iters` iterations at the round-0 rate.
pub fn pretrain_reconstructor(
    r: &ReconParams,
    hp: &HeuristicPolicyCfg,
    data: &Dataset,
    env: &EnvConfig,
    cfg: &TrainConfig,
) -> Result<(ReconParams, TrainReport)> {
    cfg.validate()?;
    env.validate()?;
    let train = PreparedSplit::from_dataset(data, Split::Train)?;
    let (r, phase) = pretrain_phase(r, hp, &train, env, cfg, cfg.pretrain_iters, cfg.recon_lr(0), "pretrain")?;
    Ok((r, TrainReport::single(cfg.seed, phase)))
}
