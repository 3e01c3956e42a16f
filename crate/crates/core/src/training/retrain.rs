use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::prepared::PreparedSplit;
use super::pretrain::recon_score_grad;
use super::report::{PhaseReport, TrainReport};
use super::rng::rng_stream;
use crate::envs::{init_state_from_kspace, EnvConfig};
use crate::error::{Error, Result};
use crate::harness::{Dataset, Split};
use crate::models::{
    optimizer_step, policy_forward_image, recon_trace_masked, sum_in_order, OptimizerState, ParamSet, PolicyParams,
    ReconParams,
};
use crate::numerics::{apply_mask, similarity, zero_filled_cols, ColumnMask, MetricConfig};

/// A terminal mask reached by the sampler on one training image.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenItem {
    pub image: usize,
    pub mask: ColumnMask,
}

/// Terminal masks sampled once from a fixed sampler and then held fixed
/// while the reconstructor is refit.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSet {
    pub items: Vec<FrozenItem>,
}

/// Rolls the sampler (stochastically, sparse mode) `per_image` times on every
/// image. Only the sampler is queried.
pub fn sample_frozen_set(
    p: &PolicyParams,
    train: &PreparedSplit,
    env: &EnvConfig,
    per_image: usize,
    seed: u64,
    label: &str,
) -> Result<FrozenSet> {
    let t_max = env.t_horizon()?;
    let items = (0..train.len() * per_image)
        .into_par_iter()
        .map(|k| -> Result<FrozenItem> {
            let image = k / per_image;
            let mut rng = rng_stream(seed, label, k as u64);
            let mut s = init_state_from_kspace(train.kspaces[image].clone(), env)?;
            while s.step < t_max {
                let z = zero_filled_cols(&s.observed, &s.mask.sampled())?;
                let a = policy_forward_image(p, &z, &s.mask)?
                    .dist
                    .sample(&mut rng)
                    .ok_or(Error::NoAction)?;
                s = s.advanced(a)?;
            }
            Ok(FrozenItem { image, mask: s.mask })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrozenSet { items })
}

/// Mean terminal similarity of `r` over the frozen set.
pub fn frozen_objective(r: &ReconParams, set: &FrozenSet, train: &PreparedSplit, metric: &MetricConfig) -> Result<f64> {
    if set.items.is_empty() {
        return Ok(0.0);
    }
    let scores = set
        .items
        .par_iter()
        .map(|it| {
            let y = apply_mask(&train.kspaces[it.image], &it.mask)?;
            let out = recon_trace_masked(r, &y, &it.mask)?.output;
            similarity(&out, &train.images[it.image], metric)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean similarity over `items` and its parameter gradient.
pub fn frozen_gradient(
    r: &ReconParams,
    set: &FrozenSet,
    items: &[usize],
    train: &PreparedSplit,
    metric: &MetricConfig,
) -> Result<(f64, ParamSet)> {
    let parts = items
        .par_iter()
        .map(|&k| {
            let it = &set.items[k];
            recon_score_grad(r, &train.images[it.image], &train.kspaces[it.image], &it.mask, metric)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = items.len().max(1) as f64;
    let score = parts.iter().map(|p| p.0).sum::<f64>() / m;
    let mut grad = sum_in_order(&r.params, parts.into_iter().map(|p| p.1));
    grad.scale(1.0 / m);
    Ok((score, grad))
}

/// Minibatch Adam on the frozen set. The objective over the whole set is
/// checked at the start, every quarter of the run and at the end, and the
/// best parameters seen are returned, so the result never scores below the
/// input on this set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn retrain_phase(
    r: &ReconParams,
    p: &PolicyParams,
    train: &PreparedSplit,
    env: &EnvConfig,
    cfg: &TrainConfig,
    iters: usize,
    lr: f64,
    label: &str,
) -> Result<(ReconParams, PhaseReport)> {
    let start = Instant::now();
    let set = sample_frozen_set(p, train, env, cfg.traj_per_image, cfg.seed, &format!("{label}/traj"))?;
    let metric = &env.metric;
    let before = frozen_objective(r, &set, train, metric)?;
    let mut best = (before, r.clone());
    let mut cur = r.clone();
    let mut opt = OptimizerState::for_params(&cur.params, lr);
    let check_every = (iters / 4).max(1);
    let b = cfg.batch_size;
    let mut losses = Vec::with_capacity(iters);
    for it in 0..iters {
        let mut rng = rng_stream(cfg.seed, label, it as u64);
        let picks: Vec<usize> = (0..b).map(|_| rng.gen_range(0..set.items.len())).collect();
        let (score, mut grad) = frozen_gradient(&cur, &set, &picks, train, metric)?;
        if !score.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "{label}: objective became {score} at iteration {it}"
            )));
        }
        grad.scale(-1.0);
        optimizer_step(&mut opt, &mut cur.params, &grad)?;
        losses.push(-score);
        if (it + 1) % check_every == 0 || it + 1 == iters {
            let obj = frozen_objective(&cur, &set, train, metric)?;
            if obj > best.0 {
                best = (obj, cur.clone());
            }
        }
    }
    let report = PhaseReport {
        name: label.to_string(),
        lr,
        iterations: iters,
        loss_curve: losses,
        policy_calls: (set.items.len() * env.t_horizon()?) as u64,
        recon_calls: (iters * b) as u64,
        episodes: set.items.len() as u64,
        objective_before: Some(before),
        objective_after: Some(best.0),
        wall_seconds: start.elapsed().as_secs_f64(),
        ..PhaseReport::default()
    };
    Ok((best.1, report))
}

/// Refits the reconstructor to the terminal masks of the current sampler in
/// alternation round `round`, at rate `lr_recon / lr_decay^round`.
pub fn retrain_reconstructor_on_policy(
    r: &ReconParams,
    p: &PolicyParams,
    data: &Dataset,
    env: &EnvConfig,
    cfg: &TrainConfig,
    round: usize,
) -> Result<(ReconParams, TrainReport)> {
    cfg.validate()?;
    env.validate()?;
    let train = PreparedSplit::from_dataset(data, Split::Train)?;
    let label = format!("retrain-r{round}");
    let (r, phase) = retrain_phase(r, p, &train, env, cfg, cfg.round_iters, cfg.recon_lr(round), &label)?;
    Ok((r, TrainReport::single(cfg.seed, phase)))
}
