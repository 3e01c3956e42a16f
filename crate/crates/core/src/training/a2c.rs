use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::prepared::PreparedSplit;
use super::report::{PhaseReport, TrainReport};
use super::rng::rng_stream;
use crate::envs::{init_state_from_kspace, step, CountingReconstructor, EnvConfig, Reconstructor, RewardMode};
use crate::error::{invalid_config, Error, Result};
use crate::harness::{Dataset, Split};
use crate::models::{
    clip_grad_norm, optimizer_step, policy_backward_trace, policy_forward_image, sum_in_order, A2cTerms,
    OptimizerState, ParamSet, PolicyParams, PolicyTrace,
};
use crate::numerics::zero_filled_cols;

struct Episode {
    traces: Vec<PolicyTrace>,
    actions: Vec<usize>,
    targets: Vec<f64>,
    ret: f64,
}

/// n-step targets over aligned windows of length `w`, bootstrapping from the
/// critic at each window boundary that is not terminal.
pub(crate) fn nstep_targets(rewards: &[f64], values: &[f64], gamma: f64, w: usize) -> Vec<f64> {
    let t = rewards.len();
    let mut out = vec![0.0; t];
    let mut start = 0;
    while start < t {
        let end = (start + w).min(t);
        let mut g = if end < t { values[end] } else { 0.0 };
        for j in (start..end).rev() {
            g = rewards[j] + gamma * g;
            out[j] = g;
        }
        start = end;
    }
    out
}

fn run_episode(
    p: &PolicyParams,
    recon: &dyn Reconstructor,
    train: &PreparedSplit,
    env: &EnvConfig,
    window: usize,
    rng: &mut impl Rng,
) -> Result<Episode> {
    let t_max = env.t_horizon()?;
    let idx = rng.gen_range(0..train.len());
    let x = &train.images[idx];
    let mut s = init_state_from_kspace(train.kspaces[idx].clone(), env)?;
    let mut traces = Vec::with_capacity(t_max);
    let mut actions = Vec::with_capacity(t_max);
    let mut rewards = Vec::with_capacity(t_max);
    while s.step < t_max {
        let trace = match env.reward_mode {
            RewardMode::Dense => {
                s.ensure_recon(x, recon, env)?;
                policy_forward_image(p, s.cached_recon().expect("just computed"), &s.mask)?
            }
            RewardMode::Sparse => policy_forward_image(p, &zero_filled_cols(&s.observed, &s.mask.sampled())?, &s.mask)?,
        };
        let a = trace.dist.sample(rng).ok_or(Error::NoAction)?;
        let out = step(&s, a, x, recon, env)?;
        traces.push(trace);
        actions.push(a);
        rewards.push(out.reward);
        s = out.state;
    }
    let values: Vec<f64> = traces.iter().map(|t| t.value).collect();
    let targets = nstep_targets(&rewards, &values, env.discount, window);
    let mut ret = 0.0;
    let mut w = 1.0;
    for r in &rewards {
        ret += w * r;
        w *= env.discount;
    }
    Ok(Episode {
        traces,
        actions,
        targets,
        ret,
    })
}

/// One sampler-training phase. The reconstructor is only queried.
pub(crate) fn a2c_phase(
    p: &PolicyParams,
    recon: &dyn Reconstructor,
    train: &PreparedSplit,
    env: &EnvConfig,
    cfg: &TrainConfig,
    lr: f64,
    label: &str,
) -> Result<(PolicyParams, PhaseReport)> {
    let start = Instant::now();
    let t_max = env.t_horizon()?;
    if t_max == 0 {
        return Err(invalid_config("sampler training needs a horizon of at least one step"));
    }
    if p.arch.n != env.n {
        return Err(invalid_config("policy width does not match the environment"));
    }
    let window = cfg.update_timestep.unwrap_or(t_max).min(t_max);
    let per_update = cfg.a2c_envs * t_max;
    let updates = cfg.a2c_steps.div_ceil(per_update);
    let counting = CountingReconstructor::new(recon);
    let mut p = p.clone();
    let mut opt = OptimizerState::for_params(&p.params, lr);
    let mut losses = Vec::with_capacity(updates);
    let mut returns = Vec::with_capacity(updates);
    for u in 0..updates {
        let episodes = (0..cfg.a2c_envs)
            .into_par_iter()
            .map(|e| {
                let mut rng = rng_stream(cfg.seed, label, (u * cfg.a2c_envs + e) as u64);
                run_episode(&p, &counting, train, env, window, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut adv: Vec<Vec<f64>> = episodes
            .iter()
            .map(|ep| ep.targets.iter().zip(&ep.traces).map(|(g, tr)| g - tr.value).collect())
            .collect();
        if cfg.normalize_advantage {
            let flat: Vec<f64> = adv.iter().flatten().copied().collect();
            let m = flat.iter().sum::<f64>() / flat.len() as f64;
            let sd = (flat.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / flat.len() as f64).sqrt();
            for a in adv.iter_mut().flatten() {
                *a = (*a - m) / (sd + 1e-8);
            }
        }
        let steps = (cfg.a2c_envs * t_max) as f64;
        let parts = episodes
            .par_iter()
            .zip(adv.par_iter())
            .map(|(ep, adv)| -> Result<(f64, ParamSet)> {
                let mut grad = p.params.zeros_like();
                let mut loss = 0.0;
                for t in 0..ep.traces.len() {
                    let terms = A2cTerms {
                        advantage: adv[t],
                        value_target: ep.targets[t],
                        value_coef: cfg.value_coef,
                        entropy_coef: cfg.entropy_coef,
                    };
                    loss += terms.loss(&ep.traces[t], ep.actions[t]);
                    policy_backward_trace(&p, &ep.traces[t], ep.actions[t], &terms, &mut grad)?;
                }
                Ok((loss, grad))
            })
            .collect::<Result<Vec<_>>>()?;
        let loss = parts.iter().map(|x| x.0).sum::<f64>() / steps;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "{label}: loss became {loss} at update {u}"
            )));
        }
        let mut grad = sum_in_order(&p.params, parts.into_iter().map(|x| x.1));
        grad.scale(1.0 / steps);
        if cfg.max_grad_norm > 0.0 {
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
        }
        optimizer_step(&mut opt, &mut p.params, &grad)?;
        losses.push(loss);
        returns.push(episodes.iter().map(|e| e.ret).sum::<f64>() / episodes.len() as f64);
    }
    let env_steps = (updates * per_update) as u64;
    let report = PhaseReport {
        name: label.to_string(),
        lr,
        iterations: updates,
        loss_curve: losses,
        return_curve: returns,
        policy_calls: env_steps,
        recon_calls: counting.calls() as u64,
        env_steps,
        episodes: (updates * cfg.a2c_envs) as u64,
        wall_seconds: start.elapsed().as_secs_f64(),
        ..PhaseReport::default()
    };
    Ok((p, report))
}

/// Trains the sampler with advantage actor-critic against a fixed
/// reconstructor on the training split, for at least `cfg.a2c_steps`
/// environment steps at the round-1 rate.
pub fn train_sampler_a2c(
    p: &PolicyParams,
    recon: &dyn Reconstructor,
    data: &Dataset,
    env: &EnvConfig,
    cfg: &TrainConfig,
) -> Result<(PolicyParams, TrainReport)> {
    cfg.validate()?;
    env.validate()?;
    let train = PreparedSplit::from_dataset(data, Split::Train)?;
    let (p, phase) = a2c_phase(p, recon, &train, env, cfg, cfg.policy_lr(1), "a2c")?;
    Ok((p, TrainReport::single(cfg.seed, phase)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::ZeroFilled;
    use crate::harness::{generate_phantoms, PhantomConfig};
    use crate::models::ReconParams;
    use crate::numerics::MetricConfig;

    #[test]
    fn nstep_targets_match_hand_values() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let v = [10.0, 20.0, 30.0, 40.0];
        assert_eq!(nstep_targets(&r, &v, 1.0, 4), vec![10.0, 9.0, 7.0, 4.0]);
        // Windows [0,2) and [2,4): the first bootstraps from v[2].
        assert_eq!(
            nstep_targets(&r, &v, 0.5, 2),
            vec![1.0 + 0.5 * (2.0 + 0.5 * 30.0), 2.0 + 15.0, 3.0 + 2.0, 4.0]
        );
        assert_eq!(nstep_targets(&r, &v, 1.0, 1), vec![21.0, 32.0, 43.0, 4.0]);
    }

    fn setup(mode: RewardMode) -> (Dataset, EnvConfig, TrainConfig) {
        let data = generate_phantoms(&PhantomConfig {
            n: 8,
            count: 6,
            seed: 3,
            ..PhantomConfig::default()
        })
        .unwrap();
        let env = EnvConfig::custom(8, 2.0, 8.0, mode).with_metric(MetricConfig::neg_mse());
        let cfg = TrainConfig {
            a2c_steps: 96,
            a2c_envs: 4,
            policy_hidden: 8,
            ..TrainConfig::default()
        };
        (data, env, cfg)
    }

    #[test]
    fn counters_and_lengths() {
        for mode in [RewardMode::Sparse, RewardMode::Dense] {
            let (data, env, cfg) = setup(mode);
            let p0 = PolicyParams::init(cfg.policy_arch(8), &mut rng_stream(0, "p", 0));
            let (_, rep) = train_sampler_a2c(&p0, &ZeroFilled, &data, &env, &cfg).unwrap();
            let ph = &rep.phases[0];
            // T = 3, 4 envs: 12 steps per update, 8 updates.
            assert_eq!(ph.iterations, 8);
            assert_eq!(ph.loss_curve.len(), 8);
            assert_eq!(ph.env_steps, 96);
            assert_eq!(ph.policy_calls, 96);
            let per_episode = if mode == RewardMode::Sparse { 1 } else { 4 };
            assert_eq!(ph.recon_calls, 32 * per_episode);
        }
    }

    #[test]
    fn zero_rate_and_frozen_reconstructor() {
        let (data, env, mut cfg) = setup(RewardMode::Dense);
        cfg.lr_policy = 0.0;
        let p0 = PolicyParams::init(cfg.policy_arch(8), &mut rng_stream(0, "p", 0));
        let r = ReconParams::random(cfg.recon_arch(8), &mut rng_stream(0, "r", 0), 0.1);
        let before = r.params.fingerprint();
        let (p1, _) = train_sampler_a2c(&p0, &r, &data, &env, &cfg).unwrap();
        assert_eq!(p0.params.values(), p1.params.values());
        assert_eq!(r.params.fingerprint(), before);
    }

    #[test]
    fn reproducible() {
        let (data, env, cfg) = setup(RewardMode::Sparse);
        let p0 = PolicyParams::init(cfg.policy_arch(8), &mut rng_stream(0, "p", 0));
        let a = train_sampler_a2c(&p0, &ZeroFilled, &data, &env, &cfg).unwrap();
        let b = train_sampler_a2c(&p0, &ZeroFilled, &data, &env, &cfg).unwrap();
        assert_eq!(a.0.params.values(), b.0.params.values());
        assert_eq!(a.1, b.1);
    }
}
