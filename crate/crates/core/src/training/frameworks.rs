//! End-to-end training recipes built from the individual phases.

use super::a2c::a2c_phase;
use super::config::TrainConfig;
use super::evaluate::{evaluate, with_mode, EvalPolicy};
use super::prepared::PreparedSplit;
use super::pretrain::pretrain_phase;
use super::report::{EvalStats, PhaseReport, RoundEval, TrainReport};
use super::retrain::retrain_phase;
use super::rng::rng_stream;
use crate::envs::{EnvConfig, HeuristicPolicyCfg, RewardMode};
use crate::error::{invalid_config, Result};
use crate::harness::{Dataset, Split};
use crate::models::{PolicyParams, ReconParams};
use crate::numerics::RealImage;

/// A trained sampler and reconstructor pair.
#[derive(Debug, Clone)]
pub struct Trained {
    pub policy: PolicyParams,
    pub recon: ReconParams,
    pub report: TrainReport,
}

struct Ctx<'a> {
    env: &'a EnvConfig,
    cfg: &'a TrainConfig,
    train: PreparedSplit,
    eval_images: Vec<RealImage>,
}

impl<'a> Ctx<'a> {
    fn new(data: &Dataset, env: &'a EnvConfig, cfg: &'a TrainConfig) -> Result<Self> {
        cfg.validate()?;
        env.validate()?;
        if data.n != env.n {
            return Err(invalid_config(format!(
                "dataset width {} does not match environment width {}",
                data.n, env.n
            )));
        }
        Ok(Self {
            env,
            cfg,
            train: PreparedSplit::from_dataset(data, Split::Train)?,
            eval_images: data.eval_split().1,
        })
    }

    fn init_recon(&self) -> ReconParams {
        ReconParams::init(
            self.cfg.recon_arch(self.env.n),
            &mut rng_stream(self.cfg.seed, "recon-init", 0),
        )
    }

    fn init_policy(&self) -> PolicyParams {
        PolicyParams::init(
            self.cfg.policy_arch(self.env.n),
            &mut rng_stream(self.cfg.seed, "policy-init", 0),
        )
    }

    /// Evaluates the pair on the held-out split and records it on the phase.
    fn eval_into(
        &self,
        p: &PolicyParams,
        r: &ReconParams,
        phase: &mut PhaseReport,
        env: &EnvConfig,
    ) -> Result<Option<EvalStats>> {
        if self.eval_images.is_empty() {
            return Ok(None);
        }
        let s = evaluate(EvalPolicy::Learned(p), r, &self.eval_images, env, self.cfg.seed)?;
        let stats = EvalStats::from(&s);
        phase.eval = Some(stats.clone());
        Ok(Some(stats))
    }
}

fn require_sparse(env: &EnvConfig, what: &str) -> Result<()> {
    if env.reward_mode != RewardMode::Sparse {
        return Err(invalid_config(format!(
            "{what} trains in the sparse-reward environment"
        )));
    }
    Ok(())
}

fn push_round(report: &mut TrainReport, label: f64, phase: &PhaseReport, stats: Option<EvalStats>) {
    if let Some(stats) = stats {
        report.round_evals.push(RoundEval {
            label,
            phase: phase.name.clone(),
            stats,
        });
    }
}

/// Runs pretraining and `rounds` alternations. `rounds = 0` still trains
/// the sampler once, without refitting the reconstructor afterwards.
fn alternate(data: &Dataset, env: &EnvConfig, cfg: &TrainConfig, rounds: usize) -> Result<Trained> {
    let ctx = Ctx::new(data, env, cfg)?;
    let mut report = TrainReport::new(cfg.seed);
    let hp = HeuristicPolicyCfg::terminal_for(env)?;
    let (mut r, mut ph) = pretrain_phase(
        &ctx.init_recon(),
        &hp,
        &ctx.train,
        env,
        cfg,
        cfg.pretrain_iters,
        cfg.recon_lr(0),
        "pretrain",
    )?;
    let mut p = ctx.init_policy();
    let st = ctx.eval_into(&p, &r, &mut ph, env)?;
    push_round(&mut report, 0.0, &ph, st);
    report.phases.push(ph);
    for l in 1..=rounds.max(1) {
        let (p1, mut ph) = a2c_phase(&p, &r, &ctx.train, env, cfg, cfg.policy_lr(l), &format!("a2c-r{l}"))?;
        p = p1;
        let st = ctx.eval_into(&p, &r, &mut ph, env)?;
        push_round(&mut report, l as f64 - 0.5, &ph, st);
        report.phases.push(ph);
        if rounds == 0 {
            break;
        }
        let (r1, mut ph) = retrain_phase(
            &r,
            &p,
            &ctx.train,
            env,
            cfg,
            cfg.round_iters,
            cfg.recon_lr(l),
            &format!("retrain-r{l}"),
        )?;
        r = r1;
        let st = ctx.eval_into(&p, &r, &mut ph, env)?;
        push_round(&mut report, l as f64, &ph, st);
        report.phases.push(ph);
    }
    Ok(Trained {
        policy: p,
        recon: r,
        report,
    })
}

/// Pretrains the reconstructor on terminal heuristic masks, then trains the
/// sampler once in the sparse-reward environment.
pub fn l2s(data: &Dataset, env: &EnvConfig, cfg: &TrainConfig) -> Result<Trained> {
    require_sparse(env, "l2s")?;
    alternate(data, env, cfg, 0)
}

/// [`l2s`] followed by `cfg.alternations` rounds, each refitting the
/// reconstructor to the current sampler and then the sampler to it, with
/// learning rates decaying by `cfg.lr_decay` per round.
pub fn l2sr(data: &Dataset, env: &EnvConfig, cfg: &TrainConfig) -> Result<Trained> {
    require_sparse(env, "l2sr")?;
    alternate(data, env, cfg, cfg.alternations)
}

/// Dense-reward baseline: reconstructor pretrained on the heuristic mixture
/// over all intermediate counts, sampler fed reconstructions.
pub fn baseline_dense(data: &Dataset, env: &EnvConfig, cfg: &TrainConfig) -> Result<Trained> {
    let env = with_mode(env, RewardMode::Dense);
    let ctx = Ctx::new(data, &env, cfg)?;
    let mut report = TrainReport::new(cfg.seed);
    let hp = HeuristicPolicyCfg::mixture_for(&env)?;
    let (r, ph) = pretrain_phase(
        &ctx.init_recon(),
        &hp,
        &ctx.train,
        &env,
        cfg,
        cfg.pretrain_iters,
        cfg.recon_lr(0),
        "pretrain-mixture",
    )?;
    report.phases.push(ph);
    let (p, mut ph) = a2c_phase(
        &ctx.init_policy(),
        &r,
        &ctx.train,
        &env,
        cfg,
        cfg.policy_lr(1),
        "a2c-dense",
    )?;
    ctx.eval_into(&p, &r, &mut ph, &env)?;
    report.phases.push(ph);
    Ok(Trained {
        policy: p,
        recon: r,
        report,
    })
}

/// Reconstructor for the random-sampling baseline: terminal pretraining only.
pub fn baseline_random(data: &Dataset, env: &EnvConfig, cfg: &TrainConfig) -> Result<(ReconParams, TrainReport)> {
    let ctx = Ctx::new(data, env, cfg)?;
    let hp = HeuristicPolicyCfg::terminal_for(env)?;
    let (r, ph) = pretrain_phase(
        &ctx.init_recon(),
        &hp,
        &ctx.train,
        env,
        cfg,
        cfg.pretrain_iters,
        cfg.recon_lr(0),
        "pretrain",
    )?;
    Ok((r, TrainReport::single(cfg.seed, ph)))
}

/// Reconstructor for the greedy oracle: pretrained on the heuristic mixture
/// so it is reasonable at every intermediate count.
pub fn greedy_baseline(data: &Dataset, env: &EnvConfig, cfg: &TrainConfig) -> Result<(ReconParams, TrainReport)> {
    let ctx = Ctx::new(data, env, cfg)?;
    let hp = HeuristicPolicyCfg::mixture_for(env)?;
    let (r, ph) = pretrain_phase(
        &ctx.init_recon(),
        &hp,
        &ctx.train,
        env,
        cfg,
        cfg.pretrain_iters,
        cfg.recon_lr(0),
        "pretrain-mixture",
    )?;
    Ok((r, TrainReport::single(cfg.seed, ph)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_phantoms, PhantomConfig};
    use crate::numerics::MetricConfig;

    fn setup() -> (Dataset, EnvConfig, TrainConfig) {
        let data = generate_phantoms(&PhantomConfig {
            n: 8,
            count: 8,
            seed: 9,
            ..PhantomConfig::default()
        })
        .unwrap();
        let env = EnvConfig::custom(8, 2.0, 8.0, RewardMode::Sparse).with_metric(MetricConfig::ssim_with_window(3));
        let cfg = TrainConfig {
            pretrain_iters: 6,
            round_iters: 4,
            a2c_steps: 24,
            a2c_envs: 4,
            batch_size: 2,
            alternations: 2,
            recon_channels: 2,
            policy_hidden: 8,
            ..TrainConfig::default()
        };
        (data, env, cfg)
    }

    #[test]
    fn l2s_is_first_round_of_l2sr() {
        let (data, env, cfg) = setup();
        let a = l2s(&data, &env, &cfg).unwrap();
        let b = l2sr(&data, &env, &cfg).unwrap();
        assert_eq!(a.report.phases[..2], b.report.phases[..2]);
        let names: Vec<_> = b.report.phases.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["pretrain", "a2c-r1", "retrain-r1", "a2c-r2", "retrain-r2"]);
        let labels: Vec<f64> = b.report.round_evals.iter().map(|e| e.label).collect();
        assert_eq!(labels, [0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(b.report.phases[3].lr, cfg.lr_policy / 3.0);
        assert_eq!(b.report.phases[4].lr, cfg.lr_recon / 9.0);
    }

    #[test]
    fn sparse_only_frameworks_reject_dense() {
        let (data, env, cfg) = setup();
        let dense = with_mode(&env, RewardMode::Dense);
        assert!(l2s(&data, &dense, &cfg).is_err());
        assert!(l2sr(&data, &dense, &cfg).is_err());
        let t = baseline_dense(&data, &env, &cfg).unwrap();
        assert_eq!(t.report.phases.len(), 2);
    }

    #[test]
    fn retrain_leaves_sampler_unchanged() {
        let (data, env, mut cfg) = setup();
        cfg.alternations = 1;
        let a = l2s(&data, &env, &cfg).unwrap();
        let b = l2sr(&data, &env, &cfg).unwrap();
        assert_eq!(a.policy.params.fingerprint(), b.policy.params.fingerprint());
    }
}
