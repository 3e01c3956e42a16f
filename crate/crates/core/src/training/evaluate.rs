use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::rng_stream;
use crate::envs::{
    greedy_rollout, init_state, rollout_from, ActionRule, CountingReconstructor, CountingSampler, EnvConfig,
    Reconstructor, RewardMode, Sampler, UniformSampler,
};
use crate::error::Result;
use crate::models::PolicyParams;
use crate::numerics::{psnr, similarity, MetricConfig, MetricKind, RealImage};

/// Reported PSNR for an exact reconstruction, in place of infinity.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    /// Learned sampler, evaluated with argmax actions.
    Learned(&'a PolicyParams),
    /// Uniform over unsampled columns, sampled.
    Random,
    /// One-step lookahead against the ground truth.
    Greedy,
}

impl EvalPolicy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            EvalPolicy::Learned(_) => "learned",
            EvalPolicy::Random => "random",
            EvalPolicy::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub index: usize,
    pub ssim: f64,
    pub psnr: f64,
    pub actions: Vec<usize>,
    pub mask: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: String,
    pub n_images: usize,
    pub mean_ssim: f64,
    pub std_ssim: f64,
    pub mean_psnr: f64,
    pub std_psnr: f64,
    pub policy_calls: u64,
    pub recon_calls: u64,
    pub records: Vec<ImageRecord>,
}

/// SSIM settings used for reporting: the environment's metric when it is
/// SSIM, otherwise the default window shrunk to fit the image.
pub fn report_metric(env: &EnvConfig) -> MetricConfig {
    if env.metric.kind == MetricKind::Ssim {
        return env.metric.clone();
    }
    let mut w = MetricConfig::default().window.min(env.n);
    if w % 2 == 0 {
        w -= 1;
    }
    MetricConfig::ssim_with_window(w.max(1))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Runs one episode per image and reports terminal SSIM and PSNR.
/// Deterministic for a fixed seed: only the random policy draws numbers, from
/// a per-image stream.
pub fn evaluate(
    policy: EvalPolicy<'_>,
    recon: &dyn Reconstructor,
    images: &[RealImage],
    env: &EnvConfig,
    seed: u64,
) -> Result<EvalSummary> {
    env.validate()?;
    let metric = report_metric(env);
    let counting_recon = CountingReconstructor::new(recon);
    let uniform = UniformSampler;
    let sampler: Option<&dyn Sampler> = match policy {
        EvalPolicy::Learned(p) => Some(p),
        EvalPolicy::Random => Some(&uniform),
        EvalPolicy::Greedy => None,
    };
    let counting_policy = sampler.map(CountingSampler::new);
    let rule = match policy {
        EvalPolicy::Random => ActionRule::Sample,
        _ => ActionRule::Argmax,
    };
    let records = images
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<ImageRecord> {
            let s0 = init_state(x, env)?;
            let traj = match &counting_policy {
                Some(pol) => {
                    let mut rng = rng_stream(seed, "eval", i as u64);
                    rollout_from(pol, s0, x, env, &counting_recon, rule, &mut rng)?
                }
                None => greedy_rollout(s0, x, &counting_recon, env)?,
            };
            let ssim = similarity(&traj.terminal_recon, x, &metric)?;
            let p = psnr(&traj.terminal_recon, x, metric.range_for(x)).min(PSNR_CAP_DB);
            let mask = traj.terminal_state().mask.bits();
            Ok(ImageRecord {
                index: i,
                ssim,
                psnr: p,
                actions: traj.actions,
                mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ssims: Vec<f64> = records.iter().map(|r| r.ssim).collect();
    let psnrs: Vec<f64> = records.iter().map(|r| r.psnr).collect();
    let (mean_ssim, std_ssim) = mean_std(&ssims);
    let (mean_psnr, std_psnr) = mean_std(&psnrs);
    Ok(EvalSummary {
        policy: policy.name().into(),
        n_images: records.len(),
        mean_ssim,
        std_ssim,
        mean_psnr,
        std_psnr,
        policy_calls: counting_policy.map_or(0, |c| c.calls() as u64),
        recon_calls: counting_recon.calls() as u64,
        records,
    })
}

/// The environment a framework's reconstructor is evaluated under.
pub(crate) fn with_mode(env: &EnvConfig, mode: RewardMode) -> EnvConfig {
    EnvConfig {
        reward_mode: mode,
        ..env.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{heuristic_sample, HeuristicPolicyCfg, ZeroFilled};
    use crate::harness::{generate_phantoms, PhantomConfig};
    use crate::models::{ReconArch, ReconParams};

    fn images(n: usize, count: usize) -> Vec<RealImage> {
        generate_phantoms(&PhantomConfig {
            n,
            count,
            seed: 4,
            ..PhantomConfig::default()
        })
        .unwrap()
        .images
    }

    #[test]
    fn full_sampling_is_perfect() {
        let imgs = images(8, 4);
        let env = EnvConfig::custom(8, 1.0, 2.0, RewardMode::Sparse);
        let r = ReconParams::zeros(ReconArch::new(8, 2, 3));
        let s = evaluate(EvalPolicy::Random, &r, &imgs, &env, 0).unwrap();
        assert!((s.mean_ssim - 1.0).abs() < 1e-9);
        assert_eq!(s.n_images, 4);
        assert_eq!(s.recon_calls, 4);
        assert_eq!(s.policy_calls, 4 * 4);
    }

    #[test]
    fn same_seed_same_summary() {
        let imgs = images(16, 6);
        let env = EnvConfig::custom(16, 4.0, 8.0, RewardMode::Sparse);
        let a = evaluate(EvalPolicy::Random, &ZeroFilled, &imgs, &env, 3).unwrap();
        let b = evaluate(EvalPolicy::Random, &ZeroFilled, &imgs, &env, 3).unwrap();
        assert_eq!(a, b);
        let g = evaluate(EvalPolicy::Greedy, &ZeroFilled, &imgs, &env, 3).unwrap();
        assert_eq!(g.policy_calls, 0);
        assert!(g.mean_ssim >= a.mean_ssim - 1e-12 || g.mean_ssim > 0.0);
    }

    #[test]
    fn random_marginals_match_heuristic() {
        // Column inclusion frequencies of evaluated random masks against
        // direct heuristic draws, each within 3 sigma of the exact marginal.
        let n = 8;
        let env =
            EnvConfig::custom(n, 8.0 / 3.0, 8.0, RewardMode::Sparse).with_metric(MetricConfig::ssim_with_window(3));
        let x = images(n, 1).remove(0);
        let reps = 3000;
        let imgs = vec![x; reps];
        let s = evaluate(EvalPolicy::Random, &ZeroFilled, &imgs, &env, 8).unwrap();
        let hp = HeuristicPolicyCfg::terminal(3);
        let mut rng = rng_stream(1, "heur", 0);
        let mut eval_freq = vec![0.0; n];
        let mut heur_freq = vec![0.0; n];
        for r in &s.records {
            for c in 0..n {
                eval_freq[c] += r.mask[c] as f64;
            }
        }
        for _ in 0..reps {
            let m = heuristic_sample(&hp, &env, &mut rng).unwrap();
            for c in m.sampled() {
                heur_freq[c] += 1.0;
            }
        }
        // Two free picks among seven columns: marginal 2/7 for each.
        let p = 2.0 / 7.0;
        let sd = (reps as f64 * p * (1.0 - p)).sqrt();
        for c in 1..n {
            assert!((eval_freq[c] - reps as f64 * p).abs() < 3.0 * sd, "eval column {c}");
            assert!(
                (heur_freq[c] - reps as f64 * p).abs() < 3.0 * sd,
                "heuristic column {c}"
            );
        }
        assert_eq!(eval_freq[0], reps as f64);
    }
}
