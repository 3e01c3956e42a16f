use super::config::EnvConfig;
use super::env::{Reconstructor, SamplingState, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::{similarity, RealImage};

/// Outcome of one greedy lookahead: the chosen column, the reconstruction it
/// yields and that reconstruction's similarity.
#[derive(Debug, Clone)]
pub struct GreedyChoice {
    pub action: usize,
    pub recon: RealImage,
    pub score: f64,
}

/// One-step lookahead against the ground truth over every unsampled column.
/// Costs one reconstructor call per candidate.
pub fn greedy_oracle_choice(
    s: &SamplingState,
    x: &RealImage,
    recon: &dyn Reconstructor,
    cfg: &EnvConfig,
) -> Result<GreedyChoice> {
    let mut best: Option<GreedyChoice> = None;
    for a in s.mask.unsampled() {
        let cand = s.advanced(a)?;
        let img = recon.reconstruct(&cand.observed, &cand.mask)?;
        let score = similarity(&img, x, &cfg.metric)?;
        // Strict comparison keeps the lowest index among ties.
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(GreedyChoice {
                action: a,
                recon: img,
                score,
            });
        }
    }
    best.ok_or(Error::NoAction)
}

pub fn greedy_oracle_step(
    s: &SamplingState,
    x: &RealImage,
    recon: &dyn Reconstructor,
    cfg: &EnvConfig,
) -> Result<usize> {
    Ok(greedy_oracle_choice(s, x, recon, cfg)?.action)
}

/// A full greedy episode. The reconstruction of the winning candidate is
/// reused as the next state's reconstruction, so the episode costs exactly
/// the candidate evaluations. Rewards are recorded terminal-only.
pub fn greedy_rollout(
    s0: SamplingState,
    x: &RealImage,
    recon: &dyn Reconstructor,
    cfg: &EnvConfig,
) -> Result<Trajectory> {
    let t_max = cfg.t_horizon()?;
    let mut s = s0;
    let mut states = Vec::with_capacity(t_max + 1);
    let mut actions = Vec::with_capacity(t_max);
    let mut rewards = Vec::with_capacity(t_max);
    while s.step < t_max {
        let choice = greedy_oracle_choice(&s, x, recon, cfg)?;
        let next = s.advanced(choice.action)?.with_cache(choice.recon, choice.score);
        actions.push(choice.action);
        rewards.push(if next.step == t_max { choice.score } else { 0.0 });
        states.push(s);
        s = next;
    }
    if t_max == 0 {
        s.ensure_recon(x, recon, cfg)?;
    }
    let terminal_recon = s.cached_recon().cloned().expect("terminal reconstruction");
    states.push(s);
    Ok(Trajectory {
        actions,
        rewards,
        states,
        terminal_recon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{init_state, CountingReconstructor, RewardMode, ZeroFilled};
    use crate::numerics::{dft2, MetricConfig};

    /// An image whose k-space outside DC lives only in the Nyquist column.
    fn one_column_phantom(n: usize) -> RealImage {
        RealImage::from_fn(n, |_, c| {
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            0.5 + 0.3 * sign
        })
    }

    #[test]
    fn picks_the_informative_column() {
        let n = 8;
        let x = one_column_phantom(n);
        let y = dft2(&x).unwrap();
        let cfg = EnvConfig::custom(n, 4.0, 8.0, RewardMode::Sparse).with_metric(MetricConfig::neg_mse());
        let s = init_state(&x, &cfg).unwrap();
        // Brute force: the column with the largest energy among unsampled ones.
        let energy = |c: usize| (0..n).map(|r| y.get(r, c).norm_sqr()).sum::<f64>();
        let best = s
            .mask
            .unsampled()
            .into_iter()
            .fold((usize::MAX, -1.0), |(bi, be), c| {
                if energy(c) > be + 1e-12 {
                    (c, energy(c))
                } else {
                    (bi, be)
                }
            })
            .0;
        assert_eq!(best, n / 2);
        assert_eq!(greedy_oracle_step(&s, &x, &ZeroFilled, &cfg).unwrap(), best);
    }

    #[test]
    fn single_free_column() {
        let x = one_column_phantom(4);
        let cfg = EnvConfig::custom(4, 1.0, 4.0 / 3.0, RewardMode::Sparse).with_metric(MetricConfig::neg_mse());
        let s = init_state(&x, &cfg).unwrap();
        assert_eq!(s.mask.count(), 3);
        let free = s.mask.unsampled()[0];
        assert_eq!(greedy_oracle_step(&s, &x, &ZeroFilled, &cfg).unwrap(), free);
        let full = s.advanced(free).unwrap();
        assert!(matches!(
            greedy_oracle_step(&full, &x, &ZeroFilled, &cfg),
            Err(Error::NoAction)
        ));
    }

    #[test]
    fn greedy_episode_cost() {
        let x = one_column_phantom(8);
        let cfg = EnvConfig::custom(8, 2.0, 4.0, RewardMode::Sparse).with_metric(MetricConfig::neg_mse());
        let counter = CountingReconstructor::new(ZeroFilled);
        let traj = greedy_rollout(init_state(&x, &cfg).unwrap(), &x, &counter, &cfg).unwrap();
        assert_eq!(traj.actions.len(), 2);
        assert_eq!(counter.calls(), 6 + 5);
    }
}
