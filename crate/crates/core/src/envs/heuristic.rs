use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{centered_columns, EnvConfig};
use crate::error::{invalid_config, Result};
use crate::numerics::ColumnMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    /// Always sample up to one fixed column count.
    Terminal,
    /// Draw the column count from `weights` first.
    Mixture,
}

/// Random column masks that keep the initial low-frequency block and add
/// uniformly chosen distinct columns until a target count is reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicPolicyCfg {
    pub kind: HeuristicKind,
    pub target_counts: Vec<usize>,
    #[serde(default)]
    pub weights: Vec<f64>,
}

impl HeuristicPolicyCfg {
    pub fn terminal(count: usize) -> Self {
        Self {
            kind: HeuristicKind::Terminal,
            target_counts: vec![count],
            weights: vec![1.0],
        }
    }

    pub fn mixture(counts: Vec<usize>, weights: Vec<f64>) -> Self {
        Self {
            kind: HeuristicKind::Mixture,
            target_counts: counts,
            weights,
        }
    }

    pub fn mixture_uniform(counts: Vec<usize>) -> Self {
        let w = 1.0 / counts.len().max(1) as f64;
        let weights = vec![w; counts.len()];
        Self::mixture(counts, weights)
    }

    /// Terminal heuristic matching the environment's final column count.
    pub fn terminal_for(env: &EnvConfig) -> Result<Self> {
        Ok(Self::terminal(env.target_count()?))
    }

    /// Uniform mixture over every count from the initial mask to the target.
    pub fn mixture_for(env: &EnvConfig) -> Result<Self> {
        Ok(Self::mixture_uniform(
            (env.initial_count()?..=env.target_count()?).collect(),
        ))
    }

    pub fn validate(&self, env: &EnvConfig) -> Result<()> {
        if self.target_counts.is_empty() {
            return Err(invalid_config("heuristic needs at least one target count"));
        }
        if self.kind == HeuristicKind::Terminal && self.target_counts.len() != 1 {
            return Err(invalid_config("terminal heuristic takes exactly one target count"));
        }
        let weights = self.effective_weights();
        if weights.len() != self.target_counts.len() {
            return Err(invalid_config("weights and target_counts differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid_config("heuristic weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid_config(format!("heuristic weights sum to {total}, not 1")));
        }
        let k0 = env.initial_count()?;
        for &t in &self.target_counts {
            if t > env.n {
                return Err(invalid_config(format!("target count {t} exceeds n = {}", env.n)));
            }
            if t < k0 {
                return Err(invalid_config(format!(
                    "target count {t} is below the {k0} initial columns"
                )));
            }
        }
        Ok(())
    }

    fn effective_weights(&self) -> Vec<f64> {
        match self.kind {
            HeuristicKind::Terminal if self.weights.is_empty() => vec![1.0],
            _ => self.weights.clone(),
        }
    }
}

pub fn heuristic_sample(cfg: &HeuristicPolicyCfg, env: &EnvConfig, rng: &mut impl Rng) -> Result<ColumnMask> {
    cfg.validate(env)?;
    let target = match cfg.kind {
        HeuristicKind::Terminal => cfg.target_counts[0],
        HeuristicKind::Mixture => {
            let u: f64 = rng.gen();
            let weights = cfg.effective_weights();
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if *w > 0.0 && u < acc {
                    pick = Some(i);
                    break;
                }
            }
            // Round-off can leave u above the final partial sum.
            let i = pick.unwrap_or_else(|| weights.iter().rposition(|w| *w > 0.0).unwrap());
            cfg.target_counts[i]
        }
    };
    let n = env.n;
    let k0 = env.initial_count()?;
    let mut mask = ColumnMask::from_indices(n, &centered_columns(n, k0))?;
    let mut free = mask.unsampled();
    free.shuffle(rng);
    for &c in free.iter().take(target - k0) {
        mask = crate::numerics::mask_union(&mask, c)?;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::RewardMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env16() -> EnvConfig {
        EnvConfig::custom(16, 4.0, 8.0, RewardMode::Sparse)
    }

    #[test]
    fn terminal_edges() {
        let env = env16();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = heuristic_sample(&HeuristicPolicyCfg::terminal(2), &env, &mut rng).unwrap();
        assert_eq!(m.sampled(), vec![0, 15]);
        let full = heuristic_sample(&HeuristicPolicyCfg::terminal(16), &env, &mut rng).unwrap();
        assert!(full.is_full());
    }

    #[test]
    fn degenerate_mixture() {
        let env = env16();
        let cfg = HeuristicPolicyCfg::mixture(vec![4, 8], vec![1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            assert_eq!(heuristic_sample(&cfg, &env, &mut rng).unwrap().count(), 4);
        }
    }

    #[test]
    fn invalid_heuristics() {
        let env = env16();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(heuristic_sample(&HeuristicPolicyCfg::terminal(1), &env, &mut rng).is_err());
        assert!(heuristic_sample(&HeuristicPolicyCfg::terminal(17), &env, &mut rng).is_err());
        let bad = HeuristicPolicyCfg::mixture(vec![4, 8], vec![0.5, 0.4]);
        assert!(bad.validate(&env).is_err());
    }

    #[test]
    fn mixture_counts_follow_weights() {
        let env = env16();
        let cfg = HeuristicPolicyCfg::mixture(vec![4, 8], vec![0.25, 0.75]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 20_000;
        let eights = (0..trials)
            .filter(|_| heuristic_sample(&cfg, &env, &mut rng).unwrap().count() == 8)
            .count() as f64;
        let sd = (trials as f64 * 0.75 * 0.25).sqrt();
        assert!((eights - 0.75 * trials as f64).abs() < 4.0 * sd);
    }
}
