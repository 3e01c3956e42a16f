use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, Result};
use crate::models::{PolicyArch, ReconArch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Reconstructor pretraining iterations (round 0).
    pub pretrain_iters: usize,
    /// Reconstructor iterations in each alternation round.
    pub round_iters: usize,
    /// Environment steps per sampler-training phase.
    pub a2c_steps: usize,
    /// Episodes collected per A2C update.
    pub a2c_envs: usize,
    /// n-step return window; `None` uses the episode length.
    pub update_timestep: Option<usize>,
    pub lr_policy: f64,
    pub lr_recon: f64,
    pub lr_decay: f64,
    pub alternations: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    /// Frozen trajectories per training image during on-policy retraining.
    pub traj_per_image: usize,
    pub policy_channels: usize,
    pub policy_kernel: usize,
    pub policy_hidden: usize,
    pub recon_channels: usize,
    pub recon_kernel: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            pretrain_iters: 300,
            round_iters: 150,
            a2c_steps: 20_000,
            a2c_envs: 8,
            update_timestep: None,
            lr_policy: 3e-4,
            lr_recon: 3e-4,
            lr_decay: 3.0,
            alternations: 5,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantage: false,
            traj_per_image: 1,
            policy_channels: 4,
            policy_kernel: 3,
            policy_hidden: 64,
            recon_channels: 8,
            recon_kernel: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("a2c_envs", self.a2c_envs),
            ("traj_per_image", self.traj_per_image),
            ("policy_channels", self.policy_channels),
            ("policy_hidden", self.policy_hidden),
            ("recon_channels", self.recon_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(invalid_config(format!("{name} must be positive")));
            }
        }
        if self.update_timestep == Some(0) {
            return Err(invalid_config("update_timestep must be positive"));
        }
        for (name, k) in [
            ("policy_kernel", self.policy_kernel),
            ("recon_kernel", self.recon_kernel),
        ] {
            if k % 2 == 0 {
                return Err(invalid_config(format!("{name} must be odd")));
            }
        }
        for (name, v) in [("lr_policy", self.lr_policy), ("lr_recon", self.lr_recon)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid_config(format!("{name} must be a nonnegative number")));
            }
        }
        if !(self.lr_decay > 0.0) {
            return Err(invalid_config("lr_decay must be positive"));
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0 && self.max_grad_norm >= 0.0) {
            return Err(invalid_config("loss coefficients and clip norm must be nonnegative"));
        }
        Ok(())
    }

    pub fn policy_arch(&self, n: usize) -> PolicyArch {
        PolicyArch::new(n, self.policy_channels, self.policy_kernel, self.policy_hidden)
    }

    pub fn recon_arch(&self, n: usize) -> ReconArch {
        ReconArch::new(n, self.recon_channels, self.recon_kernel)
    }

    /// Sampler learning rate in alternation round `l >= 1`.
    pub fn policy_lr(&self, round: usize) -> f64 {
        decayed_lr(self.lr_policy, self.lr_decay, round.saturating_sub(1))
    }

    /// Reconstructor learning rate in round `l` (0 is pretraining).
    pub fn recon_lr(&self, round: usize) -> f64 {
        decayed_lr(self.lr_recon, self.lr_decay, round)
    }
}

/// `base / decay^l`.
pub fn decayed_lr(base: f64, decay: f64, l: usize) -> f64 {
    base / decay.powi(l as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_exact() {
        let c = TrainConfig::default();
        assert_eq!(c.recon_lr(0), 3e-4);
        assert_eq!(c.recon_lr(2), 3e-4 / 9.0);
        assert_eq!(c.policy_lr(1), 3e-4);
        assert_eq!(c.policy_lr(3), 3e-4 / 9.0);
        assert_eq!(decayed_lr(1.0, 3.0, 4), 1.0 / 81.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            recon_kernel: 2,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr_decay: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        TrainConfig::default().validate().unwrap();
    }
}
