use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, Result};
use crate::numerics::MetricConfig;

// Guards `floor(N / accel)` against quotients such as 8 / (8/3) landing a hair
// below an integer.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonPreset {
    /// Initial acceleration is twice the target acceleration.
    #[default]
    Base,
    /// Initial acceleration is eight times the target acceleration.
    Long,
    /// `init_accel` given explicitly.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Dense,
    #[default]
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub n: usize,
    pub accel: f64,
    /// Required for `Custom`; must agree with the preset otherwise.
    pub init_accel: Option<f64>,
    pub horizon_preset: HorizonPreset,
    pub discount: f64,
    pub reward_mode: RewardMode,
    pub metric: MetricConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::new(16, 4.0, HorizonPreset::Base, RewardMode::Sparse)
    }
}

impl EnvConfig {
    pub fn new(n: usize, accel: f64, preset: HorizonPreset, reward_mode: RewardMode) -> Self {
        Self {
            n,
            accel,
            init_accel: None,
            horizon_preset: preset,
            discount: 1.0,
            reward_mode,
            metric: MetricConfig::default(),
        }
    }

    pub fn custom(n: usize, accel: f64, init_accel: f64, reward_mode: RewardMode) -> Self {
        Self {
            init_accel: Some(init_accel),
            ..Self::new(n, accel, HorizonPreset::Custom, reward_mode)
        }
    }

    pub fn with_metric(mut self, metric: MetricConfig) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_discount(mut self, gamma: f64) -> Self {
        self.discount = gamma;
        self
    }

    pub fn resolved_init_accel(&self) -> Result<f64> {
        let preset = match self.horizon_preset {
            HorizonPreset::Base => Some(2.0 * self.accel),
            HorizonPreset::Long => Some(8.0 * self.accel),
            HorizonPreset::Custom => None,
        };
        match (preset, self.init_accel) {
            (Some(p), None) => Ok(p),
            (Some(p), Some(given)) if (p - given).abs() <= 1e-12 * p.abs().max(1.0) => Ok(p),
            (Some(p), Some(given)) => Err(invalid_config(format!(
                "init_accel {given} contradicts the {:?} preset (expected {p})",
                self.horizon_preset
            ))),
            (None, Some(given)) => Ok(given),
            (None, None) => Err(invalid_config("custom horizon preset needs init_accel")),
        }
    }

    /// Number of centered columns in the initial mask.
    pub fn initial_count(&self) -> Result<usize> {
        let ia = self.resolved_init_accel()?;
        if !(ia > 0.0) {
            return Err(invalid_config("init_accel must be positive"));
        }
        Ok((self.n as f64 / ia + FLOOR_EPS).floor() as usize)
    }

    /// Number of sampled columns after the last action.
    pub fn target_count(&self) -> Result<usize> {
        if !(self.accel > 0.0) {
            return Err(invalid_config("accel must be positive"));
        }
        Ok((self.n as f64 / self.accel + FLOOR_EPS).floor() as usize)
    }

    pub fn t_horizon(&self) -> Result<usize> {
        let (a, b) = (self.target_count()?, self.initial_count()?);
        Ok(a.saturating_sub(b))
    }

    /// Full validation; an episode must have at least one action.
    pub fn validate(&self) -> Result<()> {
        self.check(false)
    }

    /// Like [`validate`](Self::validate) but allows an empty action budget,
    /// which the oracles use as a degenerate case.
    pub fn check(&self, allow_empty_horizon: bool) -> Result<()> {
        if self.n < 2 {
            return Err(invalid_config("n must be at least 2"));
        }
        let ia = self.resolved_init_accel()?;
        if ia < self.accel {
            return Err(invalid_config(format!(
                "init_accel {ia} must be at least accel {}",
                self.accel
            )));
        }
        let k0 = self.initial_count()?;
        if k0 == 0 {
            return Err(invalid_config(format!(
                "init_accel {ia} leaves no initial columns at n = {}",
                self.n
            )));
        }
        let kt = self.target_count()?;
        if kt > self.n {
            return Err(invalid_config("accel below 1 asks for more columns than exist"));
        }
        if kt < k0 || (!allow_empty_horizon && kt == k0) {
            return Err(invalid_config(format!(
                "horizon is empty: {k0} initial columns, {kt} target columns"
            )));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(invalid_config("discount must lie in [0, 1]"));
        }
        self.metric.validate(self.n)
    }
}

/// The `k` lowest-frequency column indices in natural DFT order.
///
/// Columns are ranked by the distance of their shifted index to the shifted
/// position of DC, with ties going to the lower shifted index. The order is
/// therefore DC, -1, +1, -2, +2, ... (natural indices 0, N-1, 1, N-2, ...).
pub fn centered_columns(n: usize, k: usize) -> Vec<usize> {
    let center = n / 2;
    let mut shifted: Vec<usize> = (0..n).collect();
    shifted.sort_by_key(|&s| (s.abs_diff(center), s));
    shifted.into_iter().take(k).map(|s| (s + n - center) % n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        let c = EnvConfig::new(16, 4.0, HorizonPreset::Base, RewardMode::Sparse);
        assert_eq!(c.initial_count().unwrap(), 2);
        assert_eq!(c.target_count().unwrap(), 4);
        assert_eq!(c.t_horizon().unwrap(), 2);
        let l = EnvConfig::new(64, 4.0, HorizonPreset::Long, RewardMode::Sparse);
        assert_eq!(l.initial_count().unwrap(), 2);
        assert_eq!(l.t_horizon().unwrap(), 14);
        c.validate().unwrap();
    }

    #[test]
    fn floor_guard() {
        let c = EnvConfig::custom(8, 8.0 / 3.0, 8.0, RewardMode::Sparse);
        assert_eq!(c.target_count().unwrap(), 3);
        assert_eq!(c.t_horizon().unwrap(), 2);
    }

    #[test]
    fn bad_configs() {
        assert!(EnvConfig::custom(16, 4.0, 2.0, RewardMode::Sparse).validate().is_err());
        assert!(EnvConfig::custom(4, 2.0, 8.0, RewardMode::Sparse).validate().is_err());
        let mut c = EnvConfig::new(16, 4.0, HorizonPreset::Base, RewardMode::Sparse);
        c.init_accel = Some(7.0);
        assert!(c.validate().is_err());
        c.init_accel = None;
        c.discount = 1.5;
        assert!(c.validate().is_err());
        let empty = EnvConfig::custom(8, 4.0, 4.0, RewardMode::Sparse);
        assert!(empty.validate().is_err());
        empty.check(true).unwrap();
    }

    #[test]
    fn centered_order() {
        assert_eq!(centered_columns(4, 1), vec![0]);
        assert_eq!(centered_columns(8, 5), vec![0, 7, 1, 6, 2]);
        let mut eight = centered_columns(16, 8);
        eight.sort();
        assert_eq!(eight, vec![0, 1, 2, 3, 12, 13, 14, 15]);
        assert_eq!(centered_columns(5, 3), vec![0, 4, 1]);
    }
}
