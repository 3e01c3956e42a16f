use serde::{Deserialize, Serialize};

use super::evaluate::EvalSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean_ssim: f64,
    pub std_ssim: f64,
    pub mean_psnr: f64,
    pub std_psnr: f64,
}

impl From<&EvalSummary> for EvalStats {
    fn from(s: &EvalSummary) -> Self {
        Self {
            mean_ssim: s.mean_ssim,
            std_ssim: s.std_ssim,
            mean_psnr: s.mean_psnr,
            std_psnr: s.std_psnr,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub lr: f64,
    pub iterations: usize,
    /// One entry per optimizer step.
    pub loss_curve: Vec<f64>,
    /// Mean discounted episode return per A2C update (empty elsewhere).
    pub return_curve: Vec<f64>,
    pub policy_calls: u64,
    pub recon_calls: u64,
    pub env_steps: u64,
    pub episodes: u64,
    /// Frozen-set objective before and after on-policy retraining.
    pub objective_before: Option<f64>,
    pub objective_after: Option<f64>,
    pub eval: Option<EvalStats>,
    /// Wall-clock time; kept out of serialized results so they stay
    /// reproducible byte for byte.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Equality ignores wall-clock time.
impl PartialEq for PhaseReport {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name
            && self.lr == o.lr
            && self.iterations == o.iterations
            && self.loss_curve == o.loss_curve
            && self.return_curve == o.return_curve
            && self.policy_calls == o.policy_calls
            && self.recon_calls == o.recon_calls
            && self.env_steps == o.env_steps
            && self.episodes == o.episodes
            && self.objective_before == o.objective_before
            && self.objective_after == o.objective_after
            && self.eval == o.eval
    }
}

/// Evaluation after one alternation phase. `label` is 0 after pretraining,
/// `l - 0.5` after the sampler phase of round `l` and `l` after its
/// reconstructor phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEval {
    pub label: f64,
    pub phase: String,
    pub stats: EvalStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub phases: Vec<PhaseReport>,
    pub round_evals: Vec<RoundEval>,
}

impl TrainReport {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn single(seed: u64, phase: PhaseReport) -> Self {
        Self {
            seed,
            phases: vec![phase],
            round_evals: Vec::new(),
        }
    }

    pub fn extend(&mut self, other: TrainReport) {
        self.phases.extend(other.phases);
        self.round_evals.extend(other.round_evals);
    }

    pub fn policy_calls(&self) -> u64 {
        self.phases.iter().map(|p| p.policy_calls).sum()
    }

    pub fn recon_calls(&self) -> u64 {
        self.phases.iter().map(|p| p.recon_calls).sum()
    }

    pub fn timings(&self) -> Vec<(String, f64)> {
        self.phases.iter().map(|p| (p.name.clone(), p.wall_seconds)).collect()
    }
}
