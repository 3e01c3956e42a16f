use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::belief::{BeliefProblem, Information, ObservationMode, TerminalRecon};
use super::tabular::{best_response_reconstructor, require_neg_mse, MaskDistribution};
use crate::binio::{hex, sha256};
use crate::envs::{
    centered_columns, greedy_rollout, init_state, rollout_from, ActionRule, CountingReconstructor, CountingSampler,
    EnvConfig, Reconstructor, RewardMode, Sampler,
};
use crate::error::{invalid_input, Error, Result};
use crate::harness::{Dataset, Split};
use crate::models::{PolicyParams, ReconParams};
use crate::numerics::{ColumnMask, MetricConfig, RealImage};
use crate::training::{frozen_gradient, frozen_objective, rng_stream, sample_frozen_set, PreparedSplit};

/// Tolerance for the reward-gap and mismatch inequalities.
pub const INEQ_TOL: f64 = 1e-12;

/// SHA-256 of the environment's JSON form.
pub fn config_fingerprint(env: &EnvConfig) -> String {
    let s = serde_json::to_string(env).expect("environment config serializes");
    hex(&sha256(s.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardGapReport {
    pub dense_sup: f64,
    pub sparse_sup: f64,
    pub gap: f64,
    pub holds: bool,
    pub dataset_fingerprint: String,
    pub config_fingerprint: String,
}

/// Compares the best joint value of the two formulations on a finite
/// dataset. `sparse_sup` lets the sampler condition on raw observations and
/// scores terminal masks with the best response. `dense_sup` is the same
/// except that before each intermediate decision the sampler sees only
/// `intermediate`'s reconstruction (it still remembers earlier ones), which
/// can only merge observation classes.
pub fn reward_gap_check(data: &Dataset, env: &EnvConfig, intermediate: &dyn Reconstructor) -> Result<RewardGapReport> {
    require_neg_mse(&env.metric)?;
    let p = BeliefProblem::from_dataset(data, env)?;
    let sparse = p.solve(
        Information::Observation,
        TerminalRecon::BestResponse,
        ObservationMode::Belief,
    )?;
    let dense = p.solve(
        Information::Reconstruction(intermediate),
        TerminalRecon::BestResponse,
        ObservationMode::Belief,
    )?;
    Ok(RewardGapReport {
        dense_sup: dense.value,
        sparse_sup: sparse.value,
        gap: sparse.value - dense.value,
        holds: dense.value <= sparse.value + INEQ_TOL,
        dataset_fingerprint: data.fingerprint(),
        config_fingerprint: config_fingerprint(env),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub value_terminal_pretrain: f64,
    pub value_mixture_pretrain: f64,
    pub holds: bool,
    /// The check is over tabular reconstructors and belief-optimal samplers,
    /// not the continuous function classes.
    pub scope: String,
    pub dataset_fingerprint: String,
    pub config_fingerprint: String,
}

/// Refuses mask laws that miss some terminal mask containing the initial
/// block.
pub fn require_full_terminal_support(dist: &MaskDistribution, env: &EnvConfig) -> Result<()> {
    let n = env.n;
    let k0 = env.initial_count()?;
    let m0 = ColumnMask::from_indices(n, &centered_columns(n, k0))?;
    for m in super::belief::enumerate_masks(n, env.target_count()?)? {
        if m.contains(&m0) && !(dist.weight(&m) > 0.0) {
            return Err(Error::AssumptionViolated(format!(
                "terminal mask {:?} has zero probability",
                m.sampled()
            )));
        }
    }
    Ok(())
}

/// Best sampler value with the reconstructor fitted to `terminal` (sampler
/// sees observations) against the one fitted to `mixture`, which also serves
/// as the sampler's intermediate view. Both laws must give every terminal
/// mask positive weight.
pub fn mismatch_check(
    data: &Dataset,
    env: &EnvConfig,
    terminal: &MaskDistribution,
    mixture: &MaskDistribution,
) -> Result<MismatchReport> {
    require_neg_mse(&env.metric)?;
    require_full_terminal_support(terminal, env)?;
    require_full_terminal_support(mixture, env)?;
    let r_term = best_response_reconstructor(data, &terminal.support(), &env.metric)?;
    let r_mix = best_response_reconstructor(data, &mixture.support(), &env.metric)?;
    let p = BeliefProblem::from_dataset(data, env)?;
    let vt = p.solve(
        Information::Observation,
        TerminalRecon::Fixed(&r_term),
        ObservationMode::Belief,
    )?;
    let vm = p.solve(
        Information::Reconstruction(&r_mix),
        TerminalRecon::Fixed(&r_mix),
        ObservationMode::Belief,
    )?;
    Ok(MismatchReport {
        value_terminal_pretrain: vt.value,
        value_mixture_pretrain: vm.value,
        holds: vt.value >= vm.value - INEQ_TOL,
        scope: "tabular reconstructors, belief-optimal samplers".into(),
        dataset_fingerprint: data.fingerprint(),
        config_fingerprint: config_fingerprint(env),
    })
}

/// Four 6x6 images built from column-frequency cosines (`c_k` has frequency
/// `k`) around a flat base:
/// `A1 = b + u c1 + v c2 + w c3`, `A2 = b + u c1 - v c2 + w c3`,
/// `B1 = b - u c1 + v c2 + w c3`, `B2 = b - u c1 + v c2 - w c3`.
/// Column 1 separates A from B, then column 2 separates the A pair and
/// column 3 the B pair. Every fixed pair of columns leaves a collision, so an
/// adaptive sampler strictly beats any sampler that learns nothing until
/// the end. The environment starts from the DC column with two actions.
pub fn engineered_instance(u: f64, v: f64, w: f64) -> Result<(Dataset, EnvConfig)> {
    let n = 6;
    let cosk = |k: usize, c: usize| (2.0 * std::f64::consts::PI * (k * c) as f64 / n as f64).cos();
    let make = |su: f64, sv: f64, sw: f64| {
        RealImage::from_fn(n, |_, c| {
            0.5 + su * u * cosk(1, c) + sv * v * cosk(2, c) + sw * w * cosk(3, c)
        })
    };
    let images = vec![
        make(1.0, 1.0, 1.0),
        make(1.0, -1.0, 1.0),
        make(-1.0, 1.0, 1.0),
        make(-1.0, 1.0, -1.0),
    ];
    let data = Dataset::from_images(images, Split::Train)?;
    let env = EnvConfig::custom(n, 2.0, 6.0, RewardMode::Sparse).with_metric(MetricConfig {
        dynamic_range: Some(1.0),
        ..MetricConfig::neg_mse()
    });
    Ok((data, env))
}

/// Terminal heuristic law and a mixture over only the initial and terminal
/// counts, so the mixture-fitted table has no data at intermediate masks.
pub fn engineered_mismatch_laws(env: &EnvConfig) -> Result<(MaskDistribution, MaskDistribution)> {
    use crate::envs::HeuristicPolicyCfg;
    let k0 = env.initial_count()?;
    let kt = env.target_count()?;
    let term = MaskDistribution::from_heuristic(&HeuristicPolicyCfg::terminal(kt), env)?;
    let mix = MaskDistribution::from_heuristic(&HeuristicPolicyCfg::mixture_uniform(vec![k0, kt]), env)?;
    Ok((term, mix))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenGradientReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub coords: usize,
    pub n_traj: usize,
    pub objective: f64,
}

/// Denominator floor in the relative error, so coordinates whose gradient is
/// numerically zero are judged by absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Checks the frozen-trajectory gradient of the mean terminal similarity
/// against central differences with step `h`: all coordinates up to 400,
/// otherwise a random subset of 400.
pub fn frozen_gradient_check(
    r: &ReconParams,
    p: &PolicyParams,
    data: &Dataset,
    env: &EnvConfig,
    n_traj: usize,
    h: f64,
    seed: u64,
) -> Result<FrozenGradientReport> {
    if env.reward_mode != RewardMode::Sparse {
        return Err(invalid_input(
            "the frozen-trajectory gradient is defined for the sparse objective",
        ));
    }
    if n_traj == 0 || !(h > 0.0) {
        return Err(invalid_input("need n_traj > 0 and h > 0"));
    }
    let prep = PreparedSplit::new(data.images.clone())?;
    let per_image = n_traj.div_ceil(prep.len());
    let mut set = sample_frozen_set(p, &prep, env, per_image, seed, "frozen-grad")?;
    // Keep n_traj items spread over images: item k of image i sits at i*per_image + k.
    let mut order: Vec<usize> = (0..set.items.len()).collect();
    order.sort_by_key(|&j| (j % per_image, j / per_image));
    order.truncate(n_traj);
    order.sort_unstable();
    set.items = order.iter().map(|&j| set.items[j].clone()).collect();
    let all: Vec<usize> = (0..set.items.len()).collect();
    let (objective, grad) = frozen_gradient(r, &set, &all, &prep, &env.metric)?;
    let len = r.params.len();
    let mut coords: Vec<usize> = (0..len).collect();
    if len > 400 {
        coords.shuffle(&mut rng_stream(seed, "frozen-grad-coords", 0));
        coords.truncate(400);
        coords.sort_unstable();
    }
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for &k in &coords {
        let mut plus = r.clone();
        plus.params.values_mut()[k] += h;
        let mut minus = r.clone();
        minus.params.values_mut()[k] -= h;
        let fd = (frozen_objective(&plus, &set, &prep, &env.metric)?
            - frozen_objective(&minus, &set, &prep, &env.metric)?)
            / (2.0 * h);
        let a = grad.values()[k];
        max_rel = max_rel.max(rel_err(a, fd));
        max_abs = max_abs.max((a - fd).abs());
    }
    Ok(FrozenGradientReport {
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        coords: coords.len(),
        n_traj: set.items.len(),
        objective,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Sparse,
    Dense,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostAudit {
    pub kind: AuditKind,
    pub n: usize,
    pub horizon: usize,
    pub initial_count: usize,
    pub policy_calls: u64,
    pub recon_calls: u64,
    pub expected_policy_calls: u64,
    pub expected_recon_calls: u64,
    /// The published cost expression, verbatim, and its value here. For the
    /// greedy oracle it omits the initial columns; the audit checks the
    /// corrected count.
    pub published_formula: String,
    pub published_formula_value: f64,
    pub passed: bool,
}

/// Runs one episode of `kind` on `x` through counting wrappers and compares
/// the exact call counts with the closed forms.
pub fn cost_audit(
    kind: AuditKind,
    sampler: &dyn Sampler,
    recon: &dyn Reconstructor,
    x: &RealImage,
    env: &EnvConfig,
    seed: u64,
) -> Result<CostAudit> {
    let mode = match kind {
        AuditKind::Dense => RewardMode::Dense,
        _ => RewardMode::Sparse,
    };
    let env = EnvConfig {
        reward_mode: mode,
        ..env.clone()
    };
    let t = env.t_horizon()? as u64;
    let n = env.n as u64;
    let k0 = env.initial_count()? as u64;
    let cr = CountingReconstructor::new(recon);
    let cs = CountingSampler::new(sampler);
    let s0 = init_state(x, &env)?;
    match kind {
        AuditKind::Greedy => {
            greedy_rollout(s0, x, &cr, &env)?;
        }
        _ => {
            rollout_from(
                &cs,
                s0,
                x,
                &env,
                &cr,
                ActionRule::Sample,
                &mut rng_stream(seed, "audit", 0),
            )?;
        }
    }
    let (exp_p, exp_r, formula, value) = match kind {
        AuditKind::Sparse => (t, 1, "T*C_pi + C_R", 1.0),
        AuditKind::Dense => (t, t + 1, "T*C_pi + (T+1)*C_R", (t + 1) as f64),
        AuditKind::Greedy => {
            // Step j has N - k0 - j candidates.
            let exact = (0..t).map(|j| n - k0 - j).sum::<u64>();
            let published = t as f64 * (n as f64 - (t as f64 - 1.0) / 2.0);
            (0, exact, "T*(N - (T-1)/2)*C_R", published)
        }
    };
    let policy_calls = cs.calls() as u64;
    let recon_calls = cr.calls() as u64;
    Ok(CostAudit {
        kind,
        n: env.n,
        horizon: t as usize,
        initial_count: k0 as usize,
        policy_calls,
        recon_calls,
        expected_policy_calls: exp_p,
        expected_recon_calls: exp_r,
        published_formula: formula.into(),
        published_formula_value: value,
        passed: policy_calls == exp_p && recon_calls == exp_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{UniformSampler, ZeroFilled};
    use crate::oracle::ConstantReconstructor;

    #[test]
    fn engineered_instance_has_strict_gap() {
        let (d, env) = engineered_instance(0.1, 0.1, 0.1).unwrap();
        let c = ConstantReconstructor(RealImage::filled(6, 0.5));
        let r = reward_gap_check(&d, &env, &c).unwrap();
        assert!(r.holds);
        assert!((r.sparse_sup - 1.0).abs() < 1e-12, "{r:?}");
        assert!(r.gap > 1e-6, "{r:?}");
    }

    #[test]
    fn injective_intermediate_closes_gap() {
        let (d, env) = engineered_instance(0.1, 0.1, 0.1).unwrap();
        let r = reward_gap_check(&d, &env, &ZeroFilled).unwrap();
        assert!((r.gap).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn zero_horizon_equal() {
        let (d, _) = engineered_instance(0.1, 0.1, 0.1).unwrap();
        let env = EnvConfig::custom(6, 6.0, 6.0, RewardMode::Sparse).with_metric(MetricConfig::neg_mse());
        let r = reward_gap_check(&d, &env, &ConstantReconstructor(RealImage::zeros(6))).unwrap();
        assert_eq!(r.dense_sup, r.sparse_sup);
    }

    #[test]
    fn mismatch_direction_and_gate() {
        let (d, env) = engineered_instance(0.1, 0.1, 0.1).unwrap();
        let (term, mix) = engineered_mismatch_laws(&env).unwrap();
        let r = mismatch_check(&d, &env, &term, &mix).unwrap();
        assert!(r.holds);
        assert!(r.value_terminal_pretrain > r.value_mixture_pretrain + 1e-6, "{r:?}");
        let point = MaskDistribution {
            entries: vec![(ColumnMask::from_indices(6, &[0, 1, 2]).unwrap(), 1.0)],
        };
        assert!(matches!(
            mismatch_check(&d, &env, &point, &mix),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn audit_counts() {
        let x = RealImage::from_fn(8, |r, c| ((r * 3 + c) % 5) as f64 / 5.0);
        let env = EnvConfig::custom(8, 2.0, 4.0, RewardMode::Sparse);
        let s = cost_audit(AuditKind::Sparse, &UniformSampler, &ZeroFilled, &x, &env, 0).unwrap();
        assert_eq!((s.policy_calls, s.recon_calls), (2, 1));
        let d = cost_audit(AuditKind::Dense, &UniformSampler, &ZeroFilled, &x, &env, 0).unwrap();
        assert_eq!((d.policy_calls, d.recon_calls), (2, 3));
        let g = cost_audit(AuditKind::Greedy, &UniformSampler, &ZeroFilled, &x, &env, 0).unwrap();
        assert_eq!((g.policy_calls, g.recon_calls), (0, 11));
        assert_eq!(g.published_formula_value, 15.0);
        assert!(s.passed && d.passed && g.passed);
    }
}
