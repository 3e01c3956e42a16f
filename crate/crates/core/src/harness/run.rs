//! Mode dispatch for the command-line tool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{EvalPolicyKind, ExperimentConfig, Mode};
use super::dataset::{load_dataset, save_dataset, Dataset};
use super::phantom::{generate_phantoms, PhantomConfig};
use super::results::{OracleResults, ResultsDocument};
use crate::binio::{atomic_write, hex, sha256};
use crate::envs::{EnvConfig, HeuristicKind, HeuristicPolicyCfg, RewardMode, UniformSampler, ZeroFilled};
use crate::error::{invalid_config, Error, Result};
use crate::models::{load_checkpoint, save_checkpoint, Checkpoint, PolicyParams, ReconParams};
use crate::numerics::{MetricConfig, RealImage};
use crate::oracle::{
    cost_audit, engineered_instance, engineered_mismatch_laws, frozen_gradient_check, mismatch_check,
    require_full_terminal_support, reward_gap_check, AuditKind, ConstantReconstructor, MaskDistribution, INEQ_TOL,
};
use crate::training::{
    baseline_dense, baseline_random, evaluate, greedy_baseline, l2s, l2sr, pretrain_reconstructor, rng_stream,
    EvalPolicy, TrainReport, Trained,
};

pub const RESULTS_FILE: &str = "results.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const TIMING_FILE: &str = "timing.json";
pub const DATASET_FILE: &str = "dataset.bin";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const RECON_FILE: &str = "recon.ckpt";

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const AUDIT: i32 = 4;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidInput(_)
        | Error::AssumptionViolated(_)
        | Error::UnsupportedMetric(_) => exit::CONFIG,
        Error::TrainingDiverged(_) => exit::DIVERGED,
        _ => exit::FAILURE,
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub document: ResultsDocument,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    /// `exit::AUDIT` when any audit in the document failed.
    pub fn exit_code(&self) -> i32 {
        if self.document.audits_passed() {
            exit::OK
        } else {
            exit::AUDIT
        }
    }
}

#[derive(Serialize)]
struct Timing<'a> {
    config_fingerprint: &'a str,
    dataset_fingerprint: Option<&'a str>,
    total_seconds: f64,
    phases: BTreeMap<String, f64>,
}

/// Refuses a non-empty output directory unless `force`, then creates it.
fn prepare_out_dir(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        if !out.is_dir() {
            return Err(invalid_config(format!(
                "{} exists and is not a directory",
                out.display()
            )));
        }
        if !force && std::fs::read_dir(out)?.next().is_some() {
            return Err(invalid_config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    }
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// The configuration a mode actually runs with: the sampler frameworks fix
/// their reward mode.
pub fn effective_config(cfg: &ExperimentConfig, mode: Mode) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.mode = Some(mode);
    match mode {
        Mode::L2s | Mode::L2sr | Mode::OracleCheck => c.env.reward_mode = RewardMode::Sparse,
        Mode::BaselineDense => c.env.reward_mode = RewardMode::Dense,
        _ => {}
    }
    c
}

fn dataset_for(cfg: &ExperimentConfig) -> Result<Dataset> {
    let data = match &cfg.paths.dataset {
        Some(p) => load_dataset(p)?,
        None => generate_phantoms(&cfg.phantom)?,
    };
    if data.n != cfg.env.n {
        return Err(invalid_config(format!(
            "dataset width {} does not match env.n = {}",
            data.n, cfg.env.n
        )));
    }
    Ok(data)
}

struct Writer<'a> {
    out: &'a Path,
    artifacts: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.out.join(name))?;
        self.artifacts.insert(name.into(), hex(&sha256(&bytes)));
        Ok(())
    }

    fn checkpoint(&mut self, name: &str, ckpt: Checkpoint) -> Result<()> {
        save_checkpoint(&ckpt, &self.out.join(name))?;
        self.record(name)
    }
}

/// Runs `cfg` in `mode` and writes the results document, summary, timing and
/// any checkpoints into `out`. Configuration problems are reported before
/// anything is written.
pub fn run(cfg: &ExperimentConfig, mode: Mode, out: &Path, force: bool) -> Result<RunOutcome> {
    let cfg = effective_config(cfg, mode);
    cfg.validate()?;
    if mode == Mode::Eval && cfg.eval.policy == EvalPolicyKind::Learned && cfg.paths.policy.is_none() {
        return Err(invalid_config("eval with a learned policy needs paths.policy"));
    }
    let data = if mode == Mode::OracleCheck {
        None
    } else {
        Some(dataset_for(&cfg)?)
    };
    prepare_out_dir(out, force)?;

    let start = Instant::now();
    let mut doc = ResultsDocument::new(&cfg, mode.name());
    doc.dataset_fingerprint = data.as_ref().map(Dataset::fingerprint);
    let mut w = Writer {
        out,
        artifacts: BTreeMap::new(),
    };
    let mut report: Option<TrainReport> = None;
    let env = &cfg.env;
    let tc = &cfg.train;

    match mode {
        Mode::GenData => {
            save_dataset(data.as_ref().expect("dataset"), &out.join(DATASET_FILE))?;
            w.record(DATASET_FILE)?;
        }
        Mode::Pretrain => {
            let data = data.as_ref().expect("dataset");
            let hp = match cfg.pretrain.heuristic {
                HeuristicKind::Terminal => HeuristicPolicyCfg::terminal_for(env)?,
                HeuristicKind::Mixture => HeuristicPolicyCfg::mixture_for(env)?,
            };
            let init = ReconParams::init(tc.recon_arch(env.n), &mut rng_stream(tc.seed, "recon-init", 0));
            let (r, rep) = pretrain_reconstructor(&init, &hp, data, env, tc)?;
            doc.eval = Some(evaluate(EvalPolicy::Random, &r, &data.eval_split().1, env, tc.seed)?);
            w.checkpoint(RECON_FILE, r.into())?;
            report = Some(rep);
        }
        Mode::L2s | Mode::L2sr | Mode::BaselineDense => {
            let data = data.as_ref().expect("dataset");
            let t: Trained = match mode {
                Mode::L2s => l2s(data, env, tc)?,
                Mode::L2sr => l2sr(data, env, tc)?,
                _ => baseline_dense(data, env, tc)?,
            };
            doc.eval = Some(evaluate(
                EvalPolicy::Learned(&t.policy),
                &t.recon,
                &data.eval_split().1,
                env,
                tc.seed,
            )?);
            w.checkpoint(POLICY_FILE, t.policy.into())?;
            w.checkpoint(RECON_FILE, t.recon.into())?;
            report = Some(t.report);
        }
        Mode::BaselineRandom | Mode::GreedyOracle => {
            let data = data.as_ref().expect("dataset");
            let (r, rep, policy) = if mode == Mode::BaselineRandom {
                let (r, rep) = baseline_random(data, env, tc)?;
                (r, rep, EvalPolicy::Random)
            } else {
                let (r, rep) = greedy_baseline(data, env, tc)?;
                (r, rep, EvalPolicy::Greedy)
            };
            doc.eval = Some(evaluate(policy, &r, &data.eval_split().1, env, tc.seed)?);
            w.checkpoint(RECON_FILE, r.into())?;
            report = Some(rep);
        }
        Mode::Eval => {
            let data = data.as_ref().expect("dataset");
            let images = data.split(cfg.eval.split);
            if images.is_empty() {
                return Err(invalid_config(format!("the {:?} split is empty", cfg.eval.split)));
            }
            let recon = match &cfg.paths.recon {
                Some(p) => load_checkpoint(p)?.into_recon()?,
                None => ReconParams::zeros(tc.recon_arch(env.n)),
            };
            let policy = match &cfg.paths.policy {
                Some(p) if cfg.eval.policy == EvalPolicyKind::Learned => Some(load_checkpoint(p)?.into_policy()?),
                _ => None,
            };
            let which = match (cfg.eval.policy, &policy) {
                (EvalPolicyKind::Learned, Some(p)) => EvalPolicy::Learned(p),
                (EvalPolicyKind::Greedy, _) => EvalPolicy::Greedy,
                _ => EvalPolicy::Random,
            };
            doc.eval = Some(evaluate(which, &recon, &images, env, tc.seed)?);
        }
        Mode::OracleCheck => {
            let (oracle, audits) = oracle_suite(&cfg)?;
            doc.dataset_fingerprint = Some(oracle.reward_gap.dataset_fingerprint.clone());
            doc.oracle = Some(oracle);
            doc.audits = audits;
        }
    }

    let timing = Timing {
        config_fingerprint: &doc.config_fingerprint,
        dataset_fingerprint: doc.dataset_fingerprint.as_deref(),
        total_seconds: start.elapsed().as_secs_f64(),
        phases: report
            .as_ref()
            .map(|r| r.timings().into_iter().collect())
            .unwrap_or_default(),
    };
    doc.train = report;
    atomic_write(&out.join(SUMMARY_FILE), doc.summary_table().as_bytes())?;
    w.record(SUMMARY_FILE)?;
    let timing_json = serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n";
    atomic_write(&out.join(TIMING_FILE), timing_json.as_bytes())?;
    doc.artifacts = w.artifacts;
    doc.save(&out.join(RESULTS_FILE))?;
    Ok(RunOutcome {
        document: doc,
        out_dir: out.to_path_buf(),
    })
}

/// Environment of the call-count audits and the gradient check.
pub fn audit_env() -> EnvConfig {
    EnvConfig::custom(8, 2.0, 4.0, RewardMode::Sparse).with_metric(MetricConfig::ssim_with_window(5))
}

/// The exhaustive checks on the shipped tiny instances.
fn oracle_suite(cfg: &ExperimentConfig) -> Result<(OracleResults, Vec<crate::oracle::CostAudit>)> {
    let oc = &cfg.oracle;
    let a = oc.amplitude;
    let (data, env) = engineered_instance(a, a, a)?;
    let blind = ConstantReconstructor(RealImage::filled(env.n, 0.5));
    let reward_gap = reward_gap_check(&data, &env, &blind)?;
    let reward_gap_injective = reward_gap_check(&data, &env, &ZeroFilled)?;
    let (term, mix) = engineered_mismatch_laws(&env)?;
    let mismatch = mismatch_check(&data, &env, &term, &mix)?;
    let k0 = env.initial_count()?;
    let point = MaskDistribution {
        entries: vec![(
            crate::numerics::ColumnMask::from_indices(env.n, &crate::envs::centered_columns(env.n, k0 + 2))?,
            1.0,
        )],
    };
    let gate_rejects_point_mass = matches!(
        require_full_terminal_support(&point, &env),
        Err(Error::AssumptionViolated(_))
    );

    let aenv = audit_env();
    let tiny = generate_phantoms(&PhantomConfig {
        n: aenv.n,
        count: 4,
        seed: cfg.phantom.seed,
        ..PhantomConfig::default()
    })?;
    let tc = &cfg.train;
    let r = ReconParams::random(tc.recon_arch(aenv.n), &mut rng_stream(tc.seed, "oracle-recon", 0), 0.1);
    let p = PolicyParams::init(tc.policy_arch(aenv.n), &mut rng_stream(tc.seed, "oracle-policy", 0));
    let frozen_gradient = frozen_gradient_check(&r, &p, &tiny, &aenv, oc.n_traj, oc.fd_step, tc.seed)?;
    let frozen_gradient_passed = frozen_gradient.max_rel_err < oc.max_rel_err;

    let x = &tiny.images[0];
    let audits = vec![
        cost_audit(AuditKind::Sparse, &UniformSampler, &ZeroFilled, x, &aenv, tc.seed)?,
        cost_audit(AuditKind::Dense, &UniformSampler, &ZeroFilled, x, &aenv, tc.seed)?,
        cost_audit(AuditKind::Greedy, &UniformSampler, &ZeroFilled, x, &aenv, tc.seed)?,
    ];
    let strict = reward_gap.gap > 1e-6;
    let passed = reward_gap.holds
        && strict
        && reward_gap_injective.holds
        && reward_gap_injective.gap.abs() <= INEQ_TOL
        && mismatch.holds
        && gate_rejects_point_mass
        && frozen_gradient_passed;
    Ok((
        OracleResults {
            reward_gap,
            reward_gap_injective,
            mismatch,
            gate_rejects_point_mass,
            frozen_gradient,
            frozen_gradient_passed,
            passed,
        },
        audits,
    ))
}
