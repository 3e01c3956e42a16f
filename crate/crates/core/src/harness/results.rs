use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::binio::{atomic_write, hex, sha256};
use crate::error::{invalid_input, Error, Result};
use crate::oracle::{CostAudit, FrozenGradientReport, MismatchReport, RewardGapReport};
use crate::training::{EvalSummary, TrainReport};

pub const RESULTS_SCHEMA: &str = "kspace-rl/results/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResults {
    pub reward_gap: RewardGapReport,
    /// Same instance with an injective intermediate reconstructor.
    pub reward_gap_injective: RewardGapReport,
    pub mismatch: MismatchReport,
    pub gate_rejects_point_mass: bool,
    pub frozen_gradient: FrozenGradientReport,
    pub frozen_gradient_passed: bool,
    pub passed: bool,
}

/// Everything a run reports, serialized deterministically: no timings, no
/// absolute paths beyond those in the config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub schema: String,
    pub mode: String,
    pub config: ExperimentConfig,
    pub config_fingerprint: String,
    pub dataset_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audits: Vec<CostAudit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleResults>,
    /// Output file name to SHA-256 of its contents.
    #[serde(default)]
    pub artifacts: BTreeMap<String, String>,
}

impl ResultsDocument {
    pub fn new(config: &ExperimentConfig, mode: &str) -> Self {
        Self {
            schema: RESULTS_SCHEMA.into(),
            mode: mode.into(),
            config: config.clone(),
            config_fingerprint: hex(&sha256(config.to_toml().as_bytes())),
            dataset_fingerprint: None,
            train: None,
            eval: None,
            audits: Vec::new(),
            oracle: None,
            artifacts: BTreeMap::new(),
        }
    }

    /// Whether every audit and oracle check in the document passed.
    pub fn audits_passed(&self) -> bool {
        self.audits.iter().all(|a| a.passed) && self.oracle.as_ref().is_none_or(|o| o.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: ResultsDocument =
            serde_json::from_str(&text).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        if doc.schema != RESULTS_SCHEMA {
            return Err(Error::Load(format!("unknown results schema {}", doc.schema)));
        }
        Ok(doc)
    }

    /// Plain-text table of the headline numbers.
    pub fn summary_table(&self) -> String {
        let mut s = format!(
            "mode            {}\nconfig          {}\n",
            self.mode, self.config_fingerprint
        );
        if let Some(d) = &self.dataset_fingerprint {
            s += &format!("dataset         {}\n", d);
        }
        if let Some(e) = &self.eval {
            s += &format!(
                "eval policy     {}\nimages          {}\nSSIM            {:.4} +/- {:.4}\nPSNR            {:.2} +/- {:.2}\npolicy calls    {}\nrecon calls     {}\n",
                e.policy, e.n_images, e.mean_ssim, e.std_ssim, e.mean_psnr, e.std_psnr, e.policy_calls, e.recon_calls
            );
        }
        if let Some(t) = &self.train {
            for ev in &t.round_evals {
                s += &format!("round {:<9} SSIM {:.4} ({})\n", ev.label, ev.stats.mean_ssim, ev.phase);
            }
        }
        for a in &self.audits {
            s += &format!(
                "audit {:<9} policy {} / {}  recon {} / {}  {}\n",
                format!("{:?}", a.kind).to_lowercase(),
                a.policy_calls,
                a.expected_policy_calls,
                a.recon_calls,
                a.expected_recon_calls,
                if a.passed { "ok" } else { "FAIL" }
            );
        }
        if let Some(o) = &self.oracle {
            s += &format!(
                "dense sup       {:.6}\nsparse sup      {:.6}\nterminal value  {:.6}\nmixture value   {:.6}\ngradient error  {:.2e}\noracle          {}\n",
                o.reward_gap.dense_sup,
                o.reward_gap.sparse_sup,
                o.mismatch.value_terminal_pretrain,
                o.mismatch.value_mixture_pretrain,
                o.frozen_gradient.max_rel_err,
                if o.passed { "ok" } else { "FAIL" }
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Histogram,
    RoundCurve,
    Ablation,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "histogram" => Ok(PlotKind::Histogram),
            "round-curve" => Ok(PlotKind::RoundCurve),
            "ablation" => Ok(PlotKind::Ablation),
            _ => Err(invalid_input(format!("unknown plot kind `{s}`"))),
        }
    }
}

/// CSV for external plotting.
///
/// * `Histogram`: `index,ssim,psnr`, one row per evaluated image of the first
///   document.
/// * `RoundCurve`: `label,phase,mean_ssim,std_ssim,mean_psnr,std_psnr` from the
///   first document's per-round evaluations.
/// * `Ablation`: `discount,mean_ssim,std_ssim,mean_psnr,std_psnr`, one row per
///   document in the given order.
pub fn emit_plot_data(results: &[ResultsDocument], kind: PlotKind) -> Result<String> {
    let first = results.first().ok_or_else(|| invalid_input("no results given"))?;
    let mut out = String::new();
    match kind {
        PlotKind::Histogram => {
            let e = first
                .eval
                .as_ref()
                .ok_or_else(|| invalid_input("results have no evaluation records"))?;
            out += "index,ssim,psnr\n";
            for r in &e.records {
                out += &format!("{},{},{}\n", r.index, r.ssim, r.psnr);
            }
        }
        PlotKind::RoundCurve => {
            let t = first
                .train
                .as_ref()
                .filter(|t| !t.round_evals.is_empty())
                .ok_or_else(|| invalid_input("results have no per-round evaluations"))?;
            out += "label,phase,mean_ssim,std_ssim,mean_psnr,std_psnr\n";
            for r in &t.round_evals {
                let s = &r.stats;
                out += &format!(
                    "{},{},{},{},{},{}\n",
                    r.label, r.phase, s.mean_ssim, s.std_ssim, s.mean_psnr, s.std_psnr
                );
            }
        }
        PlotKind::Ablation => {
            out += "discount,mean_ssim,std_ssim,mean_psnr,std_psnr\n";
            for d in results {
                let e = d
                    .eval
                    .as_ref()
                    .ok_or_else(|| invalid_input("a results document has no evaluation"))?;
                out += &format!(
                    "{},{},{},{},{}\n",
                    d.config.env.discount, e.mean_ssim, e.std_ssim, e.mean_psnr, e.std_psnr
                );
            }
        }
    }
    Ok(out)
}
