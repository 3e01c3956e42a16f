use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::Split;
use super::phantom::PhantomConfig;
use crate::envs::{EnvConfig, HeuristicKind};
use crate::error::{invalid_config, Result};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    GenData,
    Pretrain,
    L2s,
    L2sr,
    BaselineDense,
    BaselineRandom,
    GreedyOracle,
    Eval,
    OracleCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::GenData => "GEN_DATA",
            Mode::Pretrain => "PRETRAIN",
            Mode::L2s => "L2S",
            Mode::L2sr => "L2SR",
            Mode::BaselineDense => "BASELINE_DENSE",
            Mode::BaselineRandom => "BASELINE_RANDOM",
            Mode::GreedyOracle => "GREEDY_ORACLE",
            Mode::Eval => "EVAL",
            Mode::OracleCheck => "ORACLE_CHECK",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Dataset file; when absent the dataset is regenerated from `phantom`.
    pub dataset: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    /// Reconstructor checkpoint for `EVAL`; when absent a zero-residual
    /// reconstructor (the zero-filled image) is used.
    pub recon: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicyKind {
    #[default]
    Learned,
    Random,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub policy: EvalPolicyKind,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            policy: EvalPolicyKind::Learned,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub heuristic: HeuristicKind,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            heuristic: HeuristicKind::Terminal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Frozen trajectories in the gradient check.
    pub n_traj: usize,
    pub fd_step: f64,
    pub max_rel_err: f64,
    /// Amplitude of the cosine components of the engineered instance.
    pub amplitude: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_traj: 64,
            fd_step: 1e-4,
            max_rel_err: 1e-3,
            amplitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Set by the command-line subcommand when absent.
    pub mode: Option<Mode>,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub phantom: PhantomConfig,
    pub paths: PathsConfig,
    pub eval: EvalConfig,
    pub pretrain: PretrainConfig,
    pub oracle: OracleConfig,
}

impl ExperimentConfig {
    /// Parses TOML text and applies `key.path=value` overrides. Values are
    /// read as TOML literals, falling back to plain strings.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut root: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| invalid_config(format!("config is not valid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let cfg: ExperimentConfig = root
            .try_into()
            .map_err(|e| invalid_config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => {
                std::fs::read_to_string(p).map_err(|e| invalid_config(format!("cannot read {}: {e}", p.display())))?
            }
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.check(true)?;
        self.train.validate()?;
        self.phantom.validate()?;
        if self.oracle.n_traj == 0 || !(self.oracle.fd_step > 0.0) {
            return Err(invalid_config("oracle.n_traj and oracle.fd_step must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Value, o: &str) -> Result<()> {
    let (key, raw) = o
        .split_once('=')
        .ok_or_else(|| invalid_config(format!("override `{o}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid_config(format!("bad override key `{key}`")));
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| invalid_config(format!("`{key}` descends into a non-table")))?;
        cur = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| invalid_config(format!("`{key}` descends into a non-table")))?;
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
