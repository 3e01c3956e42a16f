use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kspace_rl::harness::{self, emit_plot_data, exit, ExperimentConfig, Mode, PlotKind, ResultsDocument};

#[derive(Parser)]
#[command(name = "kspace-rl", version, about = "Sequential k-space sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set train.alternations=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Training seed (same as `--set train.seed=N`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the phantom dataset.
    GenData(Common),
    /// Pretrain a reconstructor on heuristic masks.
    Pretrain(Common),
    /// Pretrain, then train the sampler once (sparse reward).
    TrainL2s(Common),
    /// Alternate sampler and reconstructor training (sparse reward).
    TrainL2sr(Common),
    /// Dense-reward sampler with a mixture-pretrained reconstructor.
    BaselineDense(Common),
    /// Random sampling with a terminal-pretrained reconstructor.
    BaselineRandom(Common),
    /// Greedy oracle sampling with a mixture-pretrained reconstructor.
    GreedyOracle(Common),
    /// Evaluate checkpoints on a dataset split.
    Eval(Common),
    /// Exhaustive checks and call-count audits on the built-in tiny instances.
    OracleCheck(Common),
    /// Write CSV for plotting from results documents.
    PlotData {
        /// histogram, round-curve or ablation.
        #[arg(long)]
        kind: String,
        /// results.json files; ablation takes one per row.
        #[arg(long, required = true, num_args = 1..)]
        results: Vec<PathBuf>,
        /// Output directory; prints to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

fn mode_of(c: &Command) -> Option<(Mode, &Common)> {
    Some(match c {
        Command::GenData(o) => (Mode::GenData, o),
        Command::Pretrain(o) => (Mode::Pretrain, o),
        Command::TrainL2s(o) => (Mode::L2s, o),
        Command::TrainL2sr(o) => (Mode::L2sr, o),
        Command::BaselineDense(o) => (Mode::BaselineDense, o),
        Command::BaselineRandom(o) => (Mode::BaselineRandom, o),
        Command::GreedyOracle(o) => (Mode::GreedyOracle, o),
        Command::Eval(o) => (Mode::Eval, o),
        Command::OracleCheck(o) => (Mode::OracleCheck, o),
        Command::PlotData { .. } => return None,
    })
}

fn code_of(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|e| e.downcast_ref::<kspace_rl::Error>())
        .map(harness::exit_code)
        .unwrap_or(exit::FAILURE)
}

fn run_mode(mode: Mode, o: &Common) -> Result<i32> {
    let mut overrides = o.set.clone();
    if let Some(s) = o.seed {
        overrides.push(format!("train.seed={s}"));
    }
    let cfg = ExperimentConfig::load(o.config.as_deref(), &overrides)?;
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(kspace_rl::Error::InvalidConfig(format!(
                "config mode {} does not match the {} subcommand",
                m.name(),
                mode.name()
            ))
            .into());
        }
    }
    let out = o
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(mode.name().to_ascii_lowercase()));
    let outcome = harness::run(&cfg, mode, &out, o.force)?;
    print!("{}", outcome.document.summary_table());
    println!("wrote {}", out.display());
    Ok(outcome.exit_code())
}

fn plot(kind: &str, results: &[PathBuf], out: Option<&Path>, force: bool) -> Result<i32> {
    let kind: PlotKind = kind.parse()?;
    let docs = results
        .iter()
        .map(|p| ResultsDocument::load(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let csv = emit_plot_data(&docs, kind)?;
    match out {
        None => print!("{csv}"),
        Some(dir) => {
            let name = match kind {
                PlotKind::Histogram => "histogram.csv",
                PlotKind::RoundCurve => "round_curve.csv",
                PlotKind::Ablation => "ablation.csv",
            };
            let path = dir.join(name);
            if path.exists() && !force {
                return Err(kspace_rl::Error::InvalidConfig(format!(
                    "{} exists; pass --force to overwrite",
                    path.display()
                ))
                .into());
            }
            std::fs::create_dir_all(dir)?;
            let tmp = dir.join(format!(".{name}.tmp"));
            std::fs::write(&tmp, csv)?;
            std::fs::rename(&tmp, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match mode_of(&cli.command) {
        Some((mode, o)) => run_mode(mode, o),
        None => match &cli.command {
            Command::PlotData {
                kind,
                results,
                out,
                force,
            } => plot(kind, results, out.as_deref(), *force),
            _ => unreachable!(),
        },
    };
    match res {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code_of(&e) as u8)
        }
    }
}
