//! Data generation, experiment configuration and the run harness behind the
//! command-line tool.

mod config;
mod dataset;
mod phantom;
mod results;
mod run;

pub use config::{EvalConfig, EvalPolicyKind, ExperimentConfig, Mode, OracleConfig, PathsConfig, PretrainConfig};
pub use dataset::{load_dataset, save_dataset, Dataset, Provenance, Split, DATASET_VERSION};
pub use phantom::{generate_phantoms, PhantomConfig, SplitFractions};
pub use results::{emit_plot_data, OracleResults, PlotKind, ResultsDocument, RESULTS_SCHEMA};
pub use run::{
    audit_env, effective_config, exit, exit_code, run, RunOutcome, DATASET_FILE, POLICY_FILE, RECON_FILE, RESULTS_FILE,
    SUMMARY_FILE, TIMING_FILE,
};
