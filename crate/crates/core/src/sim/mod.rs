//! Simulation study: designs, seeded replicates, metrics and CSV output.

pub mod config;
pub mod design;
pub mod eigen;
pub mod metrics;
pub mod report;
pub mod runner;

pub use config::StudyConfig;
pub use design::{
    correlation, gen_design, gen_nuisance, load_matrix_csv, replicate_rng, sigma_from_lsnr, tsnr,
    DesignSpec, NuisanceFn, SimData, XSource,
};
pub use eigen::{min_eigen_diagnostic, min_eigen_restricted, min_eigen_with};
pub use metrics::{metrics, selection_rates, Estimator, Metrics, ReplicateResult, Truth};
pub use report::{summarize, write_study, SummaryRow};
pub use runner::{
    run_design, run_replicate, DesignOutcome, Executor, FitSettings, NoiseScale, PlotData,
};

use crate::error::Result;

/// Runs every design of `config` in order.
pub fn run_study(config: &StudyConfig, executor: Executor) -> Result<Vec<DesignOutcome>> {
    config
        .designs
        .iter()
        .map(|d| run_design(d, &config.settings, executor))
        .collect()
}
