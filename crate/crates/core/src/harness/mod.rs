//! Experiment configuration, seed orchestration, comparative experiments and
//! result files for the command-line tool.

mod analysis;
mod config;
mod experiments;
mod output;
mod problem;
mod runner;

pub use analysis::{
    covariance_rows, effective_lr, ConvergenceConfig, ConvergenceReport, CovarianceCheck, CovarianceRow, NoiseConfig,
    NoiseReport, PacBayesConfig, PacBayesReport, PosteriorConfig, PosteriorReport, PosteriorRow,
};
pub use config::{digest_of, ClassData, ExperimentConfig, LrSchedule, ProblemSpec, RegressionData, SweepSpec};
pub use experiments::{
    beta0_sweep, label_noise_experiment, lr_wd_grid, Beta0Row, Beta0Sweep, GridCell, LabelNoiseReport, LrWdGrid,
    OptimizerArm, MAJORITY,
};
pub use output::{curve_csv, ensure_dir, write_json, write_run_outputs, write_text};
pub use runner::{run, run_seeds, thread_pool, train_one, Aggregate, CurvePoint, RunResult, RunSummary};
