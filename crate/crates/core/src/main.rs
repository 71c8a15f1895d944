use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pnm::harness::{
    self, beta0_sweep, label_noise_experiment, lr_wd_grid, write_json, write_run_outputs, write_text,
    ConvergenceConfig, ExperimentConfig, NoiseConfig, PacBayesConfig, PosteriorConfig,
};
use pnm::Result;

/// Positive-negative momentum benchmarks and analysis checks.
#[derive(Parser, Debug)]
#[command(name = "pnm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Run this single seed instead of the seeds listed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: <config output_dir or "results">/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent seeds.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Record parameter snapshots at every logged step.
    #[arg(long)]
    snapshots: Option<bool>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one optimizer over the configured seeds.
    Run(Common),
    /// Sweep β₀ over `sweep.beta0`.
    #[command(name = "sweep-beta0")]
    SweepBeta0(Common),
    /// PNM against `sweep.baseline` on (noisy-label) classification.
    #[command(name = "label-noise")]
    LabelNoise(Common),
    /// Learning rate × weight decay grid over `sweep.lr` and `sweep.weight_decay`.
    Grid(Common),
    /// Stationary covariance on a quadratic.
    Posterior(Common),
    /// KL and bound table over γ.
    Pacbayes(Common),
    /// Momentum noise amplification and minibatch covariance structure.
    Noise(Common),
    /// Empirical rate against the convergence bound.
    Convergence(Common),
}

fn experiment(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(s) = common.snapshots {
        config.snapshots = s;
    }
    config.validate()?;
    let dir = common
        .out
        .clone()
        .unwrap_or_else(|| config.output_dir.join(&config.name));
    Ok((config, dir))
}

fn out_dir(common: &Common, name: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| Path::new("results").join(name))
}

fn execute(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Run(c)
        | Command::SweepBeta0(c)
        | Command::LabelNoise(c)
        | Command::Grid(c)
        | Command::Posterior(c)
        | Command::Pacbayes(c)
        | Command::Noise(c)
        | Command::Convergence(c) => c.clone(),
    };
    let pool = harness::thread_pool(common.threads)?;
    pool.install(|| dispatch(&cli.command, &common))
}

fn dispatch(command: &Command, common: &Common) -> Result<()> {
    match command {
        Command::Run(_) => {
            let (config, dir) = experiment(common)?;
            let summary = harness::run(&config)?;
            let files = write_run_outputs(&dir, &summary)?;
            if let Some(a) = summary.final_test_error {
                println!("final test error {:.4} ± {:.4}", a.mean, a.std);
            }
            if let Some(a) = summary.final_loss {
                println!("final loss {:.6e} ± {:.3e}", a.mean, a.std);
            }
            println!("wrote {} files to {}", files.len(), dir.display());
        }
        Command::SweepBeta0(_) => {
            let (config, dir) = experiment(common)?;
            let sweep = beta0_sweep(&config, &config.sweep.beta0)?;
            for r in &sweep.rows {
                println!("beta0 {:>8} : {:.4} ± {:.4}", r.beta0, r.score.mean, r.score.std);
            }
            if let Some(w) = sweep.positive_wins {
                println!("beta0 > 0 wins on {w}/{} seeds", sweep.seeds.len());
            }
            write_json(&dir.join("beta0_sweep.json"), &sweep)?;
        }
        Command::LabelNoise(_) => {
            let (config, dir) = experiment(common)?;
            let report = label_noise_experiment(&config)?;
            for (label, arm) in [("pnm", &report.pnm), ("baseline", &report.baseline)] {
                println!(
                    "{label:<8} {:<6} test {:.4} ± {:.4}  train {:.4}",
                    arm.optimizer.kind(),
                    arm.test_error.mean,
                    arm.test_error.std,
                    arm.train_error.mean
                );
                for run in &arm.runs {
                    let path = dir.join(format!("{label}_errors_seed{}.csv", run.seed));
                    write_text(&path, &harness::curve_csv(run))?;
                }
            }
            if report.no_corruption {
                println!("no corruption");
            }
            println!("pnm wins on {}/{} seeds", report.pnm_wins, config.seeds.len());
            write_json(&dir.join("label_noise.json"), &report)?;
        }
        Command::Grid(_) => {
            let (config, dir) = experiment(common)?;
            let grid = lr_wd_grid(&config, &config.sweep.lr, &config.sweep.weight_decay)?;
            print!("{}", grid.to_csv());
            write_text(&dir.join("grid.csv"), &grid.to_csv())?;
            write_json(&dir.join("grid.json"), &grid)?;
        }
        Command::Posterior(_) => {
            let mut config = PosteriorConfig::load(&common.config)?;
            if let Some(seed) = common.seed {
                config.seeds = vec![seed];
            }
            let report = config.run()?;
            for r in &report.rows {
                let tr: f64 = (0..report.config.dim)
                    .map(|i| r.estimate.covariance[i * report.config.dim + i])
                    .sum();
                println!(
                    "{:<6} lr {:<8} trace(Σ) {:.6e}  lyapunov residual {:.4}",
                    r.optimizer.kind(),
                    r.optimizer.lr(),
                    tr,
                    r.lyapunov_residual
                );
            }
            write_json(&out_dir(common, &config.name).join("posterior.json"), &report)?;
        }
        Command::Pacbayes(_) => {
            let config = PacBayesConfig::load(&common.config)?;
            let report = config.run()?;
            println!(
                "critical ratio {}  optimal gamma {} (improves: {})",
                report.critical_ratio, report.optimal.gamma, report.optimal.improves
            );
            let dir = out_dir(common, &config.name);
            write_text(&dir.join("pacbayes.csv"), &report.to_csv())?;
            write_json(&dir.join("pacbayes.json"), &report)?;
        }
        Command::Noise(_) => {
            let mut config = NoiseConfig::load(&common.config)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            let report = config.run()?;
            for s in &report.studies {
                println!(
                    "beta0 {:>5}: ratio {:.4} ± {:.4} (predicted {:.4}), odd/even correlation {:.4}",
                    s.beta0, s.ratio, s.ratio_standard_error, s.predicted_ratio, s.odd_even_correlation
                );
            }
            for r in &report.covariance {
                println!(
                    "B {:>4}: trace {:.6e}, correlation with diag(H)/B {:.4}",
                    r.batch_size, r.trace, r.hessian_correlation
                );
            }
            write_json(&out_dir(common, &config.name).join("noise.json"), &report)?;
        }
        Command::Convergence(_) => {
            let mut config = ConvergenceConfig::load(&common.config)?;
            if let Some(seed) = common.seed {
                config.settings.seeds = vec![seed];
            }
            let report = config.run()?;
            print!("{}", report.to_csv());
            println!("slope {:.4}", report.report.slope);
            let dir = out_dir(common, &config.name);
            write_text(&dir.join("convergence.csv"), &report.to_csv())?;
            write_json(&dir.join("convergence.json"), &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
