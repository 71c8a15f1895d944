use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::OptimizerSpec;
use crate::rng::{RngStream, RNG_ALGORITHM};
use crate::trajectory::{Trajectory, TrajectoryRecord};
use crate::vector::{norm_sq, ParamVector};

use super::config::ExperimentConfig;
use super::problem::{build_problem, BuiltProblem, TRAIN_STREAM};

/// Training-set error rates at one logged step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: u64,
    pub train_error: f64,
    pub clean_train_error: Option<f64>,
    pub test_error: f64,
}

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub config_digest: String,
    pub seed: u64,
    pub prng: &'static str,
    pub optimizer: String,
    pub steps: u64,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub min_grad_norm_sq: f64,
    pub final_test_error: Option<f64>,
    pub best_test_error: Option<f64>,
    /// Against the labels used for training (corrupted, if label noise is on).
    pub final_train_error: Option<f64>,
    /// Over training rows whose label was left intact.
    pub final_clean_train_error: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<CurvePoint>,
    /// Excluded from JSON so repeated runs serialize identically.
    #[serde(skip)]
    pub wall_clock_secs: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

impl RunResult {
    /// Test error when the problem has one, else the final loss.
    pub fn score(&self) -> f64 {
        self.final_test_error.unwrap_or(self.final_loss)
    }
}

pub(crate) fn total_steps(config: &ExperimentConfig, dataset_size: Option<usize>) -> u64 {
    match (config.steps, config.epochs, dataset_size, config.batch_size) {
        (Some(s), _, _, _) => s,
        (None, Some(e), Some(n), Some(b)) => e * n.div_ceil(b) as u64,
        _ => unreachable!("validated config"),
    }
}

fn log_interval(config: &ExperimentConfig, total: u64, dataset_size: Option<usize>) -> u64 {
    if config.log_every > 0 {
        return config.log_every;
    }
    match (config.epochs, dataset_size, config.batch_size) {
        (Some(_), Some(n), Some(b)) => n.div_ceil(b) as u64,
        _ => (total / 100).max(1),
    }
}

/// Trains one seed of `config` with `optimizer`.
pub fn train_one(config: &ExperimentConfig, optimizer: &OptimizerSpec, seed: u64) -> Result<RunResult> {
    let start = Instant::now();
    let digest = config.digest();
    let problem: BuiltProblem = build_problem(&config.problem, config.batch_size, seed)?;
    let oracle = &problem.oracle;
    let dim = oracle.dim();
    let total = total_steps(config, problem.dataset_size);
    let every = log_interval(config, total, problem.dataset_size);
    let milestones = config.schedule.milestone_steps(total);
    let mut opt = optimizer.build(dim)?;
    let base_lr = optimizer.lr();
    let mut rng = RngStream::with_stream(seed, TRAIN_STREAM);
    let mut theta = problem.theta0.as_slice().to_vec();
    let mut grad = vec![0.0; dim];
    let mut trajectory = Trajectory::new(seed, digest.clone());
    let mut curve = Vec::new();
    let scale = problem.theta0.norm_sq().sqrt().max(1.0);

    let mut record = |step: u64, theta: &[f64], trajectory: &mut Trajectory| -> Result<()> {
        let mut full = vec![0.0; dim];
        let loss = oracle.full_gradient_into(theta, &mut full)?;
        let gn = norm_sq(&full);
        if !loss.is_finite() || !gn.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("loss {loss}, ‖∇f‖² {gn}"),
            });
        }
        let errors = problem.classifier.as_ref().map(|c| c.evaluate(theta));
        if let Some(e) = errors {
            curve.push(CurvePoint {
                step,
                train_error: e.train,
                clean_train_error: e.clean_train,
                test_error: e.test,
            });
        }
        trajectory.push(TrajectoryRecord {
            step,
            loss,
            grad_norm_sq: gn,
            test_error: errors.map(|e| e.test),
            snapshot: if config.snapshots {
                Some(ParamVector::new(theta.to_vec())?)
            } else {
                None
            },
        })
    };

    record(0, &theta, &mut trajectory)?;
    for step in 0..total {
        let decays = milestones.iter().filter(|&&m| m <= step).count() as i32;
        opt.set_learning_rate(base_lr * config.schedule.factor.powi(decays));
        oracle.stochastic_gradient_into(&theta, &mut rng, &mut grad)?;
        opt.step(&mut theta, &grad)?;
        let dist = norm_sq(&theta).sqrt();
        if !(dist <= 1e6 * scale) {
            return Err(Error::Divergence {
                step: step + 1,
                detail: format!("‖θ‖ = {dist:e}"),
            });
        }
        let done = step + 1;
        if done % every == 0 || done == total {
            record(done, &theta, &mut trajectory)?;
        }
    }

    let last = trajectory.last().expect("at least the initial record").clone();
    let final_errors = problem.classifier.as_ref().map(|c| c.evaluate(&theta));
    let best_test = trajectory
        .records()
        .iter()
        .filter_map(|r| r.test_error)
        .min_by(f64::total_cmp);
    Ok(RunResult {
        config_digest: digest,
        seed,
        prng: RNG_ALGORITHM,
        optimizer: optimizer.kind().to_string(),
        steps: total,
        final_loss: last.loss,
        final_grad_norm_sq: last.grad_norm_sq,
        min_grad_norm_sq: trajectory.min_grad_norm_sq().expect("non-empty"),
        final_test_error: final_errors.map(|e| e.test),
        best_test_error: best_test,
        final_train_error: final_errors.map(|e| e.train),
        final_clean_train_error: final_errors.and_then(|e| e.clean_train),
        curve,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        trajectory,
    })
}

/// Mean and population standard deviation over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let (mean, std) = crate::convergence::mean_std(xs);
        Some(Self { mean, std })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub config_digest: String,
    pub prng: &'static str,
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub final_loss: Option<Aggregate>,
    pub min_grad_norm_sq: Option<Aggregate>,
    pub final_test_error: Option<Aggregate>,
    pub best_test_error: Option<Aggregate>,
    pub final_train_error: Option<Aggregate>,
}

impl RunSummary {
    pub fn new(config: &ExperimentConfig, runs: Vec<RunResult>) -> Self {
        let collect = |f: &dyn Fn(&RunResult) -> Option<f64>| -> Option<Aggregate> {
            let xs: Vec<f64> = runs.iter().filter_map(f).collect();
            if xs.len() == runs.len() {
                Aggregate::of(&xs)
            } else {
                None
            }
        };
        Self {
            name: config.name.clone(),
            config_digest: config.digest(),
            prng: RNG_ALGORITHM,
            config: config.clone(),
            final_loss: collect(&|r| Some(r.final_loss)),
            min_grad_norm_sq: collect(&|r| Some(r.min_grad_norm_sq)),
            final_test_error: collect(&|r| r.final_test_error),
            best_test_error: collect(&|r| r.best_test_error),
            final_train_error: collect(&|r| r.final_train_error),
            runs,
        }
    }
}

/// Builds a pool of `threads` workers; 0 means one.
pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every seed of `config` with `optimizer`, in parallel on the current
/// rayon pool; results come back in seed order.
pub fn run_seeds(config: &ExperimentConfig, optimizer: &OptimizerSpec) -> Result<Vec<RunResult>> {
    config
        .seeds
        .par_iter()
        .map(|&seed| train_one(config, optimizer, seed))
        .collect()
}

/// One result per seed plus the mean ± population-std summary.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let runs = run_seeds(config, &config.optimizer)?;
    Ok(RunSummary::new(config, runs))
}
