//! Comparative experiments: β₀ sweep, noisy-label PNM vs. baseline, lr × weight-decay grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::OptimizerSpec;
use crate::rng::RNG_ALGORITHM;

use super::config::{ExperimentConfig, ProblemSpec};
use super::runner::{run_seeds, train_one, Aggregate, RunResult};

/// Fraction of seeds that counts as a majority for directional claims.
pub const MAJORITY: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Beta0Row {
    pub beta0: f64,
    pub score: Aggregate,
    pub per_seed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Beta0Sweep {
    pub config_digest: String,
    pub prng: &'static str,
    pub seeds: Vec<u64>,
    pub rows: Vec<Beta0Row>,
    /// Seeds on which the best β₀ > 0 beat every β₀ in [−1, 0]; None
    /// when the grid lacks one side of the comparison.
    pub positive_wins: Option<usize>,
    pub positive_beats_nonpositive: Option<bool>,
}

fn scores(runs: &[RunResult]) -> Vec<f64> {
    runs.iter().map(RunResult::score).collect()
}

fn check_seeds(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    if config.seeds.is_empty() {
        return Err(Error::Config("seeds must be non-empty".into()));
    }
    Ok(())
}

/// Trains the base PNM/AdaPNM config once per β₀ in `grid`.
pub fn beta0_sweep(config: &ExperimentConfig, grid: &[f64]) -> Result<Beta0Sweep> {
    check_seeds(config)?;
    if grid.is_empty() {
        return Err(Error::Config("beta0 grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &b in grid {
        let opt = config.optimizer.with_beta0(b)?;
        opt.validate()?;
        let per_seed = scores(&run_seeds(config, &opt)?);
        rows.push(Beta0Row {
            beta0: b,
            score: Aggregate::of(&per_seed).expect("non-empty seeds"),
            per_seed,
        });
    }
    let pos: Vec<&Beta0Row> = rows.iter().filter(|r| r.beta0 > 0.0).collect();
    let neg: Vec<&Beta0Row> = rows.iter().filter(|r| r.beta0 <= 0.0).collect();
    let positive_wins = (!pos.is_empty() && !neg.is_empty()).then(|| {
        (0..config.seeds.len())
            .filter(|&s| {
                let best = |rs: &[&Beta0Row]| rs.iter().map(|r| r.per_seed[s]).fold(f64::INFINITY, f64::min);
                best(&pos) < best(&neg)
            })
            .count()
    });
    Ok(Beta0Sweep {
        config_digest: config.digest(),
        prng: RNG_ALGORITHM,
        seeds: config.seeds.clone(),
        positive_beats_nonpositive: positive_wins.map(|w| w as f64 >= MAJORITY * config.seeds.len() as f64),
        positive_wins,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerArm {
    pub optimizer: OptimizerSpec,
    pub runs: Vec<RunResult>,
    pub test_error: Aggregate,
    pub train_error: Aggregate,
    pub clean_train_error: Option<Aggregate>,
}

impl OptimizerArm {
    fn new(optimizer: OptimizerSpec, runs: Vec<RunResult>) -> Self {
        let col = |f: fn(&RunResult) -> Option<f64>| runs.iter().map(f).collect::<Option<Vec<f64>>>();
        Self {
            test_error: Aggregate::of(&col(|r| r.final_test_error).unwrap_or_default()).unwrap_or(Aggregate {
                mean: f64::NAN,
                std: f64::NAN,
            }),
            train_error: Aggregate::of(&col(|r| r.final_train_error).unwrap_or_default()).unwrap_or(Aggregate {
                mean: f64::NAN,
                std: f64::NAN,
            }),
            clean_train_error: col(|r| r.final_clean_train_error).and_then(|v| Aggregate::of(&v)),
            optimizer,
            runs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelNoiseReport {
    pub config_digest: String,
    pub prng: &'static str,
    pub noise_rate: f64,
    pub no_corruption: bool,
    pub pnm: OptimizerArm,
    pub baseline: OptimizerArm,
    /// Seeds on which PNM's clean test error is strictly below the baseline's.
    pub pnm_wins: usize,
    pub pnm_wins_majority: bool,
}

/// Trains `config.optimizer` and `config.sweep.baseline` on the same
/// (possibly label-corrupted) classification data, seed by seed.
pub fn label_noise_experiment(config: &ExperimentConfig) -> Result<LabelNoiseReport> {
    check_seeds(config)?;
    let ProblemSpec::Mlp { label_noise, .. } = &config.problem else {
        return Err(Error::Config("label-noise needs the `mlp` problem".into()));
    };
    let baseline = config
        .sweep
        .baseline
        .clone()
        .ok_or_else(|| Error::Config("label-noise needs sweep.baseline".into()))?;
    baseline.validate()?;
    let rate = label_noise.map_or(0.0, |s| s.rate);
    let pnm_runs = run_seeds(config, &config.optimizer)?;
    let base_runs = run_seeds(config, &baseline)?;
    let pnm_wins = pnm_runs
        .iter()
        .zip(&base_runs)
        .filter(|(p, b)| p.score() < b.score())
        .count();
    Ok(LabelNoiseReport {
        config_digest: config.digest(),
        prng: RNG_ALGORITHM,
        noise_rate: rate,
        no_corruption: rate == 0.0,
        pnm_wins_majority: pnm_wins as f64 >= MAJORITY * config.seeds.len() as f64,
        pnm_wins,
        pnm: OptimizerArm::new(config.optimizer.clone(), pnm_runs),
        baseline: OptimizerArm::new(baseline, base_runs),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub lr: f64,
    pub weight_decay: f64,
    /// None when any seed diverged.
    pub score: Option<Aggregate>,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrWdGrid {
    pub config_digest: String,
    pub prng: &'static str,
    pub optimizer: String,
    pub lrs: Vec<f64>,
    pub weight_decays: Vec<f64>,
    /// Row-major: one row per learning rate.
    pub cells: Vec<GridCell>,
}

impl LrWdGrid {
    pub fn best(&self) -> Option<&GridCell> {
        self.cells
            .iter()
            .filter(|c| c.score.is_some())
            .min_by(|a, b| a.score.unwrap().mean.total_cmp(&b.score.unwrap().mean))
    }

    /// Matrix form: header row of weight decays, one line per learning rate,
    /// "diverged" in place of a number.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# config_digest: {}\n# prng: {}\n# optimizer: {}\nlr\\weight_decay",
            self.config_digest, self.prng, self.optimizer
        );
        for wd in &self.weight_decays {
            out.push_str(&format!(",{wd}"));
        }
        out.push('\n');
        for (i, lr) in self.lrs.iter().enumerate() {
            out.push_str(&lr.to_string());
            for c in &self.cells[i * self.weight_decays.len()..(i + 1) * self.weight_decays.len()] {
                match c.score {
                    Some(s) => out.push_str(&format!(",{}", crate::trajectory::fmt_f64(s.mean))),
                    None => out.push_str(",diverged"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence { .. } | Error::NonFinite { .. })
}

/// Full factorial over learning rates and weight-decay strengths, keeping the
/// base optimizer's decay mode (L2 when the base has none).
pub fn lr_wd_grid(config: &ExperimentConfig, lrs: &[f64], wds: &[f64]) -> Result<LrWdGrid> {
    check_seeds(config)?;
    if lrs.is_empty() || wds.is_empty() {
        return Err(Error::Config("lr and weight_decay grids must be non-empty".into()));
    }
    let mut mode = config.optimizer.weight_decay().mode;
    if mode == crate::optim::WeightDecayMode::None {
        mode = crate::optim::WeightDecayMode::L2;
    }
    let mut cells = Vec::with_capacity(lrs.len() * wds.len());
    for &lr in lrs {
        for &wd in wds {
            let opt = config
                .optimizer
                .with_lr(lr)
                .with_weight_decay(crate::optim::WeightDecaySpec { mode, lambda: wd });
            opt.validate()?;
            let results: Vec<Result<RunResult>> = {
                use rayon::prelude::*;
                config.seeds.par_iter().map(|&s| train_one(config, &opt, s)).collect()
            };
            let mut per_seed = Vec::with_capacity(results.len());
            let mut diverged = false;
            for r in results {
                match r {
                    Ok(run) => per_seed.push(run.score()),
                    Err(e) if is_divergence(&e) => diverged = true,
                    Err(e) => return Err(e),
                }
            }
            cells.push(GridCell {
                lr,
                weight_decay: wd,
                score: if diverged { None } else { Aggregate::of(&per_seed) },
                diverged,
            });
        }
    }
    Ok(LrWdGrid {
        config_digest: config.digest(),
        prng: RNG_ALGORITHM,
        optimizer: config.optimizer.kind().to_string(),
        lrs: lrs.to_vec(),
        weight_decays: wds.to_vec(),
        cells,
    })
}
