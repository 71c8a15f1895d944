//! Configs and drivers for the analysis subcommands: noise, posterior,
//! pacbayes and convergence.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convergence::{empirical_rate, RateReport, RateSettings};
use crate::error::{Error, Result};
use crate::noise::{estimate_gradient_noise_covariance, pearson_correlation, pnm_noise_study, NoiseStudySpec, PnmNoiseStudy};
use crate::optim::{pnm_normalizer, OptimizerSpec};
use crate::pacbayes::{bound_table, critical_ratio, gamma_grid, optimal_gamma, BoundRow, OptimalGamma, PacBayesSetting};
use crate::posterior::{exact_stationary_covariance, lyapunov_residual, simulate_chains, StationaryEstimate, StationarySettings};
use crate::problems::{LeastSquares, MinibatchOracle, NoiseModel, QuadraticModel};
use crate::rng::{RngStream, RNG_ALGORITHM};
use crate::trajectory::fmt_f64;
use crate::vector::ParamVector;

use super::config::{digest_of, ProblemSpec, RegressionData};
use super::problem::{build_problem, DATA_STREAM};

fn read_json<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn one<T>(seeds: &[T], what: &str) -> Result<()> {
    if seeds.is_empty() {
        Err(Error::Config(format!("{what} must be non-empty")))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------- noise

/// Minibatch-noise covariance check on least squares at its minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceCheck {
    pub data: RegressionData,
    pub batch_sizes: Vec<usize>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub name: String,
    pub beta1: f64,
    pub beta0: Vec<f64>,
    pub steps: u64,
    #[serde(default = "unit")]
    pub variance: f64,
    pub seed: u64,
    #[serde(default)]
    pub covariance: Option<CovarianceCheck>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceRow {
    pub batch_size: usize,
    pub trace: f64,
    /// Pearson correlation of diag(Ĉ) with diag(H)/B.
    pub hessian_correlation: f64,
    pub diagonal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseReport {
    pub config_digest: String,
    pub seed: u64,
    pub prng: &'static str,
    pub config: NoiseConfig,
    pub studies: Vec<PnmNoiseStudy>,
    pub covariance: Vec<CovarianceRow>,
}

impl NoiseConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        read_json(path)
    }

    pub fn run(&self) -> Result<NoiseReport> {
        one(&self.beta0, "beta0")?;
        let spec = NoiseStudySpec {
            variance: self.variance,
            ..NoiseStudySpec::new(self.beta1, self.steps)
        };
        let studies = self
            .beta0
            .iter()
            .enumerate()
            .map(|(i, &b)| pnm_noise_study(b, &spec, &mut RngStream::with_stream(self.seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let covariance = match &self.covariance {
            Some(c) => covariance_rows(c, self.seed)?,
            None => Vec::new(),
        };
        Ok(NoiseReport {
            config_digest: digest_of(self),
            seed: self.seed,
            prng: RNG_ALGORITHM,
            config: self.clone(),
            studies,
            covariance,
        })
    }
}

/// One row per batch size, all at the exact least-squares minimizer.
pub fn covariance_rows(check: &CovarianceCheck, seed: u64) -> Result<Vec<CovarianceRow>> {
    one(&check.batch_sizes, "batch_sizes")?;
    let mut data_rng = RngStream::with_stream(seed, DATA_STREAM);
    let problem = match &check.data {
        RegressionData::Synthetic { n, scales, noise_sd } => LeastSquares::synthetic(*n, scales, *noise_sd, &mut data_rng)?.0,
        RegressionData::Csv { path } => {
            LeastSquares::new(crate::problems::FiniteDataset::from_csv(path, crate::problems::LabelKind::Real)?)?
        }
    };
    let theta = problem.minimizer()?;
    let h = problem.gram();
    let mut rows = Vec::with_capacity(check.batch_sizes.len());
    for (i, &b) in check.batch_sizes.iter().enumerate() {
        let oracle = MinibatchOracle::new(&problem, b)?;
        let mut rng = RngStream::with_stream(seed, 100 + i as u64);
        let est = estimate_gradient_noise_covariance(&oracle, &theta, check.samples, &mut rng)?;
        let diag = est.diagonal();
        let h_diag: Vec<f64> = (0..h.nrows()).map(|j| h[(j, j)] / b as f64).collect();
        rows.push(CovarianceRow {
            batch_size: b,
            trace: est.trace(),
            hessian_correlation: pearson_correlation(&diag, &h_diag)?,
            diagonal: diag,
        });
    }
    Ok(rows)
}

// ------------------------------------------------------------ posterior

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorConfig {
    pub name: String,
    pub dim: usize,
    pub eig_min: f64,
    pub eig_max: f64,
    /// C = noise_scale · H when true, else noise_scale · I.
    #[serde(default)]
    pub noise_follows_hessian: bool,
    pub noise_scale: f64,
    pub optimizers: Vec<OptimizerSpec>,
    pub settings: StationarySettings,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorRow {
    pub optimizer: OptimizerSpec,
    pub estimate: StationaryEstimate,
    /// Row-major exact discrete stationary covariance, when available.
    pub exact: Option<Vec<f64>>,
    /// Step η_eff for which the continuous-time relation ΣH + HΣ = η_eff C is checked.
    pub effective_lr: f64,
    pub lyapunov_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorReport {
    pub config_digest: String,
    pub prng: &'static str,
    pub config: PosteriorConfig,
    pub eigenvalues: Vec<f64>,
    pub hessian: Vec<f64>,
    pub rows: Vec<PosteriorRow>,
}

/// Step size of the equivalent SGD in the small-η limit: momentum adds a
/// 1/(1−β₁) gain on the slow modes; PNM divides by √γ and its pair weights
/// sum to one.
pub fn effective_lr(optimizer: &OptimizerSpec) -> f64 {
    match optimizer {
        OptimizerSpec::Sgd { lr, momentum, .. } => lr / (1.0 - momentum),
        OptimizerSpec::Hb(c) => c.lr * c.beta3 / (1.0 - c.beta1),
        OptimizerSpec::Pnm(c) => c.lr / pnm_normalizer(c.beta0),
        other => other.lr(),
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl PosteriorConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        read_json(path)
    }

    pub fn model(&self) -> Result<QuadraticModel> {
        if self.dim == 0 || !(self.eig_min > 0.0 && self.eig_max >= self.eig_min) {
            return Err(Error::Config("need dim >= 1 and 0 < eig_min <= eig_max".into()));
        }
        let eig: Vec<f64> = (0..self.dim)
            .map(|i| {
                if self.dim == 1 {
                    self.eig_min
                } else {
                    self.eig_min + (self.eig_max - self.eig_min) * i as f64 / (self.dim - 1) as f64
                }
            })
            .collect();
        let seed = *self.seeds.first().ok_or_else(|| Error::Config("seeds must be non-empty".into()))?;
        QuadraticModel::with_spectrum(
            ParamVector::zeros(self.dim)?,
            &eig,
            &mut RngStream::with_stream(seed, DATA_STREAM),
        )
    }

    pub fn noise_covariance(&self, model: &QuadraticModel) -> DMatrix<f64> {
        if self.noise_follows_hessian {
            model.hessian_matrix() * self.noise_scale
        } else {
            DMatrix::identity(self.dim, self.dim) * self.noise_scale
        }
    }

    pub fn run(&self) -> Result<PosteriorReport> {
        one(&self.optimizers, "optimizers")?;
        let model = self.model()?;
        let c = self.noise_covariance(&model);
        let noise = NoiseModel::gaussian(c.clone())?;
        let mut rows = Vec::with_capacity(self.optimizers.len());
        for opt in &self.optimizers {
            let estimate = simulate_chains(&model, &noise, opt, &self.settings, &self.seeds)?;
            let exact = match exact_stationary_covariance(&model, &c, opt) {
                Ok(m) => Some(row_major(&m)),
                Err(Error::Unsupported(_)) => None,
                Err(e) => return Err(e),
            };
            let lr = effective_lr(opt);
            let residual = lyapunov_residual(&estimate.covariance_matrix(), model.hessian_matrix(), &(&c * lr))?;
            rows.push(PosteriorRow {
                optimizer: opt.clone(),
                estimate,
                exact,
                effective_lr: lr,
                lyapunov_residual: residual,
            });
        }
        Ok(PosteriorReport {
            config_digest: digest_of(self),
            prng: RNG_ALGORITHM,
            config: self.clone(),
            eigenvalues: model.eigenvalues().to_vec(),
            hessian: row_major(model.hessian_matrix()),
            rows,
        })
    }
}

// ------------------------------------------------------------- pacbayes

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacBayesConfig {
    pub name: String,
    pub setting: PacBayesSetting,
    /// Grid over (gamma_min, gamma_max]; gamma_max defaults to the critical γ.
    #[serde(default = "unit")]
    pub gamma_min: f64,
    #[serde(default)]
    pub gamma_max: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacBayesReport {
    pub config_digest: String,
    pub config: PacBayesConfig,
    pub critical_ratio: f64,
    pub optimal: OptimalGamma,
    pub rows: Vec<BoundRow>,
}

impl PacBayesReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_digest: {}\ngamma,kl,kl_grad,bound\n", self.config_digest);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(r.gamma),
                fmt_f64(r.kl),
                fmt_f64(r.kl_grad),
                fmt_f64(r.bound)
            ));
        }
        out
    }
}

impl PacBayesConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        read_json(path)
    }

    pub fn run(&self) -> Result<PacBayesReport> {
        let s = &self.setting;
        s.validate()?;
        let ratio = critical_ratio(s.lr, s.batch_size, s.lambda)?;
        let hi = self.gamma_max.unwrap_or(1.0 / ratio);
        if !(hi > self.gamma_min && self.gamma_min > 0.0) || self.points == 0 {
            return Err(Error::Config("need 0 < gamma_min < gamma_max and points >= 1".into()));
        }
        Ok(PacBayesReport {
            config_digest: digest_of(self),
            config: self.clone(),
            critical_ratio: ratio,
            optimal: optimal_gamma(s)?,
            rows: bound_table(s, &gamma_grid(self.gamma_min, hi, self.points))?,
        })
    }
}

// ---------------------------------------------------------- convergence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub name: String,
    /// Quadratic or Rosenbrock.
    pub problem: ProblemSpec,
    pub settings: RateSettings,
    /// Seed for building the problem; run seeds live in `settings`.
    #[serde(default)]
    pub problem_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub config_digest: String,
    pub prng: &'static str,
    pub config: ConvergenceConfig,
    pub report: RateReport,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# config_digest: {}\n# prng: {}\nhorizon,step,mean_min_grad_norm_sq,std_min_grad_norm_sq,bound,within_bound\n",
            self.config_digest, self.prng
        );
        for r in &self.report.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.horizon,
                fmt_f64(r.step),
                fmt_f64(r.mean_min_grad_norm_sq),
                fmt_f64(r.std_min_grad_norm_sq),
                fmt_f64(r.bound),
                r.within_bound
            ));
        }
        out
    }
}

impl ConvergenceConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        read_json(path)
    }

    pub fn run(&self) -> Result<ConvergenceReport> {
        if !matches!(self.problem, ProblemSpec::Quadratic { .. } | ProblemSpec::Rosenbrock { .. }) {
            return Err(Error::Config("convergence supports the quadratic and rosenbrock problems".into()));
        }
        let built = build_problem(&self.problem, None, self.problem_seed)?;
        let report = empirical_rate(built.oracle.as_ref(), &built.theta0, &self.settings)?;
        Ok(ConvergenceReport {
            config_digest: digest_of(self),
            prng: RNG_ALGORITHM,
            config: self.clone(),
            report,
        })
    }
}
