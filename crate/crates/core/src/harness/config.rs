use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::OptimizerSpec;
use crate::problems::LabelNoiseSpec;

/// One experiment: a problem, an optimizer, a budget and a list of seeds.
///
/// Unknown keys anywhere in the document are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    /// Fixed step budget. Exactly one of `steps` and `epochs` must be set.
    #[serde(default)]
    pub steps: Option<u64>,
    /// Epochs of ⌈N/B⌉ steps each; dataset problems only.
    #[serde(default)]
    pub epochs: Option<u64>,
    /// Minibatch size; required for dataset problems.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Store θ in every trajectory record.
    #[serde(default)]
    pub snapshots: bool,
    /// Steps between trajectory records; 0 picks one epoch, or steps/100.
    #[serde(default)]
    pub log_every: u64,
    #[serde(default)]
    pub schedule: LrSchedule,
    /// Parameters of the comparative experiments.
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Piecewise-constant decay: the rate is multiplied by `factor` at each
/// milestone, given as a fraction of the step budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    #[serde(default)]
    pub milestones: Vec<f64>,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_factor() -> f64 {
    0.1
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            milestones: Vec::new(),
            factor: default_factor(),
        }
    }
}

impl LrSchedule {
    /// Step indices at which decay happens, for a budget of `total` steps.
    pub fn milestone_steps(&self, total: u64) -> Vec<u64> {
        self.milestones.iter().map(|f| (f * total as f64).round() as u64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.milestones.iter().any(|m| !(*m > 0.0 && *m < 1.0)) {
            return Err(Error::invalid("milestones", "must lie strictly inside (0, 1)"));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("milestones", "must increase"));
        }
        if !(self.factor > 0.0 && self.factor.is_finite()) {
            return Err(Error::invalid("factor", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// β₀ grid for `sweep-beta0`.
    #[serde(default)]
    pub beta0: Vec<f64>,
    /// Learning-rate grid for `grid`.
    #[serde(default)]
    pub lr: Vec<f64>,
    /// Weight-decay grid for `grid`.
    #[serde(default)]
    pub weight_decay: Vec<f64>,
    /// Comparison optimizer for `label-noise`, `sweep-beta0` and `grid`.
    #[serde(default)]
    pub baseline: Option<OptimizerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// ½(θ−θ*)ᵀH(θ−θ*) with eigenvalues evenly spaced in [eig_min, eig_max],
    /// a random rotation and isotropic Gaussian gradient noise.
    Quadratic {
        dim: usize,
        eig_min: f64,
        eig_max: f64,
        #[serde(default)]
        noise_variance: f64,
        #[serde(default = "one")]
        start_distance: f64,
    },
    /// With optional U[−a, a] gradient noise per coordinate.
    Rosenbrock {
        #[serde(default = "rosenbrock_start")]
        start: [f64; 2],
        #[serde(default)]
        noise_half_width: f64,
    },
    LeastSquares { data: RegressionData },
    Logistic {
        data: ClassData,
        #[serde(default = "half")]
        train_fraction: f64,
    },
    /// The one-hidden-layer tanh classifier.
    Mlp {
        data: ClassData,
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default = "half")]
        train_fraction: f64,
        /// Applied to the training split only.
        #[serde(default)]
        label_noise: Option<LabelNoiseSpec>,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_hidden() -> usize {
    16
}

fn rosenbrock_start() -> [f64; 2] {
    [-1.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassData {
    TwoMoons {
        n: usize,
        noise: f64,
        #[serde(default)]
        nuisance_dims: usize,
    },
    /// Numeric features with an integer class label in the last column.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressionData {
    /// Features with per-column scales, targets from a random linear model.
    Synthetic { n: usize, scales: Vec<f64>, noise_sd: f64 },
    /// Numeric features with a real target in the last column.
    Csv { path: PathBuf },
}

impl ProblemSpec {
    pub fn is_dataset(&self) -> bool {
        matches!(
            self,
            ProblemSpec::LeastSquares { .. } | ProblemSpec::Logistic { .. } | ProblemSpec::Mlp { .. }
        )
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.schedule.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        match (self.steps, self.epochs) {
            (Some(0), _) | (_, Some(0)) => return Err(Error::Config("the step budget must be positive".into())),
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::Config("set exactly one of `steps` and `epochs`".into()))
            }
            (None, Some(_)) if !self.problem.is_dataset() => {
                return Err(Error::Config("`epochs` needs a dataset problem".into()))
            }
            _ => {}
        }
        if self.problem.is_dataset() && self.batch_size.is_none() {
            return Err(Error::Config("dataset problems need `batch_size`".into()));
        }
        if let Some(b) = &self.sweep.baseline {
            b.validate()?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        digest_of(self)
    }
}

pub fn digest_of<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config types serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}
