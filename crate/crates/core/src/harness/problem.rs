use crate::error::{Error, Result};
use crate::oracle::GradientOracle;
use crate::problems::{
    apply_label_noise, two_moons, AdditiveNoiseOracle, FiniteDataset, LabelKind, LeastSquares, LogisticRegression,
    MinibatchOracle, MlpProblem, NoiseModel, QuadraticModel, Rosenbrock, TinyMlp, TwoMoonsSpec,
};
use crate::rng::RngStream;
use crate::vector::ParamVector;

use super::config::{ClassData, ProblemSpec, RegressionData};

/// RNG streams derived from a run seed.
pub(crate) const DATA_STREAM: u64 = 1;
pub(crate) const LABEL_STREAM: u64 = 2;
pub(crate) const INIT_STREAM: u64 = 3;
pub(crate) const TRAIN_STREAM: u64 = 4;

#[derive(Clone, Debug)]
pub(crate) enum Model {
    Mlp(TinyMlp),
    Logistic,
}

impl Model {
    fn predict(&self, theta: &[f64], x: &[f64]) -> usize {
        match self {
            Model::Mlp(m) => m.predict(theta, x),
            Model::Logistic => {
                let d = x.len();
                usize::from(crate::vector::dot_slices(x, &theta[..d]) + theta[d] >= 0.0)
            }
        }
    }
}

/// Train/test classification data for error-rate evaluation.
#[derive(Clone, Debug)]
pub(crate) struct Classifier {
    pub model: Model,
    /// Training split with the labels the optimizer sees.
    pub train: FiniteDataset,
    pub test: FiniteDataset,
    /// True where a training label was corrupted.
    pub flipped: Vec<bool>,
}

/// Error rates at one point of training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Errors {
    pub test: f64,
    /// Against the (possibly corrupted) training labels.
    pub train: f64,
    /// Training rows whose label was not corrupted.
    pub clean_train: Option<f64>,
}

fn error_rate(model: &Model, theta: &[f64], data: &FiniteDataset, keep: Option<&[bool]>, invert: bool) -> f64 {
    let labels = data.class_labels().expect("classification data");
    let (mut wrong, mut total) = (0usize, 0usize);
    for (i, &y) in labels.iter().enumerate() {
        if let Some(k) = keep {
            if k[i] == invert {
                continue;
            }
        }
        total += 1;
        if model.predict(theta, data.row(i)) != y {
            wrong += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        wrong as f64 / total as f64
    }
}

impl Classifier {
    pub fn evaluate(&self, theta: &[f64]) -> Errors {
        let any_flipped = self.flipped.iter().any(|&f| f);
        Errors {
            test: error_rate(&self.model, theta, &self.test, None, false),
            train: error_rate(&self.model, theta, &self.train, None, false),
            clean_train: any_flipped.then(|| error_rate(&self.model, theta, &self.train, Some(&self.flipped), true)),
        }
    }
}

pub(crate) struct BuiltProblem {
    pub oracle: Box<dyn GradientOracle>,
    pub theta0: ParamVector,
    pub classifier: Option<Classifier>,
    pub dataset_size: Option<usize>,
}

fn load_class_data(data: &ClassData, rng: &mut RngStream) -> Result<FiniteDataset> {
    match data {
        ClassData::TwoMoons { n, noise, nuisance_dims } => two_moons(
            &TwoMoonsSpec {
                n: *n,
                noise: *noise,
                nuisance_dims: *nuisance_dims,
            },
            rng,
        ),
        ClassData::Csv { path } => {
            let d = FiniteDataset::from_csv(path, LabelKind::Class)?;
            // Shuffle so the train/test split does not follow file order.
            let mut idx: Vec<usize> = (0..d.len()).collect();
            rng.shuffle(&mut idx);
            d.subset(&idx)
        }
    }
}

fn split(data: &FiniteDataset, train_fraction: f64) -> Result<(FiniteDataset, FiniteDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction", "must lie strictly inside (0, 1)"));
    }
    let n_train = ((data.len() as f64) * train_fraction).round() as usize;
    data.split_at(n_train)
}

pub(crate) fn build_problem(spec: &ProblemSpec, batch_size: Option<usize>, seed: u64) -> Result<BuiltProblem> {
    let mut data_rng = RngStream::with_stream(seed, DATA_STREAM);
    let mut init_rng = RngStream::with_stream(seed, INIT_STREAM);
    match spec {
        ProblemSpec::Quadratic {
            dim,
            eig_min,
            eig_max,
            noise_variance,
            start_distance,
        } => {
            if *dim == 0 || !(*eig_min > 0.0 && eig_max >= eig_min) {
                return Err(Error::invalid("quadratic", "need dim >= 1 and 0 < eig_min <= eig_max"));
            }
            let eig: Vec<f64> = (0..*dim)
                .map(|i| {
                    if *dim == 1 {
                        *eig_min
                    } else {
                        eig_min + (eig_max - eig_min) * i as f64 / (*dim - 1) as f64
                    }
                })
                .collect();
            let model = QuadraticModel::with_spectrum(ParamVector::zeros(*dim)?, &eig, &mut data_rng)?;
            let mut start = crate::rng::sample_standard_gaussian(&mut init_rng, *dim)?;
            let norm = start.norm_sq().sqrt();
            for x in start.iter_mut() {
                *x *= start_distance / norm;
            }
            let oracle = AdditiveNoiseOracle::new(model, NoiseModel::isotropic(*noise_variance)?)?;
            Ok(BuiltProblem {
                oracle: Box::new(oracle),
                theta0: start,
                classifier: None,
                dataset_size: None,
            })
        }
        ProblemSpec::Rosenbrock { start, noise_half_width } => {
            let oracle = AdditiveNoiseOracle::new(Rosenbrock, NoiseModel::uniform(*noise_half_width)?)?;
            Ok(BuiltProblem {
                oracle: Box::new(oracle),
                theta0: ParamVector::new(start.to_vec())?,
                classifier: None,
                dataset_size: None,
            })
        }
        ProblemSpec::LeastSquares { data } => {
            let problem = match data {
                RegressionData::Synthetic { n, scales, noise_sd } => {
                    LeastSquares::synthetic(*n, scales, *noise_sd, &mut data_rng)?.0
                }
                RegressionData::Csv { path } => LeastSquares::new(FiniteDataset::from_csv(path, LabelKind::Real)?)?,
            };
            let n = problem.data().len();
            let dim = problem.data().feature_dim();
            let oracle = MinibatchOracle::new(problem, batch_size.unwrap_or(n))?;
            Ok(BuiltProblem {
                oracle: Box::new(oracle),
                theta0: ParamVector::zeros(dim)?,
                classifier: None,
                dataset_size: Some(n),
            })
        }
        ProblemSpec::Logistic { data, train_fraction } => {
            let all = load_class_data(data, &mut data_rng)?;
            let (train, test) = split(&all, *train_fraction)?;
            let n = train.len();
            let dim = train.feature_dim() + 1;
            let problem = LogisticRegression::new(train.clone())?;
            let oracle = MinibatchOracle::new(problem, batch_size.unwrap_or(n))?;
            Ok(BuiltProblem {
                oracle: Box::new(oracle),
                theta0: ParamVector::zeros(dim)?,
                classifier: Some(Classifier {
                    model: Model::Logistic,
                    flipped: vec![false; n],
                    train,
                    test,
                }),
                dataset_size: Some(n),
            })
        }
        ProblemSpec::Mlp {
            data,
            hidden,
            train_fraction,
            label_noise,
        } => {
            let all = load_class_data(data, &mut data_rng)?;
            let (clean_train, test) = split(&all, *train_fraction)?;
            let (train, flipped) = match label_noise {
                Some(spec) => {
                    let mut rng = RngStream::with_stream(seed, LABEL_STREAM);
                    apply_label_noise(&clean_train, spec, &mut rng)?
                }
                None => (clean_train.clone(), vec![false; clean_train.len()]),
            };
            let classes = all.classes().expect("class data");
            let mlp = TinyMlp::new(all.feature_dim(), *hidden, classes)?;
            let n = train.len();
            let theta0 = mlp.init(&mut init_rng);
            let oracle = MinibatchOracle::new(MlpProblem::new(mlp, train.clone())?, batch_size.unwrap_or(n))?;
            Ok(BuiltProblem {
                oracle: Box::new(oracle),
                theta0,
                classifier: Some(Classifier {
                    model: Model::Mlp(mlp),
                    train,
                    test,
                    flipped,
                }),
                dataset_size: Some(n),
            })
        }
    }
}
