//! Gradient oracles with known analytic structure.
//!
//! All gradients are closed-form and hand-derived; [`fd_gradient_check`]
//! verifies them against central differences.

mod dataset;
mod fd_check;
mod least_squares;
mod logistic;
mod minibatch;
mod mlp;
mod noisy;
mod quadratic;
mod rosenbrock;

pub use dataset::{
    apply_label_noise, two_moons, FiniteDataset, LabelKind, LabelNoiseKind, LabelNoiseSpec, Labels,
    TwoMoonsSpec,
};
pub use fd_check::fd_gradient_check;
pub use least_squares::LeastSquares;
pub use logistic::LogisticRegression;
pub use minibatch::{minibatch_gradient, MinibatchOracle, SampleProblem};
pub use mlp::{tiny_mlp_eval, MlpProblem, TinyMlp};
pub use noisy::{AdditiveNoiseOracle, NoiseModel, PureNoiseOracle};
pub use quadratic::{quadratic_eval, QuadraticModel};
pub use rosenbrock::{rosenbrock_eval, Rosenbrock};
pub(crate) use quadratic::{max_asymmetry, symmetrize};
