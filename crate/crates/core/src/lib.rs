//! Positive-negative momentum (PNM) optimizers and the tooling to check their
//! noise, posterior, convergence and PAC-Bayes behaviour on small problems.

pub mod convergence;
pub mod error;
pub mod harness;
pub mod noise;
pub mod optim;
pub mod pacbayes;
pub mod oracle;
pub mod posterior;
pub mod problems;
pub mod rng;
pub mod trajectory;
pub mod vector;

pub use error::{Error, Result};
pub use oracle::{Capabilities, GradientOracle};
pub use rng::{sample_standard_gaussian, RngStream, RNG_ALGORITHM};
pub use trajectory::{Trajectory, TrajectoryRecord};
pub use vector::{dot, GradientSample, ParamVector};
