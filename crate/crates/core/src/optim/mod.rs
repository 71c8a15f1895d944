//! First-order optimizers: heavy ball / SGD, positive-negative momentum (PNM),
//! AdaPNM and the Adam / AMSGrad baselines.
//!
//! All optimizers update parameters in place and keep their buffers at O(n)
//! memory. A gradient with a non-finite entry aborts the step with
//! [`Error::NonFinite`] naming the step index.

mod adam;
mod adapnm;
mod heavy_ball;
mod pnm;
mod weight_decay;

pub use adam::{Adam, AdamConfig};
pub use adapnm::{AdaPnm, AdaPnmConfig};
pub use heavy_ball::{HbConfig, HeavyBall};
pub use pnm::{Pnm, PnmConfig};
pub use weight_decay::{apply_weight_decay, DecayPhase, WeightDecayMode, WeightDecaySpec};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub trait Optimizer: Send {
    /// Applies one update to `theta` given the raw (pre-weight-decay) gradient.
    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()>;

    fn steps_taken(&self) -> u64;

    fn learning_rate(&self) -> f64;

    /// Used by piecewise-constant schedules.
    fn set_learning_rate(&mut self, lr: f64);

    fn name(&self) -> &'static str;
}

/// √((1+β₀)² + β₀²): the noise-magnitude factor PNM divides its step by.
pub fn pnm_normalizer(beta0: f64) -> f64 {
    ((1.0 + beta0).powi(2) + beta0 * beta0).sqrt()
}

/// β₀ at which PNM and AdaPNM reduce to heavy-ball momentum and Adam.
pub fn momentum_recovery_beta0(beta1: f64) -> f64 {
    -beta1 / (1.0 + beta1)
}

/// Serializable optimizer choice used by experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerSpec {
    /// Vanilla SGD with optional PyTorch-style momentum (β₃ = 1).
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default)]
        weight_decay: WeightDecaySpec,
    },
    Hb(HbConfig),
    Pnm(PnmConfig),
    Adapnm(AdaPnmConfig),
    Adam(AdamConfig),
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerSpec::Sgd { .. } => self.as_hb().expect("sgd maps to hb").validate(),
            OptimizerSpec::Hb(c) => c.validate(),
            OptimizerSpec::Pnm(c) => c.validate(),
            OptimizerSpec::Adapnm(c) => c.validate(),
            OptimizerSpec::Adam(c) => c.validate(),
        }
    }

    fn as_hb(&self) -> Option<HbConfig> {
        match self {
            OptimizerSpec::Sgd {
                lr,
                momentum,
                weight_decay,
            } => Some(HbConfig {
                lr: *lr,
                beta1: *momentum,
                beta3: 1.0,
                weight_decay: *weight_decay,
            }),
            OptimizerSpec::Hb(c) => Some(*c),
            _ => None,
        }
    }

    pub fn build(&self, dim: usize) -> Result<Box<dyn Optimizer>> {
        Ok(match self {
            OptimizerSpec::Sgd { .. } | OptimizerSpec::Hb(_) => {
                Box::new(HeavyBall::new(self.as_hb().expect("hb-like"), dim)?)
            }
            OptimizerSpec::Pnm(c) => Box::new(Pnm::new(*c, dim)?),
            OptimizerSpec::Adapnm(c) => Box::new(AdaPnm::new(*c, dim)?),
            OptimizerSpec::Adam(c) => Box::new(Adam::new(*c, dim)?),
        })
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerSpec::Sgd { lr, .. } => *lr,
            OptimizerSpec::Hb(c) => c.lr,
            OptimizerSpec::Pnm(c) => c.lr,
            OptimizerSpec::Adapnm(c) => c.lr,
            OptimizerSpec::Adam(c) => c.lr,
        }
    }

    pub fn with_lr(&self, lr: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            OptimizerSpec::Sgd { lr: l, .. } => *l = lr,
            OptimizerSpec::Hb(c) => c.lr = lr,
            OptimizerSpec::Pnm(c) => c.lr = lr,
            OptimizerSpec::Adapnm(c) => c.lr = lr,
            OptimizerSpec::Adam(c) => c.lr = lr,
        }
        out
    }

    pub fn with_weight_decay(&self, wd: WeightDecaySpec) -> Self {
        let mut out = self.clone();
        match &mut out {
            OptimizerSpec::Sgd { weight_decay, .. } => *weight_decay = wd,
            OptimizerSpec::Hb(c) => c.weight_decay = wd,
            OptimizerSpec::Pnm(c) => c.weight_decay = wd,
            OptimizerSpec::Adapnm(c) => c.weight_decay = wd,
            OptimizerSpec::Adam(c) => c.weight_decay = wd,
        }
        out
    }

    pub fn weight_decay(&self) -> WeightDecaySpec {
        match self {
            OptimizerSpec::Sgd { weight_decay, .. } => *weight_decay,
            OptimizerSpec::Hb(c) => c.weight_decay,
            OptimizerSpec::Pnm(c) => c.weight_decay,
            OptimizerSpec::Adapnm(c) => c.weight_decay,
            OptimizerSpec::Adam(c) => c.weight_decay,
        }
    }

    /// β₀ for the positive-negative variants, None otherwise.
    pub fn beta0(&self) -> Option<f64> {
        match self {
            OptimizerSpec::Pnm(c) => Some(c.beta0),
            OptimizerSpec::Adapnm(c) => Some(c.beta0),
            _ => None,
        }
    }

    pub fn with_beta0(&self, beta0: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            OptimizerSpec::Pnm(c) => c.beta0 = beta0,
            OptimizerSpec::Adapnm(c) => c.beta0 = beta0,
            other => {
                return Err(Error::Config(format!(
                    "optimizer `{}` has no beta0",
                    other.kind()
                )))
            }
        }
        Ok(out)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            OptimizerSpec::Sgd { .. } => "sgd",
            OptimizerSpec::Hb(_) => "hb",
            OptimizerSpec::Pnm(_) => "pnm",
            OptimizerSpec::Adapnm(_) => "adapnm",
            OptimizerSpec::Adam(_) => "adam",
        }
    }
}

/// Copies `grad` into `scratch`, rejecting non-finite entries.
pub(crate) fn load_gradient(scratch: &mut [f64], grad: &[f64], theta: &[f64], step: u64) -> Result<()> {
    check_dim(scratch.len(), grad.len())?;
    check_dim(scratch.len(), theta.len())?;
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { step, index });
    }
    scratch.copy_from_slice(grad);
    Ok(())
}

pub(crate) fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} not in [0, 1)")))
    }
}

pub(crate) fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("lr", format!("{lr} must be positive")))
    }
}

pub(crate) fn check_dim_positive(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::invalid("dim", "must be >= 1"))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips_through_json() {
        let spec = OptimizerSpec::Pnm(PnmConfig {
            lr: 1.0,
            beta0: 1.0,
            beta1: 0.9,
            weight_decay: WeightDecaySpec::l2(1e-4),
        });
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<OptimizerSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"name":"pnm","lr":1.0,"beta0":1.0,"beta1":0.9,"beta_0":2.0}"#;
        assert!(serde_json::from_str::<OptimizerSpec>(bad).is_err());
        let bad = r#"{"name":"sgd","lr":0.1,"momentun":0.9}"#;
        assert!(serde_json::from_str::<OptimizerSpec>(bad).is_err());
    }

    #[test]
    fn normalizer_is_positive_for_all_beta0() {
        for b in [-1.0, -0.5, 0.0, 1.0, 80.0] {
            assert!(pnm_normalizer(b) > 0.0);
        }
        assert_eq!(pnm_normalizer(0.0), 1.0);
        assert!((pnm_normalizer(1.0) - 5f64.sqrt()).abs() < 1e-15);
    }
}
