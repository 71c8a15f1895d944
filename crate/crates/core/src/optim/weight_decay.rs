use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightDecayMode {
    #[default]
    None,
    /// λθ is added to the gradient before the momentum update.
    L2,
    /// θ is shrunk by η·λ·θ after the optimizer step.
    Decoupled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightDecaySpec {
    #[serde(default)]
    pub mode: WeightDecayMode,
    #[serde(default)]
    pub lambda: f64,
}

impl WeightDecaySpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn l2(lambda: f64) -> Self {
        Self {
            mode: WeightDecayMode::L2,
            lambda,
        }
    }

    pub fn decoupled(lambda: f64) -> Self {
        Self {
            mode: WeightDecayMode::Decoupled,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda >= 0.0 && self.lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("weight_decay.lambda", format!("{} must be >= 0", self.lambda)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayPhase {
    /// Before the momentum update; touches the gradient.
    BeforeStep,
    /// After the parameter update; touches θ.
    AfterStep,
}

/// Applies the part of `spec` that belongs to `phase`.
///
/// `lr` is the base learning rate η (never the PNM-normalized one).
pub fn apply_weight_decay(
    spec: &WeightDecaySpec,
    phase: DecayPhase,
    lr: f64,
    theta: &mut [f64],
    grad: &mut [f64],
) {
    if spec.lambda == 0.0 {
        return;
    }
    match (spec.mode, phase) {
        (WeightDecayMode::L2, DecayPhase::BeforeStep) => {
            for (g, t) in grad.iter_mut().zip(theta.iter()) {
                *g += spec.lambda * t;
            }
        }
        (WeightDecayMode::Decoupled, DecayPhase::AfterStep) => {
            let shrink = lr * spec.lambda;
            for t in theta.iter_mut() {
                *t -= shrink * *t;
            }
        }
        _ => {}
    }
}
