use serde::{Deserialize, Serialize};

use super::{
    apply_weight_decay, check_dim_positive, check_lr, check_unit_interval, load_gradient,
    DecayPhase, Optimizer, WeightDecaySpec,
};
use crate::error::{Error, Result};

/// Heavy ball: `m ← β₁m + β₃g`, `θ ← θ − ηm`.
///
/// β₁ = 0, β₃ = 1 is vanilla SGD; β₃ = 1 is PyTorch's SGD with momentum and
/// β₃ = 1 − β₁ the exponential-moving-average form used by Adam.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HbConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta3: f64,
    #[serde(default)]
    pub weight_decay: WeightDecaySpec,
}

impl HbConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.0,
            beta3: 1.0,
            weight_decay: WeightDecaySpec::none(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lr(self.lr)?;
        check_unit_interval("beta1", self.beta1)?;
        if !(self.beta3 > 0.0 && self.beta3 <= 1.0) {
            return Err(Error::invalid("beta3", format!("{} not in (0, 1]", self.beta3)));
        }
        self.weight_decay.validate()
    }
}

#[derive(Clone, Debug)]
pub struct HeavyBall {
    config: HbConfig,
    momentum: Vec<f64>,
    scratch: Vec<f64>,
    t: u64,
}

impl HeavyBall {
    pub fn new(config: HbConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        check_dim_positive(dim)?;
        Ok(Self {
            config,
            momentum: vec![0.0; dim],
            scratch: vec![0.0; dim],
            t: 0,
        })
    }

    pub fn config(&self) -> &HbConfig {
        &self.config
    }

    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }
}

impl Optimizer for HeavyBall {
    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        load_gradient(&mut self.scratch, grad, theta, self.t)?;
        let HbConfig {
            lr,
            beta1,
            beta3,
            weight_decay,
        } = self.config;
        apply_weight_decay(&weight_decay, DecayPhase::BeforeStep, lr, theta, &mut self.scratch);
        for ((m, g), p) in self.momentum.iter_mut().zip(&self.scratch).zip(theta.iter_mut()) {
            *m = beta1 * *m + beta3 * g;
            *p -= lr * *m;
        }
        apply_weight_decay(&weight_decay, DecayPhase::AfterStep, lr, theta, &mut self.scratch);
        self.t += 1;
        Ok(())
    }

    fn steps_taken(&self) -> u64 {
        self.t
    }

    fn learning_rate(&self) -> f64 {
        self.config.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    fn name(&self) -> &'static str {
        "hb"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanilla_sgd_step() {
        let mut opt = HeavyBall::new(HbConfig::sgd(0.1), 1).unwrap();
        let mut theta = [0.0];
        opt.step(&mut theta, &[1.0]).unwrap();
        assert!((theta[0] + 0.1).abs() < 1e-15);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn zero_gradient_leaves_theta() {
        let cfg = HbConfig {
            lr: 0.3,
            beta1: 0.9,
            beta3: 0.1,
            weight_decay: WeightDecaySpec::none(),
        };
        let mut opt = HeavyBall::new(cfg, 2).unwrap();
        let mut theta = [1.25, -3.0];
        for _ in 0..5 {
            opt.step(&mut theta, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(theta, [1.25, -3.0]);
    }

    #[test]
    fn ema_momentum_step() {
        let cfg = HbConfig {
            lr: 0.1,
            beta1: 0.9,
            beta3: 0.1,
            weight_decay: WeightDecaySpec::none(),
        };
        let mut opt = HeavyBall::new(cfg, 1).unwrap();
        let mut theta = [0.0];
        opt.step(&mut theta, &[1.0]).unwrap();
        assert!((opt.momentum()[0] - 0.1).abs() < 1e-15);
        assert!((theta[0] + 0.01).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let mut opt = HeavyBall::new(HbConfig::sgd(0.1), 2).unwrap();
        let mut theta = [0.0, 0.0];
        opt.step(&mut theta, &[1.0, 1.0]).unwrap();
        let err = opt.step(&mut theta, &[1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 1, index: 1 }));
    }

    #[test]
    fn invalid_configs() {
        assert!(HbConfig { beta3: 0.0, ..HbConfig::sgd(0.1) }.validate().is_err());
        assert!(HbConfig { beta1: 1.0, ..HbConfig::sgd(0.1) }.validate().is_err());
        assert!(HbConfig::sgd(0.0).validate().is_err());
    }
}
