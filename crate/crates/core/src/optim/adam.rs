use serde::{Deserialize, Serialize};

use super::{
    apply_weight_decay, check_dim_positive, check_lr, check_unit_interval, load_gradient,
    DecayPhase, Optimizer, WeightDecaySpec,
};
use crate::error::{Error, Result};

/// Adam with bias correction; `amsgrad` switches to the running-maximum
/// second moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(default)]
    pub amsgrad: bool,
    #[serde(default)]
    pub weight_decay: WeightDecaySpec,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            amsgrad: false,
            weight_decay: WeightDecaySpec::none(),
        }
    }

    pub fn amsgrad(lr: f64) -> Self {
        Self {
            amsgrad: true,
            ..Self::new(lr)
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lr(self.lr)?;
        check_unit_interval("beta1", self.beta1)?;
        check_unit_interval("beta2", self.beta2)?;
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", format!("{} must be > 0", self.eps)));
        }
        self.weight_decay.validate()
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    v_max: Vec<f64>,
    scratch: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        check_dim_positive(dim)?;
        Ok(Self {
            config,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            v_max: vec![0.0; dim],
            scratch: vec![0.0; dim],
            t: 0,
        })
    }
}

impl Optimizer for Adam {
    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        load_gradient(&mut self.scratch, grad, theta, self.t)?;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            amsgrad,
            weight_decay,
        } = self.config;
        apply_weight_decay(&weight_decay, DecayPhase::BeforeStep, lr, theta, &mut self.scratch);
        let t = self.t + 1;
        let bias1 = 1.0 - beta1.powf(t as f64);
        let bias2 = 1.0 - beta2.powf(t as f64);
        for i in 0..theta.len() {
            let g = self.scratch[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let second = if amsgrad {
                self.v_max[i] = self.v_max[i].max(self.v[i]);
                self.v_max[i]
            } else {
                self.v[i]
            };
            let m_hat = self.m[i] / bias1;
            let v_hat = second / bias2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        apply_weight_decay(&weight_decay, DecayPhase::AfterStep, lr, theta, &mut self.scratch);
        self.t = t;
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
        if self.config.amsgrad {
            "amsgrad"
        } else {
            "adam"
        }
    }
}
