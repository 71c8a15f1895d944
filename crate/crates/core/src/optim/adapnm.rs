use serde::{Deserialize, Serialize};

use super::{
    apply_weight_decay, check_dim_positive, check_lr, check_unit_interval, load_gradient,
    pnm_normalizer, DecayPhase, Optimizer, WeightDecaySpec,
};
use crate::error::{Error, Result};

/// Adaptive positive-negative momentum.
///
/// With `amsgrad = true` the denominator uses the running maximum of the
/// second-moment estimate:
///
/// ```text
/// m_t   = β₁² m_{t−2} + (1 − β₁²) g_t
/// m̂_t   = [(1+β₀) m_t − β₀ m_{t−1}] / (1 − β₁ᵗ)
/// v_t   = β₂ v_{t−1} + (1 − β₂) g_t²
/// v_max = max(v_t, v_max)
/// v̂_t   = v_max / (1 − β₂ᵗ)
/// θ_{t+1} = θ_t − η m̂_t / (√((1+β₀)²+β₀²) · (√v̂_t + ε))
/// ```
///
/// With `amsgrad = false`, v̂_t = v_t / (1 − β₂ᵗ) and the normalization is
/// folded into m̂_t; the arithmetic is otherwise identical. The step counter
/// t starts at 1 on the first update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaPnmConfig {
    pub lr: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(default = "default_true")]
    pub amsgrad: bool,
    #[serde(default)]
    pub weight_decay: WeightDecaySpec,
}

fn default_true() -> bool {
    true
}

impl AdaPnmConfig {
    pub fn new(lr: f64, beta0: f64) -> Self {
        Self {
            lr,
            beta0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            amsgrad: true,
            weight_decay: WeightDecaySpec::none(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lr(self.lr)?;
        check_unit_interval("beta1", self.beta1)?;
        check_unit_interval("beta2", self.beta2)?;
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", format!("{} must be > 0", self.eps)));
        }
        if !(self.beta0 >= -1.0 && self.beta0.is_finite()) {
            return Err(Error::invalid("beta0", format!("{} must be >= -1", self.beta0)));
        }
        self.weight_decay.validate()
    }
}

#[derive(Clone, Debug)]
pub struct AdaPnm {
    config: AdaPnmConfig,
    buffers: [Vec<f64>; 2],
    v: Vec<f64>,
    v_max: Vec<f64>,
    scratch: Vec<f64>,
    t: u64,
}

impl AdaPnm {
    pub fn new(config: AdaPnmConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        check_dim_positive(dim)?;
        Ok(Self {
            config,
            buffers: [vec![0.0; dim], vec![0.0; dim]],
            v: vec![0.0; dim],
            v_max: vec![0.0; dim],
            scratch: vec![0.0; dim],
            t: 0,
        })
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn second_moment_max(&self) -> &[f64] {
        &self.v_max
    }
}

impl Optimizer for AdaPnm {
    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        load_gradient(&mut self.scratch, grad, theta, self.t)?;
        let AdaPnmConfig {
            lr,
            beta0,
            beta1,
            beta2,
            eps,
            amsgrad,
            weight_decay,
        } = self.config;
        apply_weight_decay(&weight_decay, DecayPhase::BeforeStep, lr, theta, &mut self.scratch);

        let t = self.t + 1;
        let beta = beta1 * beta1;
        let norm = pnm_normalizer(beta0);
        let bias1 = 1.0 - beta1.powf(t as f64);
        let bias2 = 1.0 - beta2.powf(t as f64);
        let [even, odd] = &mut self.buffers;
        let (current, other) = if self.t % 2 == 0 { (even, odd) } else { (odd, even) };
        for i in 0..theta.len() {
            let g = self.scratch[i];
            let m = beta * current[i] + (1.0 - beta) * g;
            current[i] = m;
            let v = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            self.v[i] = v;
            let direction = (1.0 + beta0) * m - beta0 * other[i];
            if amsgrad {
                self.v_max[i] = self.v_max[i].max(v);
                let m_hat = direction / bias1;
                let v_hat = self.v_max[i] / bias2;
                theta[i] -= lr / (norm * (v_hat.sqrt() + eps)) * m_hat;
            } else {
                let m_hat = direction / (bias1 * norm);
                let v_hat = v / bias2;
                theta[i] -= lr / (v_hat.sqrt() + eps) * m_hat;
            }
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
        "adapnm"
    }
}
