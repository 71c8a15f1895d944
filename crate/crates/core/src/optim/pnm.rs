use serde::{Deserialize, Serialize};

use super::{
    apply_weight_decay, check_dim_positive, check_lr, check_unit_interval, load_gradient,
    pnm_normalizer, DecayPhase, Optimizer, WeightDecaySpec,
};
use crate::error::{Error, Result};

/// Stochastic positive-negative momentum.
///
/// Two momentum buffers are fed by alternating steps:
///
/// ```text
/// m_t   = β₁² m_{t−2} + (1 − β₁²) g_t
/// θ_{t+1} = θ_t − η / √((1+β₀)² + β₀²) · [(1+β₀) m_t − β₀ m_{t−1}]
/// ```
///
/// Both buffers start at zero. β₀ > 0 amplifies the gradient-noise variance in
/// the update direction by (1+β₀)² + β₀²; β₀ = −β₁/(1+β₁) recovers heavy-ball
/// momentum with β₃ = 1 − β₁ up to the learning-rate normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PnmConfig {
    pub lr: f64,
    pub beta0: f64,
    pub beta1: f64,
    #[serde(default)]
    pub weight_decay: WeightDecaySpec,
}

impl PnmConfig {
    pub fn validate(&self) -> Result<()> {
        check_lr(self.lr)?;
        check_unit_interval("beta1", self.beta1)?;
        if !(self.beta0 >= -1.0 && self.beta0.is_finite()) {
            return Err(Error::invalid("beta0", format!("{} must be >= -1", self.beta0)));
        }
        self.weight_decay.validate()
    }

    /// η₀ = η / √((1+β₀)² + β₀²).
    pub fn effective_lr(&self) -> f64 {
        self.lr / pnm_normalizer(self.beta0)
    }
}

#[derive(Clone, Debug)]
pub struct Pnm {
    config: PnmConfig,
    /// Slot `t % 2` holds the buffer updated at step t.
    buffers: [Vec<f64>; 2],
    scratch: Vec<f64>,
    t: u64,
}

impl Pnm {
    pub fn new(config: PnmConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        check_dim_positive(dim)?;
        Ok(Self {
            config,
            buffers: [vec![0.0; dim], vec![0.0; dim]],
            scratch: vec![0.0; dim],
            t: 0,
        })
    }

    pub fn config(&self) -> &PnmConfig {
        &self.config
    }

    /// The buffer written by the most recent step (m_{t−1} before step t).
    pub fn latest_momentum(&self) -> &[f64] {
        &self.buffers[((self.t + 1) % 2) as usize]
    }

    /// The buffer written one step earlier (m_{t−2} before step t).
    pub fn prior_momentum(&self) -> &[f64] {
        &self.buffers[(self.t % 2) as usize]
    }

    /// x_t = θ_t + η₀ β₀ m_{t−1}, the point whose increments follow plain
    /// momentum: x_{t+1} − x_t = β₁²(x_{t−1} − x_{t−2}) − η₀(1 − β₁²) g_t.
    pub fn auxiliary_point(&self, theta: &[f64]) -> Vec<f64> {
        let c = self.config.effective_lr() * self.config.beta0;
        theta
            .iter()
            .zip(self.latest_momentum())
            .map(|(t, m)| t + c * m)
            .collect()
    }
}

impl Optimizer for Pnm {
    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        load_gradient(&mut self.scratch, grad, theta, self.t)?;
        let PnmConfig {
            lr,
            beta0,
            beta1,
            weight_decay,
        } = self.config;
        apply_weight_decay(&weight_decay, DecayPhase::BeforeStep, lr, theta, &mut self.scratch);

        let beta = beta1 * beta1;
        let step_size = lr / pnm_normalizer(beta0);
        let (pos, neg) = (1.0 + beta0, beta0);
        let [even, odd] = &mut self.buffers;
        let (current, other) = if self.t % 2 == 0 { (even, odd) } else { (odd, even) };
        for (((m, other), g), p) in current
            .iter_mut()
            .zip(other.iter())
            .zip(&self.scratch)
            .zip(theta.iter_mut())
        {
            *m = beta * *m + (1.0 - beta) * g;
            *p -= step_size * (pos * *m - neg * other);
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
        "pnm"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, beta0: f64, beta1: f64) -> PnmConfig {
        PnmConfig {
            lr,
            beta0,
            beta1,
            weight_decay: WeightDecaySpec::none(),
        }
    }

    /// Direct transcription of the update with an explicit gradient history.
    fn reference_pnm(lr: f64, beta0: f64, beta1: f64, grads: &[f64]) -> Vec<f64> {
        let b = beta1 * beta1;
        let mut history: Vec<f64> = Vec::new();
        let mut theta = 0.0;
        let mut out = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            let m_tm2 = if t >= 2 { history[t - 2] } else { 0.0 };
            let m_tm1 = if t >= 1 { history[t - 1] } else { 0.0 };
            let m_t = b * m_tm2 + (1.0 - b) * g;
            history.push(m_t);
            let norm = ((1.0 + beta0).powi(2) + beta0.powi(2)).sqrt();
            theta -= lr / norm * ((1.0 + beta0) * m_t - beta0 * m_tm1);
            out.push(theta);
        }
        out
    }

    #[test]
    fn first_step_value() {
        let mut opt = Pnm::new(cfg(1.0, 1.0, 0.9), 1).unwrap();
        let mut theta = [0.0];
        opt.step(&mut theta, &[1.0]).unwrap();
        assert!((opt.latest_momentum()[0] - 0.19).abs() < 1e-15);
        // −(1/√5)·2·0.19
        assert!((theta[0] + 0.169_941_166_289_984).abs() < 1e-12, "{}", theta[0]);
    }

    #[test]
    fn zero_beta0_is_plain_buffer_step() {
        let mut opt = Pnm::new(cfg(0.5, 0.0, 0.9), 1).unwrap();
        let mut theta = [0.0];
        opt.step(&mut theta, &[2.0]).unwrap();
        assert!((theta[0] + 0.5 * 0.19 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_history_reference() {
        let grads: Vec<f64> = (0..50).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let expected = reference_pnm(0.3, 1.7, 0.8, &grads);
        let mut opt = Pnm::new(cfg(0.3, 1.7, 0.8), 1).unwrap();
        let mut theta = [0.0];
        for (g, e) in grads.iter().zip(&expected) {
            opt.step(&mut theta, &[*g]).unwrap();
            assert!((theta[0] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn buffers_alternate() {
        let mut opt = Pnm::new(cfg(1.0, 1.0, 0.5), 1).unwrap();
        let mut theta = [0.0];
        opt.step(&mut theta, &[1.0]).unwrap();
        opt.step(&mut theta, &[10.0]).unwrap();
        // Second step writes the other buffer; the first one is untouched.
        assert!((opt.latest_momentum()[0] - 7.5).abs() < 1e-12);
        assert!((opt.prior_momentum()[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn beta0_below_minus_one_rejected() {
        assert!(cfg(1.0, -1.5, 0.9).validate().is_err());
        assert!(cfg(1.0, -1.0, 0.9).validate().is_ok());
    }
}
