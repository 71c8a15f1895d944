//! Empirical check of the O(1/√t) rate of stochastic PNM and evaluation of
//! the corresponding upper bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{pnm_normalizer, Optimizer, Pnm, PnmConfig, WeightDecaySpec};
use crate::oracle::GradientOracle;
use crate::rng::RngStream;
use crate::vector::{norm_sq, ParamVector};

/// Constants of the bound. `beta` is β₁².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceBoundInputs {
    pub l: f64,
    pub g: f64,
    pub sigma_sq: f64,
    pub c: f64,
    pub f0: f64,
    pub f_star: f64,
    pub beta: f64,
    pub beta0: f64,
}

impl ConvergenceBoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.c > 0.0) {
            return Err(Error::invalid("bound", "L and C must be > 0"));
        }
        if !(self.g >= 0.0 && self.sigma_sq >= 0.0) {
            return Err(Error::invalid("bound", "G and σ² must be >= 0"));
        }
        if !(self.f0 >= self.f_star) {
            return Err(Error::invalid("bound", "f(θ₀) must be >= f*"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid("beta", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// C₁ = C [L (β + β₀(1−β))² (G² + σ²) + L (1−β)² σ²] / (1−β)².
    pub fn c1(&self) -> f64 {
        let (b, b0) = (self.beta, self.beta0);
        let a = (b + b0 * (1.0 - b)).powi(2) * (self.g * self.g + self.sigma_sq);
        self.c * (self.l * a + self.l * (1.0 - b).powi(2) * self.sigma_sq) / (1.0 - b).powi(2)
    }
}

/// Upper bound on min_{k ≤ t} E‖∇f(θ_k)‖² under the step
/// η/√γ = min{1/(2L), C/√(t+1)}.
pub fn theorem1_bound(inputs: &ConvergenceBoundInputs, t: u64) -> Result<f64> {
    inputs.validate()?;
    let tp1 = (t + 1) as f64;
    let lead = 2.0 * (inputs.f0 - inputs.f_star) / tp1 * (2.0 * inputs.l).max(tp1.sqrt() / inputs.c);
    Ok(lead + inputs.c1() / tp1.sqrt())
}

/// Normalized step min{1/(2L), C/√T} for a horizon of T iterates.
pub fn theorem1_step(l: f64, c: f64, horizon: u64) -> f64 {
    (1.0 / (2.0 * l)).min(c / (horizon as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSettings {
    pub horizons: Vec<u64>,
    pub seeds: Vec<u64>,
    pub beta0: f64,
    pub beta1: f64,
    /// Smoothness constant used in the step rule.
    pub l: f64,
    pub c: f64,
    /// Lower bound f* used in the bound; defaults to 0.
    #[serde(default)]
    pub f_star: f64,
    /// E‖ξ‖² of the oracle, if known.
    pub sigma_sq: f64,
    /// Track the Hessian spectral radius along the path.
    #[serde(default)]
    pub measure_curvature: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub horizon: u64,
    /// Normalized step η/√γ.
    pub step: f64,
    pub mean_min_grad_norm_sq: f64,
    pub std_min_grad_norm_sq: f64,
    pub per_seed: Vec<f64>,
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of ln(mean) against ln(T).
    pub slope: f64,
    /// Bound constants with G (and L when measured) taken over the visited path.
    pub bound_inputs: ConvergenceBoundInputs,
    pub measured_g: f64,
    pub measured_l: Option<f64>,
    /// True when the measured curvature does not exceed the step-rule L.
    pub step_rule_consistent: bool,
}

struct RunStats {
    min_grad_norm_sq: f64,
    max_grad_norm: f64,
    max_curvature: f64,
}

fn run_horizon(
    oracle: &dyn GradientOracle,
    theta0: &ParamVector,
    settings: &RateSettings,
    horizon: u64,
    seed: u64,
) -> Result<RunStats> {
    let n = oracle.dim();
    let step = theorem1_step(settings.l, settings.c, horizon);
    let config = PnmConfig {
        lr: step * pnm_normalizer(settings.beta0),
        beta0: settings.beta0,
        beta1: settings.beta1,
        weight_decay: WeightDecaySpec::none(),
    };
    let mut opt = Pnm::new(config, n)?;
    let mut rng = RngStream::with_stream(seed, horizon);
    let mut theta = theta0.as_slice().to_vec();
    let mut full = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut stats = RunStats {
        min_grad_norm_sq: f64::INFINITY,
        max_grad_norm: 0.0,
        max_curvature: 0.0,
    };
    for k in 0..horizon {
        oracle.full_gradient_into(&theta, &mut full)?;
        let gn = norm_sq(&full);
        if !gn.is_finite() || gn > 1e300 {
            return Err(Error::Divergence {
                step: k,
                detail: format!("‖∇f‖² = {gn:e} at horizon {horizon}, seed {seed}"),
            });
        }
        stats.min_grad_norm_sq = stats.min_grad_norm_sq.min(gn);
        stats.max_grad_norm = stats.max_grad_norm.max(gn.sqrt());
        if settings.measure_curvature {
            let h = oracle.hessian(&theta)?;
            let eig = nalgebra::SymmetricEigen::new(h).eigenvalues;
            stats.max_curvature = stats.max_curvature.max(eig.amax());
        }
        if k + 1 == horizon {
            break;
        }
        oracle.stochastic_gradient_into(&theta, &mut rng, &mut grad)?;
        opt.step(&mut theta, &grad)?;
    }
    Ok(stats)
}

/// For each horizon T, runs T iterates of stochastic PNM from θ₀ with the
/// step min{1/(2L), C/√T}, records min_k ‖∇f(θ_k)‖² with the full gradient,
/// averages over seeds and fits the log–log slope.
pub fn empirical_rate(oracle: &dyn GradientOracle, theta0: &ParamVector, settings: &RateSettings) -> Result<RateReport> {
    if settings.horizons.len() < 2 || settings.seeds.is_empty() {
        return Err(Error::invalid("rate", "need at least two horizons and one seed"));
    }
    if !oracle.capabilities().has_full_gradient {
        return Err(Error::Unsupported("rate checks without full gradients"));
    }
    crate::error::check_dim(oracle.dim(), theta0.dim())?;
    let jobs: Vec<(u64, u64)> = settings
        .horizons
        .iter()
        .flat_map(|&t| settings.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let results: Vec<RunStats> = jobs
        .par_iter()
        .map(|&(t, s)| run_horizon(oracle, theta0, settings, t, s))
        .collect::<Result<_>>()?;
    let measured_g = results.iter().map(|r| r.max_grad_norm).fold(0.0, f64::max);
    let measured_l = settings
        .measure_curvature
        .then(|| results.iter().map(|r| r.max_curvature).fold(0.0, f64::max));
    let f0 = oracle.loss(theta0)?;
    let bound_inputs = ConvergenceBoundInputs {
        l: settings.l.max(measured_l.unwrap_or(0.0)),
        g: measured_g,
        sigma_sq: settings.sigma_sq,
        c: settings.c,
        f0,
        f_star: settings.f_star,
        beta: settings.beta1 * settings.beta1,
        beta0: settings.beta0,
    };
    let k = settings.seeds.len();
    let mut rows = Vec::new();
    for (i, &t) in settings.horizons.iter().enumerate() {
        let per_seed: Vec<f64> = results[i * k..(i + 1) * k].iter().map(|r| r.min_grad_norm_sq).collect();
        let (mean, std) = mean_std(&per_seed);
        let bound = theorem1_bound(&bound_inputs, t - 1)?;
        rows.push(RateRow {
            horizon: t,
            step: theorem1_step(settings.l, settings.c, t),
            mean_min_grad_norm_sq: mean,
            std_min_grad_norm_sq: std,
            per_seed,
            bound,
            within_bound: mean <= bound,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.horizon as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_min_grad_norm_sq.ln()).collect();
    Ok(RateReport {
        rows,
        slope: fit_slope(&xs, &ys)?,
        bound_inputs,
        measured_g,
        measured_l,
        step_rule_consistent: measured_l.is_none_or(|l| l <= settings.l * (1.0 + 1e-9)),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Ordinary least-squares slope of y on x.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    crate::error::check_dim(xs.len(), ys.len())?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("fit", "degenerate or non-finite data"));
    }
    Ok(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{AdditiveNoiseOracle, NoiseModel, QuadraticModel};

    fn unit_inputs() -> ConvergenceBoundInputs {
        ConvergenceBoundInputs {
            l: 1.0,
            g: 1.0,
            sigma_sq: 1.0,
            c: 1.0,
            f0: 1.0,
            f_star: 0.0,
            beta: 0.81,
            beta0: 1.0,
        }
    }

    #[test]
    fn worked_example() {
        let inputs = unit_inputs();
        // (2 + 0.0361) / 0.0361
        assert!((inputs.c1() - 56.401_662_049_861_5).abs() < 1e-10);
        let b = theorem1_bound(&inputs, 99).unwrap();
        assert!((b - 5.840_166_204_986_15).abs() < 1e-10, "{b}");
    }

    #[test]
    fn deterministic_limit_has_no_noise_term() {
        let inputs = ConvergenceBoundInputs {
            g: 0.0,
            sigma_sq: 0.0,
            beta: 0.0,
            beta0: 0.0,
            ..unit_inputs()
        };
        assert_eq!(inputs.c1(), 0.0);
        let t = 399;
        let expect = 2.0 / 400.0 * (2.0f64).max(20.0);
        assert_eq!(theorem1_bound(&inputs, t).unwrap(), expect);
    }

    #[test]
    fn bound_decreases_once_sqrt_term_dominates() {
        let inputs = unit_inputs();
        let mut prev = f64::INFINITY;
        for t in (3..2000).step_by(7) {
            let b = theorem1_bound(&inputs, t).unwrap();
            assert!(b <= prev);
            prev = b;
        }
        assert!(theorem1_bound(&ConvergenceBoundInputs { l: 0.0, ..inputs }, 1).is_err());
    }

    #[test]
    fn slope_and_stats() {
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.0]).unwrap() + 0.5).abs() < 1e-15);
        let (m, s) = mean_std(&[4.0, 5.0, 6.0]);
        assert_eq!(m, 5.0);
        assert!((s - 0.816_496_580_927_726).abs() < 1e-12);
    }

    #[test]
    fn noiseless_runs_stay_below_bound() {
        let mut rng = RngStream::new(2);
        let eig: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
        let model = QuadraticModel::with_spectrum(ParamVector::zeros(10).unwrap(), &eig, &mut rng).unwrap();
        let oracle = AdditiveNoiseOracle::new(model, NoiseModel::isotropic(0.0).unwrap()).unwrap();
        let theta0 = ParamVector::new(vec![1.0; 10]).unwrap();
        let settings = RateSettings {
            horizons: vec![10, 100, 1000],
            seeds: vec![1],
            beta0: 1.0,
            beta1: 0.9,
            l: 0.95,
            c: 1.0,
            f_star: 0.0,
            sigma_sq: 0.0,
            measure_curvature: true,
        };
        let report = empirical_rate(&oracle, &theta0, &settings).unwrap();
        assert!(report.rows.iter().all(|r| r.within_bound), "{report:?}");
        assert!(report.step_rule_consistent);
    }
}
