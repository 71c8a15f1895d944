//! Gaussian KL divergences and the McAllester PAC-Bayes bound for the
//! covariance-rescaled SGD posterior Q(γ) = N(θ*, γ (η/2B) I).
//!
//! The prior is P = N(0, λ I). With this reading the γ-derivative of
//! KL(Q(γ) ‖ P) is (n/2)(η/(2Bλ) − 1/γ), so η/(2Bλ) < 1 is the condition
//! under which γ > 1 lowers the bound.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::ParamVector;

/// N(μ, Σ) with Σ symmetric positive definite.
#[derive(Clone, Debug)]
pub struct GaussianDist {
    mean: ParamVector,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianDist {
    pub fn new(mean: ParamVector, covariance: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.dim(), covariance.nrows())?;
        let asym = crate::problems::max_asymmetry(&covariance);
        if covariance.nrows() != covariance.ncols() || asym > 1e-12 * covariance.amax().max(1.0) {
            return Err(Error::Asymmetric(asym));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("covariance Cholesky failed".into()))?;
        Ok(Self { mean, covariance, chol })
    }

    /// N(μ, s I).
    pub fn isotropic(mean: ParamVector, variance: f64) -> Result<Self> {
        let n = mean.dim();
        Self::new(mean, DMatrix::identity(n, n) * variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn mean(&self) -> &ParamVector {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// KL(Q ‖ P) = ½[ln det Σ_P/det Σ_Q + tr(Σ_P⁻¹Σ_Q) + (μ_Q−μ_P)ᵀΣ_P⁻¹(μ_Q−μ_P) − n].
pub fn gaussian_kl(q: &GaussianDist, p: &GaussianDist) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    if q.mean == p.mean && q.covariance == p.covariance {
        return Ok(0.0);
    }
    let n = q.dim() as f64;
    let trace = p.chol.solve(&q.covariance).trace();
    let diff = DVector::from_iterator(q.dim(), q.mean.iter().zip(p.mean.iter()).map(|(a, b)| a - b));
    let maha = diff.dot(&p.chol.solve(&diff));
    // Rounding can leave a tiny negative value.
    Ok((0.5 * (p.log_det() - q.log_det() + trace + maha - n)).max(0.0))
}

/// The bundle (η, B, N, λ, n, Δ, ‖θ*‖²) behind the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacBayesSetting {
    pub lr: f64,
    pub batch_size: usize,
    pub dataset_size: usize,
    pub lambda: f64,
    pub dim: usize,
    pub delta: f64,
    /// ‖θ*‖², the only dependence on the posterior mean.
    #[serde(default)]
    pub theta_star_norm_sq: f64,
}

impl PacBayesSetting {
    pub fn with_theta_star(mut self, theta: &ParamVector) -> Self {
        self.theta_star_norm_sq = theta.norm_sq();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", format!("{} must be finite and > 0", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        if self.dataset_size < 2 {
            return Err(Error::invalid("dataset_size", "must be >= 2"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("{} must be finite and > 0", self.lambda)));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", format!("{} must lie in (0, 1)", self.delta)));
        }
        if !(self.theta_star_norm_sq >= 0.0 && self.theta_star_norm_sq.is_finite()) {
            return Err(Error::invalid("theta_star_norm_sq", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// η/(2B), the per-coordinate SGD posterior variance.
    pub fn sgd_variance(&self) -> f64 {
        self.lr / (2.0 * self.batch_size as f64)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("{gamma} must be finite and > 0")));
    }
    Ok(())
}

/// KL(Q(γ) ‖ P) = ½[n ln λ − n ln γ − n ln(η/2B)] + ½ γ n (η/2B)/λ
///               + ‖θ*‖²/(2λ) − n/2.
///
/// The log-determinant is n ln(η/2B), kept in log space.
pub fn kl_q_gamma(gamma: f64, s: &PacBayesSetting) -> Result<f64> {
    s.validate()?;
    check_gamma(gamma)?;
    let n = s.dim as f64;
    let v = s.sgd_variance();
    Ok(0.5 * n * (s.lambda.ln() - gamma.ln() - v.ln()) + 0.5 * gamma * n * v / s.lambda
        + s.theta_star_norm_sq / (2.0 * s.lambda)
        - 0.5 * n)
}

/// d KL(Q(γ) ‖ P) / dγ = (n/2)(η/(2Bλ) − 1/γ).
pub fn kl_q_gamma_grad(gamma: f64, s: &PacBayesSetting) -> Result<f64> {
    s.validate()?;
    check_gamma(gamma)?;
    Ok(0.5 * s.dim as f64 * (critical_ratio(s.lr, s.batch_size, s.lambda)? - 1.0 / gamma))
}

/// 4 √((KL + ln(2N/Δ)) / N).
pub fn pac_bound(kl: f64, dataset_size: usize, delta: f64) -> Result<f64> {
    if !(kl >= 0.0 && kl.is_finite()) {
        return Err(Error::invalid("kl", format!("{kl} must be finite and >= 0")));
    }
    if dataset_size < 2 {
        return Err(Error::invalid("dataset_size", "must be >= 2"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("{delta} must lie in (0, 1)")));
    }
    let n = dataset_size as f64;
    Ok(4.0 * ((kl + (2.0 * n / delta).ln()) / n).sqrt())
}

/// η/(2Bλ).
pub fn critical_ratio(lr: f64, batch_size: usize, lambda: f64) -> Result<f64> {
    if batch_size == 0 || !(lambda > 0.0) {
        return Err(Error::invalid("critical_ratio", "needs B >= 1 and λ > 0"));
    }
    if !(lr > 0.0) {
        return Err(Error::invalid("lr", "must be > 0"));
    }
    Ok(lr / (2.0 * batch_size as f64 * lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalGamma {
    pub gamma: f64,
    /// False when η/(2Bλ) ≥ 1 and γ = 1 is returned.
    pub improves: bool,
}

/// γ = 2Bλ/η, the zero of the KL derivative, or 1 when that is not above 1.
pub fn optimal_gamma(s: &PacBayesSetting) -> Result<OptimalGamma> {
    s.validate()?;
    let ratio = critical_ratio(s.lr, s.batch_size, s.lambda)?;
    Ok(if ratio < 1.0 {
        OptimalGamma {
            gamma: 1.0 / ratio,
            improves: true,
        }
    } else {
        OptimalGamma {
            gamma: 1.0,
            improves: false,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub gamma: f64,
    pub kl: f64,
    pub kl_grad: f64,
    pub bound: f64,
}

pub fn bound_table(s: &PacBayesSetting, gammas: &[f64]) -> Result<Vec<BoundRow>> {
    gammas
        .iter()
        .map(|&gamma| {
            let kl = kl_q_gamma(gamma, s)?;
            Ok(BoundRow {
                gamma,
                kl,
                kl_grad: kl_q_gamma_grad(gamma, s)?,
                bound: pac_bound(kl, s.dataset_size, s.delta)?,
            })
        })
        .collect()
}

/// `points` values evenly spaced over (lo, hi], excluding lo.
pub fn gamma_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|i| lo + (hi - lo) * i as f64 / points as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_setting() -> PacBayesSetting {
        PacBayesSetting {
            lr: 0.001,
            batch_size: 128,
            dataset_size: 50_000,
            lambda: 1e-4,
            dim: 2,
            delta: 0.05,
            theta_star_norm_sq: 0.0,
        }
    }

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        let p = GaussianDist::isotropic(pv(&[0.0, 1.0]), 0.7).unwrap();
        assert_eq!(gaussian_kl(&p, &p).unwrap(), 0.0);
        let q = GaussianDist::isotropic(pv(&[1.0]), 1.0).unwrap();
        let p = GaussianDist::isotropic(pv(&[0.0]), 1.0).unwrap();
        assert!((gaussian_kl(&q, &p).unwrap() - 0.5).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianDist::new(pv(&[0.0, 0.0]), bad).is_err());
    }

    #[test]
    fn critical_ratio_and_optimal_gamma() {
        assert_eq!(critical_ratio(0.001, 128, 1e-4).unwrap(), 0.0390625);
        assert_eq!(critical_ratio(2.0 * 128.0 * 1e-4, 128, 1e-4).unwrap(), 1.0);
        assert_eq!(
            critical_ratio(0.001, 256, 1e-4).unwrap(),
            critical_ratio(0.001, 128, 1e-4).unwrap() / 2.0
        );
        assert!(critical_ratio(0.001, 0, 1e-4).is_err());
        let g = optimal_gamma(&reference_setting()).unwrap();
        assert!((g.gamma - 25.6).abs() < 1e-12 && g.improves);
        let edge = PacBayesSetting { lr: 2.0 * 128.0 * 1e-4, ..reference_setting() };
        assert_eq!(optimal_gamma(&edge).unwrap(), OptimalGamma { gamma: 1.0, improves: false });
    }

    #[test]
    fn gradient_example() {
        let g = kl_q_gamma_grad(1.0, &reference_setting()).unwrap();
        assert_eq!(g, -0.9609375);
        assert_eq!(kl_q_gamma_grad(25.6, &reference_setting()).unwrap().abs() < 1e-15, true);
    }

    #[test]
    fn kl_vanishes_when_posterior_equals_prior() {
        let s = reference_setting();
        let gamma = s.lambda / s.sgd_variance();
        assert!(kl_q_gamma(gamma, &s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pac_bound_examples() {
        // 4 √(ln(2·2/Δ)/2) as Δ → 1.
        let b = pac_bound(0.0, 2, 1.0 - 1e-12).unwrap();
        assert!((b - 3.330_218_444_630_790_8).abs() < 1e-10, "{b}");
        assert!(pac_bound(1.0, 100, 0.05).unwrap() < pac_bound(2.0, 100, 0.05).unwrap());
        let large: Vec<f64> = [1e3, 1e6, 1e9].iter().map(|&n| pac_bound(5.0, n as usize, 0.05).unwrap()).collect();
        assert!(large[0] > large[1] && large[1] > large[2] && large[2] < 1e-3);
        assert!(pac_bound(-1.0, 10, 0.5).is_err());
        assert!(pac_bound(0.0, 1, 0.5).is_err());
        assert!(pac_bound(0.0, 10, 1.0).is_err());
    }

    #[test]
    fn optimum_is_grid_minimum() {
        let s = PacBayesSetting { theta_star_norm_sq: 3.0, dim: 100, ..reference_setting() };
        let best = optimal_gamma(&s).unwrap().gamma;
        let kmin = kl_q_gamma(best, &s).unwrap();
        for g in gamma_grid(1.0, 2.0 * best, 500) {
            assert!(kmin <= kl_q_gamma(g, &s).unwrap() + 1e-12);
        }
    }
}
