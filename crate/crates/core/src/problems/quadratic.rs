use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::oracle::{Capabilities, GradientOracle};
use crate::rng::RngStream;
use crate::vector::ParamVector;

/// f(θ) = f₀ + ½ (θ − θ*)ᵀ H (θ − θ*) with H symmetric positive definite.
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    minimum: ParamVector,
    hessian: DMatrix<f64>,
    offset: f64,
    eigenvalues: Vec<f64>,
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("matrix", format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > tol * scale {
        return Err(Error::Asymmetric(asym));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub(crate) fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

impl QuadraticModel {
    pub fn new(minimum: ParamVector, hessian: DMatrix<f64>, offset: f64) -> Result<Self> {
        check_dim(minimum.dim(), hessian.nrows())?;
        check_symmetric(&hessian, 1e-12)?;
        let eigenvalues = sorted_eigenvalues(&hessian);
        if eigenvalues[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest Hessian eigenvalue {}",
                eigenvalues[0]
            )));
        }
        Ok(Self {
            minimum,
            hessian,
            offset,
            eigenvalues,
        })
    }

    /// Hessian `curvature · I` centred at `minimum`.
    pub fn isotropic(minimum: ParamVector, curvature: f64) -> Result<Self> {
        let n = minimum.dim();
        Self::new(minimum, DMatrix::identity(n, n) * curvature, 0.0)
    }

    /// H = Q diag(eigenvalues) Qᵀ with Q a random orthogonal matrix.
    pub fn with_spectrum(minimum: ParamVector, eigenvalues: &[f64], rng: &mut RngStream) -> Result<Self> {
        let n = minimum.dim();
        check_dim(n, eigenvalues.len())?;
        let q = random_orthogonal(n, rng);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
        let mut h = &q * d * q.transpose();
        symmetrize(&mut h);
        Self::new(minimum, h, 0.0)
    }

    pub fn minimum(&self) -> &ParamVector {
        &self.minimum
    }

    pub fn hessian_matrix(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("dim >= 1")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn eval(&self, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        check_dim(self.minimum.dim(), theta.dim())?;
        let mut grad = vec![0.0; theta.dim()];
        let loss = self.eval_into(theta, &mut grad);
        Ok((loss, ParamVector::new(grad)?))
    }

    fn eval_into(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let n = theta.len();
        let mut loss = 0.0;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.hessian[(i, j)] * (theta[j] - self.minimum[j]);
            }
            grad[i] = acc;
            loss += 0.5 * (theta[i] - self.minimum[i]) * acc;
        }
        self.offset + loss
    }
}

/// Loss and gradient of a quadratic model.
pub fn quadratic_eval(model: &QuadraticModel, theta: &ParamVector) -> Result<(f64, ParamVector)> {
    model.eval(theta)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub(crate) fn random_orthogonal(n: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix so Q is Haar-distributed.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

impl GradientOracle for QuadraticModel {
    fn dim(&self) -> usize {
        self.minimum.dim()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_full_gradient: true,
            has_hessian: true,
            dataset_size: None,
            batch_size: None,
        }
    }

    fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), grad.len())?;
        Ok(self.eval_into(theta, grad))
    }

    fn stochastic_gradient_into(&self, theta: &[f64], _rng: &mut RngStream, grad: &mut [f64]) -> Result<Option<f64>> {
        self.full_gradient_into(theta, grad).map(Some)
    }

    fn hessian(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.hessian.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::fd_gradient_check;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn minimum_has_zero_gradient() {
        let mut rng = RngStream::new(1);
        let m = QuadraticModel::with_spectrum(pv(&[1.0, -2.0, 0.5]), &[0.5, 1.0, 3.0], &mut rng).unwrap();
        let m = QuadraticModel::new(m.minimum().clone(), m.hessian_matrix().clone(), 4.0).unwrap();
        let (loss, grad) = m.eval(&pv(&[1.0, -2.0, 0.5])).unwrap();
        assert_eq!(loss, 4.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn identity_hessian_example() {
        let m = QuadraticModel::isotropic(pv(&[0.0, 0.0]), 1.0).unwrap();
        let (loss, grad) = m.eval(&pv(&[3.0, 4.0])).unwrap();
        assert_eq!(loss, 12.5);
        assert_eq!(grad.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngStream::new(5);
        let m = QuadraticModel::with_spectrum(pv(&[0.3; 6]), &[0.1, 0.5, 1.0, 2.0, 4.0, 8.0], &mut rng).unwrap();
        for _ in 0..20 {
            let theta = crate::rng::sample_standard_gaussian(&mut rng, 6).unwrap();
            assert!(fd_gradient_check(&m, &theta, 1e-5).unwrap() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_hessians() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(QuadraticModel::new(pv(&[0.0, 0.0]), asym, 0.0), Err(Error::Asymmetric(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            QuadraticModel::new(pv(&[0.0, 0.0]), indefinite, 0.0),
            Err(Error::NotPositiveDefinite(_))
        ));
        assert!(QuadraticModel::isotropic(pv(&[0.0]), 1.0).unwrap().eval(&pv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn spectrum_is_preserved() {
        let mut rng = RngStream::new(9);
        let m = QuadraticModel::with_spectrum(pv(&[0.0; 4]), &[0.6, 0.7, 0.9, 1.0], &mut rng).unwrap();
        for (a, b) in m.eigenvalues().iter().zip([0.6, 0.7, 0.9, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
