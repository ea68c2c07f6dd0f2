//! Random quadratic instances with exactly controlled curvature.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::numeric::{NoiseModel, RealVector, RngStream};

use super::linalg::{gaussian_matrix, mat_t_vec, mat_vec, random_spd, spectral_norm, symmetric_with_spectrum};
use super::{check_len, MinimaxProblem, StochasticObjective};

/// `f(x) = (x - c)^T Q (x - c) / 2`
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    q: DMatrix<f64>,
    center: DVector<f64>,
    noise: NoiseModel,
}

impl QuadraticObjective {
    pub fn new(q: DMatrix<f64>, center: RealVector) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != center.dim() {
            return Err(invalid("quadratic objective: Q must be square and match the center"));
        }
        Ok(Self {
            q,
            center: center.to_dvector(),
            noise: NoiseModel::None,
        })
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn minimizer(&self) -> RealVector {
        RealVector::from_dvector(&self.center).expect("finite center")
    }
}

/// Random SPD `Q` with spectrum in `[mu, l]` and a standard-normal center.
pub fn make_quadratic_objective(dim: usize, mu: f64, l: f64, seed: u64) -> Result<QuadraticObjective> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let mut rng = RngStream::new(seed, "problem/quadratic-objective");
    let q = random_spd(dim, mu, l, &mut rng)?;
    let center = RealVector::new(rng.gaussian_vec(dim))?;
    QuadraticObjective::new(q, center)
}

impl StochasticObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn grad(&self, x: &RealVector) -> Result<RealVector> {
        check_len(x, self.dim())?;
        RealVector::from_dvector(&(&self.q * (x.to_dvector() - &self.center)))
    }

    fn noise(&self) -> NoiseModel {
        self.noise
    }

    fn value(&self, x: &RealVector) -> Result<f64> {
        check_len(x, self.dim())?;
        let d = x.to_dvector() - &self.center;
        Ok(0.5 * d.dot(&(&self.q * &d)))
    }
}

/// `f(x, y) = x^T A x / 2 + x^T B y - y^T C y / 2` with `C` SPD.
#[derive(Debug, Clone)]
pub struct QuadraticMinimax {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    c_inv: DMatrix<f64>,
    phi_hessian: DMatrix<f64>,
    mu: f64,
    smoothness: f64,
    noise_x: NoiseModel,
    noise_y: NoiseModel,
}

impl QuadraticMinimax {
    pub fn from_matrices(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let (dx, dy) = (a.nrows(), c.nrows());
        if a.ncols() != dx || c.ncols() != dy || b.nrows() != dx || b.ncols() != dy {
            return Err(invalid("quadratic minimax: inconsistent block shapes"));
        }
        let eig = super::linalg::symmetric_eigenvalues(&c);
        let mu = eig[0];
        if !(mu > 0.0) {
            return Err(invalid("quadratic minimax: C must be positive definite"));
        }
        let c_inv = c.clone().cholesky().ok_or(Error::SingularHessian)?.inverse();
        let phi_hessian = &a + &b * &c_inv * b.transpose();
        let mut full = DMatrix::zeros(dx + dy, dx + dy);
        full.view_mut((0, 0), (dx, dx)).copy_from(&a);
        full.view_mut((0, dx), (dx, dy)).copy_from(&b);
        full.view_mut((dx, 0), (dy, dx)).copy_from(&b.transpose());
        full.view_mut((dx, dx), (dy, dy)).copy_from(&(-&c));
        let smoothness = spectral_norm(&full);
        Ok(Self {
            a,
            b,
            c,
            c_inv,
            phi_hessian,
            mu,
            smoothness,
            noise_x: NoiseModel::None,
            noise_y: NoiseModel::None,
        })
    }

    pub fn with_noise(mut self, noise_x: NoiseModel, noise_y: NoiseModel) -> Self {
        self.noise_x = noise_x;
        self.noise_y = noise_y;
        self
    }

    /// Hessian of `Phi`: `A + B C^{-1} B^T`.
    pub fn phi_hessian(&self) -> &DMatrix<f64> {
        &self.phi_hessian
    }
}

/// Random instance: `C` SPD with spectrum in `[mu, l]` (endpoints attained),
/// `A` PSD with spectrum uniform in `[0, l]`, `B` Gaussian scaled by
/// `1/sqrt(dim_y)`. Reproducible from `seed`.
pub fn make_quadratic_minimax(dim_x: usize, dim_y: usize, mu: f64, l: f64, seed: u64) -> Result<QuadraticMinimax> {
    if dim_x == 0 || dim_y == 0 {
        return Err(invalid("dimensions must be positive"));
    }
    let mut rng = RngStream::new(seed, "problem/quadratic-minimax");
    let c = random_spd(dim_y, mu, l, &mut rng)?;
    let a_eigs: Vec<f64> = (0..dim_x).map(|_| rng.uniform(0.0, l)).collect();
    let a = symmetric_with_spectrum(&a_eigs, &mut rng);
    let b = gaussian_matrix(dim_x, dim_y, 1.0 / (dim_y as f64).sqrt(), &mut rng);
    QuadraticMinimax::from_matrices(a, b, c)
}

impl MinimaxProblem for QuadraticMinimax {
    fn dim_x(&self) -> usize {
        self.a.nrows()
    }

    fn dim_y(&self) -> usize {
        self.c.nrows()
    }

    fn grad_x(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        check_len(x, self.dim_x())?;
        check_len(y, self.dim_y())?;
        mat_vec(&self.a, x)?.add(&mat_vec(&self.b, y)?)
    }

    fn grad_y(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        check_len(x, self.dim_x())?;
        check_len(y, self.dim_y())?;
        mat_t_vec(&self.b, x)?.sub(&mat_vec(&self.c, y)?)
    }

    fn noise_x(&self) -> NoiseModel {
        self.noise_x
    }

    fn noise_y(&self) -> NoiseModel {
        self.noise_y
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn value(&self, x: &RealVector, y: &RealVector) -> Result<f64> {
        check_len(x, self.dim_x())?;
        check_len(y, self.dim_y())?;
        let (xv, yv) = (x.to_dvector(), y.to_dvector());
        Ok(0.5 * xv.dot(&(&self.a * &xv)) + xv.dot(&(&self.b * &yv)) - 0.5 * yv.dot(&(&self.c * &yv)))
    }

    fn y_star(&self, x: &RealVector) -> Result<RealVector> {
        check_len(x, self.dim_x())?;
        RealVector::from_dvector(&(&self.c_inv * self.b.transpose() * x.to_dvector()))
    }

    fn grad_phi(&self, x: &RealVector) -> Result<RealVector> {
        check_len(x, self.dim_x())?;
        mat_vec(&self.phi_hessian, x)
    }
}
