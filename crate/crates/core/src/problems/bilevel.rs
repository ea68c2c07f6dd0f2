//! Quadratic bilevel instances.
//!
//! ```text
//! g(x, y) = y^T H y / 2 + y^T K x
//! f(x, y) = x^T A x / 2 + a^T x + x^T C y + |y - b|^2 / 2
//! ```
//!
//! so `y*(x) = -H^{-1} K x` and
//! `grad Phi(x) = grad_x f - K^T H^{-1} grad_y f` evaluated at `y*(x)`.
//!
//! Stochastic second-order oracles add a rank-one symmetric perturbation
//! `r s w w^T` (Rademacher `s`, unit `w`). The spectrum of `H` is placed in
//! `[mu_g + r, l_g1 - r]`, so every sampled Hessian stays inside
//! `[mu_g, l_g1]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::numeric::{sample_noise, NoiseModel, RealVector, RngStream};

use super::linalg::{gaussian_matrix, mat_t_vec, mat_vec, pinned_spectrum, random_spd, spectral_norm, symmetric_eigenvalues, symmetric_with_spectrum};
use super::{check_len, BilevelProblem};

/// Noise attached to each bilevel oracle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BilevelNoise {
    /// Added to `grad_x F`.
    pub upper_x: NoiseModel,
    /// Added to `grad_y F`.
    pub upper_y: NoiseModel,
    /// Added to `grad_y G`.
    pub lower: NoiseModel,
    /// Spectral norm of the Hessian perturbation (clipped to fit the box).
    pub hessian: f64,
    /// Spectral norm of the cross-Jacobian perturbation.
    pub jacobian: f64,
}

impl BilevelNoise {
    pub fn none() -> Self {
        Self::default()
    }

    /// Same additive model on every gradient oracle, no second-order noise.
    pub fn gradients(model: NoiseModel) -> Self {
        Self {
            upper_x: model,
            upper_y: model,
            lower: model,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticBilevel {
    a: DMatrix<f64>,
    a_lin: DVector<f64>,
    coupling: DMatrix<f64>,
    target: DVector<f64>,
    h: DMatrix<f64>,
    h_inv: DMatrix<f64>,
    k: DMatrix<f64>,
    mu_g: f64,
    l_g1: f64,
    noise: BilevelNoise,
}

impl QuadraticBilevel {
    /// Builds an instance from explicit blocks. `H` must be SPD with
    /// spectrum inside `[mu_g, l_g1]`, and the Hessian noise level must
    /// keep it there.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        a: DMatrix<f64>,
        a_lin: DVector<f64>,
        coupling: DMatrix<f64>,
        target: DVector<f64>,
        h: DMatrix<f64>,
        k: DMatrix<f64>,
        mu_g: f64,
        l_g1: f64,
        noise: BilevelNoise,
    ) -> Result<Self> {
        let (dx, dy) = (a.nrows(), h.nrows());
        let shapes_ok = a.ncols() == dx
            && a_lin.len() == dx
            && coupling.shape() == (dx, dy)
            && target.len() == dy
            && h.ncols() == dy
            && k.shape() == (dy, dx);
        if !shapes_ok || dx == 0 || dy == 0 {
            return Err(invalid("quadratic bilevel: inconsistent block shapes"));
        }
        if !(mu_g > 0.0 && l_g1 >= mu_g) {
            return Err(invalid(format!("need 0 < mu_g <= l_g1, got {mu_g}, {l_g1}")));
        }
        if !(noise.hessian >= 0.0 && noise.jacobian >= 0.0) {
            return Err(invalid("second-order noise levels must be >= 0"));
        }
        let eig = symmetric_eigenvalues(&h);
        let tol = 1e-10 * l_g1;
        let (lo, hi) = (eig[0], eig[dy - 1]);
        if lo - noise.hessian < mu_g - tol || hi + noise.hessian > l_g1 + tol {
            return Err(invalid(format!(
                "Hessian spectrum [{lo}, {hi}] with perturbation {} leaves [{mu_g}, {l_g1}]",
                noise.hessian
            )));
        }
        let h_inv = h.clone().cholesky().ok_or(Error::SingularHessian)?.inverse();
        Ok(Self {
            a,
            a_lin,
            coupling,
            target,
            h,
            h_inv,
            k,
            mu_g,
            l_g1,
            noise,
        })
    }

    /// The 1-D instance `g = y^2/2 - x y`, `f = (y - 1)^2 / 2`:
    /// `y* = x`, `Phi(x) = (x - 1)^2 / 2`.
    pub fn onedim(mu_g: f64, l_g1: f64) -> Result<Self> {
        Self::from_parts(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0),
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, -1.0),
            mu_g,
            l_g1,
            BilevelNoise::none(),
        )
    }

    pub fn noise(&self) -> &BilevelNoise {
        &self.noise
    }

    fn check(&self, x: &RealVector, y: &RealVector) -> Result<()> {
        check_len(x, self.dim_x())?;
        check_len(y, self.dim_y())
    }
}

/// Noise-free random instance.
pub fn make_quadratic_bilevel(dim_x: usize, dim_y: usize, mu_g: f64, l_g1: f64, seed: u64) -> Result<QuadraticBilevel> {
    make_quadratic_bilevel_with_noise(dim_x, dim_y, mu_g, l_g1, seed, BilevelNoise::none())
}

/// Random instance reproducible from `seed`. The Hessian perturbation is
/// clipped to `(l_g1 - mu_g) / 4`; the cross Jacobian has spectral norm
/// `l_g1 / 2`.
pub fn make_quadratic_bilevel_with_noise(
    dim_x: usize,
    dim_y: usize,
    mu_g: f64,
    l_g1: f64,
    seed: u64,
    mut noise: BilevelNoise,
) -> Result<QuadraticBilevel> {
    if dim_x == 0 || dim_y == 0 {
        return Err(invalid("dimensions must be positive"));
    }
    if !(mu_g > 0.0 && l_g1 >= mu_g && l_g1.is_finite()) {
        return Err(invalid(format!("need 0 < mu_g <= l_g1, got {mu_g}, {l_g1}")));
    }
    noise.hessian = noise.hessian.clamp(0.0, 0.25 * (l_g1 - mu_g));
    let mut rng = RngStream::new(seed, "problem/quadratic-bilevel");
    let eigs = pinned_spectrum(dim_y, mu_g + noise.hessian, l_g1 - noise.hessian, &mut rng);
    let h = symmetric_with_spectrum(&eigs, &mut rng);
    let raw = gaussian_matrix(dim_y, dim_x, 1.0, &mut rng);
    // keep |hess_xy g| <= l_g1
    let k = &raw * (0.5 * l_g1 / spectral_norm(&raw).max(f64::MIN_POSITIVE));
    let a = random_spd(dim_x, 0.5, 1.0, &mut rng)?;
    let a_lin = DVector::from_vec(rng.gaussian_vec(dim_x));
    let coupling = gaussian_matrix(dim_x, dim_y, 0.1 / (dim_y as f64).sqrt(), &mut rng);
    let target = DVector::from_vec(rng.gaussian_vec(dim_y));
    QuadraticBilevel::from_parts(a, a_lin, coupling, target, h, k, mu_g, l_g1, noise)
}

fn rank_one_perturbation(v: &RealVector, out_dim: usize, scale: f64, rng: &mut RngStream, symmetric: bool) -> Result<RealVector> {
    // scale * s * u (w . v), with u = w when symmetric
    let w = RealVector::new(rng.unit_vector(v.dim()))?;
    let u = if symmetric {
        w.clone()
    } else {
        RealVector::new(rng.unit_vector(out_dim))?
    };
    let s = rng.rademacher();
    u.scale(scale * s * w.dot(v)?)
}

impl BilevelProblem for QuadraticBilevel {
    fn dim_x(&self) -> usize {
        self.a.nrows()
    }

    fn dim_y(&self) -> usize {
        self.h.nrows()
    }

    fn mu_g(&self) -> f64 {
        self.mu_g
    }

    fn l_g1(&self) -> f64 {
        self.l_g1
    }

    fn grad_x_f(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        self.check(x, y)?;
        let g = &self.a * x.to_dvector() + &self.a_lin + &self.coupling * y.to_dvector();
        RealVector::from_dvector(&g)
    }

    fn grad_y_f(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        self.check(x, y)?;
        let g = self.coupling.transpose() * x.to_dvector() + y.to_dvector() - &self.target;
        RealVector::from_dvector(&g)
    }

    fn grad_y_g(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        self.check(x, y)?;
        RealVector::from_dvector(&(&self.h * y.to_dvector() + &self.k * x.to_dvector()))
    }

    fn hvp_yy_g(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Result<RealVector> {
        self.check(x, y)?;
        mat_vec(&self.h, v)
    }

    fn jvp_xy_g(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Result<RealVector> {
        self.check(x, y)?;
        mat_t_vec(&self.k, v)
    }

    fn hessian_yy_g(&self, x: &RealVector, y: &RealVector) -> Result<DMatrix<f64>> {
        self.check(x, y)?;
        Ok(self.h.clone())
    }

    fn jacobian_xy_g(&self, x: &RealVector, y: &RealVector) -> Result<DMatrix<f64>> {
        self.check(x, y)?;
        Ok(self.k.transpose())
    }

    fn sample_upper_grads(
        &self,
        x: &RealVector,
        y: &RealVector,
        rng: &mut RngStream,
    ) -> Result<(RealVector, RealVector)> {
        let gx = self.grad_x_f(x, y)?;
        let gy = self.grad_y_f(x, y)?;
        let nx = sample_noise(&self.noise.upper_x, gx.dim(), rng);
        let ny = sample_noise(&self.noise.upper_y, gy.dim(), rng);
        Ok((gx.add(&nx)?, gy.add(&ny)?))
    }

    fn sample_lower_grad(&self, x: &RealVector, y: &RealVector, rng: &mut RngStream) -> Result<RealVector> {
        let g = self.grad_y_g(x, y)?;
        g.add(&sample_noise(&self.noise.lower, g.dim(), rng))
    }

    fn sample_hvp_yy_g(&self, x: &RealVector, y: &RealVector, v: &RealVector, rng: &mut RngStream) -> Result<RealVector> {
        let hv = self.hvp_yy_g(x, y, v)?;
        if self.noise.hessian == 0.0 {
            return Ok(hv);
        }
        hv.add(&rank_one_perturbation(v, v.dim(), self.noise.hessian, rng, true)?)
    }

    fn sample_jvp_xy_g(&self, x: &RealVector, y: &RealVector, v: &RealVector, rng: &mut RngStream) -> Result<RealVector> {
        let jv = self.jvp_xy_g(x, y, v)?;
        if self.noise.jacobian == 0.0 {
            return Ok(jv);
        }
        jv.add(&rank_one_perturbation(v, self.dim_x(), self.noise.jacobian, rng, false)?)
    }

    fn upper_value(&self, x: &RealVector, y: &RealVector) -> Result<f64> {
        self.check(x, y)?;
        let (xv, yv) = (x.to_dvector(), y.to_dvector());
        let r = &yv - &self.target;
        Ok(0.5 * xv.dot(&(&self.a * &xv)) + self.a_lin.dot(&xv) + xv.dot(&(&self.coupling * &yv)) + 0.5 * r.dot(&r))
    }

    fn y_star(&self, x: &RealVector) -> Result<RealVector> {
        check_len(x, self.dim_x())?;
        RealVector::from_dvector(&(-(&self.h_inv * (&self.k * x.to_dvector()))))
    }

    fn grad_phi(&self, x: &RealVector) -> Result<RealVector> {
        let y = self.y_star(x)?;
        let fy = self.grad_y_f(x, &y)?.to_dvector();
        let corr = self.k.transpose() * (&self.h_inv * fy);
        RealVector::from_dvector(&(self.grad_x_f(x, &y)?.to_dvector() - corr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::finite_diff_grad_phi;

    #[test]
    fn onedim_hand_algebra() {
        let p = QuadraticBilevel::onedim(1.0, 1.0).unwrap();
        let x0 = RealVector::scalar(0.0).unwrap();
        assert_eq!(p.y_star(&x0).unwrap().get(0), 0.0);
        assert_eq!(p.grad_phi(&x0).unwrap().get(0), -1.0);
        let x = RealVector::scalar(2.5).unwrap();
        assert_eq!(p.y_star(&x).unwrap().get(0), 2.5);
        assert!((p.phi(&x).unwrap() - 0.5 * 1.5 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn decoupled_lower_level() {
        let mut p = make_quadratic_bilevel(3, 2, 1.0, 3.0, 4).unwrap();
        p.k = DMatrix::zeros(2, 3);
        let x = RealVector::new(vec![0.3, -1.0, 2.0]).unwrap();
        let y = p.y_star(&x).unwrap();
        assert_eq!(y, RealVector::zeros(2));
        let expect = p.grad_x_f(&x, &RealVector::zeros(2)).unwrap();
        assert!(p.grad_phi(&x).unwrap().sub(&expect).unwrap().norm() < 1e-14);
    }

    #[test]
    fn random_instance_matches_finite_differences() {
        let p = make_quadratic_bilevel(4, 3, 0.5, 2.0, 21).unwrap();
        let mut rng = RngStream::new(3, "pts");
        for _ in 0..5 {
            let x = RealVector::new(rng.gaussian_vec(4)).unwrap();
            let fd = finite_diff_grad_phi(|z| p.phi(z), &x, 1e-5).unwrap();
            assert!(fd.sub(&p.grad_phi(&x).unwrap()).unwrap().norm() < 1e-6);
            let y = p.y_star(&x).unwrap();
            assert!(p.grad_y_g(&x, &y).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn sampled_hessians_stay_in_the_box() {
        let noise = BilevelNoise {
            hessian: 0.3,
            ..BilevelNoise::none()
        };
        let p = make_quadratic_bilevel_with_noise(2, 4, 1.0, 3.0, 5, noise).unwrap();
        let x = RealVector::zeros(2);
        let y = RealVector::zeros(4);
        for draw in 0..200u64 {
            // one Hessian sample, probed column by column with identical draws
            let base = RngStream::new(draw, "hess");
            let cols: Vec<RealVector> = (0..4)
                .map(|j| {
                    let mut e = vec![0.0; 4];
                    e[j] = 1.0;
                    let mut r = base.clone();
                    p.sample_hvp_yy_g(&x, &y, &RealVector::new(e).unwrap(), &mut r).unwrap()
                })
                .collect();
            let m = DMatrix::from_fn(4, 4, |i, j| cols[j].get(i));
            let eig = symmetric_eigenvalues(&m);
            assert!(eig[0] >= 1.0 - 1e-10 && eig[3] <= 3.0 + 1e-10, "{eig:?}");
        }
    }

    #[test]
    fn hessian_noise_is_clipped() {
        let noise = BilevelNoise {
            hessian: 10.0,
            ..BilevelNoise::none()
        };
        let p = make_quadratic_bilevel_with_noise(2, 2, 1.0, 2.0, 5, noise).unwrap();
        assert_eq!(p.noise().hessian, 0.25);
    }

    #[test]
    fn spectrum_outside_box_rejected() {
        assert!(make_quadratic_bilevel(2, 2, 2.0, 1.0, 0).is_err());
        let bad = QuadraticBilevel::from_parts(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::identity(1, 1) * 5.0,
            DMatrix::identity(1, 1),
            1.0,
            2.0,
            BilevelNoise::none(),
        );
        assert!(bad.is_err());
    }
}
