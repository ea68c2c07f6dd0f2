//! Test problems: stochastic oracles plus analytic ground truth.
//!
//! Every built-in problem produces stochastic gradients as
//! `exact gradient + sample_noise(..)`, so oracles are unbiased by
//! construction. Problems are immutable; callers own the randomness.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::numeric::{sample_noise, NoiseModel, RealVector, RngStream};

mod auc;
mod bilevel;
pub mod linalg;
mod onedim;
mod quadratic;

pub use auc::{make_auc_surrogate, AucSurrogate};
pub use bilevel::{make_quadratic_bilevel, make_quadratic_bilevel_with_noise, BilevelNoise, QuadraticBilevel};
pub use onedim::{make_onedim_minimax, OneDimMinimax};
pub use quadratic::{make_quadratic_minimax, make_quadratic_objective, QuadraticMinimax, QuadraticObjective};

/// Single-level stochastic objective `f(x) = E[F(x; xi)]`.
pub trait StochasticObjective: Send + Sync {
    fn dim(&self) -> usize;

    /// Exact gradient.
    fn grad(&self, x: &RealVector) -> Result<RealVector>;

    fn noise(&self) -> NoiseModel;

    fn value(&self, _x: &RealVector) -> Result<f64> {
        Err(Error::MissingTruth("objective value"))
    }

    /// One stochastic gradient draw.
    fn sample_grad(&self, x: &RealVector, rng: &mut RngStream) -> Result<RealVector> {
        let g = self.grad(x)?;
        g.add(&sample_noise(&self.noise(), g.dim(), rng))
    }
}

/// `min_x max_y f(x, y)` with `f` strongly concave in `y`.
pub trait MinimaxProblem: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;

    fn grad_x(&self, x: &RealVector, y: &RealVector) -> Result<RealVector>;
    fn grad_y(&self, x: &RealVector, y: &RealVector) -> Result<RealVector>;

    fn noise_x(&self) -> NoiseModel;
    fn noise_y(&self) -> NoiseModel;

    /// Strong-concavity modulus in `y`.
    fn mu(&self) -> f64;
    /// Joint smoothness constant (metadata).
    fn smoothness(&self) -> f64;

    /// One joint sample `(grad_x F(x,y;xi), grad_y F(x,y;xi))`.
    fn sample_grads(
        &self,
        x: &RealVector,
        y: &RealVector,
        rng: &mut RngStream,
    ) -> Result<(RealVector, RealVector)> {
        let gx = self.grad_x(x, y)?;
        let gy = self.grad_y(x, y)?;
        let nx = sample_noise(&self.noise_x(), gx.dim(), rng);
        let ny = sample_noise(&self.noise_y(), gy.dim(), rng);
        Ok((gx.add(&nx)?, gy.add(&ny)?))
    }

    fn value(&self, _x: &RealVector, _y: &RealVector) -> Result<f64> {
        Err(Error::MissingTruth("minimax objective value"))
    }

    fn y_star(&self, _x: &RealVector) -> Result<RealVector> {
        Err(Error::MissingTruth("y*(x)"))
    }

    fn grad_phi(&self, _x: &RealVector) -> Result<RealVector> {
        Err(Error::MissingTruth("grad Phi(x)"))
    }

    /// `Phi(x) = f(x, y*(x))`.
    fn phi(&self, x: &RealVector) -> Result<f64> {
        let y = self.y_star(x)?;
        self.value(x, &y)
    }
}

/// `min_x f(x, y*(x))` with `y*(x) = argmin_y g(x, y)` and `g` strongly
/// convex in `y`.
///
/// The `sample_*` methods default to the exact oracles; noisy problems
/// override them.
pub trait BilevelProblem: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;

    /// Lower bound on the spectrum of `hess_yy g`.
    fn mu_g(&self) -> f64;
    /// Upper bound on the spectrum of `hess_yy g`.
    fn l_g1(&self) -> f64;

    fn grad_x_f(&self, x: &RealVector, y: &RealVector) -> Result<RealVector>;
    fn grad_y_f(&self, x: &RealVector, y: &RealVector) -> Result<RealVector>;
    fn grad_y_g(&self, x: &RealVector, y: &RealVector) -> Result<RealVector>;

    /// `hess_yy g(x, y) v`
    fn hvp_yy_g(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Result<RealVector>;
    /// `hess_xy g(x, y) v`, mapping a y-space vector into x-space.
    fn jvp_xy_g(&self, x: &RealVector, y: &RealVector, v: &RealVector) -> Result<RealVector>;

    /// Dense `hess_yy g(x, y)` (dim_y x dim_y).
    fn hessian_yy_g(&self, x: &RealVector, y: &RealVector) -> Result<DMatrix<f64>>;
    /// Dense `hess_xy g(x, y)` (dim_x x dim_y).
    fn jacobian_xy_g(&self, x: &RealVector, y: &RealVector) -> Result<DMatrix<f64>>;

    /// One joint upper-level sample `(grad_x F, grad_y F)`.
    fn sample_upper_grads(
        &self,
        x: &RealVector,
        y: &RealVector,
        _rng: &mut RngStream,
    ) -> Result<(RealVector, RealVector)> {
        Ok((self.grad_x_f(x, y)?, self.grad_y_f(x, y)?))
    }

    fn sample_lower_grad(&self, x: &RealVector, y: &RealVector, _rng: &mut RngStream) -> Result<RealVector> {
        self.grad_y_g(x, y)
    }

    fn sample_hvp_yy_g(
        &self,
        x: &RealVector,
        y: &RealVector,
        v: &RealVector,
        _rng: &mut RngStream,
    ) -> Result<RealVector> {
        self.hvp_yy_g(x, y, v)
    }

    fn sample_jvp_xy_g(
        &self,
        x: &RealVector,
        y: &RealVector,
        v: &RealVector,
        _rng: &mut RngStream,
    ) -> Result<RealVector> {
        self.jvp_xy_g(x, y, v)
    }

    fn upper_value(&self, _x: &RealVector, _y: &RealVector) -> Result<f64> {
        Err(Error::MissingTruth("upper-level value"))
    }

    fn y_star(&self, _x: &RealVector) -> Result<RealVector> {
        Err(Error::MissingTruth("y*(x)"))
    }

    fn grad_phi(&self, _x: &RealVector) -> Result<RealVector> {
        Err(Error::MissingTruth("grad Phi(x)"))
    }

    fn phi(&self, x: &RealVector) -> Result<f64> {
        let y = self.y_star(x)?;
        self.upper_value(x, &y)
    }
}

/// Central-difference gradient of a value function `phi` at `x`.
pub fn finite_diff_grad_phi<F>(phi: F, x: &RealVector, h: f64) -> Result<RealVector>
where
    F: Fn(&RealVector) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let base = x.as_slice().to_vec();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += h;
        minus[i] -= h;
        let fp = phi(&RealVector::new(plus)?)?;
        let fm = phi(&RealVector::new(minus)?)?;
        out.push((fp - fm) / (2.0 * h));
    }
    RealVector::new(out)
}

/// Views a minimax problem as the single-level objective `Phi(x)`, with
/// stochastic gradients `grad Phi(x) + noise_x`.
pub struct PhiObjective<'a> {
    inner: &'a dyn MinimaxProblem,
}

impl<'a> PhiObjective<'a> {
    pub fn new(inner: &'a dyn MinimaxProblem) -> Self {
        Self { inner }
    }
}

impl StochasticObjective for PhiObjective<'_> {
    fn dim(&self) -> usize {
        self.inner.dim_x()
    }

    fn grad(&self, x: &RealVector) -> Result<RealVector> {
        self.inner.grad_phi(x)
    }

    fn noise(&self) -> NoiseModel {
        self.inner.noise_x()
    }

    fn value(&self, x: &RealVector) -> Result<f64> {
        self.inner.phi(x)
    }
}

pub(crate) fn check_len(v: &RealVector, expected: usize) -> Result<()> {
    if v.dim() != expected {
        return Err(Error::DimensionMismatch {
            left: v.dim(),
            right: expected,
        });
    }
    Ok(())
}
