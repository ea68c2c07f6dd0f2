//! Stochastic hypergradient estimation via a randomized Neumann series.
//!
//! The inverse lower-level Hessian is replaced by
//!
//! ```text
//! H_N = (1/l) sum_{n=0}^{N-1} prod_{j=1}^{n} (I - hess_yy G(x, y; zeta_{n,j}) / l)
//! ```
//!
//! with a fresh Hessian sample for every factor of every term. `H_N` is
//! only ever applied to a vector through Hessian-vector products.

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::numeric::{RealVector, RngStream};
use crate::problems::BilevelProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannConfig {
    /// Number of series terms `N`.
    pub terms: usize,
    pub l_g1: f64,
    pub mu_g: f64,
    /// Reuse one Hessian sample for all factors of a term. Cheaper, but the
    /// factors are no longer independent.
    pub reuse_per_term: bool,
}

impl NeumannConfig {
    pub fn new(terms: usize, mu_g: f64, l_g1: f64) -> Result<Self> {
        if terms == 0 {
            return Err(invalid("Neumann series needs at least one term"));
        }
        if !(mu_g > 0.0 && l_g1 >= mu_g && l_g1.is_finite()) {
            return Err(invalid(format!("need 0 < mu_g <= l_g1, got {mu_g}, {l_g1}")));
        }
        Ok(Self {
            terms,
            l_g1,
            mu_g,
            reuse_per_term: false,
        })
    }

    pub fn for_problem(problem: &dyn BilevelProblem, terms: usize) -> Result<Self> {
        Self::new(terms, problem.mu_g(), problem.l_g1())
    }

    pub fn with_reuse_per_term(mut self, reuse: bool) -> Self {
        self.reuse_per_term = reuse;
        self
    }

    /// `(1/mu_g) (1 - mu_g/l_g1)^N`: operator-norm error of the
    /// deterministic series.
    pub fn operator_error_bound(&self) -> f64 {
        (1.0 - self.mu_g / self.l_g1).powi(self.terms as i32) / self.mu_g
    }
}

/// Applies the randomized Neumann approximation of `[hess_yy g]^{-1}` to `v`.
pub fn neumann_inverse_apply(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y: &RealVector,
    v: &RealVector,
    cfg: &NeumannConfig,
    rng: &mut RngStream,
) -> Result<RealVector> {
    if v.dim() != problem.dim_y() {
        return Err(Error::DimensionMismatch {
            left: v.dim(),
            right: problem.dim_y(),
        });
    }
    let inv_l = 1.0 / cfg.l_g1;
    let mut acc = v.clone();
    for n in 1..cfg.terms {
        let mut p = v.clone();
        if cfg.reuse_per_term {
            let seed = rng.next_u64();
            let base = RngStream::new(seed, "neumann-term");
            for _ in 0..n {
                let mut r = base.clone();
                let hp = problem.sample_hvp_yy_g(x, y, &p, &mut r)?;
                p = p.add_scaled(-inv_l, &hp)?;
            }
        } else {
            for _ in 0..n {
                let hp = problem.sample_hvp_yy_g(x, y, &p, rng)?;
                p = p.add_scaled(-inv_l, &hp)?;
            }
        }
        acc = acc.add(&p)?;
    }
    acc.scale(inv_l)
}

/// One stochastic hypergradient sample
/// `grad_x F(xi) - hess_xy G(zeta_0) H_N grad_y F(xi)`.
pub fn hypergrad_estimate(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y: &RealVector,
    cfg: &NeumannConfig,
    rng: &mut RngStream,
) -> Result<RealVector> {
    let (fx, fy) = problem.sample_upper_grads(x, y, rng)?;
    let h_fy = neumann_inverse_apply(problem, x, y, &fy, cfg, rng)?;
    let corr = problem.sample_jvp_xy_g(x, y, &h_fy, rng)?;
    fx.sub(&corr)
}

/// `grad_x f - hess_xy g [hess_yy g]^{-1} grad_y f` at `(x, y)` by a direct
/// solve. Verification oracle only.
pub fn hypergrad_exact(problem: &dyn BilevelProblem, x: &RealVector, y: &RealVector) -> Result<RealVector> {
    let h = problem.hessian_yy_g(x, y)?;
    let j = problem.jacobian_xy_g(x, y)?;
    let fy = problem.grad_y_f(x, y)?.to_dvector();
    let chol = h.cholesky().ok_or(Error::SingularHessian)?;
    let w: DVector<f64> = chol.solve(&fy);
    let fx = problem.grad_x_f(x, y)?.to_dvector();
    RealVector::from_dvector(&(fx - j * w))
}

/// Smallest `N` with `N >= 3 ln T / (2 ln(1 / (1 - mu_g/l_g1)))`.
pub fn recommended_n(horizon: u64, cfg: &NeumannConfig) -> Result<usize> {
    if horizon < 2 {
        return Err(invalid(format!("recommended N needs T >= 2, got {horizon}")));
    }
    Ok(recommended_n_for_log_horizon((horizon as f64).ln(), cfg.mu_g / cfg.l_g1))
}

/// Same rule, parameterized by `ln T` and the ratio `mu_g / l_g1`.
pub fn recommended_n_for_log_horizon(log_horizon: f64, ratio: f64) -> usize {
    if ratio >= 1.0 {
        return 1;
    }
    let raw = 3.0 * log_horizon / (2.0 * (1.0 / (1.0 - ratio)).ln());
    // absorb rounding noise when raw is an exact integer
    let n = (raw - 1e-9 * raw.abs().max(1.0)).ceil();
    (n.max(1.0)) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic_bilevel, QuadraticBilevel};

    fn s(v: f64) -> RealVector {
        RealVector::scalar(v).unwrap()
    }

    #[test]
    fn single_term_is_scaled_identity() {
        let p = make_quadratic_bilevel(2, 3, 0.5, 2.0, 1).unwrap();
        let cfg = NeumannConfig::for_problem(&p, 1).unwrap();
        let v = RealVector::new(vec![1.0, -2.0, 4.0]).unwrap();
        let mut rng = RngStream::new(0, "neumann");
        let out = neumann_inverse_apply(&p, &RealVector::zeros(2), &RealVector::zeros(3), &v, &cfg, &mut rng).unwrap();
        assert_eq!(out, v.scale(0.5).unwrap());
    }

    #[test]
    fn geometric_series_in_one_dimension() {
        let p = QuadraticBilevel::onedim(1.0, 2.0).unwrap();
        let mut rng = RngStream::new(0, "neumann");
        let cfg1 = NeumannConfig::new(1, 1.0, 2.0).unwrap();
        let h1 = neumann_inverse_apply(&p, &s(0.0), &s(0.0), &s(1.0), &cfg1, &mut rng).unwrap();
        assert_eq!(h1.get(0), 0.5);
        assert_eq!(1.0 - h1.get(0), cfg1.operator_error_bound());

        let cfg20 = NeumannConfig::new(20, 1.0, 2.0).unwrap();
        let h20 = neumann_inverse_apply(&p, &s(0.0), &s(0.0), &s(1.0), &cfg20, &mut rng).unwrap();
        let closed = 1.0 - 0.5f64.powi(20);
        assert!((h20.get(0) - closed).abs() < 1e-15);
        assert!((h20.get(0) - 0.99999905).abs() < 1e-8);
    }

    #[test]
    fn exact_oracle_on_onedim_instance() {
        let p = QuadraticBilevel::onedim(1.0, 1.0).unwrap();
        let cfg = NeumannConfig::new(1, 1.0, 1.0).unwrap();
        let mut rng = RngStream::new(0, "hg");
        // at (0, 0): grad_x f = 0, grad_y f = -1, hess_xy g = -1, hess_yy g = 1
        let est = hypergrad_estimate(&p, &s(0.0), &s(0.0), &cfg, &mut rng).unwrap();
        let exact = hypergrad_exact(&p, &s(0.0), &s(0.0)).unwrap();
        assert_eq!(est.get(0), -1.0);
        assert_eq!(exact.get(0), -1.0);
        assert_eq!(exact.get(0), p.grad_phi(&s(0.0)).unwrap().get(0));
    }

    #[test]
    fn exact_oracle_matches_closed_form_at_y_star() {
        let p = make_quadratic_bilevel(4, 3, 0.5, 2.0, 8).unwrap();
        let mut rng = RngStream::new(2, "x");
        for _ in 0..5 {
            let x = RealVector::new(rng.gaussian_vec(4)).unwrap();
            let y = p.y_star(&x).unwrap();
            let diff = hypergrad_exact(&p, &x, &y).unwrap().sub(&p.grad_phi(&x).unwrap()).unwrap();
            assert!(diff.norm() < 1e-10);
        }
    }

    #[test]
    fn vanishing_upper_y_gradient_leaves_x_gradient() {
        // at y = target with no coupling, grad_y f = 0
        let p = QuadraticBilevel::onedim(1.0, 2.0).unwrap();
        let x = s(0.7);
        let y = s(1.0);
        let cfg = NeumannConfig::new(5, 1.0, 2.0).unwrap();
        let mut rng = RngStream::new(0, "hg");
        let est = hypergrad_estimate(&p, &x, &y, &cfg, &mut rng).unwrap();
        assert_eq!(est, p.grad_x_f(&x, &y).unwrap());
        assert_eq!(hypergrad_exact(&p, &x, &y).unwrap(), p.grad_x_f(&x, &y).unwrap());
    }

    #[test]
    fn recommended_terms() {
        let cfg = NeumannConfig::new(1, 0.5, 1.0).unwrap();
        assert_eq!(recommended_n(10_000, &cfg).unwrap(), 20);
        assert_eq!(recommended_n_for_log_horizon(2.0, 1.0 - (-1.0f64).exp()), 3);
        let exact = NeumannConfig::new(1, 2.0, 2.0).unwrap();
        assert_eq!(recommended_n(100, &exact).unwrap(), 1);
        assert!(recommended_n(1, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(NeumannConfig::new(0, 1.0, 2.0).is_err());
        assert!(NeumannConfig::new(3, 2.0, 1.0).is_err());
        assert!(NeumannConfig::new(3, 0.0, 1.0).is_err());
    }
}
