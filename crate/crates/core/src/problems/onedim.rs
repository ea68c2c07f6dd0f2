//! `f(x, y) = cos x + x y - y^2 / 2`: nonconvex in `x`, 1-strongly concave
//! in `y`, with `y*(x) = x`, `Phi(x) = cos x + x^2 / 2` and
//! `grad Phi(x) = x - sin x`.

use crate::error::Result;
use crate::numeric::{NoiseModel, RealVector};

use super::{check_len, MinimaxProblem};

#[derive(Debug, Clone)]
pub struct OneDimMinimax {
    noise_x: NoiseModel,
    noise_y: NoiseModel,
}

/// The same noise model is used for both partial gradients.
pub fn make_onedim_minimax(noise: NoiseModel) -> OneDimMinimax {
    OneDimMinimax {
        noise_x: noise,
        noise_y: noise,
    }
}

impl OneDimMinimax {
    pub fn with_noise(noise_x: NoiseModel, noise_y: NoiseModel) -> Self {
        Self { noise_x, noise_y }
    }
}

fn scalar(v: &RealVector) -> Result<f64> {
    check_len(v, 1)?;
    Ok(v.get(0))
}

impl MinimaxProblem for OneDimMinimax {
    fn dim_x(&self) -> usize {
        1
    }

    fn dim_y(&self) -> usize {
        1
    }

    fn grad_x(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        let (x, y) = (scalar(x)?, scalar(y)?);
        RealVector::scalar(y - x.sin())
    }

    fn grad_y(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        let (x, y) = (scalar(x)?, scalar(y)?);
        RealVector::scalar(x - y)
    }

    fn noise_x(&self) -> NoiseModel {
        self.noise_x
    }

    fn noise_y(&self) -> NoiseModel {
        self.noise_y
    }

    fn mu(&self) -> f64 {
        1.0
    }

    // |f_xx| <= 1, f_xy = 1, f_yy = -1: the Hessian's spectral norm is at most 2
    fn smoothness(&self) -> f64 {
        2.0
    }

    fn value(&self, x: &RealVector, y: &RealVector) -> Result<f64> {
        let (x, y) = (scalar(x)?, scalar(y)?);
        Ok(x.cos() + x * y - 0.5 * y * y)
    }

    fn y_star(&self, x: &RealVector) -> Result<RealVector> {
        check_len(x, 1)?;
        Ok(x.clone())
    }

    fn grad_phi(&self, x: &RealVector) -> Result<RealVector> {
        let x = scalar(x)?;
        RealVector::scalar(x - x.sin())
    }
}
