//! Square-loss AUC surrogate on synthetic imbalanced 2-D blobs.
//!
//! Primal variables `(w1, w2, a, b)`, dual variable `alpha`, logistic score
//! `h(w; z) = sigmoid(w^T z)`. Per-sample loss:
//!
//! ```text
//! F = (1-p)(h-a)^2 [y=1] + p(h-b)^2 [y=-1]
//!   + 2(1+alpha)(p h [y=-1] - (1-p) h [y=1]) - p(1-p) alpha^2
//! ```
//!
//! Stochastic gradients come from uniformly sampled data points rather than
//! additive noise. Not a convergence benchmark; a stress problem only.

use crate::error::{invalid, Result};
use crate::numeric::{NoiseModel, RealVector, RngStream};

use super::{check_len, MinimaxProblem};

#[derive(Debug, Clone)]
pub struct AucSurrogate {
    features: Vec<[f64; 2]>,
    positive: Vec<bool>,
    /// Fraction of positive samples.
    p: f64,
}

/// `n` points, a fraction `pos_ratio` of them positive, blobs centred at
/// `(+1, +1)` and `(-1, -1)` with unit variance.
pub fn make_auc_surrogate(n: usize, pos_ratio: f64, seed: u64) -> Result<AucSurrogate> {
    if n < 2 || !(pos_ratio > 0.0 && pos_ratio < 1.0) {
        return Err(invalid("AUC surrogate needs n >= 2 and 0 < pos_ratio < 1"));
    }
    let n_pos = ((n as f64 * pos_ratio).round() as usize).clamp(1, n - 1);
    let mut rng = RngStream::new(seed, "problem/auc");
    let mut features = Vec::with_capacity(n);
    let mut positive = Vec::with_capacity(n);
    for i in 0..n {
        let pos = i < n_pos;
        let c = if pos { 1.0 } else { -1.0 };
        features.push([c + rng.gaussian(), c + rng.gaussian()]);
        positive.push(pos);
    }
    Ok(AucSurrogate {
        features,
        positive,
        p: n_pos as f64 / n as f64,
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl AucSurrogate {
    fn unpack(&self, x: &RealVector, y: &RealVector) -> Result<([f64; 4], f64)> {
        check_len(x, 4)?;
        check_len(y, 1)?;
        let s = x.as_slice();
        Ok(([s[0], s[1], s[2], s[3]], y.get(0)))
    }

    /// Gradient of the per-sample loss at data point `i`.
    fn point_grad(&self, i: usize, x: [f64; 4], alpha: f64) -> ([f64; 4], f64) {
        let p = self.p;
        let z = self.features[i];
        let h = sigmoid(x[0] * z[0] + x[1] * z[1]);
        let (ip, ineg) = if self.positive[i] { (1.0, 0.0) } else { (0.0, 1.0) };
        let d_h = 2.0 * (1.0 - p) * (h - x[2]) * ip
            + 2.0 * p * (h - x[3]) * ineg
            + 2.0 * (1.0 + alpha) * (p * ineg - (1.0 - p) * ip);
        let dh_dw = h * (1.0 - h);
        let gx = [
            d_h * dh_dw * z[0],
            d_h * dh_dw * z[1],
            -2.0 * (1.0 - p) * (h - x[2]) * ip,
            -2.0 * p * (h - x[3]) * ineg,
        ];
        let ga = 2.0 * (p * h * ineg - (1.0 - p) * h * ip) - 2.0 * p * (1.0 - p) * alpha;
        (gx, ga)
    }

    fn full_grad(&self, x: [f64; 4], alpha: f64) -> ([f64; 4], f64) {
        let n = self.features.len() as f64;
        let mut gx = [0.0; 4];
        let mut ga = 0.0;
        for i in 0..self.features.len() {
            let (g, a) = self.point_grad(i, x, alpha);
            for k in 0..4 {
                gx[k] += g[k] / n;
            }
            ga += a / n;
        }
        (gx, ga)
    }
}

impl MinimaxProblem for AucSurrogate {
    fn dim_x(&self) -> usize {
        4
    }

    fn dim_y(&self) -> usize {
        1
    }

    fn grad_x(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        let (x, a) = self.unpack(x, y)?;
        RealVector::new(self.full_grad(x, a).0.to_vec())
    }

    fn grad_y(&self, x: &RealVector, y: &RealVector) -> Result<RealVector> {
        let (x, a) = self.unpack(x, y)?;
        RealVector::scalar(self.full_grad(x, a).1)
    }

    fn noise_x(&self) -> NoiseModel {
        NoiseModel::None
    }

    fn noise_y(&self) -> NoiseModel {
        NoiseModel::None
    }

    fn mu(&self) -> f64 {
        2.0 * self.p * (1.0 - self.p)
    }

    fn smoothness(&self) -> f64 {
        // crude bound: h in (0, 1), |h'| <= 1/4, features are O(1)
        4.0
    }

    fn sample_grads(&self, x: &RealVector, y: &RealVector, rng: &mut RngStream) -> Result<(RealVector, RealVector)> {
        let (x, a) = self.unpack(x, y)?;
        let i = rng.index(self.features.len());
        let (gx, ga) = self.point_grad(i, x, a);
        Ok((RealVector::new(gx.to_vec())?, RealVector::scalar(ga)?))
    }

    fn value(&self, x: &RealVector, y: &RealVector) -> Result<f64> {
        let (x, alpha) = self.unpack(x, y)?;
        let p = self.p;
        let n = self.features.len() as f64;
        let mut total = 0.0;
        for (z, &pos) in self.features.iter().zip(&self.positive) {
            let h = sigmoid(x[0] * z[0] + x[1] * z[1]);
            let (ip, ineg) = if pos { (1.0, 0.0) } else { (0.0, 1.0) };
            total += (1.0 - p) * (h - x[2]).powi(2) * ip + p * (h - x[3]).powi(2) * ineg
                + 2.0 * (1.0 + alpha) * (p * h * ineg - (1.0 - p) * h * ip)
                - p * (1.0 - p) * alpha * alpha;
        }
        Ok(total / n)
    }

    fn y_star(&self, x: &RealVector) -> Result<RealVector> {
        check_len(x, 4)?;
        let s = x.as_slice();
        let p = self.p;
        let n = self.features.len() as f64;
        let mean: f64 = self
            .features
            .iter()
            .zip(&self.positive)
            .map(|(z, &pos)| {
                let h = sigmoid(s[0] * z[0] + s[1] * z[1]);
                if pos {
                    -(1.0 - p) * h
                } else {
                    p * h
                }
            })
            .sum::<f64>()
            / n;
        RealVector::scalar(mean / (p * (1.0 - p)))
    }

    fn grad_phi(&self, x: &RealVector) -> Result<RealVector> {
        let y = self.y_star(x)?;
        self.grad_x(x, &y)
    }
}
