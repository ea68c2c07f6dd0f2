//! Dense vectors, labeled deterministic random streams and the additive
//! noise models used to turn exact gradients into stochastic oracles.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

/// A dense point or gradient in R^d. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("vector dimension must be positive"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("RealVector::new"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(vec![v])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    fn finite(self, op: &'static str) -> Result<Self> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()).finite("add")
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()).finite("sub")
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self(self.0.iter().map(|a| a * factor).collect()).finite("scale")
    }

    /// `self + factor * other`
    pub fn add_scaled(&self, factor: f64, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + factor * b)
                .collect(),
        )
        .finite("add_scaled")
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        Self::new(v.iter().copied().collect())
    }
}

impl fmt::Display for RealVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for RealVector {
    type Err = Error;

    /// Parses a comma-separated list such as `1.0,-2,3e-1`.
    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad vector entry `{p}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

/// A labeled random stream. The same `(seed, label)` pair always produces
/// the same sequence of draws; different labels give independent streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            seed,
            label: label.to_owned(),
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Child stream `"<label>/<suffix>"` under the same seed.
    pub fn fork(&self, suffix: &str) -> Self {
        Self::new(self.seed, &format!("{}/{}", self.label, suffix))
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw in `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        self.rng.gen_range(lo..=hi)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    pub fn rademacher(&mut self) -> f64 {
        if self.rng.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn gaussian_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.gaussian()).collect()
    }

    /// Uniform draw on the unit sphere in R^dim (normalized Gaussian).
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v = self.gaussian_vec(dim);
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 1e-300 {
                return v.into_iter().map(|a| a / n).collect();
            }
        }
    }
}

/// Additive zero-mean perturbation applied to exact gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub enum NoiseModel {
    #[default]
    None,
    /// i.i.d. `N(0, sigma^2)` per coordinate.
    Gaussian { sigma: f64 },
    /// Uniform on the sphere of the given radius.
    Sphere { radius: f64 },
    /// Uniform direction, radius uniform in `[lo, hi]`.
    Annulus { lo: f64, hi: f64 },
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("gaussian sigma must be >= 0, got {sigma}")));
        }
        Ok(Self::Gaussian { sigma })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(invalid(format!("sphere radius must be >= 0, got {radius}")));
        }
        Ok(Self::Sphere { radius })
    }

    pub fn annulus(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid(format!("annulus needs 0 <= lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(Self::Annulus { lo, hi })
    }

    /// Almost-sure bounds `(lower, upper)` on the perturbation norm, when
    /// they exist.
    pub fn norm_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Self::None => Some((0.0, 0.0)),
            Self::Gaussian { sigma } if sigma == 0.0 => Some((0.0, 0.0)),
            Self::Gaussian { .. } => None,
            Self::Sphere { radius } => Some((radius, radius)),
            Self::Annulus { lo, hi } => Some((lo, hi)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.norm_bounds(), Some((_, hi)) if hi == 0.0)
    }
}


impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::None => write!(f, "none"),
            Self::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            Self::Sphere { radius } => write!(f, "sphere:{radius}"),
            Self::Annulus { lo, hi } => write!(f, "annulus:{lo}:{hi}"),
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    /// Accepts `none`, `gaussian:<sigma>`, `sphere:<r>`, `annulus:<lo>:<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad noise parameter `{p}` in `{s}`")))
        };
        match parts.as_slice() {
            ["none"] => Ok(Self::None),
            ["gaussian", sigma] => Self::gaussian(num(sigma)?),
            ["sphere", r] => Self::sphere(num(r)?),
            ["annulus", lo, hi] => Self::annulus(num(lo)?, num(hi)?),
            _ => Err(Error::Config(format!("unknown noise model `{s}`"))),
        }
    }
}

/// Draws one zero-mean perturbation of dimension `dim`.
pub fn sample_noise(model: &NoiseModel, dim: usize, rng: &mut RngStream) -> RealVector {
    assert!(dim >= 1, "noise dimension must be positive");
    let entries = match *model {
        NoiseModel::None => vec![0.0; dim],
        NoiseModel::Gaussian { sigma } => rng
            .gaussian_vec(dim)
            .into_iter()
            .map(|z| sigma * z)
            .collect(),
        NoiseModel::Sphere { radius } => rng
            .unit_vector(dim)
            .into_iter()
            .map(|u| radius * u)
            .collect(),
        NoiseModel::Annulus { lo, hi } => {
            let dir = rng.unit_vector(dim);
            let r = rng.uniform(lo, hi);
            dir.into_iter().map(|u| r * u).collect()
        }
    };
    RealVector(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> RealVector {
        RealVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn basic_vector_ops() {
        assert_eq!(v(&[3.0, 4.0]).norm(), 5.0);
        assert_eq!(v(&[1.0, 0.0]).dot(&v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(v(&[1.0, 2.0]).scale(0.0).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(v(&[1.0, 2.0]).add(&v(&[1.0, -1.0])).unwrap(), v(&[2.0, 1.0]));
        assert_eq!(v(&[1.0, 2.0]).sub(&v(&[1.0, -1.0])).unwrap(), v(&[0.0, 3.0]));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = v(&[1.0, 2.0]);
        let b = v(&[1.0]);
        assert!(matches!(a.add(&b), Err(Error::DimensionMismatch { .. })));
        assert!(a.sub(&b).is_err());
        assert!(a.dot(&b).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(RealVector::new(vec![f64::NAN]).is_err());
        assert!(RealVector::new(vec![]).is_err());
        assert!(v(&[1e308]).scale(1e10).is_err());
    }

    #[test]
    fn zero_noise_is_zero() {
        let mut rng = RngStream::new(3, "x");
        assert_eq!(sample_noise(&NoiseModel::None, 3, &mut rng), RealVector::zeros(3));
    }

    #[test]
    fn sphere_and_annulus_norms() {
        let mut rng = RngStream::new(7, "noise");
        let s = sample_noise(&NoiseModel::sphere(2.0).unwrap(), 5, &mut rng);
        assert!((s.norm() - 2.0).abs() <= 2.0 * 1e-12);
        let mut rng = RngStream::new(1, "noise");
        for _ in 0..1000 {
            let a = sample_noise(&NoiseModel::annulus(1.0, 3.0).unwrap(), 4, &mut rng);
            assert!(a.norm() >= 1.0 - 1e-12 && a.norm() <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn sphere_sampler_is_isotropic() {
        let mut rng = RngStream::new(11, "iso");
        let model = NoiseModel::sphere(1.0).unwrap();
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let s = sample_noise(&model, 3, &mut rng);
            for (m, x) in mean.iter_mut().zip(s.as_slice()) {
                *m += x / n as f64;
            }
        }
        let norm = mean.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm <= 0.02, "mean norm {norm}");
    }

    #[test]
    fn gaussian_sampler_is_unbiased() {
        let sigma = 3.0;
        let mut rng = RngStream::new(5, "gauss");
        let model = NoiseModel::gaussian(sigma).unwrap();
        let n = 1_000_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let s = sample_noise(&model, 2, &mut rng);
            mean[0] += s.get(0) / n as f64;
            mean[1] += s.get(1) / n as f64;
        }
        for m in mean {
            assert!(m.abs() <= 5.0 * sigma / 1e3, "coordinate mean {m}");
        }
    }

    #[test]
    fn streams_are_deterministic_and_label_separated() {
        let mut a = RngStream::new(42, "upper-grad");
        let mut b = RngStream::new(42, "upper-grad");
        let mut c = RngStream::new(42, "upper-grad-tilde");
        let xa: Vec<f64> = (0..8).map(|_| a.gaussian()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.gaussian()).collect();
        let xc: Vec<f64> = (0..8).map(|_| c.gaussian()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn invalid_noise_parameters() {
        assert!(NoiseModel::annulus(2.0, 1.0).is_err());
        assert!(NoiseModel::gaussian(-1.0).is_err());
        assert!(NoiseModel::sphere(f64::NAN).is_err());
    }

    #[test]
    fn noise_model_text_form() {
        for s in ["none", "gaussian:20", "sphere:2.5", "annulus:1:2"] {
            let m: NoiseModel = s.parse().unwrap();
            assert_eq!(m.to_string().parse::<NoiseModel>().unwrap(), m);
        }
        assert!("laplace:1".parse::<NoiseModel>().is_err());
    }
}
