//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment. Unknown keys are errors.
//! [`RunConfig::to_text`] writes every key, and parsing that text gives back
//! an identical config.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::hypergradient::{recommended_n, NeumannConfig};
use crate::numeric::{NoiseModel, RealVector};
use crate::optimizers::{Algorithm, ProblemRef, RunSettings};
use crate::problems::{
    make_auc_surrogate, make_quadratic_bilevel_with_noise, make_quadratic_minimax, make_quadratic_objective,
    AucSurrogate, BilevelNoise, OneDimMinimax, QuadraticBilevel, QuadraticMinimax, QuadraticObjective,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// `cos x + x y - y^2/2`.
    OneDim,
    /// Single-level random quadratic of dimension `dim_x`.
    Quadratic,
    QuadraticMinimax,
    QuadraticBilevel,
    Auc,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        Self::OneDim,
        Self::Quadratic,
        Self::QuadraticMinimax,
        Self::QuadraticBilevel,
        Self::Auc,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Self::OneDim => "onedim",
            Self::Quadratic => "quadratic",
            Self::QuadraticMinimax => "quadratic-minimax",
            Self::QuadraticBilevel => "quadratic-bilevel",
            Self::Auc => "auc",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.id() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown problem `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeumannTerms {
    Fixed(usize),
    /// Resolved from the horizon before the run starts.
    Auto,
}

impl fmt::Display for NeumannTerms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(n) => write!(f, "{n}"),
            Self::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub dim_x: usize,
    pub dim_y: usize,
    pub mu: f64,
    pub l: f64,
    pub problem_seed: u64,
    pub algorithm: Algorithm,
    pub iterations: u64,
    pub seed: u64,
    pub alpha: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    pub gamma: f64,
    pub noise_x: NoiseModel,
    pub noise_y: NoiseModel,
    pub hessian_noise: f64,
    pub jacobian_noise: f64,
    pub neumann_n: NeumannTerms,
    pub shared_xi: bool,
    pub output_path: String,
    /// `None` means the problem's default start.
    pub x0: Option<RealVector>,
    pub y0: Option<RealVector>,
    pub tiada_alpha: f64,
    pub tiada_beta: f64,
    pub fixed_beta: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::OneDim,
            dim_x: 1,
            dim_y: 1,
            mu: 1.0,
            l: 2.0,
            problem_seed: 0,
            algorithm: Algorithm::AdaMinimax,
            iterations: 1000,
            seed: 0,
            alpha: 2.0,
            eta_x: 3.0,
            eta_y: 3.0,
            gamma: 1.0,
            noise_x: NoiseModel::None,
            noise_y: NoiseModel::None,
            hessian_noise: 0.0,
            jacobian_noise: 0.0,
            neumann_n: NeumannTerms::Auto,
            shared_xi: true,
            output_path: String::new(),
            x0: None,
            y0: None,
            tiada_alpha: 0.6,
            tiada_beta: 0.4,
            fixed_beta: 0.9,
        }
    }
}

/// Keys in the order [`RunConfig::to_text`] writes them.
pub const KEYS: [&str; 25] = [
    "problem",
    "dim_x",
    "dim_y",
    "mu",
    "l",
    "problem_seed",
    "algorithm",
    "T",
    "seed",
    "alpha",
    "eta_x",
    "eta_y",
    "gamma",
    "noise_x",
    "noise_y",
    "hessian_noise",
    "jacobian_noise",
    "neumann_N",
    "shared_xi",
    "output_path",
    "x0",
    "y0",
    "tiada_alpha",
    "tiada_beta",
    "fixed_beta",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_point(key: &str, value: &str) -> Result<Option<RealVector>> {
    if value == "auto" {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("bad vector `{value}` for `{key}`")))
}

fn point_text(v: &Option<RealVector>) -> String {
    v.as_ref().map_or_else(|| "auto".to_owned(), |p| p.to_string())
}

/// A problem instance owned by the harness.
pub enum BuiltProblem {
    OneDim(OneDimMinimax),
    Quadratic(QuadraticObjective),
    QuadraticMinimax(QuadraticMinimax),
    QuadraticBilevel(QuadraticBilevel),
    Auc(AucSurrogate),
}

impl BuiltProblem {
    pub fn as_ref(&self) -> ProblemRef<'_> {
        match self {
            Self::OneDim(p) => ProblemRef::Minimax(p),
            Self::Quadratic(p) => ProblemRef::Objective(p),
            Self::QuadraticMinimax(p) => ProblemRef::Minimax(p),
            Self::QuadraticBilevel(p) => ProblemRef::Bilevel(p),
            Self::Auc(p) => ProblemRef::Minimax(p),
        }
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Sets one key. `sigma` is a shorthand for Gaussian noise on both
    /// oracles (`0` means none).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => self.problem = value.parse()?,
            "dim_x" => self.dim_x = parse(key, value)?,
            "dim_y" => self.dim_y = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "l" => self.l = parse(key, value)?,
            "problem_seed" => self.problem_seed = parse(key, value)?,
            "algorithm" => self.algorithm = value.parse()?,
            "T" => self.iterations = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "eta_x" => self.eta_x = parse(key, value)?,
            "eta_y" => self.eta_y = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "noise_x" => self.noise_x = value.parse()?,
            "noise_y" => self.noise_y = value.parse()?,
            "hessian_noise" => self.hessian_noise = parse(key, value)?,
            "jacobian_noise" => self.jacobian_noise = parse(key, value)?,
            "neumann_N" => {
                self.neumann_n = if value == "auto" {
                    NeumannTerms::Auto
                } else {
                    NeumannTerms::Fixed(parse(key, value)?)
                }
            }
            "shared_xi" => self.shared_xi = parse(key, value)?,
            "output_path" => self.output_path = value.to_owned(),
            "x0" => self.x0 = parse_point(key, value)?,
            "y0" => self.y0 = parse_point(key, value)?,
            "tiada_alpha" => self.tiada_alpha = parse(key, value)?,
            "tiada_beta" => self.tiada_beta = parse(key, value)?,
            "fixed_beta" => self.fixed_beta = parse(key, value)?,
            "sigma" => {
                let sigma: f64 = parse(key, value)?;
                let noise = if sigma == 0.0 {
                    NoiseModel::None
                } else {
                    NoiseModel::gaussian(sigma)?
                };
                self.noise_x = noise;
                self.noise_y = noise;
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let values = [
            self.problem.to_string(),
            self.dim_x.to_string(),
            self.dim_y.to_string(),
            self.mu.to_string(),
            self.l.to_string(),
            self.problem_seed.to_string(),
            self.algorithm.to_string(),
            self.iterations.to_string(),
            self.seed.to_string(),
            self.alpha.to_string(),
            self.eta_x.to_string(),
            self.eta_y.to_string(),
            self.gamma.to_string(),
            self.noise_x.to_string(),
            self.noise_y.to_string(),
            self.hessian_noise.to_string(),
            self.jacobian_noise.to_string(),
            self.neumann_n.to_string(),
            self.shared_xi.to_string(),
            self.output_path.clone(),
            point_text(&self.x0),
            point_text(&self.y0),
            self.tiada_alpha.to_string(),
            self.tiada_beta.to_string(),
            self.fixed_beta.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("eta_x", self.eta_x),
            ("eta_y", self.eta_y),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("l", self.l),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{name}` must be positive, got {v}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::Config("`T` must be at least 1".into()));
        }
        if self.dim_x == 0 || self.dim_y == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.l < self.mu {
            return Err(Error::Config(format!("need mu <= l, got {} > {}", self.mu, self.l)));
        }
        if self.neumann_n == NeumannTerms::Fixed(0) {
            return Err(Error::Config("`neumann_N` must be positive".into()));
        }
        if self.output_path.contains('\n') || self.output_path.contains('#') {
            return Err(Error::Config("`output_path` may not contain newlines or `#`".into()));
        }
        self.baseline()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn baseline(&self) -> BaselineConfig {
        BaselineConfig {
            eta_x: self.eta_x,
            eta_y: self.eta_y,
            tiada_alpha: self.tiada_alpha,
            tiada_beta: self.tiada_beta,
            fixed_beta: self.fixed_beta,
            gamma: self.gamma,
        }
    }

    pub fn build_problem(&self) -> Result<BuiltProblem> {
        Ok(match self.problem {
            ProblemKind::OneDim => BuiltProblem::OneDim(OneDimMinimax::with_noise(self.noise_x, self.noise_y)),
            ProblemKind::Quadratic => BuiltProblem::Quadratic(
                make_quadratic_objective(self.dim_x, self.mu, self.l, self.problem_seed)?.with_noise(self.noise_x),
            ),
            ProblemKind::QuadraticMinimax => BuiltProblem::QuadraticMinimax(
                make_quadratic_minimax(self.dim_x, self.dim_y, self.mu, self.l, self.problem_seed)?
                    .with_noise(self.noise_x, self.noise_y),
            ),
            ProblemKind::QuadraticBilevel => {
                let noise = BilevelNoise {
                    upper_x: self.noise_x,
                    upper_y: self.noise_y,
                    lower: self.noise_y,
                    hessian: self.hessian_noise,
                    jacobian: self.jacobian_noise,
                };
                BuiltProblem::QuadraticBilevel(make_quadratic_bilevel_with_noise(
                    self.dim_x,
                    self.dim_y,
                    self.mu,
                    self.l,
                    self.problem_seed,
                    noise,
                )?)
            }
            ProblemKind::Auc => BuiltProblem::Auc(make_auc_surrogate(1000, 0.1, self.problem_seed)?),
        })
    }

    /// Default start: `x = 1` in every coordinate, `y = 0`.
    fn start(&self, problem: &BuiltProblem) -> Result<(RealVector, Option<RealVector>)> {
        let (dx, dy) = match problem.as_ref() {
            ProblemRef::Objective(p) => (p.dim(), None),
            ProblemRef::Minimax(p) => (p.dim_x(), Some(p.dim_y())),
            ProblemRef::Bilevel(p) => (p.dim_x(), Some(p.dim_y())),
        };
        let x0 = match &self.x0 {
            Some(x) => x.clone(),
            None => RealVector::new(vec![1.0; dx])?,
        };
        let y0 = match (&self.y0, dy) {
            (Some(y), _) => Some(y.clone()),
            (None, Some(d)) => Some(RealVector::zeros(d)),
            (None, None) => None,
        };
        Ok((x0, y0))
    }

    /// Number of Neumann terms for this run, resolving `auto` from `T`.
    pub fn resolved_neumann_terms(&self, problem: &BuiltProblem) -> Result<usize> {
        match (self.neumann_n, problem.as_ref()) {
            (NeumannTerms::Fixed(n), _) => Ok(n),
            (NeumannTerms::Auto, ProblemRef::Bilevel(p)) if self.iterations >= 2 => {
                recommended_n(self.iterations, &NeumannConfig::for_problem(p, 1)?)
            }
            (NeumannTerms::Auto, _) => Ok(1),
        }
    }

    pub fn settings(&self, problem: &BuiltProblem) -> Result<RunSettings> {
        let (x0, y0) = self.start(problem)?;
        Ok(RunSettings {
            algorithm: self.algorithm,
            iterations: self.iterations,
            seed: self.seed,
            alpha: self.alpha,
            eta_x: self.eta_x,
            eta_y: self.eta_y,
            gamma: self.gamma,
            neumann_terms: self.resolved_neumann_terms(problem)?,
            shared_xi: self.shared_xi,
            x0,
            y0,
            baseline: self.baseline(),
        })
    }
}

/// Tuned settings for the one-dimensional noise sweep:
/// `(alpha, eta_x, eta_y)` for the adaptive method and the shared TiAda step.
pub fn onedim_tuned(sigma: f64) -> Option<((f64, f64, f64), f64)> {
    match sigma {
        s if s == 0.0 => Some(((2.0, 3.0, 3.0), 4.0)),
        s if s == 20.0 => Some(((2.0, 1.5, 1.5), 2.0)),
        s if s == 50.0 => Some(((3.0, 2.0, 2.0), 2.0)),
        s if s == 100.0 => Some(((5.0, 3.0, 3.0), 2.5)),
        _ => None,
    }
}

/// Default iteration budget per noise level for the one-dimensional sweep.
pub fn onedim_budget(sigma: f64) -> Option<u64> {
    match sigma {
        s if s == 0.0 => Some(1000),
        s if s == 20.0 => Some(600),
        s if s == 50.0 => Some(2000),
        s if s == 100.0 => Some(3200),
        _ => None,
    }
}
