//! Noise-adaptive momentum and step-size schedules.
//!
//! The momentum weight tracks an AdaGrad-style sum of squared differences
//! between two independent gradient draws:
//!
//! ```text
//! alpha_t  = alpha / sqrt(alpha^2 + sum_k |g_k - g~_k|^2)
//! alpha'_t = alpha / sqrt(alpha^2 + sum_k |g_k - g~_k|^2 + |gy_k|^2)
//! beta_t   = 1 - alpha_t
//! eta_x_t  = eta_x * sqrt(alpha'_t) / sqrt(t)      (hierarchical)
//! eta_t    = eta   * sqrt(alpha_t)  / sqrt(t)      (single level)
//! eta_y_t  = eta_y / sqrt(gamma^2 + sum_k |gy_k|^2)
//! ```
//!
//! All sums run through the current iteration, so a value for iteration `t`
//! is only available after the `t`-th [`AdaScheduleState::ingest`].

use crate::error::{invalid, Error, Result};
use crate::numeric::RealVector;

/// Which momentum weight drives the upper-level step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `eta_x * sqrt(alpha'_t)`: minimax and bilevel methods.
    Hierarchical,
    /// `eta * sqrt(alpha_t)`: single-level normalized SGD with momentum.
    SingleLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaScheduleState {
    pub alpha_base: f64,
    pub eta_x_base: f64,
    pub eta_y_base: f64,
    pub gamma: f64,
    sum_diff_sq: f64,
    sum_lower_sq: f64,
    t: u64,
    rule: StepRule,
    /// When set, the step denominator is `sqrt(horizon)` instead of `sqrt(t)`.
    horizon: Option<u64>,
}

impl AdaScheduleState {
    pub fn new(alpha: f64, eta_x: f64, eta_y: f64, gamma: f64, rule: StepRule) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("eta_x", eta_x), ("eta_y", eta_y), ("gamma", gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            alpha_base: alpha,
            eta_x_base: eta_x,
            eta_y_base: eta_y,
            gamma,
            sum_diff_sq: 0.0,
            sum_lower_sq: 0.0,
            t: 0,
            rule,
            horizon: None,
        })
    }

    /// Single-level schedule (`eta_y`, `gamma` are unused and set to 1).
    pub fn single_level(alpha: f64, eta: f64) -> Result<Self> {
        Self::new(alpha, eta, 1.0, 1.0, StepRule::SingleLevel)
    }

    /// Use `sqrt(horizon)` as the upper-level step denominator.
    pub fn with_fixed_horizon(mut self, horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon must be positive"));
        }
        self.horizon = Some(horizon);
        Ok(self)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn sum_diff_sq(&self) -> f64 {
        self.sum_diff_sq
    }

    pub fn sum_lower_sq(&self) -> f64 {
        self.sum_lower_sq
    }

    pub fn rule(&self) -> StepRule {
        self.rule
    }

    /// Folds in iteration `t`'s statistics: `diff_sq = |g_x - g~_x|^2`
    /// and `lower_sq = |g_y|^2` (0 for single-level use).
    pub fn ingest(&mut self, diff_sq: f64, lower_sq: f64) -> Result<()> {
        if !(diff_sq >= 0.0 && diff_sq.is_finite()) {
            return Err(invalid(format!("diff_sq must be finite and >= 0, got {diff_sq}")));
        }
        if !(lower_sq >= 0.0 && lower_sq.is_finite()) {
            return Err(invalid(format!("lower_sq must be finite and >= 0, got {lower_sq}")));
        }
        self.sum_diff_sq += diff_sq;
        self.sum_lower_sq += lower_sq;
        self.t += 1;
        Ok(())
    }

    fn started(&self) -> Result<()> {
        if self.t == 0 {
            Err(Error::ScheduleNotStarted)
        } else {
            Ok(())
        }
    }

    pub fn alpha_t(&self) -> Result<f64> {
        self.started()?;
        let a = self.alpha_base;
        Ok(a / (a * a + self.sum_diff_sq).sqrt())
    }

    pub fn alpha_prime_t(&self) -> Result<f64> {
        self.started()?;
        let a = self.alpha_base;
        Ok(a / (a * a + self.sum_diff_sq + self.sum_lower_sq).sqrt())
    }

    pub fn beta_t(&self) -> Result<f64> {
        Ok(1.0 - self.alpha_t()?)
    }

    pub fn eta_x_t(&self) -> Result<f64> {
        let weight = match self.rule {
            StepRule::Hierarchical => self.alpha_prime_t()?,
            StepRule::SingleLevel => self.alpha_t()?,
        };
        let denom = self.horizon.unwrap_or(self.t) as f64;
        Ok(self.eta_x_base * weight.sqrt() / denom.sqrt())
    }

    pub fn eta_y_t(&self) -> Result<f64> {
        self.started()?;
        Ok(self.eta_y_base / (self.gamma * self.gamma + self.sum_lower_sq).sqrt())
    }
}

/// `beta * m_prev + (1 - beta) * g`
pub fn momentum_update(m_prev: &RealVector, g: &RealVector, beta: f64) -> Result<RealVector> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1], got {beta}")));
    }
    m_prev.scale(beta)?.add_scaled(1.0 - beta, g)
}
