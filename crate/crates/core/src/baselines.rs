//! Comparison methods: constant-step SGDA, AdaGrad-Norm GDA, TiAda and
//! normalized SGD with a fixed momentum weight.

use crate::error::{invalid, Result};
use crate::numeric::{RealVector, RngStream};
use crate::optimizers::OracleStreams;
use crate::problems::{MinimaxProblem, StochasticObjective};
use crate::schedules::momentum_update;

const DENOM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub eta_x: f64,
    pub eta_y: f64,
    pub tiada_alpha: f64,
    pub tiada_beta: f64,
    /// Momentum weight on the previous `m` for `nsgdm-fixed`.
    pub fixed_beta: f64,
    /// AdaGrad-Norm accumulator offset.
    pub gamma: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            eta_x: 0.1,
            eta_y: 0.1,
            tiada_alpha: 0.6,
            tiada_beta: 0.4,
            fixed_beta: 0.9,
            gamma: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_x > 0.0 && self.eta_y > 0.0 && self.eta_x.is_finite() && self.eta_y.is_finite()) {
            return Err(invalid("baseline step sizes must be positive"));
        }
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(self.tiada_alpha) && unit(self.tiada_beta) && self.tiada_alpha > self.tiada_beta) {
            return Err(invalid(format!(
                "TiAda exponents need 0 < beta < alpha < 1, got ({}, {})",
                self.tiada_alpha, self.tiada_beta
            )));
        }
        if !(0.0..=1.0).contains(&self.fixed_beta) {
            return Err(invalid(format!("fixed_beta must lie in [0, 1], got {}", self.fixed_beta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma must be positive"));
        }
        Ok(())
    }
}

/// Iterates plus the running squared-gradient sums `v_x`, `v_y` (both
/// start at 0).
#[derive(Debug, Clone, PartialEq)]
pub struct GdaState {
    pub x: RealVector,
    pub y: RealVector,
    pub v_x: f64,
    pub v_y: f64,
    pub t: u64,
}

impl GdaState {
    pub fn new(x: RealVector, y: RealVector) -> Self {
        Self {
            x,
            y,
            v_x: 0.0,
            v_y: 0.0,
            t: 0,
        }
    }
}

/// Effective step factors applied to the raw gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineStep {
    pub eta_x: f64,
    pub eta_y: f64,
    pub step_norm: f64,
}

fn gda_apply(
    state: &mut GdaState,
    g_x: &RealVector,
    g_y: &RealVector,
    eta_x: f64,
    eta_y: f64,
) -> Result<BaselineStep> {
    let next = state.x.add_scaled(-eta_x, g_x)?;
    let step_norm = next.sub(&state.x)?.norm();
    state.x = next;
    state.y = state.y.add_scaled(eta_y, g_y)?;
    state.t += 1;
    Ok(BaselineStep {
        eta_x,
        eta_y,
        step_norm,
    })
}

fn draw(
    state: &mut GdaState,
    problem: &dyn MinimaxProblem,
    rng: &mut RngStream,
) -> Result<(RealVector, RealVector)> {
    let (g_x, g_y) = problem.sample_grads(&state.x, &state.y, rng)?;
    state.v_x += g_x.norm_sq();
    state.v_y += g_y.norm_sq();
    Ok((g_x, g_y))
}

/// `x -= eta_x g_x`, `y += eta_y g_y`.
pub fn sgda_step(
    state: &mut GdaState,
    problem: &dyn MinimaxProblem,
    cfg: &BaselineConfig,
    rng: &mut RngStream,
) -> Result<BaselineStep> {
    let (g_x, g_y) = draw(state, problem, rng)?;
    gda_apply(state, &g_x, &g_y, cfg.eta_x, cfg.eta_y)
}

/// Both levels scale by `1 / sqrt(gamma^2 + v)`.
pub fn adagradnorm_gda_step(
    state: &mut GdaState,
    problem: &dyn MinimaxProblem,
    cfg: &BaselineConfig,
    rng: &mut RngStream,
) -> Result<BaselineStep> {
    let (g_x, g_y) = draw(state, problem, rng)?;
    let g2 = cfg.gamma * cfg.gamma;
    let eta_x = cfg.eta_x / (g2 + state.v_x).sqrt();
    let eta_y = cfg.eta_y / (g2 + state.v_y).sqrt();
    gda_apply(state, &g_x, &g_y, eta_x, eta_y)
}

/// Time-scale adaptive GDA: the x-denominator uses the larger of the two
/// accumulators.
pub fn tiada_step(
    state: &mut GdaState,
    problem: &dyn MinimaxProblem,
    cfg: &BaselineConfig,
    rng: &mut RngStream,
) -> Result<BaselineStep> {
    let (g_x, g_y) = draw(state, problem, rng)?;
    let vx = state.v_x.max(state.v_y).max(DENOM_FLOOR);
    let vy = state.v_y.max(DENOM_FLOOR);
    let eta_x = cfg.eta_x / vx.powf(cfg.tiada_alpha);
    let eta_y = cfg.eta_y / vy.powf(cfg.tiada_beta);
    gda_apply(state, &g_x, &g_y, eta_x, eta_y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsgdmFixedState {
    pub x: RealVector,
    pub m: Option<RealVector>,
    pub t: u64,
}

impl NsgdmFixedState {
    pub fn new(x: RealVector) -> Self {
        Self { x, m: None, t: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedStep {
    pub eta_x: f64,
    pub step_norm: f64,
    pub momentum_norm: f64,
}

/// Normalized momentum step with constant `beta` and `eta_t = eta_x / sqrt(t)`.
/// One oracle call per iteration.
pub fn nsgdm_fixed_step(
    state: &mut NsgdmFixedState,
    problem: &dyn StochasticObjective,
    cfg: &BaselineConfig,
    streams: &mut OracleStreams,
) -> Result<FixedStep> {
    let g = problem.sample_grad(&state.x, &mut streams.upper)?;
    let m = match &state.m {
        None => g,
        Some(prev) => momentum_update(prev, &g, cfg.fixed_beta)?,
    };
    state.t += 1;
    let eta = cfg.eta_x / (state.t as f64).sqrt();
    let m_norm = m.norm();
    let mut step_norm = 0.0;
    if m_norm > 0.0 {
        let next = state.x.add_scaled(-eta / m_norm, &m)?;
        step_norm = next.sub(&state.x)?.norm();
        state.x = next;
    }
    state.m = Some(m);
    Ok(FixedStep {
        eta_x: eta,
        step_norm,
        momentum_norm: m_norm,
    })
}
