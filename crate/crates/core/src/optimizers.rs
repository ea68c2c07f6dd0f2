//! Noise-adaptive normalized-momentum methods as single-step state
//! machines, plus a full-run driver that records a [`RunTrace`].
//!
//! All three methods share the same upper-level update
//!
//! ```text
//! m_t     = beta_t m_{t-1} + (1 - beta_t) g_{x,t}      (m_1 = g_{x,1})
//! x_{t+1} = x_t - eta_{x,t} m_t / |m_t|
//! ```
//!
//! and differ in where `g_{x,t}` comes from and how `y` moves.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::{self, BaselineConfig, GdaState, NsgdmFixedState};
use crate::error::{invalid, Error, Result};
use crate::harness::trace::{RunTrace, TraceMeta, TraceRecord};
use crate::hypergradient::{hypergrad_estimate, NeumannConfig};
use crate::numeric::{RealVector, RngStream};
use crate::problems::{BilevelProblem, MinimaxProblem, PhiObjective, StochasticObjective};
use crate::schedules::{momentum_update, AdaScheduleState, StepRule};

/// Independent oracle streams for one run.
#[derive(Debug, Clone)]
pub struct OracleStreams {
    /// Draws `xi_t` (and the joint `y` gradient when shared).
    pub upper: RngStream,
    /// Draws the independent second sample `xi'_t`.
    pub upper_tilde: RngStream,
    /// Lower-level gradient draws.
    pub lower: RngStream,
}

impl OracleStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            upper: RngStream::new(seed, "upper-grad"),
            upper_tilde: RngStream::new(seed, "upper-grad-tilde"),
            lower: RngStream::new(seed, "lower-grad"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: RealVector,
    pub y: Option<RealVector>,
    pub m: Option<RealVector>,
    pub schedule: AdaScheduleState,
    /// Previous upper-level gradient (practical variant).
    pub prev_gx: Option<RealVector>,
    pub t: u64,
}

impl OptimizerState {
    pub fn single_level(x: RealVector, alpha: f64, eta: f64) -> Result<Self> {
        Ok(Self {
            x,
            y: None,
            m: None,
            schedule: AdaScheduleState::single_level(alpha, eta)?,
            prev_gx: None,
            t: 0,
        })
    }

    pub fn hierarchical(x: RealVector, y: RealVector, schedule: AdaScheduleState) -> Result<Self> {
        if schedule.rule() != StepRule::Hierarchical {
            return Err(invalid("hierarchical state needs a hierarchical schedule"));
        }
        Ok(Self {
            x,
            y: Some(y),
            m: None,
            schedule,
            prev_gx: None,
            t: 0,
        })
    }

    fn y(&self) -> Result<&RealVector> {
        self.y
            .as_ref()
            .ok_or_else(|| invalid("state has no lower-level variable"))
    }
}

/// What one step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub g_x: RealVector,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub eta_x: f64,
    pub eta_y: Option<f64>,
    pub step_norm: f64,
    pub momentum_norm: f64,
}

/// Minimax-specific switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimaxOptions {
    /// Take `g_y` from the same sample as `g_x` (otherwise a fresh draw).
    pub shared_xi: bool,
    /// Replace `|g_x - g~_x|^2` with `|g_x,t - g_x,t-1|^2` (0 at t = 1).
    pub previous_gradient_diff: bool,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self {
            shared_xi: true,
            previous_gradient_diff: false,
        }
    }
}

/// Momentum blend (or `m_1 = g_1`) followed by the normalized step.
fn upper_update(state: &mut OptimizerState, g: &RealVector) -> Result<(f64, f64, f64, f64, f64)> {
    let beta = state.schedule.beta_t()?;
    let m = match &state.m {
        None => g.clone(),
        Some(prev) => momentum_update(prev, g, beta)?,
    };
    let eta = state.schedule.eta_x_t()?;
    let m_norm = m.norm();
    let mut step_norm = 0.0;
    if m_norm > 0.0 {
        let next = state.x.add_scaled(-eta / m_norm, &m)?;
        step_norm = next.sub(&state.x)?.norm();
        state.x = next;
    }
    state.m = Some(m);
    Ok((beta, eta, m_norm, step_norm, state.schedule.alpha_t()?))
}

/// One iteration of adaptive normalized SGD with momentum.
pub fn ada_nsgdm_step(
    state: &mut OptimizerState,
    problem: &dyn StochasticObjective,
    streams: &mut OracleStreams,
) -> Result<StepInfo> {
    let g = problem.sample_grad(&state.x, &mut streams.upper)?;
    let g_tilde = problem.sample_grad(&state.x, &mut streams.upper_tilde)?;
    state.schedule.ingest(g.sub(&g_tilde)?.norm_sq(), 0.0)?;
    let (beta, eta, momentum_norm, step_norm, alpha) = upper_update(state, &g)?;
    state.t += 1;
    Ok(StepInfo {
        alpha_prime: state.schedule.alpha_prime_t()?,
        g_x: g,
        alpha,
        beta,
        eta_x: eta,
        eta_y: None,
        step_norm,
        momentum_norm,
    })
}

/// One iteration of the adaptive minimax method: normalized momentum
/// descent on `x`, AdaGrad-Norm ascent on `y`.
pub fn ada_minimax_step(
    state: &mut OptimizerState,
    problem: &dyn MinimaxProblem,
    opts: MinimaxOptions,
    streams: &mut OracleStreams,
) -> Result<StepInfo> {
    let y = state.y()?.clone();
    let (g_x, g_y_shared) = problem.sample_grads(&state.x, &y, &mut streams.upper)?;
    let g_y = if opts.shared_xi {
        g_y_shared
    } else {
        problem.sample_grads(&state.x, &y, &mut streams.lower)?.1
    };
    let diff_sq = if opts.previous_gradient_diff {
        match &state.prev_gx {
            Some(prev) => g_x.sub(prev)?.norm_sq(),
            None => 0.0,
        }
    } else {
        let (g_tilde, _) = problem.sample_grads(&state.x, &y, &mut streams.upper_tilde)?;
        g_x.sub(&g_tilde)?.norm_sq()
    };
    state.schedule.ingest(diff_sq, g_y.norm_sq())?;
    let eta_y = state.schedule.eta_y_t()?;
    let (beta, eta, momentum_norm, step_norm, alpha) = upper_update(state, &g_x)?;
    state.y = Some(y.add_scaled(eta_y, &g_y)?);
    state.prev_gx = Some(g_x.clone());
    state.t += 1;
    Ok(StepInfo {
        alpha_prime: state.schedule.alpha_prime_t()?,
        g_x,
        alpha,
        beta,
        eta_x: eta,
        eta_y: Some(eta_y),
        step_norm,
        momentum_norm,
    })
}

/// One iteration of the adaptive bilevel method: two independent Neumann
/// hypergradient samples drive the momentum weight; `y` takes an
/// AdaGrad-Norm descent step on `g`.
pub fn ada_bio_step(
    state: &mut OptimizerState,
    problem: &dyn BilevelProblem,
    cfg: &NeumannConfig,
    streams: &mut OracleStreams,
) -> Result<StepInfo> {
    let y = state.y()?.clone();
    let g_x = hypergrad_estimate(problem, &state.x, &y, cfg, &mut streams.upper)?;
    let g_tilde = hypergrad_estimate(problem, &state.x, &y, cfg, &mut streams.upper_tilde)?;
    let g_y = problem.sample_lower_grad(&state.x, &y, &mut streams.lower)?;
    state.schedule.ingest(g_x.sub(&g_tilde)?.norm_sq(), g_y.norm_sq())?;
    let eta_y = state.schedule.eta_y_t()?;
    let (beta, eta, momentum_norm, step_norm, alpha) = upper_update(state, &g_x)?;
    state.y = Some(y.add_scaled(-eta_y, &g_y)?);
    state.t += 1;
    Ok(StepInfo {
        alpha_prime: state.schedule.alpha_prime_t()?,
        g_x,
        alpha,
        beta,
        eta_x: eta,
        eta_y: Some(eta_y),
        step_norm,
        momentum_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    AdaNsgdm,
    AdaMinimax,
    AdaBio,
    AdaMinimaxPractical,
    Sgda,
    Tiada,
    AdagradNormGda,
    NsgdmFixed,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Self::AdaNsgdm,
        Self::AdaMinimax,
        Self::AdaBio,
        Self::AdaMinimaxPractical,
        Self::Sgda,
        Self::Tiada,
        Self::AdagradNormGda,
        Self::NsgdmFixed,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Self::AdaNsgdm => "ada-nsgdm",
            Self::AdaMinimax => "ada-minimax",
            Self::AdaBio => "ada-bio",
            Self::AdaMinimaxPractical => "ada-minimax-practical",
            Self::Sgda => "sgda",
            Self::Tiada => "tiada",
            Self::AdagradNormGda => "adagradnorm-gda",
            Self::NsgdmFixed => "nsgdm-fixed",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.id() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy)]
pub enum ProblemRef<'a> {
    Objective(&'a dyn StochasticObjective),
    Minimax(&'a dyn MinimaxProblem),
    Bilevel(&'a dyn BilevelProblem),
}

/// Everything `run` needs besides the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub algorithm: Algorithm,
    pub iterations: u64,
    pub seed: u64,
    pub alpha: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    pub gamma: f64,
    pub neumann_terms: usize,
    pub shared_xi: bool,
    pub x0: RealVector,
    pub y0: Option<RealVector>,
    pub baseline: BaselineConfig,
}

fn truth<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::MissingTruth(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

enum Driver<'a> {
    Single {
        state: OptimizerState,
        problem: Box<dyn StochasticObjective + 'a>,
    },
    Fixed {
        state: NsgdmFixedState,
        problem: Box<dyn StochasticObjective + 'a>,
    },
    Minimax {
        state: OptimizerState,
        problem: &'a dyn MinimaxProblem,
        opts: MinimaxOptions,
    },
    Bilevel {
        state: OptimizerState,
        problem: &'a dyn BilevelProblem,
        cfg: NeumannConfig,
    },
    Gda {
        state: GdaState,
        problem: &'a dyn MinimaxProblem,
    },
}

struct Observed {
    grad_phi_norm: Option<f64>,
    dist_y: Option<f64>,
}

struct StepRow {
    alpha_t: Option<f64>,
    alpha_prime_t: Option<f64>,
    eta_x_t: Option<f64>,
    eta_y_t: Option<f64>,
    sum_diff_sq: Option<f64>,
    sum_lower_sq: Option<f64>,
    step_norm: f64,
    momentum_norm: Option<f64>,
}

fn objective_for<'a>(problem: ProblemRef<'a>, algorithm: Algorithm) -> Result<Box<dyn StochasticObjective + 'a>> {
    match problem {
        ProblemRef::Objective(p) => Ok(Box::new(ObjectiveRef(p))),
        ProblemRef::Minimax(p) => Ok(Box::new(PhiObjective::new(p))),
        ProblemRef::Bilevel(_) => Err(Error::Config(format!("{algorithm} does not run on bilevel problems"))),
    }
}

struct ObjectiveRef<'a>(&'a dyn StochasticObjective);

impl StochasticObjective for ObjectiveRef<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn grad(&self, x: &RealVector) -> Result<RealVector> {
        self.0.grad(x)
    }
    fn noise(&self) -> crate::numeric::NoiseModel {
        self.0.noise()
    }
    fn value(&self, x: &RealVector) -> Result<f64> {
        self.0.value(x)
    }
    fn sample_grad(&self, x: &RealVector, rng: &mut RngStream) -> Result<RealVector> {
        self.0.sample_grad(x, rng)
    }
}

impl<'a> Driver<'a> {
    fn new(problem: ProblemRef<'a>, s: &RunSettings) -> Result<Self> {
        let y0 = || -> Result<RealVector> {
            let dim_y = match problem {
                ProblemRef::Minimax(p) => p.dim_y(),
                ProblemRef::Bilevel(p) => p.dim_y(),
                ProblemRef::Objective(_) => 0,
            };
            match &s.y0 {
                Some(y) => Ok(y.clone()),
                None => Ok(RealVector::zeros(dim_y.max(1))),
            }
        };
        let hier = || AdaScheduleState::new(s.alpha, s.eta_x, s.eta_y, s.gamma, StepRule::Hierarchical);
        Ok(match (s.algorithm, problem) {
            (Algorithm::AdaNsgdm, _) => Driver::Single {
                state: OptimizerState::single_level(s.x0.clone(), s.alpha, s.eta_x)?,
                problem: objective_for(problem, s.algorithm)?,
            },
            (Algorithm::NsgdmFixed, _) => Driver::Fixed {
                state: NsgdmFixedState::new(s.x0.clone()),
                problem: objective_for(problem, s.algorithm)?,
            },
            (Algorithm::AdaMinimax, ProblemRef::Minimax(p)) => Driver::Minimax {
                state: OptimizerState::hierarchical(s.x0.clone(), y0()?, hier()?)?,
                problem: p,
                opts: MinimaxOptions {
                    shared_xi: s.shared_xi,
                    previous_gradient_diff: false,
                },
            },
            (Algorithm::AdaMinimaxPractical, ProblemRef::Minimax(p)) => Driver::Minimax {
                state: OptimizerState::hierarchical(
                    s.x0.clone(),
                    y0()?,
                    hier()?.with_fixed_horizon(s.iterations.max(1))?,
                )?,
                problem: p,
                opts: MinimaxOptions {
                    shared_xi: s.shared_xi,
                    previous_gradient_diff: true,
                },
            },
            (Algorithm::AdaBio, ProblemRef::Bilevel(p)) => Driver::Bilevel {
                state: OptimizerState::hierarchical(s.x0.clone(), y0()?, hier()?)?,
                problem: p,
                cfg: NeumannConfig::for_problem(p, s.neumann_terms)?,
            },
            (Algorithm::Sgda | Algorithm::Tiada | Algorithm::AdagradNormGda, ProblemRef::Minimax(p)) => Driver::Gda {
                state: GdaState::new(s.x0.clone(), y0()?),
                problem: p,
            },
            (a, _) => return Err(Error::Config(format!("{a} is not defined for this problem kind"))),
        })
    }

    fn x(&self) -> &RealVector {
        match self {
            Driver::Single { state, .. } | Driver::Minimax { state, .. } | Driver::Bilevel { state, .. } => &state.x,
            Driver::Fixed { state, .. } => &state.x,
            Driver::Gda { state, .. } => &state.x,
        }
    }

    fn y(&self) -> Option<&RealVector> {
        match self {
            Driver::Minimax { state, .. } | Driver::Bilevel { state, .. } => state.y.as_ref(),
            Driver::Gda { state, .. } => Some(&state.y),
            _ => None,
        }
    }

    fn observe(&self, problem: ProblemRef<'_>) -> Result<Observed> {
        let x = self.x();
        let (grad_phi, y_star) = match problem {
            ProblemRef::Objective(p) => (truth(p.grad(x))?, None),
            ProblemRef::Minimax(p) => (truth(p.grad_phi(x))?, truth(p.y_star(x))?),
            ProblemRef::Bilevel(p) => (truth(p.grad_phi(x))?, truth(p.y_star(x))?),
        };
        let dist_y = match (self.y(), y_star) {
            (Some(y), Some(ys)) => Some(y.sub(&ys)?.norm()),
            _ => None,
        };
        Ok(Observed {
            grad_phi_norm: grad_phi.map(|g| g.norm()),
            dist_y,
        })
    }

    fn step(&mut self, streams: &mut OracleStreams, s: &RunSettings) -> Result<StepRow> {
        let ada_row = |info: StepInfo, state: &OptimizerState| StepRow {
            alpha_t: Some(info.alpha),
            alpha_prime_t: Some(info.alpha_prime),
            eta_x_t: Some(info.eta_x),
            eta_y_t: info.eta_y,
            sum_diff_sq: Some(state.schedule.sum_diff_sq()),
            sum_lower_sq: Some(state.schedule.sum_lower_sq()),
            step_norm: info.step_norm,
            momentum_norm: Some(info.momentum_norm),
        };
        match self {
            Driver::Single { state, problem } => {
                let info = ada_nsgdm_step(state, problem.as_ref(), streams)?;
                Ok(ada_row(info, state))
            }
            Driver::Minimax { state, problem, opts } => {
                let info = ada_minimax_step(state, *problem, *opts, streams)?;
                Ok(ada_row(info, state))
            }
            Driver::Bilevel { state, problem, cfg } => {
                let info = ada_bio_step(state, *problem, cfg, streams)?;
                Ok(ada_row(info, state))
            }
            Driver::Fixed { state, problem } => {
                let info = baselines::nsgdm_fixed_step(state, problem.as_ref(), &s.baseline, streams)?;
                Ok(StepRow {
                    alpha_t: Some(1.0 - s.baseline.fixed_beta),
                    alpha_prime_t: None,
                    eta_x_t: Some(info.eta_x),
                    eta_y_t: None,
                    sum_diff_sq: None,
                    sum_lower_sq: None,
                    step_norm: info.step_norm,
                    momentum_norm: Some(info.momentum_norm),
                })
            }
            Driver::Gda { state, problem } => {
                let info = match s.algorithm {
                    Algorithm::Sgda => baselines::sgda_step(state, *problem, &s.baseline, &mut streams.upper)?,
                    Algorithm::Tiada => baselines::tiada_step(state, *problem, &s.baseline, &mut streams.upper)?,
                    _ => baselines::adagradnorm_gda_step(state, *problem, &s.baseline, &mut streams.upper)?,
                };
                Ok(StepRow {
                    alpha_t: None,
                    alpha_prime_t: None,
                    eta_x_t: Some(info.eta_x),
                    eta_y_t: Some(info.eta_y),
                    sum_diff_sq: None,
                    sum_lower_sq: Some(state.v_y),
                    step_norm: info.step_norm,
                    momentum_norm: None,
                })
            }
        }
    }
}

/// Runs `settings.iterations` steps and records one row per iteration.
/// Columns that need missing analytic truth are left empty.
pub fn run(problem: ProblemRef<'_>, settings: &RunSettings) -> Result<RunTrace> {
    let started = Instant::now();
    let mut driver = Driver::new(problem, settings)?;
    let mut streams = OracleStreams::new(settings.seed);
    let mut records = Vec::with_capacity(settings.iterations as usize);
    let mut grad_sum = 0.0;
    let mut all_grads = true;
    for t in 1..=settings.iterations {
        let obs = driver.observe(problem)?;
        let row = driver.step(&mut streams, settings)?;
        let avg = match obs.grad_phi_norm {
            Some(g) if all_grads => {
                grad_sum += g;
                Some(grad_sum / t as f64)
            }
            _ => {
                all_grads = false;
                None
            }
        };
        records.push(TraceRecord {
            t,
            grad_phi_norm: obs.grad_phi_norm,
            avg_grad_norm: avg,
            alpha_t: row.alpha_t,
            alpha_prime_t: row.alpha_prime_t,
            eta_x_t: row.eta_x_t,
            eta_y_t: row.eta_y_t,
            dist_y: obs.dist_y,
            sum_diff_sq: row.sum_diff_sq,
            sum_lower_sq: row.sum_lower_sq,
            step_norm: row.step_norm,
            momentum_norm: row.momentum_norm,
        });
    }
    Ok(RunTrace {
        records,
        meta: TraceMeta {
            algorithm: settings.algorithm.id().to_owned(),
            seed: settings.seed,
            config_echo: String::new(),
            wall_time: started.elapsed(),
            initial_x: Some(settings.x0.clone()),
            final_x: Some(driver.x().clone()),
            final_y: driver.y().cloned(),
        },
    })
}
