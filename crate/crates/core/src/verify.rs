//! Numerical checks of the analysis: the momentum-weight sandwich, the
//! error recursion, AdaGrad-Norm summation bounds, the Neumann operator
//! bound, hypergradient bias and the lower-level tracking rate.
//!
//! Every check returns a [`CheckReport`] with a pass flag and a margin
//! (bound minus measured value; negative means violated).

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::baselines::BaselineConfig;
use crate::error::{invalid, Error, Result};
use crate::harness::trace::RunTrace;
use crate::hypergradient::{hypergrad_estimate, neumann_inverse_apply, recommended_n, NeumannConfig};
use crate::numeric::{NoiseModel, RealVector, RngStream};
use crate::optimizers::{run, Algorithm, ProblemRef, RunSettings};
use crate::problems::linalg::{random_spd, spectral_norm};
use crate::problems::{
    make_onedim_minimax, make_quadratic_bilevel_with_noise, make_quadratic_objective, BilevelNoise, BilevelProblem,
    OneDimMinimax, QuadraticBilevel,
};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Smallest slack observed (bound minus value).
    pub margin: f64,
    /// Required pass fraction for probabilistic checks.
    pub target_fraction: Option<f64>,
    pub observed_fraction: Option<f64>,
    pub detail: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} margin={:.6e}", self.name, self.margin)?;
        if let (Some(target), Some(obs)) = (self.target_fraction, self.observed_fraction) {
            write!(f, " fraction={obs:.4} target={target:.4}")?;
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Constants of the high-probability momentum-weight bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub delta: f64,
    pub horizon: u64,
}

impl BoundParams {
    pub fn new(sigma_lo: f64, sigma_hi: f64, delta: f64, horizon: u64) -> Result<Self> {
        if !(sigma_lo >= 0.0 && sigma_hi.is_finite()) {
            return Err(invalid("noise bounds must be finite and >= 0"));
        }
        if sigma_hi < sigma_lo {
            return Err(invalid(format!("sigma_hi = {sigma_hi} < sigma_lo = {sigma_lo}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        if horizon == 0 {
            return Err(invalid("horizon must be positive"));
        }
        Ok(Self {
            sigma_lo,
            sigma_hi,
            delta,
            horizon,
        })
    }

    pub fn from_noise(noise: &NoiseModel, delta: f64, horizon: u64) -> Result<Self> {
        let (lo, hi) = noise
            .norm_bounds()
            .ok_or_else(|| invalid(format!("noise model {noise} has no almost-sure norm bounds")))?;
        Self::new(lo, hi, delta, horizon)
    }

    /// `sigma_hi / sigma_lo`, with `0 / 0 = 1`.
    pub fn kappa_sigma(&self) -> f64 {
        if self.sigma_hi == 0.0 {
            1.0
        } else {
            self.sigma_hi / self.sigma_lo
        }
    }

    /// `sigma_lo^2 / (4 sigma_hi^2 - 2 sigma_lo^2)`; `None` when both are 0.
    pub fn c0(&self) -> Option<f64> {
        if self.sigma_hi == 0.0 {
            return None;
        }
        let (lo2, hi2) = (self.sigma_lo.powi(2), self.sigma_hi.powi(2));
        Some(lo2 / (4.0 * hi2 - 2.0 * lo2))
    }

    /// `A_T = 16 log(60 log(6T) / delta)`.
    pub fn a_t(&self) -> f64 {
        16.0 * (60.0 * (6.0 * self.horizon as f64).ln() / self.delta).ln()
    }

    /// `B_T = 16 log^2(60 log(6T) / delta) = A_T^2 / 16`.
    pub fn b_t(&self) -> f64 {
        let l = (60.0 * (6.0 * self.horizon as f64).ln() / self.delta).ln();
        16.0 * l * l
    }
}

/// `t0 = max{2, ceil((A_T + c0 sqrt(B_T)) / c0^2)}`; 2 when there is no noise.
pub fn compute_t0(params: &BoundParams) -> Result<u64> {
    let Some(c0) = params.c0() else {
        return Ok(2);
    };
    if c0 <= 0.0 {
        return Err(invalid("t0 is undefined when sigma_lo = 0 < sigma_hi"));
    }
    let raw = (params.a_t() + c0 * params.b_t().sqrt()) / (c0 * c0);
    Ok((raw.ceil() as u64).max(2))
}

fn sum_diff_column(trace: &RunTrace) -> Result<Vec<f64>> {
    trace
        .records
        .iter()
        .map(|r| r.sum_diff_sq.ok_or(Error::MissingTruth("sum_diff_sq column")))
        .collect()
}

/// Deterministic half: `sum_diff_sq_t <= 4 sigma_hi^2 t` for every seed and
/// `t`. Probabilistic half: fraction of seeds with `sum_diff_sq_t >=
/// sigma_lo^2 t` for all `t` in `[t0, T]`, against a 95% target.
pub fn check_momentum_sandwich(traces: &[RunTrace], noise: &NoiseModel, params: &BoundParams) -> Result<CheckReport> {
    let (lo, hi) = noise
        .norm_bounds()
        .ok_or_else(|| invalid(format!("sandwich check needs bounded noise, got {noise}")))?;
    if lo != params.sigma_lo || hi != params.sigma_hi {
        return Err(invalid(format!(
            "trace noise bounds ({lo}, {hi}) differ from check parameters ({}, {})",
            params.sigma_lo, params.sigma_hi
        )));
    }
    let columns: Vec<Vec<f64>> = traces.iter().map(sum_diff_column).collect::<Result<_>>()?;
    let cap = 4.0 * hi * hi;
    let mut upper_ok = true;
    let mut margin = f64::INFINITY;
    for col in &columns {
        for (i, &s) in col.iter().enumerate() {
            let bound = cap * (i + 1) as f64;
            upper_ok &= s <= bound;
            margin = margin.min(bound - s);
        }
    }
    if columns.iter().all(Vec::is_empty) {
        margin = 0.0;
    }
    let name = "momentum-sandwich".to_owned();
    if noise.is_zero() || lo == 0.0 {
        return Ok(CheckReport {
            name,
            passed: upper_ok,
            margin,
            target_fraction: None,
            observed_fraction: None,
            detail: "lower bound skipped (sigma_lo = 0)".into(),
        });
    }
    let t0 = compute_t0(params)?;
    let fraction = lower_bound_fraction(traces, lo, t0)?;
    let vacuous = t0 > params.horizon;
    let target = 0.95;
    Ok(CheckReport {
        name,
        passed: upper_ok && fraction >= target,
        margin,
        target_fraction: Some(target),
        observed_fraction: Some(fraction),
        detail: format!(
            "t0={t0}, T={}{}",
            params.horizon,
            if vacuous { ", lower window empty" } else { "" }
        ),
    })
}

/// Fraction of traces with `sum_diff_sq_t >= sigma_lo^2 t` for every
/// recorded `t >= from`.
pub fn lower_bound_fraction(traces: &[RunTrace], sigma_lo: f64, from: u64) -> Result<f64> {
    if traces.is_empty() {
        return Ok(1.0);
    }
    let floor = sigma_lo * sigma_lo;
    let mut ok = 0usize;
    for trace in traces {
        let col = sum_diff_column(trace)?;
        let holds = trace
            .records
            .iter()
            .zip(&col)
            .filter(|(r, _)| r.t >= from)
            .all(|(r, &s)| s >= floor * r.t as f64);
        ok += usize::from(holds);
    }
    Ok(ok as f64 / traces.len() as f64)
}

/// Ada-NSGDM traces on a quadratic with the given noise, one per seed, run in
/// parallel.
pub fn sandwich_traces(dim: usize, noise: NoiseModel, horizon: u64, seeds: &[u64]) -> Result<Vec<RunTrace>> {
    let problem = make_quadratic_objective(dim, 0.5, 2.0, 7)?.with_noise(noise);
    let x0 = RealVector::new(vec![1.0; dim])?;
    seeds
        .par_iter()
        .map(|&seed| {
            let settings = RunSettings {
                algorithm: Algorithm::AdaNsgdm,
                iterations: horizon,
                seed,
                alpha: 1.0,
                eta_x: 0.5,
                eta_y: 1.0,
                gamma: 1.0,
                neumann_terms: 1,
                shared_xi: true,
                x0: x0.clone(),
                y0: None,
                baseline: BaselineConfig::default(),
            };
            run(ProblemRef::Objective(&problem), &settings)
        })
        .collect()
}

/// Runs the sandwich check over `seeds` in chunks so that only a slice of
/// the traces is held in memory at once.
pub fn sandwich_report(dim: usize, noise: NoiseModel, horizon: u64, seeds: &[u64], delta: f64) -> Result<CheckReport> {
    let params = BoundParams::from_noise(&noise, delta, horizon)?;
    let mut merged: Option<CheckReport> = None;
    let mut passing = 0.0;
    for chunk in seeds.chunks(50) {
        let traces = sandwich_traces(dim, noise, horizon, chunk)?;
        let r = check_momentum_sandwich(&traces, &noise, &params)?;
        passing += r.observed_fraction.unwrap_or(1.0) * chunk.len() as f64;
        merged = Some(match merged {
            None => r,
            Some(m) => CheckReport {
                passed: m.passed && r.passed,
                margin: m.margin.min(r.margin),
                ..m
            },
        });
    }
    let mut report = merged.ok_or_else(|| invalid("no seeds"))?;
    if let (Some(target), Some(_)) = (report.target_fraction, report.observed_fraction) {
        let fraction = passing / seeds.len() as f64;
        let upper_ok = report.margin >= 0.0;
        report.observed_fraction = Some(fraction);
        report.passed = upper_ok && fraction >= target;
    }
    report.detail = format!("{}, {} seeds", report.detail, seeds.len());
    Ok(report)
}

/// Builds `eps_hat_t` by the step recursion
/// `eps_hat_t = beta_t eps_hat_{t-1} + alpha_t eps_t + beta_t S_t`
/// (`eps_hat_1 = eps_1`) and by the unrolled closed form, and returns the
/// largest difference norm. Index 0 holds `t = 1`; `shifts[0]` is unused.
pub fn check_recursion_identity(
    betas: &[f64],
    alphas: &[f64],
    epsilons: &[RealVector],
    shifts: &[RealVector],
) -> Result<f64> {
    let n = betas.len();
    if alphas.len() != n || epsilons.len() != n || shifts.len() != n {
        return Err(invalid("recursion inputs must share one length"));
    }
    for (b, a) in betas.iter().zip(alphas) {
        if (a + b - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("alpha + beta must equal 1, got {a} + {b}")));
        }
    }
    if n == 0 {
        return Ok(0.0);
    }
    // prod_{j=a}^{b} beta_j with 1-based indices, empty product 1
    let prod = |a: usize, b: usize| -> f64 { (a..=b).map(|j| betas[j - 1]).product() };

    let mut worst: f64 = 0.0;
    let mut rec = epsilons[0].clone();
    for t in 2..=n {
        rec = rec
            .scale(betas[t - 1])?
            .add_scaled(alphas[t - 1], &epsilons[t - 1])?
            .add_scaled(betas[t - 1], &shifts[t - 1])?;
        let mut closed = epsilons[0].scale(prod(2, t))?;
        for k in 2..=t {
            closed = closed
                .add_scaled(prod(k + 1, t) * alphas[k - 1], &epsilons[k - 1])?
                .add_scaled(prod(k, t), &shifts[k - 1])?;
        }
        worst = worst.max(rec.sub(&closed)?.norm());
    }
    Ok(worst)
}

/// With `G_t = sqrt(G0^2 + sum_{s<=t} |g_s|^2)`, checks
/// `sum |g_t|^2 / G_t <= 2 sqrt(sum |g_t|^2)` and
/// `sum |g_t|^2 / G_t^2 <= 2 log(G_T / G0)`.
pub fn check_adagrad_sum_lemma(norms_sq: &[f64], g0: f64) -> Result<CheckReport> {
    if !(g0 > 0.0 && g0.is_finite()) {
        return Err(invalid(format!("G0 must be positive, got {g0}")));
    }
    if norms_sq.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("squared norms must be finite and >= 0"));
    }
    let mut acc = g0 * g0;
    let (mut lhs1, mut lhs2, mut total) = (0.0, 0.0, 0.0);
    for &v in norms_sq {
        acc += v;
        total += v;
        lhs1 += v / acc.sqrt();
        lhs2 += v / acc;
    }
    let rhs1 = 2.0 * total.sqrt();
    let rhs2 = 2.0 * (acc.sqrt() / g0).ln();
    let slack = |rhs: f64| 1e-12 * rhs.abs();
    let passed = lhs1 <= rhs1 + slack(rhs1) && lhs2 <= rhs2 + slack(rhs2);
    Ok(CheckReport {
        name: "adagrad-sum".into(),
        passed,
        margin: (rhs1 - lhs1).min(rhs2 - lhs2),
        target_fraction: None,
        observed_fraction: None,
        detail: format!("first {lhs1:.6e} <= {rhs1:.6e}, second {lhs2:.6e} <= {rhs2:.6e}"),
    })
}

/// Dense `H_N` obtained by applying the series to the basis vectors.
pub fn neumann_matrix(problem: &dyn BilevelProblem, cfg: &NeumannConfig, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let (dx, dy) = (problem.dim_x(), problem.dim_y());
    let x = RealVector::zeros(dx);
    let y = RealVector::zeros(dy);
    let mut out = DMatrix::zeros(dy, dy);
    for i in 0..dy {
        let mut e = vec![0.0; dy];
        e[i] = 1.0;
        let col = neumann_inverse_apply(problem, &x, &y, &RealVector::new(e)?, cfg, rng)?;
        out.set_column(i, &col.to_dvector());
    }
    Ok(out)
}

fn lower_level_instance(h: DMatrix<f64>, mu: f64, l: f64) -> Result<QuadraticBilevel> {
    let d = h.nrows();
    QuadraticBilevel::from_parts(
        DMatrix::zeros(1, 1),
        nalgebra::DVector::zeros(1),
        DMatrix::zeros(1, d),
        nalgebra::DVector::zeros(d),
        h,
        DMatrix::zeros(d, 1),
        mu,
        l,
        BilevelNoise::none(),
    )
}

/// For `trials` random SPD matrices (dimension 1..=`max_dim`, spectrum
/// pinned to `[mu, l]`) and every `N` in `terms`: `|H_N - A^{-1}| <= (1/mu)
/// (1 - mu/l)^N` and `|H_N| <= 1/mu`, both with `1e-10` slack.
pub fn check_neumann_bound(
    mu: f64,
    l: f64,
    terms: std::ops::RangeInclusive<usize>,
    trials: usize,
    max_dim: usize,
    seed: u64,
) -> Result<CheckReport> {
    if !(mu > 0.0 && l >= mu && l.is_finite()) {
        return Err(invalid(format!("need 0 < mu <= l, got {mu}, {l}")));
    }
    if max_dim == 0 || *terms.start() == 0 {
        return Err(invalid("dimensions and term counts must be positive"));
    }
    let results: Vec<Result<(f64, bool)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = RngStream::new(seed, &format!("neumann-check/{trial}"));
            let dim = 1 + rng.index(max_dim);
            let a = random_spd(dim, mu, l, &mut rng)?;
            let a_inv = a.clone().cholesky().ok_or(Error::SingularHessian)?.inverse();
            let problem = lower_level_instance(a, mu, l)?;
            let mut margin = f64::INFINITY;
            let mut ok = true;
            for n in terms.clone() {
                let cfg = NeumannConfig::new(n, mu, l)?;
                let h = neumann_matrix(&problem, &cfg, &mut rng)?;
                let err = spectral_norm(&(&h - &a_inv));
                let bound = cfg.operator_error_bound();
                let norm = spectral_norm(&h);
                ok &= err <= bound + 1e-10 && norm <= 1.0 / mu + 1e-10;
                margin = margin.min(bound - err).min(1.0 / mu - norm);
            }
            Ok((margin, ok))
        })
        .collect();
    let mut margin = f64::INFINITY;
    let mut passed = true;
    for r in results {
        let (m, ok) = r?;
        margin = margin.min(m);
        passed &= ok;
    }
    Ok(CheckReport {
        name: "neumann".into(),
        passed,
        margin,
        target_fraction: None,
        observed_fraction: None,
        detail: format!("{trials} matrices, N in {}..={}", terms.start(), terms.end()),
    })
}

/// Monte-Carlo bias of the hypergradient estimator at `(x, y*(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub bias_norm: f64,
    pub bound: f64,
    /// Standard error of the sample mean (norm of the per-coordinate SEs).
    pub std_error: f64,
    pub samples: usize,
    pub passed: bool,
}

impl BiasReport {
    pub fn to_check(&self) -> CheckReport {
        CheckReport {
            name: "hypergrad-bias".into(),
            passed: self.passed,
            margin: self.bound + 5.0 * self.std_error - self.bias_norm,
            target_fraction: None,
            observed_fraction: None,
            detail: format!(
                "bias {:.3e}, bound {:.3e}, SE {:.3e}, {} samples",
                self.bias_norm, self.bound, self.std_error, self.samples
            ),
        }
    }
}

/// Compares the mean of `samples` estimates with `grad Phi(x)`. The bound is
/// `(l_g1 l_f0 / mu_g)(1 - mu_g/l_g1)^N` with `l_f0 = |grad_y f(x, y*(x))|`.
pub fn check_hypergrad_bias(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    cfg: &NeumannConfig,
    samples: usize,
    seed: u64,
) -> Result<BiasReport> {
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let y = problem.y_star(x)?;
    let truth = problem.grad_phi(x)?;
    let l_f0 = problem.grad_y_f(x, &y)?.norm();
    let bound = cfg.l_g1 * l_f0 / cfg.mu_g * (1.0 - cfg.mu_g / cfg.l_g1).powi(cfg.terms as i32);

    let dim = x.dim();
    let chunks = samples.div_ceil(1000);
    let partial: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::new(seed, &format!("bias/{c}"));
            let count = (samples - c * 1000).min(1000);
            let mut sum = vec![0.0; dim];
            let mut sum_sq = vec![0.0; dim];
            for _ in 0..count {
                let e = hypergrad_estimate(problem, x, &y, cfg, &mut rng)?.sub(&truth)?;
                for (i, v) in e.as_slice().iter().enumerate() {
                    sum[i] += v;
                    sum_sq[i] += v * v;
                }
            }
            Ok((sum, sum_sq))
        })
        .collect();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for p in partial {
        let (s, q) = p?;
        for i in 0..dim {
            sum[i] += s[i];
            sum_sq[i] += q[i];
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let bias_norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    let std_error = if samples > 1 {
        let var: f64 = (0..dim).map(|i| (sum_sq[i] - n * mean[i] * mean[i]).max(0.0) / (n - 1.0)).sum();
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(BiasReport {
        bias_norm,
        bound,
        std_error,
        samples,
        passed: bias_norm <= bound + 5.0 * std_error + 1e-12 * truth.norm().max(1.0),
    })
}

/// Least-squares slope of `log ys` against `log ts`.
pub fn log_log_slope(ts: &[f64], ys: &[f64]) -> Result<f64> {
    if ts.len() != ys.len() || ts.len() < 2 {
        return Err(invalid("slope fit needs two or more paired points"));
    }
    if ts.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(invalid("slope fit needs positive values"));
    }
    let lx: Vec<f64> = ts.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("slope fit needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}

/// Fits the growth exponent of `sum_{k<=t} |y_k - y*(x_k)|^2` (averaged over
/// traces) on `t` in `[from, T]` and asserts it lies in `[0.3, 0.7]`.
pub fn check_lower_level_rate(traces: &[RunTrace], from: u64) -> Result<CheckReport> {
    let horizon = traces
        .iter()
        .map(RunTrace::len)
        .min()
        .ok_or_else(|| invalid("no traces"))?;
    let mut cumulative = vec![0.0; horizon];
    for trace in traces {
        let mut acc = 0.0;
        for (i, r) in trace.records.iter().take(horizon).enumerate() {
            let d = r.dist_y.ok_or(Error::MissingTruth("dist_y column"))?;
            acc += d * d;
            cumulative[i] += acc / traces.len() as f64;
        }
    }
    let start = from.max(1) as usize;
    if start >= horizon {
        return Err(invalid(format!("fit window starts at {start} beyond T = {horizon}")));
    }
    let ts: Vec<f64> = (start..=horizon).map(|t| t as f64).collect();
    let ys: Vec<f64> = cumulative[start - 1..].to_vec();
    let slope = log_log_slope(&ts, &ys)?;
    Ok(CheckReport {
        name: "lower-level-rate".into(),
        passed: (0.3..=0.7).contains(&slope),
        margin: (slope - 0.3).min(0.7 - slope),
        target_fraction: None,
        observed_fraction: None,
        detail: format!("slope {slope:.4} over t in [{start}, {horizon}]"),
    })
}

/// Ada-Minimax traces on the one-dimensional problem with annulus noise.
pub fn lower_level_traces(noise: NoiseModel, horizon: u64, seeds: &[u64]) -> Result<Vec<RunTrace>> {
    let problem: OneDimMinimax = make_onedim_minimax(noise);
    seeds
        .par_iter()
        .map(|&seed| {
            let settings = RunSettings {
                algorithm: Algorithm::AdaMinimax,
                iterations: horizon,
                seed,
                alpha: 1.0,
                eta_x: 1.0,
                eta_y: 1.0,
                gamma: 1.0,
                neumann_terms: 1,
                shared_xi: true,
                x0: RealVector::scalar(2.0)?,
                y0: Some(RealVector::scalar(0.0)?),
                baseline: BaselineConfig::default(),
            };
            run(ProblemRef::Minimax(&problem), &settings)
        })
        .collect()
}

/// Names accepted by [`run_named_check`].
pub const CHECK_NAMES: [&str; 6] = ["sandwich", "recursion", "adagrad", "neumann", "bias", "lower-rate"];

/// Runs one check at desk-scale default settings.
pub fn run_named_check(name: &str, seed: u64) -> Result<CheckReport> {
    match name {
        "sandwich" => {
            let seeds: Vec<u64> = (0..200).map(|s| seed.wrapping_add(s)).collect();
            sandwich_report(10, NoiseModel::annulus(1.0, 2.0)?, 10_000, &seeds, 0.01)
        }
        "recursion" => {
            let mut rng = RngStream::new(seed, "verify/recursion");
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let (betas, alphas, eps, shifts) = random_recursion_inputs(100, 5, &mut rng)?;
                worst = worst.max(check_recursion_identity(&betas, &alphas, &eps, &shifts)?);
            }
            Ok(CheckReport {
                name: "recursion".into(),
                passed: worst <= 1e-8,
                margin: 1e-8 - worst,
                target_fraction: None,
                observed_fraction: None,
                detail: format!("max deviation {worst:.3e} over 100 sequences"),
            })
        }
        "adagrad" => {
            let mut rng = RngStream::new(seed, "verify/adagrad");
            let mut worst: Option<CheckReport> = None;
            for _ in 0..100 {
                let scale = 10f64.powf(rng.uniform(-3.0, 3.0));
                let seq: Vec<f64> = (0..10_000).map(|_| scale * rng.gaussian().powi(2)).collect();
                let g0 = 10f64.powf(rng.uniform(-2.0, 2.0));
                let report = check_adagrad_sum_lemma(&seq, g0)?;
                if worst.as_ref().is_none_or(|w| !report.passed || report.margin < w.margin && w.passed) {
                    worst = Some(report);
                }
            }
            let mut report = worst.expect("100 sequences");
            report.detail = format!("worst of 100 sequences: {}", report.detail);
            Ok(report)
        }
        "neumann" => check_neumann_bound(0.5, 2.0, 1..=20, 50, 16, seed),
        "bias" => {
            let noise = BilevelNoise {
                hessian: 0.3,
                jacobian: 0.3,
                ..BilevelNoise::gradients(NoiseModel::gaussian(0.5)?)
            };
            let problem = make_quadratic_bilevel_with_noise(4, 4, 1.0, 2.0, seed, noise)?;
            let cfg = NeumannConfig::for_problem(&problem, 1)?;
            let cfg = NeumannConfig::for_problem(&problem, recommended_n(10_000, &cfg)?)?;
            let x = RealVector::new(vec![0.5, -1.0, 0.25, 1.0])?;
            Ok(check_hypergrad_bias(&problem, &x, &cfg, 20_000, seed)?.to_check())
        }
        "lower-rate" => {
            let seeds: Vec<u64> = (0..20).map(|s| seed.wrapping_add(s)).collect();
            let traces = lower_level_traces(NoiseModel::annulus(1.0, 2.0)?, 10_000, &seeds)?;
            check_lower_level_rate(&traces, 100)
        }
        other => Err(Error::Config(format!(
            "unknown check `{other}` (expected one of {} or all)",
            CHECK_NAMES.join(", ")
        ))),
    }
}

/// Random `(beta, alpha, eps, S)` with `beta` uniform in `[0, 1)`.
pub fn random_recursion_inputs(
    len: usize,
    dim: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>, Vec<RealVector>, Vec<RealVector>)> {
    let betas: Vec<f64> = (0..len).map(|_| rng.uniform(0.0, 1.0)).collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let eps = (0..len)
        .map(|_| RealVector::new(rng.gaussian_vec(dim)))
        .collect::<Result<Vec<_>>>()?;
    let shifts = (0..len)
        .map(|_| RealVector::new(rng.gaussian_vec(dim)))
        .collect::<Result<Vec<_>>>()?;
    Ok((betas, alphas, eps, shifts))
}
