//! Rate-constrained QP selection.
//!
//! Minimizes the model distortion `D(q_g, q_c)` subject to
//! `R(q_g, q_c) <= target` with an augmented Lagrangian:
//!
//! ```text
//! J(q, λ, ρ) = D(q) + λ (R(q) − R̂) + ρ/2 (R(q) − R̂)²
//! ```
//!
//! Each outer step minimizes `J` for fixed `(λ, ρ)` by projected gradient
//! descent, then sets `ρ ← α ρ` and `λ ← λ + ρ (R(q) − R̂)` (with the old
//! `ρ`). QPs are relaxed to reals during the search and rounded at the end.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rdmodel::RdModels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Penalty growth factor.
    pub alpha: f64,
    /// Initial penalty coefficient.
    pub rho0: f64,
    /// Initial multiplier.
    pub lambda0: f64,
    /// Gradient-descent step size.
    pub gamma: f64,
    /// Outer loop stops once `|ΔJ|` between outer steps falls below this.
    pub outer_tol: f64,
    /// Inner loop stops once the per-step decrement of `J` falls below this.
    pub inner_tol: f64,
    /// Measure both tolerances as fractions of `|J|` instead of in the
    /// objective's own units.
    pub relative_tolerances: bool,
    /// Halve the step until `J` decreases sufficiently, and let it grow
    /// again after each accepted step. With `false` every step is exactly
    /// `γ ∇J`.
    pub line_search: bool,
    /// Half-width of the integer window searched when rounding; 1 means the
    /// four pairs surrounding the continuous optimum.
    pub rounding_radius: u32,
    pub qp_min: u32,
    pub qp_max: u32,
    /// Starting value of both QPs.
    pub q_init: f64,
    /// Extra starts on an `n × n` grid spanning the QP box, run after the
    /// `q_init` start; the lowest-distortion rounded result wins. The fitted
    /// models are not convex, so one descent can settle in a poor basin.
    /// `1` disables the extra starts.
    pub start_grid: u32,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative rate overshoot tolerated by the feasibility contract.
    pub feasibility_slack: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            rho0: 50.0,
            lambda0: 0.0,
            gamma: 0.001,
            outer_tol: 1e-9,
            inner_tol: 1e-12,
            relative_tolerances: true,
            line_search: true,
            rounding_radius: 3,
            qp_min: 2,
            qp_max: 51,
            q_init: 51.0,
            start_grid: 3,
            max_outer: 100,
            max_inner: 100_000,
            feasibility_slack: 0.01,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |reason: &str| Err(SolveError::InvalidConfig(reason.to_string()));
        if !(self.alpha > 1.0) {
            return bad("alpha must exceed 1");
        }
        if !(self.rho0 > 0.0) {
            return bad("rho0 must be positive");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        if !self.lambda0.is_finite() || !(self.outer_tol >= 0.0) || !(self.inner_tol >= 0.0) {
            return bad("lambda0 must be finite and tolerances non-negative");
        }
        if self.qp_min >= self.qp_max {
            return bad("qp_min must be below qp_max");
        }
        if !(self.q_init >= self.qp_min as f64 && self.q_init <= self.qp_max as f64) {
            return bad("q_init must lie within [qp_min, qp_max]");
        }
        if self.start_grid == 0 {
            return bad("start_grid must be at least 1");
        }
        if self.rounding_radius == 0 {
            return bad("rounding_radius must be at least 1");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.feasibility_slack >= 0.0) {
            return bad("feasibility_slack must be non-negative");
        }
        Ok(())
    }

    /// `[q_init; 2]` first, then the start grid row by row.
    fn starts(&self) -> Vec<[f64; 2]> {
        let first = [self.q_init; 2];
        let mut out = vec![first];
        if self.start_grid > 1 {
            let (lo, hi) = (self.qp_min as f64, self.qp_max as f64);
            let n = self.start_grid;
            let at = |i: u32| lo + (hi - lo) * i as f64 / (n - 1) as f64;
            for i in 0..n {
                for j in 0..n {
                    let q = [at(i), at(j)];
                    if q != first {
                        out.push(q);
                    }
                }
            }
        }
        out
    }

    fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.qp_min as f64, self.qp_max as f64)
    }

    fn threshold(&self, tol: f64, scale: f64) -> f64 {
        if self.relative_tolerances {
            tol * scale.abs()
        } else {
            tol
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("target rate must be positive and finite, got {0}")]
    InvalidTarget(f64),
    #[error("infeasible: target {target} Mbps is below the model rate {coarsest_rate} Mbps at the coarsest QPs")]
    Infeasible { target: f64, coarsest_rate: f64 },
    #[error("objective or gradient is not finite at q = ({q_g}, {q_c})")]
    NonFinite { q_g: f64, q_c: f64 },
}

/// The augmented Lagrangian objective.
pub fn augmented_lagrangian(models: &RdModels, q: [f64; 2], lambda: f64, rho: f64, target: f64) -> f64 {
    let residual = models.rate(q[0], q[1]) - target;
    models.distortion(q[0], q[1]) + lambda * residual + 0.5 * rho * residual * residual
}

/// `∇J = ∇D + (λ + ρ (R − R̂)) ∇R`.
pub fn augmented_lagrangian_gradient(models: &RdModels, q: [f64; 2], lambda: f64, rho: f64, target: f64) -> [f64; 2] {
    let residual = models.rate(q[0], q[1]) - target;
    let weight = lambda + rho * residual;
    let gd = models.distortion_gradient(q[0], q[1]);
    let gr = models.rate_gradient(q[0], q[1]);
    [gd[0] + weight * gr[0], gd[1] + weight * gr[1]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerResult {
    pub q: [f64; 2],
    /// `J` at `q`.
    pub objective: f64,
    pub iterations: usize,
}

fn finite_or(q: [f64; 2], values: &[f64]) -> Result<(), SolveError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SolveError::NonFinite { q_g: q[0], q_c: q[1] })
    }
}

/// Armijo constant for the sufficient-decrease test.
const SUFFICIENT_DECREASE: f64 = 1e-4;
/// Step halvings tried before a line search gives up.
const MAX_HALVINGS: usize = 200;

/// Projected gradient descent on `J` for fixed `(λ, ρ)`.
///
/// Each step moves by `−t ∇J` and clamps both coordinates into the QP box,
/// with `t = γ` throughout or, under `line_search`, adapted by halving and
/// doubling. Stops when a step lowers `J` by less than `inner_tol` (keeping
/// the lower of the two iterates) or after `max_inner` steps.
pub fn inner_minimize(
    models: &RdModels,
    lambda: f64,
    rho: f64,
    target: f64,
    start: [f64; 2],
    config: &SolverConfig,
) -> Result<InnerResult, SolveError> {
    let mut q = start.map(|c| config.clamp(c));
    let mut objective = augmented_lagrangian(models, q, lambda, rho, target);
    finite_or(q, &[objective])?;
    let threshold = config.threshold(config.inner_tol, objective);
    let mut step = config.gamma;
    let mut iterations = 0;
    while iterations < config.max_inner {
        iterations += 1;
        let g = augmented_lagrangian_gradient(models, q, lambda, rho, target);
        finite_or(q, &g)?;
        let mut halvings = 0;
        let (next, next_objective) = loop {
            let next = [config.clamp(q[0] - step * g[0]), config.clamp(q[1] - step * g[1])];
            let next_objective = augmented_lagrangian(models, next, lambda, rho, target);
            finite_or(next, &[next_objective])?;
            let predicted = g[0] * (q[0] - next[0]) + g[1] * (q[1] - next[1]);
            if !config.line_search
                || next_objective <= objective - SUFFICIENT_DECREASE * predicted
                || halvings == MAX_HALVINGS
            {
                break (next, next_objective);
            }
            step *= 0.5;
            halvings += 1;
        };
        let decrement = objective - next_objective;
        if decrement > 0.0 {
            q = next;
            objective = next_objective;
        }
        if decrement <= threshold {
            break;
        }
        if config.line_search && halvings == 0 {
            step *= 2.0;
        }
    }
    Ok(InnerResult {
        q,
        objective,
        iterations,
    })
}

/// One outer iteration, recorded after its inner minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub q_g: f64,
    pub q_c: f64,
    /// `J(q, λ, ρ)` at the inner minimizer.
    #[serde(rename = "J")]
    pub objective: f64,
    /// `R(q) − R̂`.
    pub residual: f64,
    /// Multiplier used for this step.
    pub lambda: f64,
    /// Penalty used for this step.
    pub rho: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub q_g_star: u32,
    pub q_c_star: u32,
    pub q_g_real: f64,
    pub q_c_real: f64,
    pub target_rate: f64,
    /// Model rate and distortion at the integer QPs.
    pub model_rate: f64,
    pub model_distortion: f64,
    /// Geometry and color terms of the model rate at the integer QPs.
    pub model_rate_geometry: f64,
    pub model_rate_color: f64,
    /// Model rate and distortion at the continuous optimum.
    pub model_rate_real: f64,
    pub model_distortion_real: f64,
    pub lambda_final: f64,
    pub rho_final: f64,
    pub converged: bool,
    /// `false` when the minimum of D alone over the QP box is feasible and
    /// beats every constrained run; the reported point is then that
    /// interior minimum and `trace` is the best constrained run.
    pub constraint_active: bool,
    pub outer_iterations: usize,
    pub trace: Vec<OuterStep>,
}

/// Rounds a continuous QP pair to integers.
///
/// Searches the integer pairs within `rounding_radius` of the continuous
/// point (radius 1: the four surrounding pairs) and keeps those with
/// `R <= target`; among them the lowest model distortion wins, then the
/// lower rate, then the lower `q_g`. If none is feasible the search widens
/// ring by ring until a feasible pair appears.
pub fn round_to_feasible(models: &RdModels, q: [f64; 2], target: f64, config: &SolverConfig) -> Option<(u32, u32)> {
    let lo = config.qp_min as i64;
    let hi = config.qp_max as i64;
    let base = q.map(|c| (c.floor() as i64).clamp(lo, hi));
    let score = |(g, c): (i64, i64)| {
        let (gf, cf) = (g as f64, c as f64);
        (models.distortion(gf, cf), models.rate(gf, cf), g)
    };
    let mut best: Option<((f64, f64, i64), (i64, i64))> = None;
    let first = config.rounding_radius as i64 - 1;
    for ring in first..=(hi - lo).max(first) {
        for g in (base[0] - ring)..=(base[0] + 1 + ring) {
            for c in (base[1] - ring)..=(base[1] + 1 + ring) {
                let on_ring = ring == first
                    || g == base[0] - ring
                    || g == base[0] + 1 + ring
                    || c == base[1] - ring
                    || c == base[1] + 1 + ring;
                if !on_ring || g < lo || g > hi || c < lo || c > hi {
                    continue;
                }
                let s = score((g, c));
                if s.1 > target {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((b, _)) => s.0.total_cmp(&b.0).then(s.1.total_cmp(&b.1)).then(s.2.cmp(&b.2)).is_lt(),
                };
                if better {
                    best = Some((s, (g, c)));
                }
            }
        }
        if let Some((_, (g, c))) = best {
            return Some((g as u32, c as u32));
        }
    }
    None
}

/// Solves the rate-constrained QP selection problem on fitted models.
///
/// ```
/// use pcrd::{solve, RdModels, SolverConfig};
/// // D = q_g² + q_c², R = 104 − q_g − q_c: with R̂ = 60 the optimum is (22, 22).
/// let models = RdModels {
///     a: [0.0, 0.0, 1.0, 0.0, 0.0],
///     b: [0.0, 0.0, 1.0, 0.0, 0.0],
///     c: [0.0, -1.0, 104.0],
///     d: [0.0, 0.0, -1.0, 0.0],
///     anchor: [30, 35],
/// };
/// let result = solve(&models, 60.0, &SolverConfig::default()).unwrap();
/// assert_eq!((result.q_g_star, result.q_c_star), (22, 22));
/// ```
pub fn solve(models: &RdModels, target: f64, config: &SolverConfig) -> Result<SolveResult, SolveError> {
    config.validate()?;
    if !(target.is_finite() && target > 0.0) {
        return Err(SolveError::InvalidTarget(target));
    }
    let coarsest = config.qp_max as f64;
    let coarsest_rate = models.rate(coarsest, coarsest);
    if !(coarsest_rate <= target) {
        return Err(SolveError::Infeasible { target, coarsest_rate });
    }

    let mut starts = config.starts().into_iter();
    let first = starts.next().expect("at least one start");
    let mut best = descend(models, target, config, first)?;
    for start in starts {
        // A start that blows up does not invalidate the others.
        let Ok(candidate) = descend(models, target, config, start) else {
            continue;
        };
        let order = candidate
            .model_distortion
            .total_cmp(&best.model_distortion)
            .then(candidate.model_rate.total_cmp(&best.model_rate));
        if order.is_lt() {
            best = candidate;
        }
    }

    // The penalty drives R onto R̂. When D has a feasible minimum with
    // R < R̂ the constraint is inactive there and no run can reach it, so
    // minimize D alone from the same starts.
    for start in config.starts() {
        let Ok(free) = inner_minimize(models, 0.0, 0.0, target, start, config) else {
            continue;
        };
        if models.rate(free.q[0], free.q[1]) > target {
            continue;
        }
        let Some((g, c)) = round_to_feasible(models, free.q, target, config) else {
            continue;
        };
        let (gi, ci) = (g as f64, c as f64);
        if models.distortion(gi, ci) < best.model_distortion {
            let (rate_geometry, rate_color) = models.rate_split(gi, ci);
            best = SolveResult {
                q_g_star: g,
                q_c_star: c,
                q_g_real: free.q[0],
                q_c_real: free.q[1],
                model_rate: models.rate(gi, ci),
                model_distortion: models.distortion(gi, ci),
                model_rate_geometry: rate_geometry,
                model_rate_color: rate_color,
                model_rate_real: models.rate(free.q[0], free.q[1]),
                model_distortion_real: models.distortion(free.q[0], free.q[1]),
                constraint_active: false,
                ..best
            };
        }
    }
    Ok(best)
}

/// One augmented Lagrangian run from `start`, rounded to integers.
fn descend(models: &RdModels, target: f64, config: &SolverConfig, start: [f64; 2]) -> Result<SolveResult, SolveError> {
    let mut lambda = config.lambda0;
    let mut rho = config.rho0;
    let mut q = start;
    let mut previous = augmented_lagrangian(models, q, lambda, rho, target);
    finite_or(q, &[previous])?;
    let mut trace = Vec::new();
    let mut converged = false;

    while trace.len() < config.max_outer {
        let inner = inner_minimize(models, lambda, rho, target, q, config)?;
        q = inner.q;
        let residual = models.rate(q[0], q[1]) - target;
        trace.push(OuterStep {
            q_g: q[0],
            q_c: q[1],
            objective: inner.objective,
            residual,
            lambda,
            rho,
            inner_iterations: inner.iterations,
        });
        let change = (inner.objective - previous).abs();
        let threshold = config.threshold(config.outer_tol, inner.objective.abs().max(previous.abs()));
        previous = inner.objective;
        lambda += rho * residual;
        rho *= config.alpha;
        finite_or(q, &[lambda, rho])?;
        if change <= threshold {
            converged = true;
            break;
        }
    }

    let chosen = if converged {
        q
    } else {
        // Lowest-distortion iterate within the slack, else the last one.
        let limit = target * (1.0 + config.feasibility_slack);
        trace
            .iter()
            .filter(|s| s.residual + target <= limit)
            .min_by(|a, b| models.distortion(a.q_g, a.q_c).total_cmp(&models.distortion(b.q_g, b.q_c)))
            .map_or(q, |s| [s.q_g, s.q_c])
    };
    let (q_g_star, q_c_star) =
        round_to_feasible(models, chosen, target, config).expect("coarsest QP pair is feasible");
    let (gi, ci) = (q_g_star as f64, q_c_star as f64);
    let (rate_geometry, rate_color) = models.rate_split(gi, ci);

    Ok(SolveResult {
        q_g_star,
        q_c_star,
        q_g_real: chosen[0],
        q_c_real: chosen[1],
        target_rate: target,
        model_rate: models.rate(gi, ci),
        model_distortion: models.distortion(gi, ci),
        model_rate_geometry: rate_geometry,
        model_rate_color: rate_color,
        model_rate_real: models.rate(chosen[0], chosen[1]),
        model_distortion_real: models.distortion(chosen[0], chosen[1]),
        lambda_final: lambda,
        rho_final: rho,
        converged,
        constraint_active: true,
        outer_iterations: trace.len(),
        trace,
    })
}
