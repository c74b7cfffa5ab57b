//! Independent oracles and per-step inequality checkers.
//!
//! The checkers replay, on a recorded trace, the recursions that drive the
//! convergence analysis: the approximate descent of `Phi`, the contraction
//! of the best-response gap, the consensus and tracking-error recursions,
//! and the per-step decrease of the Lyapunov potential. On a deterministic
//! (`sigma = 0`) run every one of these inequalities holds on the sample
//! path, so a reported violation localizes a bug (or a deliberately broken
//! stepsize) to a specific iteration.
//!
//! The oracles are brute force on purpose: an exhaustive grid argmax for
//! best responses and central finite differences for `grad Phi`. They share
//! no code with the closed-form paths they are used to cross-check.

use ndarray::{Array1, ArrayView1};
use thiserror::Error;

use crate::algorithms::{run, AlgorithmKind, InitState, RunError, RunSettings};
use crate::metrics::{lyapunov_from_parts, TraceRecord};
use crate::one_minus_lambda_sq;
use crate::par;
use crate::problems::{ProblemConstants, ProblemError, ProblemInstance};
use crate::stepsize::StepsizePlan;
use crate::topology::MixingMatrix;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("trace records must be contiguous (t, t+1, ...); found gap at index {0}")]
    NonContiguousTrace(usize),
    #[error("trace record at t = {t} is missing field '{field}'")]
    MissingField { t: usize, field: &'static str },
    #[error("trace needs at least two records")]
    TooShort,
    #[error("grid oracle only handles constraint blocks of dimension <= 3, got {0}")]
    BlockTooLarge(usize),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Outcome of replaying one inequality over a trace.
///
/// `margins[i]` is `(rhs - lhs) / (1 + |rhs|)` for the step from record `i`
/// to record `i + 1`; the check passes iff `min_margin >= -tolerance`.
#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub name: &'static str,
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub violations: Vec<usize>,
    pub tolerance: f64,
    pub passed: bool,
}

impl InequalityReport {
    fn from_margins(name: &'static str, margins: Vec<f64>, tolerance: f64) -> Self {
        let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
        let violations = margins
            .iter()
            .enumerate()
            .filter(|(_, &m)| m < -tolerance)
            .map(|(i, _)| i)
            .collect::<Vec<_>>();
        let passed = violations.is_empty();
        Self { name, margins, min_margin, violations, tolerance, passed }
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} (min margin {:.3e}, {} violation(s) over {} steps)",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.min_margin,
            self.violations.len(),
            self.margins.len()
        )
    }
}

/// Shared ingredients for the inequality checkers.
#[derive(Debug, Clone, Copy)]
pub struct CheckContext {
    pub constants: ProblemConstants,
    pub agents: usize,
    pub lambda: f64,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

fn require_contiguous(trace: &[TraceRecord]) -> Result<(), VerifyError> {
    if trace.len() < 2 {
        return Err(VerifyError::TooShort);
    }
    for i in 1..trace.len() {
        if trace[i].t != trace[i - 1].t + 1 {
            return Err(VerifyError::NonContiguousTrace(i));
        }
    }
    Ok(())
}

fn field(rec: &TraceRecord, value: Option<f64>, name: &'static str) -> Result<f64, VerifyError> {
    value.ok_or(VerifyError::MissingField { t: rec.t, field: name })
}

fn scan(
    name: &'static str,
    trace: &[TraceRecord],
    tolerance: f64,
    mut step: impl FnMut(&TraceRecord, &TraceRecord) -> Result<(f64, f64), VerifyError>,
) -> Result<InequalityReport, VerifyError> {
    require_contiguous(trace)?;
    let mut margins = Vec::with_capacity(trace.len() - 1);
    for pair in trace.windows(2) {
        let (lhs, rhs) = step(&pair[0], &pair[1])?;
        margins.push((rhs - lhs) / (1.0 + rhs.abs()));
    }
    Ok(InequalityReport::from_margins(name, margins, tolerance))
}

/// Approximate descent of `Phi` along the averaged iterate (deterministic
/// form):
///
/// ```text
/// Phi' <= Phi - eta_x/2 ||grad Phi||^2 - eta_x/2 (1 - 2 kappa L eta_x) ||mean grad||^2
///            + eta_x L^2 / n (delta + consensus)
/// ```
pub fn check_descent_lemma(
    trace: &[TraceRecord],
    plan: &StepsizePlan,
    ctx: &CheckContext,
    tolerance: f64,
) -> Result<InequalityReport, VerifyError> {
    let l = ctx.constants.smoothness;
    let kappa = ctx.constants.condition_number();
    let n = ctx.agents as f64;
    scan("phi_descent", trace, tolerance, |cur, next| {
        let lhs = field(next, next.phi, "phi")?;
        let rhs = field(cur, cur.phi, "phi")?
            - 0.5 * plan.eta_x * field(cur, cur.grad_phi_norm_sq, "grad_phi_norm_sq")?
            - 0.5 * plan.eta_x * (1.0 - 2.0 * kappa * l * plan.eta_x) * cur.mean_grad_norm_sq
            + plan.eta_x * l * l / n
                * (field(cur, cur.delta, "delta")? + cur.consensus_x);
        Ok((lhs, rhs))
    })
}

/// Contraction of the aggregate best-response gap (deterministic form):
///
/// ```text
/// delta' <= (1 - eta_y mu / 4) delta + 9 L^2 eta_y / mu * consensus
///             + 4 n kappa^2 eta_x^2 / (eta_y mu) ||mean grad||^2
/// ```
///
/// Valid under `eta_y <= 1 / (8 (L + mu))`.
pub fn check_delta_recursion(
    trace: &[TraceRecord],
    plan: &StepsizePlan,
    ctx: &CheckContext,
    tolerance: f64,
) -> Result<InequalityReport, VerifyError> {
    let l = ctx.constants.smoothness;
    let mu = ctx.constants.strong_concavity;
    let kappa = ctx.constants.condition_number();
    let n = ctx.agents as f64;
    scan("delta_recursion", trace, tolerance, |cur, next| {
        let lhs = field(next, next.delta, "delta")?;
        let rhs = (1.0 - plan.eta_y * mu / 4.0) * field(cur, cur.delta, "delta")?
            + 9.0 * l * l * plan.eta_y / mu * cur.consensus_x
            + 4.0 * n * kappa * kappa * plan.eta_x * plan.eta_x / (plan.eta_y * mu)
                * cur.mean_grad_norm_sq;
        Ok((lhs, rhs))
    })
}

/// Consensus-error recursion (valid on any sample path):
///
/// ```text
/// consensus' <= (1 + lambda^2)/2 consensus + 2 lambda^2 eta_x^2 / (1 - lambda^2) tracking
/// ```
pub fn check_consensus_recursion(
    trace: &[TraceRecord],
    plan: &StepsizePlan,
    ctx: &CheckContext,
    tolerance: f64,
) -> Result<InequalityReport, VerifyError> {
    let lambda = ctx.lambda;
    let gap_sq = one_minus_lambda_sq(lambda);
    scan("consensus_recursion", trace, tolerance, |cur, next| {
        let lhs = next.consensus_x;
        let rhs = 0.5 * (1.0 + lambda * lambda) * cur.consensus_x
            + 2.0 * lambda * lambda * plan.eta_x * plan.eta_x / gap_sq
                * field(cur, cur.tracking_err, "tracking_err")?;
        Ok((lhs, rhs))
    })
}

/// Tracking-error recursion (deterministic form):
///
/// ```text
/// tracking' <= (3 + lambda^2)/4 tracking + 18 L^2/(1-lambda^2) delta
///   + (2 + 9 eta_y L^2/mu) 9 L^2/(1-lambda^2) consensus
///   + 9 eta_x^2 n L^2/(1-lambda^2) (1 + (4 + eta_y mu) kappa^2/(eta_y mu)) ||mean grad||^2
/// ```
///
/// Valid under `eta_x <= (1-lambda^2)^{3/2} / (6 sqrt(2) L)` for the
/// neighbor-difference tracker.
pub fn check_tracking_recursion(
    trace: &[TraceRecord],
    plan: &StepsizePlan,
    ctx: &CheckContext,
    tolerance: f64,
) -> Result<InequalityReport, VerifyError> {
    let l = ctx.constants.smoothness;
    let mu = ctx.constants.strong_concavity;
    let kappa = ctx.constants.condition_number();
    let n = ctx.agents as f64;
    let lambda = ctx.lambda;
    let gap_sq = one_minus_lambda_sq(lambda);
    scan("tracking_recursion", trace, tolerance, |cur, next| {
        let lhs = field(next, next.tracking_err, "tracking_err")?;
        let rhs = 0.25 * (3.0 + lambda * lambda) * field(cur, cur.tracking_err, "tracking_err")?
            + 18.0 * l * l / gap_sq * field(cur, cur.delta, "delta")?
            + (2.0 + 9.0 * plan.eta_y * l * l / mu) * 9.0 * l * l / gap_sq * cur.consensus_x
            + 9.0 * plan.eta_x * plan.eta_x * n * l * l / gap_sq
                * (1.0 + (4.0 + plan.eta_y * mu) * kappa * kappa / (plan.eta_y * mu))
                * cur.mean_grad_norm_sq;
        Ok((lhs, rhs))
    })
}

/// Per-step decrease of the Lyapunov potential (deterministic form):
/// `L' <= L - eta_x/2 ||grad Phi||^2`. The potential is rebuilt from the
/// recorded fields with `Phi* = 0`, which cancels in the difference.
pub fn check_lyapunov_descent(
    trace: &[TraceRecord],
    plan: &StepsizePlan,
    ctx: &CheckContext,
    tolerance: f64,
) -> Result<InequalityReport, VerifyError> {
    let constants = ctx.constants;
    let agents = ctx.agents;
    let lambda = ctx.lambda;
    let potential = |rec: &TraceRecord| -> Result<f64, VerifyError> {
        Ok(lyapunov_from_parts(
            field(rec, rec.phi, "phi")?,
            0.0,
            rec.consensus_x,
            field(rec, rec.delta, "delta")?,
            field(rec, rec.tracking_err, "tracking_err")?,
            plan,
            &constants,
            agents,
            lambda,
        ))
    };
    scan("lyapunov_descent", trace, tolerance, |cur, next| {
        let lhs = potential(next)?;
        let rhs = potential(cur)?
            - 0.5 * plan.eta_x * field(cur, cur.grad_phi_norm_sq, "grad_phi_norm_sq")?;
        Ok((lhs, rhs))
    })
}

/// Runs all five deterministic checkers.
pub fn deterministic_check_suite(
    trace: &[TraceRecord],
    plan: &StepsizePlan,
    ctx: &CheckContext,
    tolerance: f64,
) -> Result<Vec<InequalityReport>, VerifyError> {
    Ok(vec![
        check_descent_lemma(trace, plan, ctx, tolerance)?,
        check_delta_recursion(trace, plan, ctx, tolerance)?,
        check_consensus_recursion(trace, plan, ctx, tolerance)?,
        check_tracking_recursion(trace, plan, ctx, tolerance)?,
        check_lyapunov_descent(trace, plan, ctx, tolerance)?,
    ])
}

/// Runs the stochastic method with the oracle disabled (`sigma = 0`) and
/// per-step telemetry, which is the regime where every checker inequality
/// holds on the sample path.
pub fn deterministic_trace(
    problem: &dyn ProblemInstance,
    w: &MixingMatrix,
    plan: &StepsizePlan,
    iterations: usize,
    init: &InitState,
) -> Result<Vec<TraceRecord>, VerifyError> {
    let settings = RunSettings {
        iterations,
        record_every: 1,
        sigma: 0.0,
        batch: 1,
        seed: 0,
    };
    let out = run(AlgorithmKind::Dsgta, problem, Some(w), plan, &settings, init)?;
    Ok(out.records)
}

/// `Phi(x)` alone (best responses plus evaluation, no gradients).
pub fn phi_value(problem: &dyn ProblemInstance, x: &ArrayView1<f64>) -> Result<f64, ProblemError> {
    let n = problem.agents();
    let per_agent: Vec<Result<f64, ProblemError>> = par::map_indexed(n, |i| {
        let y_hat = problem.best_response(i, x)?;
        Ok(problem.eval(i, x, &y_hat.view()))
    });
    let mut phi = 0.0;
    for v in per_agent {
        phi += v? / n as f64;
    }
    Ok(phi)
}

/// Central finite differences of `Phi`: `(Phi(x + h e_k) - Phi(x - h e_k)) / 2h`.
pub fn fd_grad_phi(
    problem: &dyn ProblemInstance,
    x: &ArrayView1<f64>,
    h: f64,
) -> Result<Array1<f64>, ProblemError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let d = x.len();
    let per_coord: Vec<Result<f64, ProblemError>> = par::map_indexed(d, |k| {
        let mut plus = x.to_owned();
        plus[k] += h;
        let mut minus = x.to_owned();
        minus[k] -= h;
        Ok((phi_value(problem, &plus.view())? - phi_value(problem, &minus.view())?) / (2.0 * h))
    });
    let mut grad = Array1::zeros(d);
    for (k, v) in per_coord.into_iter().enumerate() {
        grad[k] = v?;
    }
    Ok(grad)
}

/// Exhaustive grid argmax of `f_i(x, .)` over `Y_i`.
///
/// The constraint set is a product of balls and both shipped objectives are
/// separable across those blocks, so each block is scanned independently on
/// an axis-aligned grid with the given resolution (points outside the ball
/// are skipped, the center is always included). Blocks of dimension above 3
/// are rejected.
pub fn grid_best_response(
    problem: &dyn ProblemInstance,
    agent: usize,
    x: &ArrayView1<f64>,
    resolution: f64,
) -> Result<Array1<f64>, VerifyError> {
    assert!(resolution > 0.0, "grid resolution must be positive");
    let blocks = problem.y_blocks(agent);
    for ball in &blocks {
        if ball.center.len() > 3 {
            return Err(VerifyError::BlockTooLarge(ball.center.len()));
        }
    }
    // start from the centers; refine one block at a time (separability)
    let mut y = Array1::zeros(problem.dim_y(agent));
    let mut offset = 0;
    for ball in &blocks {
        let len = ball.center.len();
        y.slice_mut(ndarray::s![offset..offset + len]).assign(&ball.center);
        offset += len;
    }
    let mut offset = 0;
    for ball in &blocks {
        let len = ball.center.len();
        let span = (ball.radius / resolution).floor() as i64;
        let axis_points = 2 * span + 1;
        let total = (axis_points as usize).pow(len as u32);
        let slabs = axis_points as usize;
        let per_slab = total / slabs;

        let base = y.clone();
        let candidates: Vec<(f64, Array1<f64>)> = par::map_indexed(slabs, |slab| {
            let mut best_val = f64::NEG_INFINITY;
            let mut best_point = ball.center.clone();
            let mut candidate = base.clone();
            for rest in 0..per_slab {
                let mut index = slab * per_slab + rest;
                let mut inside = true;
                let mut dist_sq = 0.0;
                for axis in 0..len {
                    let k = (index % axis_points as usize) as i64 - span;
                    index /= axis_points as usize;
                    let coord = ball.center[axis] + k as f64 * resolution;
                    let delta = coord - ball.center[axis];
                    dist_sq += delta * delta;
                    candidate[offset + axis] = coord;
                    if dist_sq > ball.radius * ball.radius {
                        inside = false;
                        break;
                    }
                }
                if !inside {
                    continue;
                }
                let value = problem.eval(agent, x, &candidate.view());
                if value > best_val {
                    best_val = value;
                    best_point = candidate.slice(ndarray::s![offset..offset + len]).to_owned();
                }
            }
            (best_val, best_point)
        });
        // the center is a grid point of every block, so a valid candidate exists
        let mut best_val = problem.eval(agent, x, &y.view());
        let mut best_point = y.slice(ndarray::s![offset..offset + len]).to_owned();
        for (value, point) in candidates {
            if value > best_val {
                best_val = value;
                best_point = point;
            }
        }
        y.slice_mut(ndarray::s![offset..offset + len]).assign(&best_point);
        offset += len;
    }
    Ok(y)
}

/// Dense symmetric eigensolver (cyclic Jacobi); the reference for the
/// power-iteration spectral quantities.
pub fn dense_symmetric_eigenvalues(m: &ndarray::Array2<f64>) -> Vec<f64> {
    crate::linalg::jacobi_eigenvalues(m)
}

#[derive(Debug, Clone)]
pub struct RatePoint {
    pub horizon: usize,
    pub averaged_metric: f64,
}

#[derive(Debug, Clone)]
pub struct SlopeReport {
    pub points: Vec<RatePoint>,
    pub slope: f64,
}

/// Mean of `||grad Phi(x_bar^t)||^2` over `t = 0..horizon` from a per-step
/// trace (the record at `t = horizon` is excluded).
pub fn averaged_grad_phi_sq(trace: &[TraceRecord], horizon: usize) -> Result<f64, VerifyError> {
    require_contiguous(trace)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for rec in trace {
        if rec.t < horizon {
            acc += field(rec, rec.grad_phi_norm_sq, "grad_phi_norm_sq")?;
            count += 1;
        }
    }
    if count != horizon {
        return Err(VerifyError::TooShort);
    }
    Ok(acc / horizon as f64)
}

/// Least-squares slope of `log(metric)` against `log(horizon)`.
pub fn log_log_slope(points: &[RatePoint]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| (p.horizon as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.averaged_metric.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - x_mean) * (y - y_mean);
        den += (x - x_mean) * (x - x_mean);
    }
    num / den
}
