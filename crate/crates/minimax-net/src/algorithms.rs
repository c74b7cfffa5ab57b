//! State-transition functions for the swarm methods and their baselines,
//! plus the run driver.
//!
//! The two main methods interleave, per iteration: one averaging round on
//! the decision variables, one local projected ascent step on each agent's
//! private block, and one averaging round on the gradient trackers. The
//! tracker update telescopes so that the tracker average equals the average
//! of the current per-agent gradients at every iteration (exact gradients in
//! the deterministic method, cached mini-batch estimates in the stochastic
//! one); `SwarmState::tracking_conservation_gap` exposes the residual.
//!
//! Two structural notes, both load-bearing for the tests:
//!
//! * The deterministic tracker adds the agent's *own* gradient difference
//!   after the averaging round. Because the weights of each row sum to one,
//!   this is algebraically identical to placing the difference inside the
//!   sum. The stochastic tracker instead averages the *neighbors'*
//!   differences, `W (g + h' - h)`, and is implemented exactly that way; the
//!   two forms coincide only for a single agent.
//! * The ascent step always evaluates at the pre-averaging iterate `x_i^t`,
//!   never at the freshly mixed one.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::metrics::{self, TraceRecord};
use crate::par;
use crate::problems::{ProblemError, ProblemInstance, StochasticOracle};
use crate::stepsize::StepsizePlan;
use crate::topology::MixingMatrix;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("distributed method needs a mixing matrix")]
    MissingTopology,
    #[error("initial y of agent {agent} lies outside its constraint set")]
    InfeasibleInit { agent: usize },
    #[error("initial state shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {quantity} at iteration {t}")]
    NonFinite { quantity: String, t: usize },
    #[error("metric evaluation failed: {0}")]
    Metric(#[from] ProblemError),
}

/// Full state of a distributed run at one iteration.
#[derive(Debug, Clone)]
pub struct SwarmState {
    pub t: usize,
    /// Row `i` is agent `i`'s copy of the decision variable.
    pub x: Array2<f64>,
    /// Agent-private maximization blocks, always feasible.
    pub y: Vec<Array1<f64>>,
    /// Gradient trackers, one row per agent.
    pub tracker: Array2<f64>,
    /// Per-agent x-gradients at the current iterate: exact gradients for the
    /// deterministic method, the last mini-batch estimates for the
    /// stochastic one.
    pub grad_x_cache: Array2<f64>,
    /// Mini-batch y-gradient estimates (stochastic method only).
    pub grad_y_cache: Option<Vec<Array1<f64>>>,
    pub comm_rounds: u64,
    pub oracle_calls: u64,
}

impl SwarmState {
    pub fn agents(&self) -> usize {
        self.x.nrows()
    }

    /// Column mean of the agents' decision variables.
    pub fn x_mean(&self) -> Array1<f64> {
        column_mean(&self.x)
    }

    pub fn tracker_mean(&self) -> Array1<f64> {
        column_mean(&self.tracker)
    }

    /// `||mean(tracker) - mean(cached gradients)|| / (1 + ||mean(tracker)||)`.
    ///
    /// Zero up to roundoff at every iteration by the telescoping of the
    /// tracker update under a doubly-stochastic mixing matrix.
    pub fn tracking_conservation_gap(&self) -> f64 {
        let tracker_mean = self.tracker_mean();
        let grad_mean = column_mean(&self.grad_x_cache);
        let diff_norm = (&tracker_mean - &grad_mean).iter().map(|v| v * v).sum::<f64>().sqrt();
        let tracker_norm = tracker_mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        diff_norm / (1.0 + tracker_norm)
    }
}

pub(crate) fn column_mean(m: &Array2<f64>) -> Array1<f64> {
    let n = m.nrows() as f64;
    let mut acc = Array1::<f64>::zeros(m.ncols());
    for row in m.rows() {
        acc += &row;
    }
    acc / n
}

fn stack_rows(rows: Vec<Array1<f64>>) -> Array2<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mut m = Array2::zeros((n, d));
    for (i, row) in rows.into_iter().enumerate() {
        m.row_mut(i).assign(&row);
    }
    m
}

/// Initial iterates shared by all algorithms.
#[derive(Debug, Clone)]
pub struct InitState {
    pub x0: Array2<f64>,
    pub y0: Vec<Array1<f64>>,
}

impl InitState {
    /// Every agent starts at the same `x`; `y` blocks start at the ball
    /// centers (always feasible).
    pub fn identical(problem: &dyn ProblemInstance, x: &Array1<f64>) -> Self {
        let n = problem.agents();
        let mut x0 = Array2::zeros((n, x.len()));
        for i in 0..n {
            x0.row_mut(i).assign(x);
        }
        Self { x0, y0: center_y(problem) }
    }

    /// Agent `i` starts at `x + spread * offset_i` with seeded Gaussian
    /// offsets; `y` blocks start at the ball centers.
    pub fn spread(problem: &dyn ProblemInstance, x: &Array1<f64>, spread_scale: f64, seed: u64) -> Self {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let n = problem.agents();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x696e_6974);
        let mut x0 = Array2::zeros((n, x.len()));
        for i in 0..n {
            for (k, v) in x.iter().enumerate() {
                let offset: f64 = rand_distr::StandardNormal.sample(&mut rng);
                x0[[i, k]] = v + spread_scale * offset;
            }
        }
        Self { x0, y0: center_y(problem) }
    }
}

fn center_y(problem: &dyn ProblemInstance) -> Vec<Array1<f64>> {
    (0..problem.agents())
        .map(|i| {
            let mut y = Array1::zeros(problem.dim_y(i));
            let mut offset = 0;
            for ball in problem.y_blocks(i) {
                let len = ball.center.len();
                y.slice_mut(ndarray::s![offset..offset + len]).assign(&ball.center);
                offset += len;
            }
            y
        })
        .collect()
}

fn validate_init(problem: &dyn ProblemInstance, init: &InitState) -> Result<(), RunError> {
    let n = problem.agents();
    if init.x0.nrows() != n || init.x0.ncols() != problem.dim_x() || init.y0.len() != n {
        return Err(RunError::ShapeMismatch(format!(
            "expected x0 {}x{} and {} y blocks",
            n,
            problem.dim_x(),
            n
        )));
    }
    for (i, y) in init.y0.iter().enumerate() {
        if y.len() != problem.dim_y(i) {
            return Err(RunError::ShapeMismatch(format!("y0[{i}] has wrong dimension")));
        }
        if !problem.is_feasible(i, &y.view(), 1e-9) {
            return Err(RunError::InfeasibleInit { agent: i });
        }
    }
    Ok(())
}

/// Deterministic initialization: trackers start at the exact gradients.
pub fn dgta_init(problem: &dyn ProblemInstance, init: &InitState) -> Result<SwarmState, RunError> {
    validate_init(problem, init)?;
    let n = problem.agents();
    let grads = stack_rows(par::map_indexed(n, |i| {
        problem.grad_x(i, &init.x0.row(i), &init.y0[i].view())
    }));
    Ok(SwarmState {
        t: 0,
        x: init.x0.clone(),
        y: init.y0.clone(),
        tracker: grads.clone(),
        grad_x_cache: grads,
        grad_y_cache: None,
        comm_rounds: 0,
        oracle_calls: n as u64,
    })
}

/// Stochastic initialization: one batch per agent at the initial point seeds
/// both gradient caches and the trackers.
pub fn dsgta_init(oracle: &StochasticOracle, init: &InitState) -> Result<SwarmState, RunError> {
    let problem = oracle.problem();
    validate_init(problem, init)?;
    let n = problem.agents();
    let draws: Vec<(Array1<f64>, Array1<f64>)> = par::map_indexed(n, |i| {
        oracle.sample_grad_pair(i, 0, &init.x0.row(i), &init.y0[i].view())
    });
    let mut h_x = Vec::with_capacity(n);
    let mut h_y = Vec::with_capacity(n);
    for (hx, hy) in draws {
        h_x.push(hx);
        h_y.push(hy);
    }
    let h_x = stack_rows(h_x);
    Ok(SwarmState {
        t: 0,
        x: init.x0.clone(),
        y: init.y0.clone(),
        tracker: h_x.clone(),
        grad_x_cache: h_x,
        grad_y_cache: Some(h_y),
        comm_rounds: 0,
        oracle_calls: 2 * (n as u64) * oracle.batch() as u64,
    })
}

/// One deterministic step: mix-descend on `x`, projected ascent on `y` at the
/// pre-mix iterate, tracker update with the local gradient difference.
pub fn dgta_step(
    state: &SwarmState,
    problem: &dyn ProblemInstance,
    w: &MixingMatrix,
    plan: &StepsizePlan,
) -> SwarmState {
    let n = state.agents();
    let y_next: Vec<Array1<f64>> = par::map_indexed(n, |i| {
        let ascent =
            &state.y[i] + &(problem.grad_y(i, &state.x.row(i), &state.y[i].view()) * plan.eta_y);
        problem.project(i, &ascent.view())
    });
    let x_next = w.mix(&(&state.x - &(&state.tracker * plan.eta_x)));
    let grads_next = stack_rows(par::map_indexed(n, |i| {
        problem.grad_x(i, &x_next.row(i), &y_next[i].view())
    }));
    let tracker_next = w.mix(&state.tracker) + &grads_next - &state.grad_x_cache;
    SwarmState {
        t: state.t + 1,
        x: x_next,
        y: y_next,
        tracker: tracker_next,
        grad_x_cache: grads_next,
        grad_y_cache: None,
        comm_rounds: state.comm_rounds + 2,
        oracle_calls: state.oracle_calls + 2 * n as u64,
    }
}

/// One stochastic step. Fresh batches are drawn at the *new* iterate, and the
/// tracker mixes the neighbors' gradient differences: `W (g + h' - h)`.
pub fn dsgta_step(
    state: &SwarmState,
    oracle: &StochasticOracle,
    w: &MixingMatrix,
    plan: &StepsizePlan,
) -> SwarmState {
    let problem = oracle.problem();
    let n = state.agents();
    let h_y = state
        .grad_y_cache
        .as_ref()
        .expect("stochastic state carries the y-gradient cache; use dsgta_init");
    let y_next: Vec<Array1<f64>> = par::map_indexed(n, |i| {
        let ascent = &state.y[i] + &(&h_y[i] * plan.eta_y);
        problem.project(i, &ascent.view())
    });
    let x_next = w.mix(&(&state.x - &(&state.tracker * plan.eta_x)));
    let point = state.t as u64 + 1;
    let draws: Vec<(Array1<f64>, Array1<f64>)> = par::map_indexed(n, |i| {
        oracle.sample_grad_pair(i, point, &x_next.row(i), &y_next[i].view())
    });
    let mut h_x_next = Vec::with_capacity(n);
    let mut h_y_next = Vec::with_capacity(n);
    for (hx, hy) in draws {
        h_x_next.push(hx);
        h_y_next.push(hy);
    }
    let h_x_next = stack_rows(h_x_next);
    let tracker_next = w.mix(&(&state.tracker + &h_x_next - &state.grad_x_cache));
    SwarmState {
        t: state.t + 1,
        x: x_next,
        y: y_next,
        tracker: tracker_next,
        grad_x_cache: h_x_next,
        grad_y_cache: Some(h_y_next),
        comm_rounds: state.comm_rounds + 2,
        oracle_calls: state.oracle_calls + 2 * (n as u64) * oracle.batch() as u64,
    }
}

/// Inner-loop baseline: `inner_steps` rounds of projected ascent at the fixed
/// current `x`, then one tracking descent step on `x`.
pub fn gtda_step(
    state: &SwarmState,
    problem: &dyn ProblemInstance,
    w: &MixingMatrix,
    plan: &StepsizePlan,
    inner_steps: usize,
) -> SwarmState {
    assert!(inner_steps >= 1, "inner loop needs at least one ascent step");
    let n = state.agents();
    let mut y_next = state.y.clone();
    for _ in 0..inner_steps {
        y_next = par::map_indexed(n, |i| {
            let ascent =
                &y_next[i] + &(problem.grad_y(i, &state.x.row(i), &y_next[i].view()) * plan.eta_y);
            problem.project(i, &ascent.view())
        });
    }
    let x_next = w.mix(&(&state.x - &(&state.tracker * plan.eta_x)));
    let grads_next = stack_rows(par::map_indexed(n, |i| {
        problem.grad_x(i, &x_next.row(i), &y_next[i].view())
    }));
    let tracker_next = w.mix(&state.tracker) + &grads_next - &state.grad_x_cache;
    SwarmState {
        t: state.t + 1,
        x: x_next,
        y: y_next,
        tracker: tracker_next,
        grad_x_cache: grads_next,
        grad_y_cache: None,
        comm_rounds: state.comm_rounds + 2,
        oracle_calls: state.oracle_calls + (inner_steps as u64 + 1) * n as u64,
    }
}

/// Centralized state: one shared decision variable, all private blocks.
#[derive(Debug, Clone)]
pub struct CentralState {
    pub t: usize,
    pub x: Array1<f64>,
    pub y: Vec<Array1<f64>>,
    pub oracle_calls: u64,
}

pub fn central_init(problem: &dyn ProblemInstance, init: &InitState) -> Result<CentralState, RunError> {
    validate_init(problem, init)?;
    Ok(CentralState {
        t: 0,
        x: column_mean(&init.x0),
        y: init.y0.clone(),
        oracle_calls: 0,
    })
}

/// Single-machine descent/ascent: `x' = x - eta_x * mean_i grad_x f_i(x, y_i)`,
/// `y_i' = proj(y_i + eta_y * grad_y f_i(x, y_i))`.
pub fn gda_step(state: &CentralState, problem: &dyn ProblemInstance, plan: &StepsizePlan) -> CentralState {
    let n = problem.agents();
    let grads_x: Vec<Array1<f64>> =
        par::map_indexed(n, |i| problem.grad_x(i, &state.x.view(), &state.y[i].view()));
    let y_next: Vec<Array1<f64>> = par::map_indexed(n, |i| {
        let ascent =
            &state.y[i] + &(problem.grad_y(i, &state.x.view(), &state.y[i].view()) * plan.eta_y);
        problem.project(i, &ascent.view())
    });
    let mut grad_sum = Array1::<f64>::zeros(problem.dim_x());
    for g in &grads_x {
        grad_sum += g;
    }
    let mean_grad = grad_sum / n as f64;
    CentralState {
        t: state.t + 1,
        x: &state.x - &(mean_grad * plan.eta_x),
        y: y_next,
        oracle_calls: state.oracle_calls + 2 * n as u64,
    }
}

/// Mini-batch variant of [`gda_step`]; batches are drawn at the current
/// iterate with the iterate index as the stream key.
pub fn sgda_step(state: &CentralState, oracle: &StochasticOracle, plan: &StepsizePlan) -> CentralState {
    let problem = oracle.problem();
    let n = problem.agents();
    let draws: Vec<(Array1<f64>, Array1<f64>)> = par::map_indexed(n, |i| {
        oracle.sample_grad_pair(i, state.t as u64, &state.x.view(), &state.y[i].view())
    });
    let y_next: Vec<Array1<f64>> = par::map_indexed(n, |i| {
        let ascent = &state.y[i] + &(&draws[i].1 * plan.eta_y);
        problem.project(i, &ascent.view())
    });
    let mut grad_sum = Array1::<f64>::zeros(problem.dim_x());
    for (hx, _) in &draws {
        grad_sum += hx;
    }
    let mean_grad = grad_sum / n as f64;
    CentralState {
        t: state.t + 1,
        x: &state.x - &(mean_grad * plan.eta_x),
        y: y_next,
        oracle_calls: state.oracle_calls + 2 * (n as u64) * oracle.batch() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Dgta,
    Dsgta,
    Gda,
    Sgda,
    GtDa { inner_steps: usize },
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub iterations: usize,
    /// Telemetry is recorded at iteration 0, every `record_every`-th
    /// iteration, and at the final one.
    pub record_every: usize,
    pub sigma: f64,
    pub batch: usize,
    pub seed: u64,
}

pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub final_swarm: Option<SwarmState>,
    pub final_central: Option<CentralState>,
}

/// Executes `iterations` steps of the chosen algorithm, recording telemetry
/// on the configured schedule. Any non-finite iterate aborts with a
/// diagnostic naming the first offending quantity. Deterministic given
/// `(settings, init)`.
pub fn run(
    kind: AlgorithmKind,
    problem: &dyn ProblemInstance,
    w: Option<&MixingMatrix>,
    plan: &StepsizePlan,
    settings: &RunSettings,
    init: &InitState,
) -> Result<RunOutput, RunError> {
    if settings.iterations == 0 {
        return Err(RunError::ZeroIterations);
    }
    let every = settings.record_every.max(1);
    let horizon = settings.iterations;
    let should_record = |t: usize| t % every == 0 || t == horizon;

    match kind {
        AlgorithmKind::Dgta | AlgorithmKind::Dsgta | AlgorithmKind::GtDa { .. } => {
            let w = w.ok_or(RunError::MissingTopology)?;
            let oracle = StochasticOracle::new(problem, settings.sigma, settings.batch, settings.seed);
            let mut state = match kind {
                AlgorithmKind::Dsgta => dsgta_init(&oracle, init)?,
                _ => dgta_init(problem, init)?,
            };
            let mut records = Vec::new();
            if should_record(0) {
                records.push(metrics::record_swarm(problem, &state, plan, w.lambda())?);
            }
            for _ in 0..horizon {
                state = match kind {
                    AlgorithmKind::Dgta => dgta_step(&state, problem, w, plan),
                    AlgorithmKind::Dsgta => dsgta_step(&state, &oracle, w, plan),
                    AlgorithmKind::GtDa { inner_steps } => {
                        gtda_step(&state, problem, w, plan, inner_steps)
                    }
                    _ => unreachable!(),
                };
                check_finite_swarm(&state)?;
                if should_record(state.t) {
                    records.push(metrics::record_swarm(problem, &state, plan, w.lambda())?);
                }
            }
            Ok(RunOutput { records, final_swarm: Some(state), final_central: None })
        }
        AlgorithmKind::Gda | AlgorithmKind::Sgda => {
            let oracle = StochasticOracle::new(problem, settings.sigma, settings.batch, settings.seed);
            let mut state = central_init(problem, init)?;
            let mut records = Vec::new();
            if should_record(0) {
                records.push(metrics::record_central(problem, &state, plan)?);
            }
            for _ in 0..horizon {
                state = match kind {
                    AlgorithmKind::Gda => gda_step(&state, problem, plan),
                    AlgorithmKind::Sgda => sgda_step(&state, &oracle, plan),
                    _ => unreachable!(),
                };
                check_finite_central(&state)?;
                if should_record(state.t) {
                    records.push(metrics::record_central(problem, &state, plan)?);
                }
            }
            Ok(RunOutput { records, final_swarm: None, final_central: Some(state) })
        }
    }
}

fn check_finite_swarm(state: &SwarmState) -> Result<(), RunError> {
    for (i, row) in state.x.rows().into_iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(RunError::NonFinite { quantity: format!("x[agent {i}][{k}]"), t: state.t });
            }
        }
    }
    for (i, y) in state.y.iter().enumerate() {
        for (k, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(RunError::NonFinite { quantity: format!("y[agent {i}][{k}]"), t: state.t });
            }
        }
    }
    for (i, row) in state.tracker.rows().into_iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(RunError::NonFinite {
                    quantity: format!("tracker[agent {i}][{k}]"),
                    t: state.t,
                });
            }
        }
    }
    Ok(())
}

fn check_finite_central(state: &CentralState) -> Result<(), RunError> {
    for (k, v) in state.x.iter().enumerate() {
        if !v.is_finite() {
            return Err(RunError::NonFinite { quantity: format!("x[{k}]"), t: state.t });
        }
    }
    for (i, y) in state.y.iter().enumerate() {
        for (k, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(RunError::NonFinite { quantity: format!("y[agent {i}][{k}]"), t: state.t });
            }
        }
    }
    Ok(())
}
