//! Per-iteration telemetry.
//!
//! A [`TraceRecord`] captures every quantity the convergence analysis talks
//! about: the stationarity measure `||grad Phi(x_bar)||^2`, the consensus and
//! tracking errors, the aggregate best-response gap
//! `delta = sum_i ||yhat_i(x_bar) - y_i||^2`, and the Lyapunov potential
//!
//! ```text
//!     L = Phi(x_bar) - Phi* + C1 eta_x ||x - 1 x_bar'||^2
//!                           + C2 eta_x delta
//!                           + C3 eta_x^3 ||g - 1 g_bar'||^2
//! ```
//!
//! with `C1 = 300 kappa^2 L^2 / (n (1-lambda^2))`,
//! `C2 = 8 L^2 / (n eta_y mu)`, and
//! `C3 = 2400 kappa^2 L^2 / (n (1-lambda^2)^3)`.
//!
//! Records are pure observers: computing them never touches algorithm state
//! or random streams. Fields that need an unavailable ingredient (a `Phi`
//! lower bound, a tracker) are absent rather than fabricated and serialize
//! as the literal `NA`.

use std::io::Write;
use std::path::Path;

use ndarray::Array1;

use crate::algorithms::{CentralState, SwarmState};
use crate::one_minus_lambda_sq;
use crate::par;
use crate::problems::{ProblemConstants, ProblemError, ProblemInstance};
use crate::stepsize::StepsizePlan;

pub const CSV_HEADER: &str =
    "t,grad_phi_norm_sq,phi,consensus_x,tracking_err,delta,lyapunov,mean_grad_norm_sq,samples,comms";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub grad_phi_norm_sq: Option<f64>,
    pub phi: Option<f64>,
    pub consensus_x: f64,
    pub tracking_err: Option<f64>,
    pub delta: Option<f64>,
    pub lyapunov: Option<f64>,
    pub mean_grad_norm_sq: f64,
    pub samples: u64,
    pub comms: u64,
}

/// Lyapunov penalty coefficients `(C1, C2, C3)`.
pub fn lyapunov_coefficients(
    constants: &ProblemConstants,
    agents: usize,
    lambda: f64,
    eta_y: f64,
) -> (f64, f64, f64) {
    let l = constants.smoothness;
    let mu = constants.strong_concavity;
    let kappa = constants.condition_number();
    let n = agents as f64;
    let gap_sq = one_minus_lambda_sq(lambda);
    let c1 = 300.0 * kappa * kappa * l * l / (n * gap_sq);
    let c2 = 8.0 * l * l / (n * eta_y * mu);
    let c3 = 2400.0 * kappa * kappa * l * l / (n * gap_sq.powi(3));
    (c1, c2, c3)
}

/// Lyapunov value from already-computed trace quantities.
pub fn lyapunov_from_parts(
    phi: f64,
    phi_star: f64,
    consensus_x: f64,
    delta: f64,
    tracking_err: f64,
    plan: &StepsizePlan,
    constants: &ProblemConstants,
    agents: usize,
    lambda: f64,
) -> f64 {
    let (c1, c2, c3) = lyapunov_coefficients(constants, agents, lambda, plan.eta_y);
    phi - phi_star
        + c1 * plan.eta_x * consensus_x
        + c2 * plan.eta_x * delta
        + c3 * plan.eta_x.powi(3) * tracking_err
}

/// Lyapunov value of a swarm state, or `None` when the instance certifies no
/// `Phi` lower bound.
pub fn lyapunov(
    problem: &dyn ProblemInstance,
    state: &SwarmState,
    plan: &StepsizePlan,
    lambda: f64,
) -> Result<Option<f64>, ProblemError> {
    Ok(record_swarm(problem, state, plan, lambda)?.lyapunov)
}

/// Full telemetry record for a distributed state.
pub fn record_swarm(
    problem: &dyn ProblemInstance,
    state: &SwarmState,
    plan: &StepsizePlan,
    lambda: f64,
) -> Result<TraceRecord, ProblemError> {
    let n = state.agents();
    let x_mean = state.x_mean();

    let responses: Vec<Result<Array1<f64>, ProblemError>> =
        par::map_indexed(n, |i| problem.best_response(i, &x_mean.view()));
    let mut phi = 0.0;
    let mut grad_phi = Array1::<f64>::zeros(problem.dim_x());
    let mut delta = 0.0;
    let scale = 1.0 / n as f64;
    for (i, response) in responses.into_iter().enumerate() {
        let y_hat = response?;
        phi += scale * problem.eval(i, &x_mean.view(), &y_hat.view());
        grad_phi.scaled_add(scale, &problem.grad_x(i, &x_mean.view(), &y_hat.view()));
        let gap = &y_hat - &state.y[i];
        delta += gap.dot(&gap);
    }

    let consensus_x = deviation_sq(&state.x, &x_mean);
    let tracking_err = deviation_sq(&state.tracker, &state.tracker_mean());

    let true_grads: Vec<Array1<f64>> =
        par::map_indexed(n, |i| problem.grad_x(i, &state.x.row(i), &state.y[i].view()));
    let mut mean_grad = Array1::<f64>::zeros(problem.dim_x());
    for g in &true_grads {
        mean_grad.scaled_add(scale, g);
    }

    let lyapunov = problem.phi_star().map(|phi_star| {
        lyapunov_from_parts(
            phi,
            phi_star,
            consensus_x,
            delta,
            tracking_err,
            plan,
            &problem.constants(),
            n,
            lambda,
        )
    });

    Ok(TraceRecord {
        t: state.t,
        grad_phi_norm_sq: Some(grad_phi.dot(&grad_phi)),
        phi: Some(phi),
        consensus_x,
        tracking_err: Some(tracking_err),
        delta: Some(delta),
        lyapunov,
        mean_grad_norm_sq: mean_grad.dot(&mean_grad),
        samples: state.oracle_calls,
        comms: state.comm_rounds,
    })
}

/// Telemetry for a centralized state: consensus is identically zero and
/// there is no tracker.
pub fn record_central(
    problem: &dyn ProblemInstance,
    state: &CentralState,
    plan: &StepsizePlan,
) -> Result<TraceRecord, ProblemError> {
    let n = problem.agents();
    let scale = 1.0 / n as f64;
    let mut phi = 0.0;
    let mut grad_phi = Array1::<f64>::zeros(problem.dim_x());
    let mut delta = 0.0;
    let responses: Vec<Result<Array1<f64>, ProblemError>> =
        par::map_indexed(n, |i| problem.best_response(i, &state.x.view()));
    for (i, response) in responses.into_iter().enumerate() {
        let y_hat = response?;
        phi += scale * problem.eval(i, &state.x.view(), &y_hat.view());
        grad_phi.scaled_add(scale, &problem.grad_x(i, &state.x.view(), &y_hat.view()));
        let gap = &y_hat - &state.y[i];
        delta += gap.dot(&gap);
    }
    let mut mean_grad = Array1::<f64>::zeros(problem.dim_x());
    for i in 0..n {
        mean_grad.scaled_add(scale, &problem.grad_x(i, &state.x.view(), &state.y[i].view()));
    }
    let lyapunov = problem.phi_star().map(|phi_star| {
        lyapunov_from_parts(phi, phi_star, 0.0, delta, 0.0, plan, &problem.constants(), n, 0.0)
    });
    Ok(TraceRecord {
        t: state.t,
        grad_phi_norm_sq: Some(grad_phi.dot(&grad_phi)),
        phi: Some(phi),
        consensus_x: 0.0,
        tracking_err: None,
        delta: Some(delta),
        lyapunov,
        mean_grad_norm_sq: mean_grad.dot(&mean_grad),
        samples: state.oracle_calls,
        comms: 0,
    })
}

fn deviation_sq(m: &ndarray::Array2<f64>, mean: &Array1<f64>) -> f64 {
    let mut acc = 0.0;
    for row in m.rows() {
        for (v, c) in row.iter().zip(mean.iter()) {
            acc += (v - c) * (v - c);
        }
    }
    acc
}

fn fmt_float(v: f64) -> String {
    // 17 significant digits make the text roundtrip bit-exact
    format!("{:.16e}", v)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_else(|| "NA".to_string())
}

impl TraceRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            fmt_opt(self.grad_phi_norm_sq),
            fmt_opt(self.phi),
            fmt_float(self.consensus_x),
            fmt_opt(self.tracking_err),
            fmt_opt(self.delta),
            fmt_opt(self.lyapunov),
            fmt_float(self.mean_grad_norm_sq),
            self.samples,
            self.comms
        )
    }
}

pub fn write_csv(path: &Path, records: &[TraceRecord]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{CSV_HEADER}")?;
    for record in records {
        writeln!(file, "{}", record.to_csv_row())?;
    }
    Ok(())
}

/// Parses a trace CSV produced by [`write_csv`].
pub fn read_csv(path: &Path) -> std::io::Result<Vec<TraceRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: expected 10 fields", idx + 1),
            ));
        }
        let opt = |s: &str| -> Option<f64> {
            if s == "NA" {
                None
            } else {
                s.parse().ok()
            }
        };
        let num = |s: &str| -> f64 { s.parse().unwrap_or(f64::NAN) };
        records.push(TraceRecord {
            t: fields[0].parse().unwrap_or(0),
            grad_phi_norm_sq: opt(fields[1]),
            phi: opt(fields[2]),
            consensus_x: num(fields[3]),
            tracking_err: opt(fields[4]),
            delta: opt(fields[5]),
            lyapunov: opt(fields[6]),
            mean_grad_norm_sq: num(fields[7]),
            samples: fields[8].parse().unwrap_or(0),
            comms: fields[9].parse().unwrap_or(0),
        });
    }
    Ok(records)
}
