//! Decentralized min-max optimization over networks.
//!
//! This crate simulates swarms of agents that cooperatively solve
//! nonconvex–strongly-concave saddle problems of the form
//!
//! ```text
//!     min_x  (1/n) Σ_i  max_{y_i ∈ Y_i}  f_i(x, y_i)
//! ```
//!
//! over an undirected communication graph. Two single-loop methods are
//! provided — a deterministic gradient-tracking descent/ascent scheme and its
//! mini-batch stochastic variant — together with centralized and inner-loop
//! baselines, certified-constant problem instances, stepsize planners derived
//! from the methods' convergence analysis, per-iteration telemetry (consensus
//! error, tracking error, best-response gap, Lyapunov potential), and an
//! independent verification suite that replays the analysis' per-step
//! inequalities on recorded traces.
//!
//! The crate is organized along the pipeline:
//!
//! * [`topology`] — communication graphs and doubly-stochastic mixing matrices
//! * [`problems`] — the problem contract, two concrete instances, and the
//!   stochastic gradient oracle
//! * [`stepsize`] — stepsize/batch planners and constraint slack reports
//! * [`algorithms`] — the state-transition functions and the run driver
//! * [`metrics`] — per-iteration telemetry records and CSV emission
//! * [`verify`] — brute-force oracles and per-step inequality checkers
//! * [`harness`] — config-driven experiments, sweeps, and reports
//!
//! Per-agent work inside one iteration is embarrassingly parallel and runs on
//! rayon when the `parallel` feature (default) is enabled; disabling it yields
//! a fully sequential build with identical numerical results.

pub mod algorithms;
pub mod harness;
mod linalg;
pub mod metrics;
mod par;
pub mod problems;
pub mod stepsize;
pub mod topology;
pub mod verify;

pub use algorithms::{AlgorithmKind, RunError, RunOutput, SwarmState};
pub use problems::{ProblemConstants, ProblemInstance, StochasticOracle};
pub use stepsize::{RateConstants, Regime, StepsizePlan};
pub use topology::{Graph, MixingMatrix, TopologySpec, WeightScheme};

/// Computes `1 - lambda^2` as `(1 - lambda) * (1 + lambda)`, which keeps
/// precision when `lambda` is close to one.
pub fn one_minus_lambda_sq(lambda: f64) -> f64 {
    (1.0 - lambda) * (1.0 + lambda)
}
