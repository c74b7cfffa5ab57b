//! Problem contract and concrete saddle instances.
//!
//! A problem is a collection of per-agent objectives `f_i(x, y_i)` that are
//! smooth, strongly concave in `y_i`, and constrained to a convex compact set
//! `Y_i` (here always a product of Euclidean balls). Instances certify their
//! own constants: smoothness `L`, strong-concavity modulus `mu`, and the
//! largest constraint diameter `D`. Stepsize planning is only meaningful with
//! certified constants, so both concrete instances compute `L` rather than
//! assume it.

mod oracle;
mod quadratic;
mod wrm;

pub use oracle::StochasticOracle;
pub use quadratic::{read_matrix_file, QuadraticAgent, QuadraticSaddle, QuadraticSaddleParams};
pub use wrm::{LabeledSample, RobustLogisticWrm, RobustLogisticWrmParams};

use ndarray::{Array1, ArrayView1};
use thiserror::Error;

use crate::par;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("inner maximization did not reach tolerance {tol} after {iters} iterations (residual {residual}); strong-concavity certificate is suspect")]
    BestResponseDiverged { iters: usize, tol: f64, residual: f64 },
    #[error("strong concavity certificate failed: 2*gamma = {two_gamma} must exceed the loss curvature bound {curvature} under the x-norm cap")]
    NotStronglyConcave { two_gamma: f64, curvature: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Certified smoothness/concavity constants of an instance.
#[derive(Debug, Clone, Copy)]
pub struct ProblemConstants {
    /// Joint gradient Lipschitz constant of every `f_i`.
    pub smoothness: f64,
    /// Strong-concavity modulus in `y`.
    pub strong_concavity: f64,
    /// Largest diameter among the constraint sets.
    pub diameter: f64,
}

impl ProblemConstants {
    pub fn condition_number(&self) -> f64 {
        self.smoothness / self.strong_concavity
    }
}

/// Euclidean ball `{ v : ||v - center|| <= radius }`.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: Array1<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, v: &ArrayView1<f64>, slack: f64) -> bool {
        let mut dist_sq = 0.0;
        for (a, b) in v.iter().zip(self.center.iter()) {
            dist_sq += (a - b) * (a - b);
        }
        dist_sq.sqrt() <= self.radius + slack
    }
}

/// Euclidean projection onto a ball. A zero radius collapses everything to
/// the center.
pub fn project_ball(v: &ArrayView1<f64>, center: &ArrayView1<f64>, radius: f64) -> Array1<f64> {
    debug_assert!(radius >= 0.0, "ball radius must be nonnegative");
    let diff = v.to_owned() - center;
    let dist = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    if dist <= radius {
        v.to_owned()
    } else if dist == 0.0 || radius == 0.0 {
        center.to_owned()
    } else {
        center.to_owned() + diff * (radius / dist)
    }
}

/// Contract every saddle instance implements.
///
/// `x` is shared across agents with dimension `dim_x()`; each agent `i` owns
/// a block `y_i` of dimension `dim_y(i)` constrained to a product of balls
/// (`y_blocks(i)`). Gradients are exact; stochastic estimates are layered on
/// top by [`StochasticOracle`].
pub trait ProblemInstance: Send + Sync {
    fn agents(&self) -> usize;
    fn dim_x(&self) -> usize;
    fn dim_y(&self, agent: usize) -> usize;

    fn eval(&self, agent: usize, x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> f64;
    fn grad_x(&self, agent: usize, x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> Array1<f64>;
    fn grad_y(&self, agent: usize, x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> Array1<f64>;

    /// The constraint set of agent `i` as a product of balls over contiguous
    /// sub-blocks of `y_i`, in order.
    fn y_blocks(&self, agent: usize) -> Vec<Ball>;

    fn constants(&self) -> ProblemConstants;

    /// Euclidean projection of `v` onto `Y_i`, block by block.
    fn project(&self, agent: usize, v: &ArrayView1<f64>) -> Array1<f64> {
        let blocks = self.y_blocks(agent);
        let mut out = Array1::zeros(v.len());
        let mut offset = 0;
        for ball in &blocks {
            let len = ball.center.len();
            let slice = v.slice(ndarray::s![offset..offset + len]);
            let projected = project_ball(&slice, &ball.center.view(), ball.radius);
            out.slice_mut(ndarray::s![offset..offset + len]).assign(&projected);
            offset += len;
        }
        debug_assert_eq!(offset, v.len(), "y blocks must tile the y vector");
        out
    }

    fn is_feasible(&self, agent: usize, y: &ArrayView1<f64>, slack: f64) -> bool {
        let blocks = self.y_blocks(agent);
        let mut offset = 0;
        for ball in &blocks {
            let len = ball.center.len();
            if !ball.contains(&y.slice(ndarray::s![offset..offset + len]), slack) {
                return false;
            }
            offset += len;
        }
        true
    }

    /// Maximizer of `f_i(x, .)` over `Y_i`.
    ///
    /// The default runs projected gradient ascent with step `1/L` to a
    /// fixed-point residual of 1e-10; instances with a closed form override
    /// it. Non-convergence within 1e6 iterations is a hard error because it
    /// indicates the concavity certificate does not actually hold.
    fn best_response(&self, agent: usize, x: &ArrayView1<f64>) -> Result<Array1<f64>, ProblemError> {
        let step = 1.0 / self.constants().smoothness;
        let tol = 1e-10;
        let max_iters = 1_000_000;
        let mut y = Array1::zeros(self.dim_y(agent));
        let mut offset = 0;
        for ball in self.y_blocks(agent) {
            let len = ball.center.len();
            y.slice_mut(ndarray::s![offset..offset + len]).assign(&ball.center);
            offset += len;
        }
        let mut residual = f64::INFINITY;
        for _ in 0..max_iters {
            let ascent = &y + &(self.grad_y(agent, x, &y.view()) * step);
            let next = self.project(agent, &ascent.view());
            residual = (&next - &y).iter().map(|d| d * d).sum::<f64>().sqrt();
            y = next;
            if residual <= tol {
                return Ok(y);
            }
        }
        Err(ProblemError::BestResponseDiverged { iters: max_iters, tol, residual })
    }

    /// Lower bound on `Phi` if the instance certifies one.
    fn phi_star(&self) -> Option<f64> {
        None
    }
}

/// `Phi(x) = (1/n) sum_i f_i(x, yhat_i(x))` and its gradient
/// `(1/n) sum_i grad_x f_i(x, yhat_i(x))` (Danskin).
pub fn phi_and_grad(
    problem: &dyn ProblemInstance,
    x: &ArrayView1<f64>,
) -> Result<(f64, Array1<f64>), ProblemError> {
    let n = problem.agents();
    let per_agent: Vec<Result<(f64, Array1<f64>), ProblemError>> = par::map_indexed(n, |i| {
        let y_hat = problem.best_response(i, x)?;
        let value = problem.eval(i, x, &y_hat.view());
        let grad = problem.grad_x(i, x, &y_hat.view());
        Ok((value, grad))
    });
    let mut phi = 0.0;
    let mut grad = Array1::zeros(problem.dim_x());
    let scale = 1.0 / n as f64;
    for item in per_agent {
        let (value, g) = item?;
        phi += scale * value;
        grad.scaled_add(scale, &g);
    }
    Ok((phi, grad))
}
