//! Quadratic saddle instance with closed-form best responses.
//!
//! Each agent owns
//!
//! ```text
//!     f_i(x, y) = -1/2 x'A_i x + b_i'x + x'C_i y - mu/2 ||y - c_i||^2
//! ```
//!
//! with `A_i` symmetric and possibly indefinite (so `f_i` is nonconvex in
//! `x`) and `Y_i` a Euclidean ball around `c_i`. Because the `y`-curvature is
//! isotropic, the constrained maximizer is the ball projection of the
//! unconstrained one, which makes every diagnostic quantity computable in
//! closed form.

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Ball, ProblemConstants, ProblemError, ProblemInstance};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct QuadraticAgent {
    /// Symmetric `d x d` curvature of the minimization variable.
    pub curvature: Array2<f64>,
    /// Linear term in `x`.
    pub linear: Array1<f64>,
    /// `d x d_i` bilinear coupling.
    pub coupling: Array2<f64>,
    /// Center of the concave quadratic in `y`; also the constraint ball center.
    pub y_center: Array1<f64>,
    /// Constraint ball radius.
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct QuadraticSaddle {
    agents: Vec<QuadraticAgent>,
    mu: f64,
    constants: ProblemConstants,
    phi_star: Option<f64>,
}

/// Seeded generator knobs for desk-scale instances.
#[derive(Debug, Clone)]
pub struct QuadraticSaddleParams {
    pub agents: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    pub mu: f64,
    /// Eigenvalues of `A_i` are drawn from `[-curvature_scale, curvature_scale]`,
    /// with one eigenvalue forced positive and one negative so each `f_i` is
    /// genuinely nonconvex in `x`.
    pub curvature_scale: f64,
    pub coupling_scale: f64,
    pub linear_scale: f64,
    pub center_scale: f64,
    pub radius: f64,
    pub seed: u64,
    /// When set, the couplings are inflated until the averaged interior
    /// Hessian of `Phi` is at least this positive definite, which keeps `Phi`
    /// bounded below on any box despite the indefinite `A_i`.
    pub phi_margin: Option<f64>,
}

impl Default for QuadraticSaddleParams {
    fn default() -> Self {
        Self {
            agents: 4,
            dim_x: 4,
            dim_y: 2,
            mu: 1.0,
            curvature_scale: 0.6,
            coupling_scale: 0.8,
            linear_scale: 0.3,
            center_scale: 0.4,
            radius: 5.0,
            seed: 7,
            phi_margin: Some(0.05),
        }
    }
}

impl QuadraticSaddle {
    pub fn new(agents: Vec<QuadraticAgent>, mu: f64) -> Result<Self, ProblemError> {
        if agents.is_empty() {
            return Err(ProblemError::Invalid("need at least one agent".into()));
        }
        if mu <= 0.0 {
            return Err(ProblemError::Invalid("mu must be positive".into()));
        }
        let d = agents[0].linear.len();
        let mut agents = agents;
        for a in &mut agents {
            if a.curvature.nrows() != d || a.curvature.ncols() != d {
                return Err(ProblemError::Invalid("curvature matrix shape mismatch".into()));
            }
            if a.coupling.nrows() != d || a.coupling.ncols() != a.y_center.len() {
                return Err(ProblemError::Invalid("coupling matrix shape mismatch".into()));
            }
            if a.radius < 0.0 {
                return Err(ProblemError::Invalid("ball radius must be nonnegative".into()));
            }
            // symmetrize so downstream identities are exact
            let sym = (&a.curvature + &a.curvature.t()) * 0.5;
            a.curvature = sym;
        }
        let smoothness = certified_smoothness(&agents, mu);
        let diameter = agents.iter().map(|a| 2.0 * a.radius).fold(0.0, f64::max);
        Ok(Self {
            agents,
            mu,
            constants: ProblemConstants { smoothness, strong_concavity: mu, diameter },
            phi_star: None,
        })
    }

    pub fn generate(params: &QuadraticSaddleParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let d = params.dim_x;
        let dy = params.dim_y;
        let mut agents = Vec::with_capacity(params.agents);
        for _ in 0..params.agents {
            let basis = linalg::random_orthogonal(d, &mut rng);
            let mut eigs: Vec<f64> =
                (0..d).map(|_| rng.gen_range(-params.curvature_scale..params.curvature_scale)).collect();
            eigs[0] = params.curvature_scale * rng.gen_range(0.5..1.0);
            if d > 1 {
                eigs[1] = -params.curvature_scale * rng.gen_range(0.5..1.0);
            }
            let mut curvature = Array2::zeros((d, d));
            for k in 0..d {
                let col = basis.column(k);
                for i in 0..d {
                    for j in 0..d {
                        curvature[[i, j]] += eigs[k] * col[i] * col[j];
                    }
                }
            }
            let scale = params.coupling_scale / (d as f64).sqrt();
            let coupling =
                Array2::from_shape_fn((d, dy), |_| scale * rng.sample::<f64, _>(StandardNormal));
            let linear = Array1::from_shape_fn(d, |_| {
                params.linear_scale * rng.sample::<f64, _>(StandardNormal)
            });
            let y_center = Array1::from_shape_fn(dy, |_| {
                params.center_scale * rng.sample::<f64, _>(StandardNormal)
            });
            agents.push(QuadraticAgent {
                curvature,
                linear,
                coupling,
                y_center,
                radius: params.radius,
            });
        }
        if let Some(margin) = params.phi_margin {
            inflate_coupling_for_margin(&mut agents, params.mu, margin);
        }
        Self::new(agents, params.mu).expect("generated instance is structurally valid")
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn agent(&self, i: usize) -> &QuadraticAgent {
        &self.agents[i]
    }

    /// Unconstrained maximizer `c_i + C_i'x / mu`.
    pub fn unconstrained_best_response(&self, agent: usize, x: &ndarray::ArrayView1<f64>) -> Array1<f64> {
        let a = &self.agents[agent];
        &a.y_center + &(a.coupling.t().dot(x) / self.mu)
    }

    /// True when every agent's unconstrained maximizer at `x` lies strictly
    /// inside its ball (margin in absolute distance).
    pub fn all_best_responses_interior(&self, x: &ndarray::ArrayView1<f64>, margin: f64) -> bool {
        (0..self.agents.len()).all(|i| {
            let a = &self.agents[i];
            let offset = a.coupling.t().dot(x) / self.mu;
            linalg::l2(&offset) < a.radius - margin
        })
    }

    /// `Phi(x)` on the region where no projection is active:
    /// `mean_i [ -1/2 x'A_i x + b_i'x + x'C_i c_i + ||C_i'x||^2 / (2 mu) ]`.
    pub fn closed_form_phi_interior(&self, x: &ndarray::ArrayView1<f64>) -> f64 {
        let n = self.agents.len() as f64;
        self.agents
            .iter()
            .map(|a| {
                let ax = a.curvature.dot(x);
                let ctx = a.coupling.t().dot(x);
                -0.5 * x.dot(&ax)
                    + a.linear.dot(x)
                    + x.dot(&a.coupling.dot(&a.y_center))
                    + ctx.dot(&ctx) / (2.0 * self.mu)
            })
            .sum::<f64>()
            / n
    }

    /// Certifies a lower bound for `Phi` by box-projected multi-start
    /// gradient descent and stores it for the Lyapunov metric. Returns the
    /// bound.
    pub fn certify_phi_star(&mut self, half_width: f64, starts: usize, iters: usize, seed: u64) -> f64 {
        let d = self.dim_x();
        let kappa = self.constants.condition_number();
        let step = 1.0 / (2.0 * kappa * self.constants.smoothness);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let mut best = f64::INFINITY;
        for start in 0..starts.max(1) {
            let mut x: Array1<f64> = if start == 0 {
                Array1::zeros(d)
            } else {
                Array1::from_shape_fn(d, |_| rng.gen_range(-half_width..half_width))
            };
            for _ in 0..iters {
                let (value, grad) = super::phi_and_grad(self, &x.view())
                    .expect("closed-form best response is total");
                best = best.min(value);
                x = &x - &(grad * step);
                x.mapv_inplace(|v| v.clamp(-half_width, half_width));
            }
            let (value, _) = super::phi_and_grad(self, &x.view())
                .expect("closed-form best response is total");
            best = best.min(value);
        }
        self.phi_star = Some(best);
        best
    }

    pub fn set_phi_star(&mut self, phi_star: Option<f64>) {
        self.phi_star = phi_star;
    }
}

impl ProblemInstance for QuadraticSaddle {
    fn agents(&self) -> usize {
        self.agents.len()
    }

    fn dim_x(&self) -> usize {
        self.agents[0].linear.len()
    }

    fn dim_y(&self, agent: usize) -> usize {
        self.agents[agent].y_center.len()
    }

    fn eval(&self, agent: usize, x: &ndarray::ArrayView1<f64>, y: &ndarray::ArrayView1<f64>) -> f64 {
        let a = &self.agents[agent];
        let ax = a.curvature.dot(x);
        let shifted = y.to_owned() - &a.y_center;
        -0.5 * x.dot(&ax) + a.linear.dot(x) + x.dot(&a.coupling.dot(y))
            - 0.5 * self.mu * shifted.dot(&shifted)
    }

    fn grad_x(&self, agent: usize, x: &ndarray::ArrayView1<f64>, y: &ndarray::ArrayView1<f64>) -> Array1<f64> {
        let a = &self.agents[agent];
        -a.curvature.dot(x) + &a.linear + &a.coupling.dot(y)
    }

    fn grad_y(&self, agent: usize, x: &ndarray::ArrayView1<f64>, y: &ndarray::ArrayView1<f64>) -> Array1<f64> {
        let a = &self.agents[agent];
        a.coupling.t().dot(x) - (y.to_owned() - &a.y_center) * self.mu
    }

    fn y_blocks(&self, agent: usize) -> Vec<Ball> {
        let a = &self.agents[agent];
        vec![Ball { center: a.y_center.clone(), radius: a.radius }]
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    fn best_response(&self, agent: usize, x: &ndarray::ArrayView1<f64>) -> Result<Array1<f64>, ProblemError> {
        let unconstrained = self.unconstrained_best_response(agent, x);
        Ok(self.project(agent, &unconstrained.view()))
    }

    fn phi_star(&self) -> Option<f64> {
        self.phi_star
    }
}

/// `L = max_i || [[-A_i, C_i], [C_i', -mu I]] ||_2`.
fn certified_smoothness(agents: &[QuadraticAgent], mu: f64) -> f64 {
    agents
        .iter()
        .map(|a| {
            let d = a.linear.len();
            let dy = a.y_center.len();
            let m = d + dy;
            let mut hess = Array2::zeros((m, m));
            hess.slice_mut(s![..d, ..d]).assign(&(-&a.curvature));
            hess.slice_mut(s![..d, d..]).assign(&a.coupling);
            hess.slice_mut(s![d.., ..d]).assign(&a.coupling.t());
            for k in 0..dy {
                hess[[d + k, d + k]] = -mu;
            }
            linalg::sym_spectral_norm(&hess, 1e-12, 10 * m * m, false)
        })
        .fold(mu, f64::max)
}

fn inflate_coupling_for_margin(agents: &mut [QuadraticAgent], mu: f64, margin: f64) {
    let d = agents[0].linear.len();
    let n = agents.len() as f64;
    let mut rho: f64 = 1.0;
    for _ in 0..200 {
        let mut mean_hess = Array2::<f64>::zeros((d, d));
        for a in agents.iter() {
            let cct = a.coupling.dot(&a.coupling.t());
            mean_hess = mean_hess + (-&a.curvature + cct * (rho * rho / mu)) / n;
        }
        let min_eig = linalg::jacobi_eigenvalues(&mean_hess)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig >= margin {
            break;
        }
        rho *= 1.1;
    }
    if rho > 1.0 {
        for a in agents.iter_mut() {
            a.coupling *= rho;
        }
    }
}

/// Reads a whitespace-separated, row-per-line matrix file.
pub fn read_matrix_file(path: &std::path::Path) -> Result<Array2<f64>, ProblemError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ProblemError::Invalid(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| {
            ProblemError::Invalid(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(ProblemError::Invalid(format!(
                    "{} line {}: ragged row ({} vs {} columns)",
                    path.display(),
                    idx + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ProblemError::Invalid(format!("{}: empty matrix file", path.display())));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Array2::from_shape_vec((r, c), rows.into_iter().flatten().collect()).unwrap())
}
