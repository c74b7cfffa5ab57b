//! Distributionally robust logistic regression at desk scale.
//!
//! Each agent holds labeled samples and an adversary may move each feature
//! vector inside a ball of radius `r` around its original position, paying a
//! quadratic penalty `gamma` per unit of squared displacement:
//!
//! ```text
//!     f_i(x, {y_ij}) = (1/m_i) sum_j [ loss(x; y_ij, label_ij) - gamma ||y_ij - xi_ij||^2 ]
//! ```
//!
//! with the logistic loss `log(1 + exp(-label * x'y))`. The loss is convex in
//! `y` with curvature at most `||x||^2 / 4`, so the objective is strongly
//! concave in `y` only while `x` stays inside a norm cap `R_x` with
//! `2 gamma > R_x^2 / 4`. The constructor refuses configurations that cannot
//! certify this, and evaluation clips `x` to the cap so the certificate stays
//! valid along trajectories (experiments are sized to keep iterates well
//! inside the cap, where the clip is a no-op).

use ndarray::{s, Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Ball, ProblemConstants, ProblemError, ProblemInstance};

#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub features: Array1<f64>,
    /// +1 or -1.
    pub label: f64,
}

#[derive(Debug, Clone)]
pub struct RobustLogisticWrmParams {
    /// Quadratic penalty on adversarial displacement.
    pub gamma: f64,
    /// Ball radius available to the adversary per sample.
    pub perturbation_radius: f64,
    /// Norm cap on the classifier weights used by the concavity certificate.
    pub x_norm_cap: f64,
}

impl Default for RobustLogisticWrmParams {
    fn default() -> Self {
        Self { gamma: 0.4, perturbation_radius: 1.0, x_norm_cap: 1.5 }
    }
}

#[derive(Debug, Clone)]
pub struct RobustLogisticWrm {
    data: Vec<Vec<LabeledSample>>,
    gamma: f64,
    radius: f64,
    x_cap: f64,
    dim_x: usize,
    constants: ProblemConstants,
}

impl RobustLogisticWrm {
    pub fn new(
        data: Vec<Vec<LabeledSample>>,
        params: &RobustLogisticWrmParams,
    ) -> Result<Self, ProblemError> {
        if data.is_empty() || data.iter().any(|d| d.is_empty()) {
            return Err(ProblemError::Invalid("every agent needs at least one sample".into()));
        }
        let dim_x = data[0][0].features.len();
        for agent in &data {
            for s in agent {
                if s.features.len() != dim_x {
                    return Err(ProblemError::Invalid("feature dimension mismatch".into()));
                }
                if s.label != 1.0 && s.label != -1.0 {
                    return Err(ProblemError::Invalid(format!("label must be +1/-1, got {}", s.label)));
                }
            }
        }
        if params.perturbation_radius < 0.0 || params.gamma <= 0.0 || params.x_norm_cap <= 0.0 {
            return Err(ProblemError::Invalid("gamma, radius, x cap must be positive".into()));
        }

        // Per-sample loss curvature in y is at most ||x||^2/4 <= cap^2/4.
        let curvature_bound = params.x_norm_cap * params.x_norm_cap / 4.0;
        if 2.0 * params.gamma <= curvature_bound {
            return Err(ProblemError::NotStronglyConcave {
                two_gamma: 2.0 * params.gamma,
                curvature: curvature_bound,
            });
        }
        let m_max = data.iter().map(Vec::len).max().unwrap() as f64;
        // The 1/m_i averaging scales the y-Hessian blocks, so the certified
        // modulus carries the same factor.
        let strong_concavity = (2.0 * params.gamma - curvature_bound) / m_max;

        let feature_norm_max = data
            .iter()
            .flatten()
            .map(|s| s.features.dot(&s.features).sqrt())
            .fold(0.0, f64::max);
        let y_norm_bound = feature_norm_max + params.perturbation_radius;
        // Block-Hessian bound: max(||H_xx||, ||H_yy||) + ||H_xy|| with
        // H_xx <= B_y^2/4, |H_yy| <= 2 gamma, ||H_xy|| <= 1 + R_x B_y / 4.
        let smoothness = (y_norm_bound * y_norm_bound / 4.0).max(2.0 * params.gamma)
            + 1.0
            + params.x_norm_cap * y_norm_bound / 4.0;
        let smoothness = smoothness.max(strong_concavity);

        let m_for_diameter = data.iter().map(Vec::len).max().unwrap() as f64;
        let diameter = 2.0 * params.perturbation_radius * m_for_diameter.sqrt();

        Ok(Self {
            data,
            gamma: params.gamma,
            radius: params.perturbation_radius,
            x_cap: params.x_norm_cap,
            dim_x,
            constants: ProblemConstants { smoothness, strong_concavity, diameter },
        })
    }

    /// Toy instance with unit-scale Gaussian features and alternating labels.
    pub fn generate(
        agents: usize,
        samples_per_agent: usize,
        dim: usize,
        seed: u64,
        params: &RobustLogisticWrmParams,
    ) -> Result<Self, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut data = Vec::with_capacity(agents);
        for _ in 0..agents {
            let mut samples = Vec::with_capacity(samples_per_agent);
            for j in 0..samples_per_agent {
                let features =
                    Array1::from_shape_fn(dim, |_| scale * rng.sample::<f64, _>(StandardNormal));
                let label = if j % 2 == 0 { 1.0 } else { -1.0 };
                samples.push(LabeledSample { features, label });
            }
            data.push(samples);
        }
        Self::new(data, params)
    }

    /// Parses `label,feat_1,...,feat_p` lines.
    pub fn read_samples_csv(path: &std::path::Path) -> Result<Vec<LabeledSample>, ProblemError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProblemError::Invalid(format!("{}: {e}", path.display())))?;
        let mut samples = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let fields = fields.map_err(|e| {
                ProblemError::Invalid(format!("{} line {}: {e}", path.display(), idx + 1))
            })?;
            if fields.len() < 2 {
                return Err(ProblemError::Invalid(format!(
                    "{} line {}: need label plus at least one feature",
                    path.display(),
                    idx + 1
                )));
            }
            samples.push(LabeledSample {
                label: fields[0],
                features: Array1::from_vec(fields[1..].to_vec()),
            });
        }
        if samples.is_empty() {
            return Err(ProblemError::Invalid(format!("{}: no samples", path.display())));
        }
        Ok(samples)
    }

    pub fn samples(&self, agent: usize) -> &[LabeledSample] {
        &self.data[agent]
    }

    fn clip_x(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        let norm = x.dot(x).sqrt();
        if norm <= self.x_cap {
            x.to_owned()
        } else {
            x.to_owned() * (self.x_cap / norm)
        }
    }
}

fn log1p_exp(z: f64) -> f64 {
    // log(1 + exp(z)) without overflow
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ProblemInstance for RobustLogisticWrm {
    fn agents(&self) -> usize {
        self.data.len()
    }

    fn dim_x(&self) -> usize {
        self.dim_x
    }

    fn dim_y(&self, agent: usize) -> usize {
        self.data[agent].len() * self.dim_x
    }

    fn eval(&self, agent: usize, x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> f64 {
        let xc = self.clip_x(x);
        let p = self.dim_x;
        let samples = &self.data[agent];
        let mut total = 0.0;
        for (j, sample) in samples.iter().enumerate() {
            let yj = y.slice(s![j * p..(j + 1) * p]);
            let margin = sample.label * xc.dot(&yj);
            let displaced = yj.to_owned() - &sample.features;
            total += log1p_exp(-margin) - self.gamma * displaced.dot(&displaced);
        }
        total / samples.len() as f64
    }

    fn grad_x(&self, agent: usize, x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> Array1<f64> {
        let xc = self.clip_x(x);
        let p = self.dim_x;
        let samples = &self.data[agent];
        let mut grad = Array1::zeros(p);
        for (j, sample) in samples.iter().enumerate() {
            let yj = y.slice(s![j * p..(j + 1) * p]);
            let margin = sample.label * xc.dot(&yj);
            let weight = -sample.label * sigmoid(-margin);
            grad.scaled_add(weight, &yj);
        }
        grad / samples.len() as f64
    }

    fn grad_y(&self, agent: usize, x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> Array1<f64> {
        let xc = self.clip_x(x);
        let p = self.dim_x;
        let samples = &self.data[agent];
        let inv_m = 1.0 / samples.len() as f64;
        let mut grad = Array1::zeros(y.len());
        for (j, sample) in samples.iter().enumerate() {
            let yj = y.slice(s![j * p..(j + 1) * p]);
            let margin = sample.label * xc.dot(&yj);
            let weight = -sample.label * sigmoid(-margin);
            let mut block = grad.slice_mut(s![j * p..(j + 1) * p]);
            block.scaled_add(weight * inv_m, &xc);
            let displaced = yj.to_owned() - &sample.features;
            block.scaled_add(-2.0 * self.gamma * inv_m, &displaced);
        }
        grad
    }

    fn y_blocks(&self, agent: usize) -> Vec<Ball> {
        self.data[agent]
            .iter()
            .map(|s| Ball { center: s.features.clone(), radius: self.radius })
            .collect()
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }
}
