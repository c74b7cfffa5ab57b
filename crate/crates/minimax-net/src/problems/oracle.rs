//! Mini-batch stochastic gradient oracle.
//!
//! Draws are pure functions of `(seed, agent, point_index, draw)`: each
//! `(agent, point)` cell owns an independent counter-based stream, so results
//! do not depend on evaluation order or thread scheduling. Noise is isotropic
//! Gaussian over the concatenated `(x, y)` gradient with per-coordinate
//! variance `sigma^2 / (d + d_i)`, so one draw carries total variance exactly
//! `sigma^2` and a size-`b` batch average carries `sigma^2 / b`.
//!
//! With `sigma = 0` the oracle returns the exact gradients without touching
//! the generator, so deterministic and stochastic code paths coincide
//! bit-for-bit.

use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ProblemInstance;

pub struct StochasticOracle<'a> {
    problem: &'a dyn ProblemInstance,
    sigma: f64,
    batch: usize,
    seed: u64,
}

impl<'a> StochasticOracle<'a> {
    pub fn new(problem: &'a dyn ProblemInstance, sigma: f64, batch: usize, seed: u64) -> Self {
        assert!(batch >= 1, "batch size must be at least 1");
        assert!(sigma >= 0.0, "noise level must be nonnegative");
        Self { problem, sigma, batch, seed }
    }

    pub fn problem(&self) -> &'a dyn ProblemInstance {
        self.problem
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Mini-batch estimates of `(grad_x f_i, grad_y f_i)` at `(x, y)`.
    ///
    /// `point_index` identifies the iterate the batch is drawn at (the
    /// initialization is point 0, the iterate after step `t` is point
    /// `t + 1`). Draw indices advance within the `(agent, point)` stream.
    pub fn sample_grad_pair(
        &self,
        agent: usize,
        point_index: u64,
        x: &ArrayView1<f64>,
        y: &ArrayView1<f64>,
    ) -> (Array1<f64>, Array1<f64>) {
        let gx = self.problem.grad_x(agent, x, y);
        let gy = self.problem.grad_y(agent, x, y);
        if self.sigma == 0.0 {
            return (gx, gy);
        }
        let dx = gx.len();
        let dy = gy.len();
        let scale = self.sigma / ((dx + dy) as f64).sqrt();
        let mut rng = self.stream(agent, point_index);
        let mut noise_x = Array1::<f64>::zeros(dx);
        let mut noise_y = Array1::<f64>::zeros(dy);
        for _ in 0..self.batch {
            for v in noise_x.iter_mut() {
                let draw: f64 = StandardNormal.sample(&mut rng);
                *v += draw;
            }
            for v in noise_y.iter_mut() {
                let draw: f64 = StandardNormal.sample(&mut rng);
                *v += draw;
            }
        }
        let batch_scale = scale / self.batch as f64;
        (gx + noise_x * batch_scale, gy + noise_y * batch_scale)
    }

    fn stream(&self, agent: usize, point_index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(agent as u64).to_le_bytes());
        key[16..24].copy_from_slice(&point_index.to_le_bytes());
        key[24..32].copy_from_slice(&0x6772_6164_7061_6972u64.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}
