//! Shared fixtures for the integration suites.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use minimax_net::problems::{
    QuadraticAgent, QuadraticSaddle, QuadraticSaddleParams, RobustLogisticWrm,
    RobustLogisticWrmParams,
};
use minimax_net::stepsize::{RateConstants, StepsizePlan};
use minimax_net::topology::{
    build_graph, build_mixing_matrix, MixingMatrix, TopologySpec, WeightScheme,
};

pub fn metropolis(spec: &TopologySpec, n: usize) -> MixingMatrix {
    let graph = build_graph(spec, n).unwrap();
    build_mixing_matrix(&graph, WeightScheme::Metropolis).unwrap()
}

pub fn corollary1_plan(problem: &dyn minimax_net::ProblemInstance, lambda: f64) -> StepsizePlan {
    let constants =
        RateConstants::new(problem.constants(), lambda, 0.0, 1.0, problem.agents(), 1).unwrap();
    StepsizePlan::corollary1(&constants).unwrap()
}

/// Quadratic swarm whose couplings are scaled rotations, so the interior
/// curvature of `Phi` is isotropic (`c^2/mu` in every direction). This keeps
/// the deterministic convergence mono-exponential, which the rate-slope
/// checks rely on. The tiny `a_eps` spectra keep each `f_i` indefinite in `x`.
pub fn isotropic_quadratic(
    agents: usize,
    dim: usize,
    coupling: f64,
    mu: f64,
    radius: f64,
    seed: u64,
) -> QuadraticSaddle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_eps = 0.02;
    let mut parts = Vec::with_capacity(agents);
    for _ in 0..agents {
        let basis = random_orthogonal(dim, &mut rng);
        let mut curvature = Array2::zeros((dim, dim));
        for k in 0..dim {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let col = basis.column(k);
            for i in 0..dim {
                for j in 0..dim {
                    curvature[[i, j]] += sign * a_eps * col[i] * col[j];
                }
            }
        }
        let rotation = random_orthogonal(dim, &mut rng);
        let coupling_mat = rotation * coupling;
        let linear = Array1::from_shape_fn(dim, |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            0.05 * v
        });
        let y_center = Array1::from_shape_fn(dim, |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            0.1 * v
        });
        parts.push(QuadraticAgent { curvature, linear, coupling: coupling_mat, y_center, radius });
    }
    QuadraticSaddle::new(parts, mu).unwrap()
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((d, d), |_| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    for k in 0..d {
        for prev in 0..k {
            let proj = m.column(k).dot(&m.column(prev));
            let prev_col = m.column(prev).to_owned();
            let mut col = m.column_mut(k);
            col.scaled_add(-proj, &prev_col);
        }
        let norm = m.column(k).dot(&m.column(k)).sqrt();
        let mut col = m.column_mut(k);
        if norm < 1e-12 {
            col.fill(0.0);
            col[k] = 1.0;
        } else {
            col /= norm;
        }
    }
    m
}

/// Default heterogeneous quadratic (seeded generator).
pub fn default_quadratic(agents: usize, seed: u64) -> QuadraticSaddle {
    QuadraticSaddle::generate(&QuadraticSaddleParams {
        agents,
        seed,
        ..QuadraticSaddleParams::default()
    })
}

/// Small logistic robustness instance (certified constants).
pub fn wrm_toy(agents: usize, seed: u64) -> RobustLogisticWrm {
    RobustLogisticWrm::generate(agents, 2, 2, seed, &RobustLogisticWrmParams::default()).unwrap()
}

pub fn gaussian_x(dim: usize, scale: f64, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(dim, |_| scale * rng.gen_range(-1.0..1.0))
}
