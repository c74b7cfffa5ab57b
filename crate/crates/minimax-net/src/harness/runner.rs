//! Builds an experiment from its config, runs it, and writes the outputs.

use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rand::SeedableRng;
use rand_distr::Distribution;
use serde::Serialize;
use thiserror::Error;

use super::config::{AlgorithmName, ConfigError, ExperimentConfig, ProblemFamily};
use crate::algorithms::{run, AlgorithmKind, InitState, RunError, RunSettings};
use crate::metrics::TraceRecord;
use crate::problems::{
    phi_and_grad, ProblemError, ProblemInstance, QuadraticSaddle, QuadraticSaddleParams,
    RobustLogisticWrm, RobustLogisticWrmParams,
};
use crate::stepsize::{PlanError, RateConstants, Regime, StepsizePlan};
use crate::topology::{build_graph, build_mixing_matrix, MixingMatrix, TopologyError};
use crate::verify::{
    deterministic_check_suite, deterministic_trace, fd_grad_phi, grid_best_response, CheckContext,
    DEFAULT_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Verify(#[from] crate::verify::VerifyError),
    #[error("io error on {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

/// Sidecar metadata written next to every trace CSV.
#[derive(Debug, Clone, Serialize)]
pub struct MetaSidecar {
    pub version: String,
    pub wall_time_secs: f64,
    pub lambda: Option<f64>,
    pub weight_scheme: crate::topology::WeightScheme,
    pub eta_x: f64,
    pub eta_y: f64,
    pub batch: usize,
    pub regime: Regime,
    pub smoothness: f64,
    pub strong_concavity: f64,
    pub diameter: f64,
    pub initial_gap: Option<f64>,
    pub slack: Vec<crate::stepsize::ConstraintSlack>,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
}

pub struct RunArtifacts {
    pub records: Vec<TraceRecord>,
    pub meta: MetaSidecar,
}

pub(crate) struct BuiltExperiment {
    pub problem: Box<dyn ProblemInstance>,
    pub mixing: Option<MixingMatrix>,
    pub plan: StepsizePlan,
    pub kind: AlgorithmKind,
    pub settings: RunSettings,
    pub init: InitState,
    pub initial_gap: Option<f64>,
    pub warnings: Vec<String>,
}

fn build_problem(config: &ExperimentConfig) -> Result<Box<dyn ProblemInstance>, HarnessError> {
    let p = &config.problem;
    match p.family {
        ProblemFamily::Quadratic => {
            let params = QuadraticSaddleParams {
                agents: p.agents,
                dim_x: p.dim_x,
                dim_y: p.dim_y,
                mu: p.mu,
                curvature_scale: p.curvature_scale,
                coupling_scale: p.coupling_scale,
                linear_scale: p.linear_scale,
                center_scale: p.center_scale,
                radius: p.radius,
                seed: p.seed,
                phi_margin: p.phi_margin,
            };
            let mut instance = QuadraticSaddle::generate(&params);
            if let Some(files) = &p.curvature_files {
                let mut agents: Vec<_> =
                    (0..p.agents).map(|i| instance.agent(i).clone()).collect();
                for (agent, file) in agents.iter_mut().zip(files) {
                    agent.curvature = crate::problems::read_matrix_file(file)?;
                }
                instance = QuadraticSaddle::new(agents, p.mu)?;
            }
            if let Some(half_width) = p.phi_star_box {
                instance.certify_phi_star(half_width, 16, 400, p.seed);
            }
            Ok(Box::new(instance))
        }
        ProblemFamily::Wrm => {
            let params = RobustLogisticWrmParams {
                gamma: p.gamma,
                perturbation_radius: p.perturbation_radius,
                x_norm_cap: p.x_norm_cap,
            };
            let instance = if let Some(files) = &p.data_files {
                let mut data = Vec::with_capacity(files.len());
                for file in files {
                    data.push(RobustLogisticWrm::read_samples_csv(file)?);
                }
                RobustLogisticWrm::new(data, &params)?
            } else {
                RobustLogisticWrm::generate(p.agents, p.samples_per_agent, p.dim_x, p.seed, &params)?
            };
            Ok(Box::new(instance))
        }
    }
}

fn build_init(config: &ExperimentConfig, problem: &dyn ProblemInstance) -> InitState {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.run.seed ^ 0x78305eed);
    let base = Array1::from_shape_fn(problem.dim_x(), |_| {
        let draw: f64 = rand_distr::StandardNormal.sample(&mut rng);
        config.run.init_scale * draw
    });
    if config.run.init_spread == 0.0 {
        InitState::identical(problem, &base)
    } else {
        InitState::spread(problem, &base, config.run.init_spread, config.run.seed)
    }
}

pub(crate) fn build(config: &ExperimentConfig) -> Result<BuiltExperiment, HarnessError> {
    config.validate()?;
    let mut warnings = Vec::new();

    let problem = build_problem(config)?;
    let kind = match config.algorithm.name {
        AlgorithmName::Dgta => AlgorithmKind::Dgta,
        AlgorithmName::Dsgta => AlgorithmKind::Dsgta,
        AlgorithmName::Gda => AlgorithmKind::Gda,
        AlgorithmName::Sgda => AlgorithmKind::Sgda,
        AlgorithmName::Gtda => AlgorithmKind::GtDa { inner_steps: config.algorithm.inner_steps },
    };
    let needs_topology = matches!(
        kind,
        AlgorithmKind::Dgta | AlgorithmKind::Dsgta | AlgorithmKind::GtDa { .. }
    );
    let mixing = if needs_topology {
        let spec = config.topology_spec()?;
        let graph = build_graph(&spec, config.problem.agents)?;
        Some(build_mixing_matrix(&graph, config.topology.scheme)?)
    } else {
        None
    };
    let lambda = mixing.as_ref().map(|w| w.lambda()).unwrap_or(0.0);

    let init = build_init(config, problem.as_ref());

    // Initial optimality gap: configured value wins, otherwise computed from
    // a certified Phi lower bound when one exists.
    let initial_gap = match config.stepsize.delta_phi {
        Some(gap) => Some(gap),
        None => match problem.phi_star() {
            Some(phi_star) => {
                let x_mean = crate::algorithms::column_mean(&init.x0);
                let (phi0, _) = phi_and_grad(problem.as_ref(), &x_mean.view())?;
                Some((phi0 - phi_star).max(0.0))
            }
            None => None,
        },
    };

    let constants = RateConstants::new(
        problem.constants(),
        lambda,
        config.run.sigma,
        initial_gap.unwrap_or(1.0),
        config.problem.agents,
        config.run.iterations,
    )?;
    if initial_gap.is_none() && config.stepsize.regime == Regime::Corollary2B1 {
        warnings.push(
            "corollary2_b1 without delta_phi or a certified lower bound; using 1.0".to_string(),
        );
    }

    let plan = match config.stepsize.regime {
        Regime::Corollary1 => StepsizePlan::corollary1(&constants)?,
        Regime::Corollary2B1 => StepsizePlan::corollary2_b1(&constants)?,
        Regime::Corollary3 => {
            StepsizePlan::corollary3(&constants, config.stepsize.epsilon.unwrap_or(0.1))?
        }
        Regime::Manual => {
            let plan = StepsizePlan::manual(
                config.stepsize.eta_x.unwrap(),
                config.stepsize.eta_y.unwrap(),
                config.run.batch,
                &constants,
            );
            for slack in plan.slack.iter().filter(|s| !s.satisfied) {
                warnings.push(format!(
                    "manual stepsizes violate `{}` by {:.3e}; proceeding unchecked",
                    slack.name, -slack.margin
                ));
            }
            plan
        }
    };

    let batch = match config.stepsize.regime {
        Regime::Corollary2B1 | Regime::Corollary3 => plan.batch,
        _ => config.run.batch,
    };

    let settings = RunSettings {
        iterations: config.run.iterations,
        record_every: config.run.record_every,
        sigma: config.run.sigma,
        batch,
        seed: config.run.seed,
    };

    Ok(BuiltExperiment { problem, mixing, plan, kind, settings, init, initial_gap, warnings })
}

/// Runs the configured experiment and returns its trace plus metadata.
pub fn execute(config: &ExperimentConfig) -> Result<RunArtifacts, HarnessError> {
    let start = Instant::now();
    let built = build(config)?;
    let output = run(
        built.kind,
        built.problem.as_ref(),
        built.mixing.as_ref(),
        &built.plan,
        &built.settings,
        &built.init,
    )?;
    let constants = built.problem.constants();
    let meta = MetaSidecar {
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        lambda: built.mixing.as_ref().map(|w| w.lambda()),
        weight_scheme: config.topology.scheme,
        eta_x: built.plan.eta_x,
        eta_y: built.plan.eta_y,
        batch: built.settings.batch,
        regime: built.plan.regime,
        smoothness: constants.smoothness,
        strong_concavity: constants.strong_concavity,
        diameter: constants.diameter,
        initial_gap: built.initial_gap,
        slack: built.plan.slack.clone(),
        warnings: built.warnings,
        config: config.clone(),
    };
    Ok(RunArtifacts { records: output.records, meta })
}

/// Writes `trace.csv` and its `trace.csv.meta.toml` sidecar.
pub fn write_artifacts(artifacts: &RunArtifacts, trace_path: &Path) -> Result<(), HarnessError> {
    crate::metrics::write_csv(trace_path, &artifacts.records)
        .map_err(|source| HarnessError::Io { path: trace_path.to_path_buf(), source })?;
    let meta_path = sidecar_path(trace_path);
    let text = toml::to_string_pretty(&artifacts.meta).expect("metadata serializes");
    std::fs::write(&meta_path, text)
        .map_err(|source| HarnessError::Io { path: meta_path.clone(), source })?;
    Ok(())
}

pub fn sidecar_path(trace_path: &Path) -> std::path::PathBuf {
    let mut name = trace_path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    trace_path.with_file_name(name)
}

/// One line of the verification report.
#[derive(Debug, Clone)]
pub struct VerifyLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub struct VerifyOutcome {
    pub lines: Vec<VerifyLine>,
    pub all_passed: bool,
}

/// Runs the inequality suite on a short deterministic run of the configured
/// problem/topology/plan, plus oracle cross-checks.
pub fn verify_config(config: &ExperimentConfig) -> Result<VerifyOutcome, HarnessError> {
    let built = build(config)?;
    let problem = built.problem.as_ref();
    let mixing = match &built.mixing {
        Some(w) => w.clone(),
        None => {
            let graph = build_graph(&config.topology_spec()?, config.problem.agents)?;
            build_mixing_matrix(&graph, config.topology.scheme)?
        }
    };
    let mut lines = Vec::new();

    // spectral certificate against the dense eigensolver
    {
        let n = mixing.agents();
        let mut dev = mixing.weights().clone();
        for i in 0..n {
            for j in 0..n {
                dev[[i, j]] -= 1.0 / n as f64;
            }
        }
        let dense = crate::verify::dense_symmetric_eigenvalues(&dev)
            .into_iter()
            .fold(0.0_f64, |m, e| m.max(e.abs()));
        let gap = (mixing.lambda() - dense).abs();
        lines.push(VerifyLine {
            name: "lambda_power_vs_dense".to_string(),
            passed: gap <= 1e-8,
            detail: format!("power {:.12e} vs dense {:.12e}", mixing.lambda(), dense),
        });
    }

    // per-step inequality suite on a short deterministic run
    let iterations = config.run.iterations.min(400);
    let trace = deterministic_trace(problem, &mixing, &built.plan, iterations, &built.init)?;
    let ctx = CheckContext {
        constants: problem.constants(),
        agents: config.problem.agents,
        lambda: mixing.lambda(),
    };
    for report in deterministic_check_suite(&trace, &built.plan, &ctx, DEFAULT_TOLERANCE)? {
        lines.push(VerifyLine {
            name: report.name.to_string(),
            passed: report.passed,
            detail: format!(
                "min margin {:.3e} over {} steps{}",
                report.min_margin,
                report.margins.len(),
                if report.violations.is_empty() {
                    String::new()
                } else {
                    format!(", first violation at step {}", report.violations[0])
                }
            ),
        });
    }

    // Danskin gradient against central finite differences
    {
        let mut worst: f64 = 0.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.run.seed ^ 0xfd);
        for _ in 0..3 {
            let x = Array1::from_shape_fn(problem.dim_x(), |_| {
                0.4 * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
            });
            let fd = fd_grad_phi(problem, &x.view(), 1e-5)?;
            let (_, grad) = phi_and_grad(problem, &x.view())?;
            let err = (&fd - &grad).iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = grad.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-10);
            worst = worst.max(err / scale);
        }
        lines.push(VerifyLine {
            name: "fd_vs_danskin_gradient".to_string(),
            passed: worst <= 1e-5,
            detail: format!("worst relative error {worst:.3e}"),
        });
    }

    // grid argmax against the instance's best response, by objective value
    {
        let blocks_ok =
            (0..problem.agents()).all(|i| problem.y_blocks(i).iter().all(|b| b.center.len() <= 3));
        if blocks_ok {
            let resolution = 2e-3;
            let mut worst: f64 = 0.0;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.run.seed ^ 0x9d);
            let mut pass = true;
            for trial in 0..3 {
                let agent = trial % problem.agents();
                let x = Array1::from_shape_fn(problem.dim_x(), |_| {
                    0.3 * rand_distr::Distribution::<f64>::sample(
                        &rand_distr::StandardNormal,
                        &mut rng,
                    )
                });
                let best = problem.best_response(agent, &x.view())?;
                let grid = grid_best_response(problem, agent, &x.view(), resolution)?;
                let val_best = problem.eval(agent, &x.view(), &best.view());
                let val_grid = problem.eval(agent, &x.view(), &grid.view());
                // the grid can undershoot by curvature over one cell, no more
                let dim = problem.dim_y(agent) as f64;
                let cell = resolution * dim.sqrt();
                let g_norm = {
                    let g = problem.grad_y(agent, &x.view(), &best.view());
                    g.dot(&g).sqrt()
                };
                let allowed =
                    g_norm * cell + 0.5 * problem.constants().smoothness * cell * cell + 1e-12;
                let gap = val_best - val_grid;
                worst = worst.max(gap / allowed.max(1e-300));
                if gap > allowed || val_grid > val_best + 1e-9 * (1.0 + val_best.abs()) {
                    pass = false;
                }
            }
            lines.push(VerifyLine {
                name: "grid_vs_best_response".to_string(),
                passed: pass,
                detail: format!("worst gap at {worst:.3}x the grid-induced allowance"),
            });
        }
    }

    let all_passed = lines.iter().all(|l| l.passed);
    Ok(VerifyOutcome { lines, all_passed })
}
