//! Parameter sweeps: one trace per value plus a summary CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{ConfigError, ExperimentConfig, TopologyKind};
use super::runner::{execute, write_artifacts, HarnessError, RunArtifacts};
use crate::stepsize::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    EtaX,
    EtaY,
    Batch,
    Sigma,
    Iterations,
    Topology,
    Seed,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        Ok(match name {
            "eta_x" => Self::EtaX,
            "eta_y" => Self::EtaY,
            "b" | "batch" => Self::Batch,
            "sigma" => Self::Sigma,
            "T" | "iterations" => Self::Iterations,
            "topology" => Self::Topology,
            "seed" => Self::Seed,
            other => {
                return Err(ConfigError::Field {
                    field: "sweep.axis",
                    message: format!(
                        "unknown axis `{other}` (expected eta_x, eta_y, b, sigma, T, topology, seed)"
                    ),
                })
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::EtaX => "eta_x",
            Self::EtaY => "eta_y",
            Self::Batch => "b",
            Self::Sigma => "sigma",
            Self::Iterations => "T",
            Self::Topology => "topology",
            Self::Seed => "seed",
        }
    }
}

/// Splits a comma-separated value list for an axis.
pub fn parse_axis_values(values: &str) -> Vec<String> {
    values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect()
}

fn apply(
    base: &ExperimentConfig,
    axis: SweepAxis,
    value: &str,
) -> Result<ExperimentConfig, ConfigError> {
    let mut config = base.clone();
    let bad = |message: String| ConfigError::Field { field: "sweep.values", message };
    match axis {
        SweepAxis::EtaX | SweepAxis::EtaY => {
            if config.stepsize.regime != Regime::Manual {
                return Err(bad("stepsize sweeps need the manual regime".into()));
            }
            let parsed: f64 = value.parse().map_err(|e| bad(format!("`{value}`: {e}")))?;
            if axis == SweepAxis::EtaX {
                config.stepsize.eta_x = Some(parsed);
            } else {
                config.stepsize.eta_y = Some(parsed);
            }
        }
        SweepAxis::Batch => {
            config.run.batch = value.parse().map_err(|e| bad(format!("`{value}`: {e}")))?;
        }
        SweepAxis::Sigma => {
            config.run.sigma = value.parse().map_err(|e| bad(format!("`{value}`: {e}")))?;
        }
        SweepAxis::Iterations => {
            config.run.iterations = value.parse().map_err(|e| bad(format!("`{value}`: {e}")))?;
        }
        SweepAxis::Seed => {
            config.run.seed = value.parse().map_err(|e| bad(format!("`{value}`: {e}")))?;
        }
        SweepAxis::Topology => {
            config.topology.kind = match value {
                "complete" => TopologyKind::Complete,
                "ring" => TopologyKind::Ring,
                "path" => TopologyKind::Path,
                "star" => TopologyKind::Star,
                grid if grid.starts_with("grid:") => {
                    let shape = grid.trim_start_matches("grid:");
                    let (rows, cols) = shape
                        .split_once('x')
                        .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
                        .ok_or_else(|| bad(format!("`{value}`: expected grid:RxC")))?;
                    config.topology.rows = Some(rows);
                    config.topology.cols = Some(cols);
                    TopologyKind::Grid
                }
                other => return Err(bad(format!("unknown topology `{other}`"))),
            };
        }
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub value: String,
    pub min_grad_phi_norm_sq: f64,
    pub avg_grad_phi_norm_sq: f64,
    pub samples: u64,
    pub comms: u64,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SummaryRow>,
    pub trace_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

fn summarize(value: &str, artifacts: &RunArtifacts) -> SummaryRow {
    let grads: Vec<f64> =
        artifacts.records.iter().filter_map(|r| r.grad_phi_norm_sq).collect();
    let min = grads.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = if grads.is_empty() { f64::NAN } else { grads.iter().sum::<f64>() / grads.len() as f64 };
    let last = artifacts.records.last();
    SummaryRow {
        value: value.to_string(),
        min_grad_phi_norm_sq: min,
        avg_grad_phi_norm_sq: avg,
        samples: last.map(|r| r.samples).unwrap_or(0),
        comms: last.map(|r| r.comms).unwrap_or(0),
    }
}

fn sanitize(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Runs one experiment per axis value, writing `sweep_<axis>_<value>.csv`
/// traces (with sidecars) and a `summary.csv` into `out_dir`. Points run in
/// parallel, capped by the `MINIMAX_NET_THREADS` environment variable.
pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    out_dir: &Path,
) -> Result<SweepOutcome, HarnessError> {
    if values.is_empty() {
        return Err(ConfigError::Field {
            field: "sweep.values",
            message: "value list must not be empty".into(),
        }
        .into());
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|source| HarnessError::Io { path: out_dir.to_path_buf(), source })?;

    let configs: Vec<(String, ExperimentConfig)> = values
        .iter()
        .map(|v| Ok((v.clone(), apply(base, axis, v)?)))
        .collect::<Result<_, ConfigError>>()?;

    let results = run_points(&configs)?;

    let mut rows = Vec::with_capacity(results.len());
    let mut trace_paths = Vec::with_capacity(results.len());
    for ((value, _), artifacts) in configs.iter().zip(&results) {
        let trace_path =
            out_dir.join(format!("sweep_{}_{}.csv", axis.name(), sanitize(value)));
        write_artifacts(artifacts, &trace_path)?;
        rows.push(summarize(value, artifacts));
        trace_paths.push(trace_path);
    }

    let summary_path = out_dir.join("summary.csv");
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(&summary_path)
            .map_err(|source| HarnessError::Io { path: summary_path.clone(), source })?,
    );
    let io_err = |source| HarnessError::Io { path: summary_path.clone(), source };
    writeln!(file, "value,min_grad_phi_norm_sq,avg_grad_phi_norm_sq,samples,comms")
        .map_err(io_err)?;
    for row in &rows {
        writeln!(
            file,
            "{},{:.16e},{:.16e},{},{}",
            row.value, row.min_grad_phi_norm_sq, row.avg_grad_phi_norm_sq, row.samples, row.comms
        )
        .map_err(|source| HarnessError::Io { path: summary_path.clone(), source })?;
    }
    drop(file);
    Ok(SweepOutcome { rows, trace_paths, summary_path })
}

#[cfg(feature = "parallel")]
fn run_points(
    configs: &[(String, ExperimentConfig)],
) -> Result<Vec<RunArtifacts>, HarnessError> {
    use rayon::prelude::*;
    let cap = std::env::var(super::THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    let results: Vec<Result<RunArtifacts, HarnessError>> = match cap {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool");
            pool.install(|| configs.par_iter().map(|(_, c)| execute(c)).collect())
        }
        None => configs.par_iter().map(|(_, c)| execute(c)).collect(),
    };
    results.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
fn run_points(
    configs: &[(String, ExperimentConfig)],
) -> Result<Vec<RunArtifacts>, HarnessError> {
    configs.iter().map(|(_, c)| execute(c)).collect()
}
