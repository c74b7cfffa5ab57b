//! Experiment configuration schema (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::TopologySpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

fn field_err(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub topology: TopologyConfig,
    pub algorithm: AlgorithmConfig,
    pub stepsize: StepsizeConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: ProblemFamily,
    pub agents: usize,
    pub dim_x: usize,
    #[serde(default = "default_dim_y")]
    pub dim_y: usize,
    #[serde(default = "default_problem_seed")]
    pub seed: u64,
    // quadratic knobs
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_curvature")]
    pub curvature_scale: f64,
    #[serde(default = "default_coupling")]
    pub coupling_scale: f64,
    #[serde(default = "default_linear")]
    pub linear_scale: f64,
    #[serde(default = "default_center")]
    pub center_scale: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Inflate couplings until the averaged interior Hessian of `Phi` has
    /// this margin (keeps `Phi` bounded below on boxes).
    #[serde(default)]
    pub phi_margin: Option<f64>,
    /// Certify a `Phi` lower bound over `[-box, box]^d` before running.
    #[serde(default)]
    pub phi_star_box: Option<f64>,
    /// Per-agent curvature matrices loaded from whitespace-separated text
    /// files (quadratic family).
    #[serde(default)]
    pub curvature_files: Option<Vec<PathBuf>>,
    // wrm knobs
    #[serde(default = "default_samples")]
    pub samples_per_agent: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_perturbation")]
    pub perturbation_radius: f64,
    #[serde(default = "default_x_cap")]
    pub x_norm_cap: f64,
    /// Per-agent `label,feat_1,...,feat_p` CSV files (wrm family).
    #[serde(default)]
    pub data_files: Option<Vec<PathBuf>>,
}

fn default_dim_y() -> usize {
    2
}
fn default_problem_seed() -> u64 {
    7
}
fn default_mu() -> f64 {
    1.0
}
fn default_curvature() -> f64 {
    0.6
}
fn default_coupling() -> f64 {
    0.8
}
fn default_linear() -> f64 {
    0.3
}
fn default_center() -> f64 {
    0.4
}
fn default_radius() -> f64 {
    5.0
}
fn default_samples() -> usize {
    3
}
fn default_gamma() -> f64 {
    0.4
}
fn default_perturbation() -> f64 {
    1.0
}
fn default_x_cap() -> f64 {
    1.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemFamily {
    Quadratic,
    Wrm,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default)]
    pub cols: Option<usize>,
    /// Custom graphs: text file with one `i j` pair per line, 0-indexed.
    #[serde(default)]
    pub edge_file: Option<PathBuf>,
    #[serde(default = "default_scheme")]
    pub scheme: crate::topology::WeightScheme,
}

fn default_scheme() -> crate::topology::WeightScheme {
    crate::topology::WeightScheme::Metropolis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Complete,
    Ring,
    Path,
    Star,
    Grid,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmName,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
}

fn default_inner_steps() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Dgta,
    Dsgta,
    Gda,
    Sgda,
    Gtda,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepsizeConfig {
    pub regime: crate::stepsize::Regime,
    #[serde(default)]
    pub eta_x: Option<f64>,
    #[serde(default)]
    pub eta_y: Option<f64>,
    /// Target accuracy for the large-batch regime.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Override / supply the initial optimality gap used by the planners.
    #[serde(default)]
    pub delta_phi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_run_seed")]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// Zero means identical initialization across agents.
    #[serde(default)]
    pub init_spread: f64,
}

fn default_batch() -> usize {
    1
}
fn default_run_seed() -> u64 {
    42
}
fn default_record_every() -> usize {
    10
}
fn default_init_scale() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if p.agents == 0 {
            return Err(field_err("problem.agents", "must be at least 1"));
        }
        if p.dim_x == 0 {
            return Err(field_err("problem.dim_x", "must be at least 1"));
        }
        match p.family {
            ProblemFamily::Quadratic => {
                if p.dim_y == 0 {
                    return Err(field_err("problem.dim_y", "must be at least 1"));
                }
                if p.mu <= 0.0 {
                    return Err(field_err("problem.mu", "must be positive"));
                }
                if p.radius < 0.0 {
                    return Err(field_err("problem.radius", "must be nonnegative"));
                }
                if let Some(files) = &p.curvature_files {
                    if files.len() != p.agents {
                        return Err(field_err(
                            "problem.curvature_files",
                            format!("need one file per agent ({} agents)", p.agents),
                        ));
                    }
                }
            }
            ProblemFamily::Wrm => {
                if p.gamma <= 0.0 {
                    return Err(field_err("problem.gamma", "must be positive"));
                }
                if p.x_norm_cap <= 0.0 {
                    return Err(field_err("problem.x_norm_cap", "must be positive"));
                }
                if p.data_files.is_none() && p.samples_per_agent == 0 {
                    return Err(field_err("problem.samples_per_agent", "must be at least 1"));
                }
                if let Some(files) = &p.data_files {
                    if files.len() != p.agents {
                        return Err(field_err(
                            "problem.data_files",
                            format!("need one file per agent ({} agents)", p.agents),
                        ));
                    }
                }
            }
        }
        match self.topology.kind {
            TopologyKind::Grid => {
                let (rows, cols) = match (self.topology.rows, self.topology.cols) {
                    (Some(r), Some(c)) => (r, c),
                    _ => {
                        return Err(field_err("topology.rows", "grid topology needs rows and cols"))
                    }
                };
                if rows * cols != p.agents {
                    return Err(field_err(
                        "topology.rows",
                        format!("rows*cols = {} must equal agents = {}", rows * cols, p.agents),
                    ));
                }
            }
            TopologyKind::Custom => {
                if self.topology.edge_file.is_none() {
                    return Err(field_err("topology.edge_file", "custom topology needs an edge file"));
                }
            }
            _ => {}
        }
        match self.stepsize.regime {
            crate::stepsize::Regime::Manual => {
                if self.stepsize.eta_x.is_none() || self.stepsize.eta_y.is_none() {
                    return Err(field_err("stepsize.eta_x", "manual regime needs eta_x and eta_y"));
                }
            }
            crate::stepsize::Regime::Corollary3 => {
                if self.stepsize.epsilon.is_none() {
                    return Err(field_err("stepsize.epsilon", "corollary3 needs a target accuracy"));
                }
            }
            _ => {}
        }
        if self.run.iterations == 0 {
            return Err(field_err("run.iterations", "must be at least 1"));
        }
        if self.run.batch == 0 {
            return Err(field_err("run.batch", "must be at least 1"));
        }
        if self.run.sigma < 0.0 {
            return Err(field_err("run.sigma", "must be nonnegative"));
        }
        if self.run.record_every == 0 {
            return Err(field_err("run.record_every", "must be at least 1"));
        }
        Ok(())
    }

    pub fn topology_spec(&self) -> Result<TopologySpec, ConfigError> {
        Ok(match self.topology.kind {
            TopologyKind::Complete => TopologySpec::Complete,
            TopologyKind::Ring => TopologySpec::Ring,
            TopologyKind::Path => TopologySpec::Path,
            TopologyKind::Star => TopologySpec::Star,
            TopologyKind::Grid => TopologySpec::Grid {
                rows: self.topology.rows.unwrap_or(0),
                cols: self.topology.cols.unwrap_or(0),
            },
            TopologyKind::Custom => {
                let path = self
                    .topology
                    .edge_file
                    .as_ref()
                    .ok_or_else(|| field_err("topology.edge_file", "missing"))?;
                TopologySpec::Custom { edges: read_edge_file(path)? }
            }
        })
    }
}

/// Parses a custom-graph edge list: one `i j` pair per line, 0-indexed.
/// Blank lines and `#` comments are skipped.
pub fn read_edge_file(path: &Path) -> Result<Vec<(usize, usize)>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize, ConfigError> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                field_err("topology.edge_file", format!("line {}: expected `i j`", idx + 1))
            })
        };
        let i = parse(parts.next())?;
        let j = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(field_err(
                "topology.edge_file",
                format!("line {}: trailing tokens", idx + 1),
            ));
        }
        edges.push((i, j));
    }
    Ok(edges)
}

pub const EXAMPLE_CONFIG: &str = r#"
[problem]
family = "quadratic"
agents = 4
dim_x = 4
dim_y = 2
seed = 7
phi_margin = 0.05
phi_star_box = 3.0

[topology]
kind = "ring"
scheme = "metropolis"

[algorithm]
name = "dgta"

[stepsize]
regime = "corollary1"

[run]
iterations = 1000
sigma = 0.0
seed = 42
record_every = 10
"#;
