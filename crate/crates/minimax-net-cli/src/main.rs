//! `minimax-net` — config-driven experiments for decentralized min-max
//! optimization over networks.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid configuration,
//! 3 aborted on non-finite iterates.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use minimax_net::algorithms::RunError;
use minimax_net::harness::{
    self, parse_axis_values, ExperimentConfig, HarnessError, SweepAxis,
};

#[derive(Parser)]
#[command(name = "minimax-net", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the run seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Record telemetry at every iteration.
    #[arg(long, default_value_t = false)]
    strict_metrics: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace CSV plus metadata sidecar.
    Run(CommonArgs),
    /// Run one experiment per value of a swept parameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Swept parameter: eta_x, eta_y, b, sigma, T, topology, seed.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long)]
        values: String,
    },
    /// Replay the per-step inequality suite and oracle cross-checks.
    Verify(CommonArgs),
    /// Aggregate sweep summary CSVs into one long-format CSV.
    Report {
        /// Comma-separated summary CSV paths.
        #[arg(long)]
        inputs: String,
        /// Output CSV path.
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    if common.strict_metrics {
        config.run.record_every = 1;
    }
    Ok(config)
}

fn exit_code_for(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Run(RunError::NonFinite { .. }) => 3,
        _ => 2,
    }
}

fn run_command(common: &CommonArgs) -> Result<u8, HarnessError> {
    let config = load_config(common)?;
    let artifacts = harness::execute(&config)?;
    std::fs::create_dir_all(&common.out)
        .map_err(|source| HarnessError::Io { path: common.out.clone(), source })?;
    let trace_path = common.out.join("trace.csv");
    harness::write_artifacts(&artifacts, &trace_path)?;
    for warning in &artifacts.meta.warnings {
        eprintln!("warning: {warning}");
    }
    let last = artifacts.records.last();
    println!(
        "wrote {} ({} records, final grad_phi_norm_sq = {})",
        trace_path.display(),
        artifacts.records.len(),
        last.and_then(|r| r.grad_phi_norm_sq)
            .map(|v| format!("{v:.6e}"))
            .unwrap_or_else(|| "NA".to_string()),
    );
    Ok(0)
}

fn sweep_command(common: &CommonArgs, axis: &str, values: &str) -> Result<u8, HarnessError> {
    let config = load_config(common)?;
    let axis = SweepAxis::parse(axis)?;
    let values = parse_axis_values(values);
    let outcome = harness::sweep(&config, axis, &values, &common.out)?;
    println!("wrote {} traces and {}", outcome.rows.len(), outcome.summary_path.display());
    for row in &outcome.rows {
        println!(
            "  {} = {}: min grad_phi_norm_sq {:.6e}, samples {}, comms {}",
            axis.name(),
            row.value,
            row.min_grad_phi_norm_sq,
            row.samples,
            row.comms
        );
    }
    Ok(0)
}

fn verify_command(common: &CommonArgs) -> Result<u8, HarnessError> {
    let config = load_config(common)?;
    let outcome = harness::verify_config(&config)?;
    for line in &outcome.lines {
        println!(
            "{} {} ({})",
            if line.passed { "PASS" } else { "FAIL" },
            line.name,
            line.detail
        );
    }
    Ok(if outcome.all_passed { 0 } else { 1 })
}

fn report_command(inputs: &str, out: &PathBuf) -> Result<u8, HarnessError> {
    let paths: Vec<PathBuf> = parse_axis_values(inputs).into_iter().map(PathBuf::from).collect();
    if paths.is_empty() {
        eprintln!("error: --inputs needs at least one summary CSV");
        return Ok(2);
    }
    let rows = harness::report::aggregate(&paths, out)?;
    println!("wrote {} ({rows} rows)", out.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => run_command(common),
        Command::Sweep { common, axis, values } => sweep_command(common, axis, values),
        Command::Verify(common) => verify_command(common),
        Command::Report { inputs, out } => report_command(inputs, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
