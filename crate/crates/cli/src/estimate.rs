//! `m3p estimate`: constrained MLE from a JSONL sales log.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;
use m3p_core::likelihood::{fit_mle, SalesLog};
use serde::Serialize;

use crate::config;
use crate::error::{validation, CliError, CliResult};
use crate::simulate::EstimatorSettings;

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Sales log, one JSON record per line.
    pub log: PathBuf,
    /// Radius W of the feasible parameter ball.
    #[arg(long = "w-bound", value_name = "W")]
    pub w_bound: f64,
    /// Optional estimator settings (.toml or .json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    records: usize,
    theta: Vec<f64>,
    gamma: Vec<f64>,
    w_bound: f64,
    norm: f64,
    loss: f64,
    projected_gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

pub fn run(args: EstimateArgs) -> CliResult<()> {
    let settings: EstimatorSettings = match &args.config {
        Some(p) => config::load(p)?,
        None => EstimatorSettings::default(),
    };
    let est = settings.with_radius(args.w_bound);
    est.validate().map_err(validation)?;
    let file =
        fs::File::open(&args.log).map_err(|e| CliError::invalid(format!("cannot open {}: {e}", args.log.display())))?;
    let log = SalesLog::read_jsonl(BufReader::new(file))
        .map_err(|e| CliError::invalid(format!("{}: {e}", args.log.display())))?;
    if log.is_empty() {
        return Err(CliError::invalid(format!(
            "{}: the log has no records",
            args.log.display()
        )));
    }
    let fit = fit_mle(&log, &est).map_err(CliError::runtime)?;
    let report = EstimateReport {
        records: log.len(),
        theta: fit.params.theta().to_vec(),
        gamma: fit.params.gamma().to_vec(),
        w_bound: fit.params.w_bound(),
        norm: fit.params.norm(),
        loss: fit.loss,
        projected_gradient_norm: fit.projected_gradient_norm,
        iterations: fit.iterations,
        converged: fit.converged,
    };
    config::emit(&config::to_pretty_json(&report))?;
    if let Some(path) = &args.output {
        config::write_json(path, &report)?;
    }
    if !fit.converged {
        eprintln!(
            "warning: stopped after {} iterations with projected gradient norm {:e}",
            fit.iterations, fit.projected_gradient_norm
        );
    }
    Ok(())
}
