//! `m3p price`: one-shot oracle pricing of a slate for given parameters.

use std::path::PathBuf;

use clap::Args;
use m3p_core::mnl::{choice_probabilities, expected_revenue, ModelParams, Slate};
use m3p_core::oracle::{optimal_prices, price_slate_clamped, FixedPointConfig};
use m3p_core::PricingError;
use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{validation, CliError, CliResult};

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Parameters `{theta, gamma, w_bound}` (.json or .toml).
    #[arg(long)]
    pub params: PathBuf,
    /// Slate `{features: [[...], ...]}` (.json or .toml), one row per product.
    #[arg(long)]
    pub slate: PathBuf,
    /// Raise any sensitivity below this floor to the floor before pricing.
    #[arg(long)]
    pub l0: Option<f64>,
    /// Optional fixed-point solver settings (.toml or .json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the JSON result to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlateFile {
    features: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct PriceReport {
    prices: Vec<f64>,
    markup: f64,
    expected_revenue: f64,
    purchase_probabilities: Vec<f64>,
    no_purchase_probability: f64,
    clamped_products: usize,
}

pub fn run(args: PriceArgs) -> CliResult<()> {
    let params: ModelParams = config::load(&args.params)?;
    let slate_file: SlateFile = config::load(&args.slate)?;
    let n = slate_file.features.len();
    let slate = Slate::new(slate_file.features, n).map_err(validation)?;
    let fp: FixedPointConfig = match &args.config {
        Some(p) => config::load(p)?,
        None => FixedPointConfig::default(),
    };
    fp.validate().map_err(validation)?;
    let solved = match args.l0 {
        Some(l0) => price_slate_clamped(&params, &slate, &fp, l0),
        None => optimal_prices(&params, &slate, &fp),
    }
    .map_err(|e| match e {
        PricingError::NonConvergence { .. } => CliError::runtime(e),
        other => validation(other),
    })?;
    let mut probs = choice_probabilities(&params, &slate, &solved.prices).map_err(CliError::runtime)?;
    let no_purchase = probs.pop().unwrap_or(1.0);
    let report = PriceReport {
        prices: solved.prices.as_slice().to_vec(),
        markup: solved.markup,
        expected_revenue: expected_revenue(&params, &slate, &solved.prices).map_err(CliError::runtime)?,
        purchase_probabilities: probs,
        no_purchase_probability: no_purchase,
        clamped_products: solved.clamped,
    };
    config::emit(&config::to_pretty_json(&report))?;
    if let Some(path) = &args.output {
        config::write_json(path, &report)?;
    }
    Ok(())
}
