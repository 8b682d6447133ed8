//! `m3p simulate`: replicated M3P runs with per-run ledgers and an aggregate report.

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Args;
use m3p_core::oracle::{price_upper_bound, FixedPointConfig, MarketBounds};
use m3p_core::policy::{M3pConfig, M3pPolicy};
use m3p_core::simulator::{replicate, Aggregate, MarketConfig};
use m3p_core::EstimatorConfig;
use serde::{Deserialize, Serialize};

use crate::config::{self, default_format_version};
use crate::error::{validation, CliError, CliResult};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config (.toml or .json).
    #[arg(long)]
    pub config: PathBuf,
    /// Base seed; run i uses seed + i. Overrides the config value.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all available cores). Does not affect outputs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory. Overrides `output_dir` in the config.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Record the wall-clock start time in the manifest.
    #[arg(long)]
    pub timestamp: bool,
}

/// Estimator knobs; the ball radius is taken from the market's `w_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub grad_tolerance: f64,
    pub max_iterations: usize,
    pub step_init: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        let base = EstimatorConfig::new(1.0);
        Self {
            grad_tolerance: base.grad_tolerance,
            max_iterations: base.max_iterations,
            step_init: base.step_init,
        }
    }
}

impl EstimatorSettings {
    pub fn with_radius(self, w_bound: f64) -> EstimatorConfig {
        EstimatorConfig {
            w_bound,
            grad_tolerance: self.grad_tolerance,
            max_iterations: self.max_iterations,
            step_init: self.step_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_format_version")]
    pub format_version: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub market: MarketConfig,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
}

fn default_runs() -> usize {
    1
}

impl SimulateConfig {
    pub fn policy_config(&self) -> M3pConfig {
        let mut cfg = M3pConfig::new(self.market.d, self.market.truth.w_bound(), self.market.l0);
        cfg.exploration_cap = self.market.exploration_cap;
        cfg.estimator = self.estimator.with_radius(self.market.truth.w_bound());
        cfg.fixed_point = self.fixed_point;
        cfg
    }

    pub fn validate(&self) -> CliResult<()> {
        config::check_format_version(&self.format_version)?;
        if self.runs == 0 {
            return Err(CliError::invalid("runs must be at least 1"));
        }
        self.market.validate().map_err(validation)?;
        self.policy_config().validate().map_err(validation)
    }

    /// Hash of everything that determines the output bytes.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output_dir = None;
        config::config_hash(&keyed)
    }
}

#[derive(Debug, Serialize)]
struct RunSummary {
    run: usize,
    seed: u64,
    csv: String,
    exploration_log: String,
    final_regret: f64,
    realized_revenue: f64,
    max_benchmark_price: f64,
    max_policy_price: f64,
    clamped_periods: u64,
    refits: u64,
    unconverged_refits: u64,
    benchmark_deficits: u64,
}

#[derive(Debug, Serialize)]
struct AggregateReport<'a> {
    format_version: &'a str,
    config_hash: &'a str,
    seed: u64,
    aggregate: &'a Aggregate,
    price_upper_bound: Option<f64>,
    max_benchmark_price: f64,
    runs: Vec<RunSummary>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    format_version: &'a str,
    tool_version: String,
    command: &'static str,
    config_hash: &'a str,
    seed: u64,
    config: &'a SimulateConfig,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    started_at_unix: Option<u64>,
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let started = args.timestamp.then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let mut cfg: SimulateConfig = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.market.seed = cfg.seed;
    cfg.validate()?;
    let out = config::resolve_output(args.output, cfg.output_dir.as_ref())?;
    if args.jobs == Some(0) {
        return Err(CliError::invalid("--jobs must be at least 1"));
    }
    let hash = cfg.hash();
    let bound = MarketBounds::new(cfg.market.l0, cfg.market.truth.w_bound(), cfg.market.n_max)
        .and_then(|b| price_upper_bound(&b))
        .ok();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(CliError::runtime)?;
    let policy_cfg = cfg.policy_config();
    let rep = pool
        .install(|| replicate(&cfg.market, |rng| M3pPolicy::new(policy_cfg, rng), cfg.runs, cfg.seed))
        .map_err(CliError::runtime)?;

    fs::create_dir_all(&out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    let width = cfg.runs.saturating_sub(1).to_string().len().max(3);
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for (i, r) in rep.runs.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        let header = vec![format!("config_hash: {hash}"), format!("seed: {seed}")];
        let csv = format!("run_{i:0width$}.csv");
        let file = fs::File::create(out.join(&csv))?;
        r.ledger.write_csv(BufWriter::new(file), &header)?;
        let jsonl = format!("exploration_{i:0width$}.jsonl");
        let mut w = BufWriter::new(fs::File::create(out.join(&jsonl))?);
        for line in &header {
            std::io::Write::write_all(&mut w, format!("# {line}\n").as_bytes())?;
        }
        r.exploration_records()
            .map_err(CliError::runtime)?
            .write_jsonl(&mut w)?;
        let d = &r.diagnostics;
        summaries.push(RunSummary {
            run: i,
            seed,
            csv: csv.clone(),
            exploration_log: jsonl.clone(),
            final_regret: r.ledger.cumulative(),
            realized_revenue: d.realized_revenue,
            max_benchmark_price: d.max_benchmark_price,
            max_policy_price: d.max_policy_price,
            clamped_periods: d.policy.clamped_periods,
            refits: d.policy.refits,
            unconverged_refits: d.policy.unconverged_refits,
            benchmark_deficits: d.benchmark_deficits,
        });
        outputs.push(csv);
        outputs.push(jsonl);
    }
    let report = AggregateReport {
        format_version: &cfg.format_version,
        config_hash: &hash,
        seed: cfg.seed,
        aggregate: &rep.aggregate,
        price_upper_bound: bound,
        max_benchmark_price: summaries.iter().map(|s| s.max_benchmark_price).fold(0.0, f64::max),
        runs: summaries,
    };
    config::write_json(&out.join("aggregate.json"), &report)?;
    outputs.push("aggregate.json".into());
    let manifest = Manifest {
        format_version: &cfg.format_version,
        tool_version: config::tool_version(),
        command: "simulate",
        config_hash: &hash,
        seed: cfg.seed,
        config: &cfg,
        outputs,
        started_at_unix: started,
    };
    config::write_json(&out.join("manifest.json"), &manifest)?;

    let agg = &rep.aggregate;
    let last = agg.checkpoints.last().map(|c| c.median).unwrap_or(0.0);
    match agg.slope {
        Some(s) => println!(
            "{} runs, T = {}: median cumulative regret {last:.4}, log-log slope {s:.4}",
            agg.n_runs, agg.horizon
        ),
        None => println!(
            "{} runs, T = {}: median cumulative regret {last:.4}, slope {}",
            agg.n_runs, agg.horizon, agg.slope_status
        ),
    }
    Ok(())
}
