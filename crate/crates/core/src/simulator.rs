//! Market simulation and pseudo-regret accounting.
//!
//! Each period a slate is drawn independently of the seller, the policy posts
//! prices, and both the policy's and the clairvoyant benchmark's expected
//! revenues are booked under the true model. The customer's choice is then
//! sampled and fed back to the policy.
//!
//! Randomness is split into three ChaCha streams derived from one seed:
//! slates, customer choices, and the policy's own draws. Slate sequences are
//! therefore identical across policies run with the same seed.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::likelihood::{SalesLog, SalesRecord};
use crate::mnl::{expected_revenue, sample_choice, ModelParams, PriceVector, Slate};
use crate::oracle::{optimal_prices, FixedPointConfig};
use crate::policy::{Phase, PolicyDiagnostics, PricingPolicy};

const SLATE_STREAM: u64 = 0;
const CUSTOMER_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;

/// How product features are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureGenerator {
    /// Entries i.i.d. uniform on `[floor, 1]`.
    NonnegUniform {
        #[serde(default)]
        floor: f64,
    },
    /// First coordinate fixed to 1, the rest uniform on `[-1, 1]`.
    UnitFirstCoordinate,
    /// Rows drawn uniformly (with replacement) from a fixed table.
    CustomSeededTable { rows: Vec<Vec<f64>> },
}

impl FeatureGenerator {
    /// Smallest `<x, gamma>` any generated row can have.
    pub fn min_sensitivity(&self, gamma: &[f64]) -> Result<f64> {
        match self {
            FeatureGenerator::NonnegUniform { floor } => {
                if !(0.0..=1.0).contains(floor) {
                    return Err(PricingError::Config(format!(
                        "nonneg_uniform floor must lie in [0, 1], got {floor}"
                    )));
                }
                Ok(gamma.iter().map(|&g| if g >= 0.0 { floor * g } else { g }).sum())
            }
            FeatureGenerator::UnitFirstCoordinate => Ok(gamma[0] - gamma[1..].iter().map(|g| g.abs()).sum::<f64>()),
            FeatureGenerator::CustomSeededTable { rows } => {
                if rows.is_empty() {
                    return Err(PricingError::Config("feature table is empty".into()));
                }
                let mut min = f64::INFINITY;
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != gamma.len() {
                        return Err(PricingError::Config(format!(
                            "feature table row {i} has length {}, expected {}",
                            row.len(),
                            gamma.len()
                        )));
                    }
                    if row.iter().any(|v| !(v.abs() <= 1.0)) {
                        return Err(PricingError::Config(format!(
                            "feature table row {i} has entries outside [-1, 1]"
                        )));
                    }
                    min = min.min(crate::mnl::dot(row, gamma));
                }
                Ok(min)
            }
        }
    }

    fn draw_row<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<f64> {
        match self {
            FeatureGenerator::NonnegUniform { floor } => {
                (0..d).map(|_| floor + (1.0 - floor) * rng.random::<f64>()).collect()
            }
            FeatureGenerator::UnitFirstCoordinate => std::iter::once(1.0)
                .chain((1..d).map(|_| rng.random_range(-1.0..=1.0)))
                .collect(),
            FeatureGenerator::CustomSeededTable { rows } => rows[rng.random_range(0..rows.len())].clone(),
        }
    }
}

/// A synthetic market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub d: usize,
    pub n_max: usize,
    pub horizon: u64,
    pub truth: ModelParams,
    pub l0: f64,
    pub feature_gen: FeatureGenerator,
    #[serde(default = "default_cap")]
    pub exploration_cap: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_cap() -> f64 {
    1.0
}

impl MarketConfig {
    /// Checks dimensions and that every product the generator can produce
    /// has price sensitivity `<x, gamma0> >= L0`.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_max == 0 || self.horizon == 0 {
            return Err(PricingError::Config(format!(
                "d, N and T must be at least 1 (got d = {}, N = {}, T = {})",
                self.d, self.n_max, self.horizon
            )));
        }
        if self.truth.dim() != self.d {
            return Err(PricingError::Config(format!(
                "true parameters have dimension {}, expected d = {}",
                self.truth.dim(),
                self.d
            )));
        }
        if !(self.l0.is_finite() && self.l0 > 0.0) {
            return Err(PricingError::Config(format!(
                "L0 must be positive (Assumption 1), got {}",
                self.l0
            )));
        }
        if !(self.exploration_cap.is_finite() && self.exploration_cap > 0.0) {
            return Err(PricingError::Config(format!(
                "exploration cap C must be positive, got {}",
                self.exploration_cap
            )));
        }
        let min_beta = self.feature_gen.min_sensitivity(self.truth.gamma())?;
        if min_beta < self.l0 {
            return Err(PricingError::Config(format!(
                "Assumption 1 violated: the feature generator admits products with <x, gamma0> = {min_beta} < L0 = {}",
                self.l0
            )));
        }
        Ok(())
    }

    pub fn fixed_point(&self) -> FixedPointConfig {
        FixedPointConfig::default()
    }
}

/// Draws one slate: size uniform on `1..=N`, rows from the configured generator.
pub fn generate_slate<R: Rng + ?Sized>(cfg: &MarketConfig, rng: &mut R) -> Result<Slate> {
    let n = rng.random_range(1..=cfg.n_max);
    let features = (0..n).flat_map(|_| cfg.feature_gen.draw_row(cfg.d, rng)).collect();
    Slate::from_row_major(features, n, cfg.d, cfg.n_max)
}

/// The three random streams of one run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub slates: ChaCha8Rng,
    pub customers: ChaCha8Rng,
    pub policy: ChaCha8Rng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        };
        Self {
            slates: stream(SLATE_STREAM),
            customers: stream(CUSTOMER_STREAM),
            policy: stream(POLICY_STREAM),
        }
    }
}

/// One period of the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub t: u64,
    pub episode: Option<u64>,
    pub phase: Option<Phase>,
    pub rev_star: f64,
    pub rev_policy: f64,
    pub cum_regret: f64,
}

/// Per-period expected revenues and cumulative pseudo-regret.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub entries: Vec<LedgerEntry>,
}

impl RegretLedger {
    pub fn push(&mut self, t: u64, position: Option<(u64, Phase)>, rev_star: f64, rev_policy: f64) {
        let cum = self.cumulative() + (rev_star - rev_policy);
        self.entries.push(LedgerEntry {
            t,
            episode: position.map(|p| p.0),
            phase: position.map(|p| p.1),
            rev_star,
            rev_policy,
            cum_regret: cum,
        });
    }

    pub fn cumulative(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.cum_regret)
    }

    /// Cumulative regret after period `t` (1-based).
    pub fn cumulative_at(&self, t: u64) -> Option<f64> {
        self.entries.get((t as usize).checked_sub(1)?).map(|e| e.cum_regret)
    }

    /// CSV with columns `t,episode,phase,rev_star,rev_policy,cum_regret`,
    /// optionally preceded by `# `-prefixed comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "t,episode,phase,rev_star,rev_policy,cum_regret")?;
        for e in &self.entries {
            let episode = e.episode.map_or_else(|| "0".to_string(), |k| k.to_string());
            let phase = e.phase.map_or("none", Phase::as_str);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.t, episode, phase, e.rev_star, e.rev_policy, e.cum_regret
            )?;
        }
        Ok(())
    }
}

/// Run-level side information.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Revenue actually collected from the sampled choices.
    pub realized_revenue: f64,
    pub max_benchmark_price: f64,
    pub max_policy_price: f64,
    /// Periods in which `rev_star < rev_policy` (only possible within solver tolerance).
    pub benchmark_deficits: u64,
    pub largest_benchmark_deficit: f64,
    pub policy: PolicyDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub ledger: RegretLedger,
    /// Every period's record, in order.
    pub sales: SalesLog,
    pub diagnostics: RunDiagnostics,
}

impl RunOutput {
    /// Records of the periods the policy flagged as exploration.
    pub fn exploration_records(&self) -> Result<SalesLog> {
        let picked = self
            .ledger
            .entries
            .iter()
            .zip(self.sales.records())
            .filter(|(e, _)| e.phase == Some(Phase::Explore))
            .map(|(_, r)| r.clone())
            .collect();
        SalesLog::from_records(picked)
    }
}

/// Plays `policy` against the market for `cfg.horizon` periods.
pub fn run<P: PricingPolicy + ?Sized>(
    cfg: &MarketConfig,
    policy: &mut P,
    slate_rng: &mut ChaCha8Rng,
    customer_rng: &mut ChaCha8Rng,
) -> Result<RunOutput> {
    cfg.validate()?;
    let truth = &cfg.truth;
    let fp = cfg.fixed_point();
    let mut ledger = RegretLedger::default();
    let mut sales = SalesLog::new();
    let mut diag = RunDiagnostics::default();

    for t in 1..=cfg.horizon {
        let slate = generate_slate(cfg, slate_rng)?;
        let position = policy.position();
        let prices = policy.act(&slate)?;
        let bench = optimal_prices(truth, &slate, &fp)?;
        let rev_policy = expected_revenue(truth, &slate, &prices)?;
        let rev_star = expected_revenue(truth, &slate, &bench.prices)?;
        if rev_star < rev_policy {
            diag.benchmark_deficits += 1;
            diag.largest_benchmark_deficit = diag.largest_benchmark_deficit.max(rev_policy - rev_star);
        }
        diag.max_benchmark_price = bench
            .prices
            .as_slice()
            .iter()
            .copied()
            .fold(diag.max_benchmark_price, f64::max);
        diag.max_policy_price = prices.as_slice().iter().copied().fold(diag.max_policy_price, f64::max);

        let outcome = sample_choice(truth, &slate, &prices, customer_rng)?;
        if let crate::mnl::ChoiceOutcome::Product(i) = outcome {
            diag.realized_revenue += prices.as_slice()[i];
        }
        policy.observe(&slate, &prices, outcome)?;
        ledger.push(t, position, rev_star, rev_policy);
        sales.push(SalesRecord::new(slate, prices, outcome)?)?;
    }
    diag.policy = policy.diagnostics();
    Ok(RunOutput {
        ledger,
        sales,
        diagnostics: diag,
    })
}

/// Runs with the streams derived from `seed`, building the policy from the policy stream.
pub fn run_seeded<P, F>(cfg: &MarketConfig, factory: &F, seed: u64) -> Result<RunOutput>
where
    P: PricingPolicy,
    F: Fn(ChaCha8Rng) -> Result<P>,
{
    let mut streams = RunStreams::new(seed);
    let mut policy = factory(streams.policy.clone())?;
    run(cfg, &mut policy, &mut streams.slates, &mut streams.customers)
}

/// Regret of the best single price from `grid` (posted on every product in
/// every period) on the slate stream derived from `seed`.
pub fn best_fixed_price_regret(cfg: &MarketConfig, seed: u64, grid: &[f64]) -> Result<(f64, f64)> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(PricingError::InvalidArgument("price grid is empty".into()));
    }
    let mut slates = RunStreams::new(seed).slates;
    let fp = cfg.fixed_point();
    let mut regret = vec![0.0; grid.len()];
    for _ in 0..cfg.horizon {
        let slate = generate_slate(cfg, &mut slates)?;
        let best = optimal_prices(&cfg.truth, &slate, &fp)?;
        let rev_star = expected_revenue(&cfg.truth, &slate, &best.prices)?;
        for (acc, &p) in regret.iter_mut().zip(grid) {
            *acc += rev_star - expected_revenue(&cfg.truth, &slate, &PriceVector::uniform(p, slate.len())?)?;
        }
    }
    let (idx, best) = regret
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is non-empty");
    Ok((grid[idx], best))
}

/// Summary of cumulative regret across runs at one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_runs: usize,
    pub base_seed: u64,
    pub horizon: u64,
    pub checkpoints: Vec<Checkpoint>,
    /// Least-squares slope of `ln(median regret)` against `ln t`; `None`
    /// when some median is too small to take a logarithm meaningfully.
    pub slope: Option<f64>,
    pub slope_status: String,
    pub final_regret: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub runs: Vec<RunOutput>,
    pub aggregate: Aggregate,
}

/// Median regrets at or below this are treated as zero for the slope fit.
pub const DEGENERATE_REGRET: f64 = 1e-6;

/// Linear-interpolated sample quantile (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Checkpoints `T/8, T/4, T/2, T` (deduplicated, at least 1).
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut ts: Vec<u64> = [8, 4, 2, 1].iter().map(|div| (horizon / div).max(1)).collect();
    ts.dedup();
    ts
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() || ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn aggregate(runs: &[RunOutput], horizon: u64, base_seed: u64) -> Aggregate {
    let checkpoints: Vec<Checkpoint> = checkpoints(horizon)
        .into_iter()
        .map(|t| {
            let vals: Vec<f64> = runs
                .iter()
                .map(|r| r.ledger.cumulative_at(t).unwrap_or(f64::NAN))
                .collect();
            Checkpoint {
                t,
                median: quantile(&vals, 0.5),
                q10: quantile(&vals, 0.1),
                q90: quantile(&vals, 0.9),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
            }
        })
        .collect();
    let degenerate = checkpoints.iter().any(|c| !(c.median > DEGENERATE_REGRET));
    let (slope, slope_status) = if degenerate {
        (None, "undefined: median regret is ~0 at some checkpoint".to_string())
    } else if checkpoints.len() < 2 {
        (None, "undefined: fewer than two distinct checkpoints".to_string())
    } else {
        let xs: Vec<f64> = checkpoints.iter().map(|c| c.t as f64).collect();
        let ys: Vec<f64> = checkpoints.iter().map(|c| c.median).collect();
        (log_log_slope(&xs, &ys), "ok".to_string())
    };
    Aggregate {
        n_runs: runs.len(),
        base_seed,
        horizon,
        checkpoints,
        slope,
        slope_status,
        final_regret: runs.iter().map(|r| r.ledger.cumulative()).collect(),
    }
}

/// Runs `n_runs` independent trajectories (seed `base_seed + i`) in parallel
/// on the current rayon pool and aggregates them. Results are in run order
/// and do not depend on the number of worker threads.
pub fn replicate<P, F>(cfg: &MarketConfig, factory: F, n_runs: usize, base_seed: u64) -> Result<Replication>
where
    P: PricingPolicy,
    F: Fn(ChaCha8Rng) -> Result<P> + Sync,
{
    if n_runs == 0 {
        return Err(PricingError::InvalidArgument("n_runs must be at least 1".into()));
    }
    cfg.validate()?;
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|i| run_seeded(cfg, &factory, base_seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&runs, cfg.horizon, base_seed);
    Ok(Replication { runs, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{FixedPricePolicy, OraclePolicy};

    fn scalar_market(horizon: u64) -> MarketConfig {
        MarketConfig {
            d: 1,
            n_max: 1,
            horizon,
            truth: ModelParams::new(vec![2.0], vec![2.0], 3.0).unwrap(),
            l0: 1.0,
            feature_gen: FeatureGenerator::UnitFirstCoordinate,
            exploration_cap: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn unit_first_coordinate_in_one_dimension() {
        let cfg = scalar_market(10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = generate_slate(&cfg, &mut rng).unwrap();
            assert_eq!(s.to_rows(), vec![vec![1.0]]);
        }
    }

    #[test]
    fn validator_rejects_zero_feature_floor() {
        let mut cfg = scalar_market(10);
        cfg.d = 2;
        cfg.n_max = 2;
        cfg.truth = ModelParams::new(vec![0.5, 0.5], vec![1.0, 1.0], 3.0).unwrap();
        cfg.l0 = 0.5;
        cfg.feature_gen = FeatureGenerator::NonnegUniform { floor: 0.0 };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("Assumption 1"), "{err}");
        cfg.feature_gen = FeatureGenerator::NonnegUniform { floor: 0.25 };
        assert!(cfg.validate().is_ok());
        cfg.feature_gen = FeatureGenerator::UnitFirstCoordinate;
        // gamma_1 - |gamma_2| = 0 < L0
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn table_generator_validation() {
        let mut cfg = scalar_market(10);
        cfg.feature_gen = FeatureGenerator::CustomSeededTable {
            rows: vec![vec![1.0], vec![0.6]],
        };
        assert!(cfg.validate().is_ok());
        cfg.feature_gen = FeatureGenerator::CustomSeededTable {
            rows: vec![vec![1.0], vec![0.4]],
        };
        assert!(cfg.validate().is_err());
        cfg.feature_gen = FeatureGenerator::CustomSeededTable { rows: vec![] };
        assert!(cfg.validate().is_err());
        cfg.feature_gen = FeatureGenerator::CustomSeededTable {
            rows: vec![vec![1.0, 0.0]],
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn oracle_policy_has_no_regret() {
        let cfg = scalar_market(200);
        let truth = cfg.truth.clone();
        let out = run_seeded(
            &cfg,
            &|_| Ok(OraclePolicy::new(truth.clone(), FixedPointConfig::default())),
            5,
        )
        .unwrap();
        assert!(out.ledger.cumulative().abs() <= 200.0 * 1e-8);
    }

    #[test]
    fn zero_price_regret_is_total_benchmark_revenue() {
        let cfg = scalar_market(50);
        let out = run_seeded(&cfg, &|_| FixedPricePolicy::new(0.0), 5).unwrap();
        let total: f64 = out.ledger.entries.iter().map(|e| e.rev_star).sum();
        assert!(out.ledger.entries.iter().all(|e| e.rev_policy == 0.0));
        assert!((out.ledger.cumulative() - total).abs() < 1e-12);
        assert!(total > 0.0);
    }

    #[test]
    fn quantile_and_slope_helpers() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(checkpoints(20000), vec![2500, 5000, 10000, 20000]);
        assert_eq!(checkpoints(1), vec![1]);
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.sqrt()).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
        assert!(log_log_slope(&xs, &[1.0, 0.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn ledger_csv_layout() {
        let mut ledger = RegretLedger::default();
        ledger.push(1, Some((1, Phase::Explore)), 0.5, 0.25);
        ledger.push(2, None, 0.5, 0.5);
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf, &["seed=1".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# seed=1\nt,episode,phase,rev_star,rev_policy,cum_regret\n1,1,explore,0.5,0.25,0.25\n2,0,none,0.5,0.5,0.25\n"
        );
    }
}
