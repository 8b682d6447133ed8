//! Writes a synthetic sales log with uniformly random prices and the
//! parameters that generated it.
//!
//! ```text
//! cargo run -p m3p-core --example sales_fixture -- <out_dir> [records] [seed]
//! ```

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

use m3p_core::likelihood::{record_for, SalesLog};
use m3p_core::mnl::{sample_choice, ModelParams, PriceVector};
use m3p_core::simulator::{generate_slate, FeatureGenerator, MarketConfig, RunStreams};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().ok_or("usage: sales_fixture <out_dir> [records] [seed]")?);
    let records: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20240601);

    let truth = ModelParams::new(vec![1.0, -0.5, 0.3], vec![1.2, 0.3, -0.2], 3.0)?;
    let market = MarketConfig {
        d: 3,
        n_max: 3,
        horizon: records as u64,
        truth: truth.clone(),
        l0: 0.5,
        feature_gen: FeatureGenerator::UnitFirstCoordinate,
        exploration_cap: 3.0,
        seed,
    };
    market.validate()?;
    let mut streams = RunStreams::new(seed);
    let mut log = SalesLog::new();
    for _ in 0..records {
        let slate = generate_slate(&market, &mut streams.slates)?;
        let prices: Vec<f64> = (0..slate.len())
            .map(|_| market.exploration_cap * streams.policy.random::<f64>())
            .collect();
        let prices = PriceVector::new(prices)?;
        let outcome = sample_choice(&truth, &slate, &prices, &mut streams.customers)?;
        log.push(record_for(&truth, slate, prices, outcome)?)?;
    }
    fs::create_dir_all(&out)?;
    log.write_jsonl(BufWriter::new(fs::File::create(out.join("sales_log.jsonl"))?))?;
    fs::write(out.join("truth.json"), serde_json::to_string_pretty(&truth)? + "\n")?;
    Ok(())
}
