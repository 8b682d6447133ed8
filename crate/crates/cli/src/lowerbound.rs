//! `m3p lowerbound`: numerical checks of the scalar-class inequalities.

use std::path::PathBuf;

use clap::Args;
use m3p_core::lower_bound::{verify_scalar_lemmas, LemmaCheckConfig, LemmaConstants};
use serde::{Deserialize, Serialize};

use crate::config::{self, default_format_version};
use crate::error::{validation, CliError, CliResult};

#[derive(Debug, Args)]
pub struct LowerboundArgs {
    /// Check settings (.toml or .json); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Points per axis of the P x Theta grid. Overrides the config value.
    #[arg(long)]
    pub grid_resolution: Option<usize>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Replace one inequality constant, as NAME=VALUE. Used to confirm the
    /// checks can fail.
    #[arg(long = "override-constant", value_name = "NAME=VALUE", hide = true)]
    pub override_constant: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct LowerboundConfig {
    #[serde(default = "default_format_version")]
    format_version: String,
    #[serde(flatten)]
    check: LemmaCheckConfig,
}

fn apply_override(c: &mut LemmaConstants, spec: &str) -> CliResult<()> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::invalid(format!("override {spec:?} is not NAME=VALUE")))?;
    let value = parse_number(value.trim())
        .ok_or_else(|| CliError::invalid(format!("override {spec:?} has a non-numeric value")))?;
    let slot = match name.trim() {
        "theta0" => &mut c.theta0,
        "curvature" => &mut c.curvature,
        "sensitivity" => &mut c.sensitivity,
        "kl_factor" => &mut c.kl_factor,
        "cost_denominator" => &mut c.cost_denominator,
        "concavity" => &mut c.concavity,
        other => return Err(CliError::invalid(format!("unknown constant {other:?}"))),
    };
    *slot = value;
    Ok(())
}

/// Accepts plain numbers and simple fractions such as `1/520`.
fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.parse().ok(),
    }
}

pub fn run(args: LowerboundArgs) -> CliResult<()> {
    let mut cfg: LowerboundConfig = match &args.config {
        Some(p) => config::load(p)?,
        None => LowerboundConfig {
            format_version: default_format_version(),
            check: LemmaCheckConfig::default(),
        },
    };
    config::check_format_version(&cfg.format_version)?;
    if let Some(g) = args.grid_resolution {
        cfg.check.grid_resolution = g;
    }
    for spec in &args.override_constant {
        apply_override(&mut cfg.check.constants, spec)?;
    }
    let report = verify_scalar_lemmas(&cfg.check).map_err(validation)?;
    config::emit(&config::to_pretty_json(&report))?;
    if let Some(path) = &args.output {
        config::write_json(path, &report)?;
    }
    for f in &report.families {
        let verdict = match (f.asserted, f.passed) {
            (false, true) => "holds (reported only)",
            (false, false) => "violated (reported only)",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        eprintln!("{verdict:<24} {:<30} worst margin {:+.3e}", f.name, f.worst_margin);
    }
    if report.all_passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .families
            .iter()
            .filter(|f| f.asserted && !f.passed)
            .map(|f| f.name.as_str())
            .collect();
        Err(CliError::runtime(format!(
            "inequality families failed: {}",
            failed.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_fractions() {
        let mut c = LemmaConstants::default();
        apply_override(&mut c, "curvature=1/5").unwrap();
        assert_eq!(c.curvature, 0.2);
        apply_override(&mut c, "kl_factor = 10").unwrap();
        assert_eq!(c.kl_factor, 10.0);
        assert!(apply_override(&mut c, "nope=1").is_err());
        assert!(apply_override(&mut c, "curvature").is_err());
        assert!(apply_override(&mut c, "curvature=x").is_err());
    }
}
