//! Revenue-maximising prices for a known demand model.
//!
//! The optimal prices share a common markup: `p_i = 1/beta_i + B`, where
//! `beta_i = <x_i, gamma>` and `B` is the unique root of
//!
//! ```text
//! B = sum_l (1/beta_l) exp(-(1 + beta_l B)) exp(<x_l, theta>)
//! ```
//!
//! The left side increases from 0 and the right side decreases from a
//! positive value, so `[0, RHS(0)]` always brackets the root. `B` is also
//! the optimal expected revenue of the period.

use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::mnl::{ModelParams, PriceVector, Slate};
use crate::root::bisect_increasing;

/// Stopping rule for the markup equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    /// Bound on `|B - RHS(B)|` at the returned root.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(PricingError::Config(format!(
                "fixed-point tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(PricingError::Config(
                "fixed-point max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Market-wide constants: sensitivity floor `L0`, parameter budget `W`, slate cap `N`.
///
/// `w_bound` is used as a bound on `|<x, theta>|`, which holds whenever
/// `||theta||_1 <= W` and features lie in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketBounds {
    pub l0: f64,
    pub w_bound: f64,
    pub n_max: usize,
}

impl MarketBounds {
    pub fn new(l0: f64, w_bound: f64, n_max: usize) -> Result<Self> {
        let bounds = Self { l0, w_bound, n_max };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l0.is_finite() && self.l0 > 0.0) {
            return Err(PricingError::InvalidArgument(format!(
                "L0 must be positive (Assumption 1), got {}",
                self.l0
            )));
        }
        if !(self.w_bound.is_finite() && self.w_bound >= 0.0) {
            return Err(PricingError::InvalidArgument(format!(
                "W must be finite and non-negative, got {}",
                self.w_bound
            )));
        }
        if self.n_max == 0 {
            return Err(PricingError::InvalidArgument("N must be at least 1".into()));
        }
        Ok(())
    }
}

/// Markup and the prices it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPrices {
    pub prices: PriceVector,
    pub markup: f64,
    /// Products whose sensitivity was raised to the floor before pricing.
    pub clamped: usize,
}

/// Right-hand side of the markup equation for sensitivities `beta` and valuations `delta`.
pub fn markup_rhs(beta: &[f64], delta: &[f64], markup: f64) -> f64 {
    beta.iter()
        .zip(delta)
        .map(|(&b, &v)| (v - 1.0 - b * markup).exp() / b)
        .sum()
}

/// Solves the markup equation given per-product sensitivities and valuations.
pub fn solve_markup_raw(beta: &[f64], delta: &[f64], cfg: &FixedPointConfig) -> Result<f64> {
    cfg.validate()?;
    if beta.len() != delta.len() || beta.is_empty() {
        return Err(PricingError::DimensionMismatch {
            expected: beta.len(),
            got: delta.len(),
            context: "valuation vector length",
        });
    }
    if let Some((index, &b)) = beta.iter().enumerate().find(|(_, b)| !(**b > 0.0)) {
        return Err(PricingError::AssumptionViolation { index, beta: b });
    }
    let hi = markup_rhs(beta, delta, 0.0);
    if !hi.is_finite() {
        return Err(PricingError::InvalidArgument(format!(
            "markup bracket overflowed (RHS(0) = {hi})"
        )));
    }
    bisect_increasing(
        |b| b - markup_rhs(beta, delta, b),
        0.0,
        hi,
        cfg.tolerance,
        cfg.max_iterations,
    )
}

fn sensitivities_and_valuations(params: &ModelParams, slate: &Slate) -> Result<(Vec<f64>, Vec<f64>)> {
    if slate.dim() != params.dim() {
        return Err(PricingError::DimensionMismatch {
            expected: params.dim(),
            got: slate.dim(),
            context: "slate feature dimension",
        });
    }
    let beta = slate.rows().map(|x| params.sensitivity(x)).collect();
    let delta = slate.rows().map(|x| params.valuation(x)).collect();
    Ok((beta, delta))
}

/// The optimal markup `B` for a slate under `params`.
pub fn solve_markup(params: &ModelParams, slate: &Slate, cfg: &FixedPointConfig) -> Result<f64> {
    let (beta, delta) = sensitivities_and_valuations(params, slate)?;
    solve_markup_raw(&beta, &delta, cfg)
}

fn assemble(beta: &[f64], delta: &[f64], cfg: &FixedPointConfig, clamped: usize) -> Result<OptimalPrices> {
    let markup = solve_markup_raw(beta, delta, cfg)?;
    let prices = PriceVector::new(beta.iter().map(|b| 1.0 / b + markup).collect())?;
    Ok(OptimalPrices {
        prices,
        markup,
        clamped,
    })
}

/// Revenue-maximising prices and markup. Fails if any sensitivity is not positive.
pub fn optimal_prices(params: &ModelParams, slate: &Slate, cfg: &FixedPointConfig) -> Result<OptimalPrices> {
    let (beta, delta) = sensitivities_and_valuations(params, slate)?;
    assemble(&beta, &delta, cfg, 0)
}

/// Revenue-maximising prices `p_i = 1/beta_i + B`.
pub fn price_slate(params: &ModelParams, slate: &Slate, cfg: &FixedPointConfig) -> Result<PriceVector> {
    optimal_prices(params, slate, cfg).map(|o| o.prices)
}

/// Prices under an estimate whose sensitivities may fall below `l0`.
///
/// Each `beta_i` is replaced by `max(beta_i, l0)` before solving; the number
/// of products that needed it is reported in `clamped`.
pub fn price_slate_clamped(
    params: &ModelParams,
    slate: &Slate,
    cfg: &FixedPointConfig,
    l0: f64,
) -> Result<OptimalPrices> {
    if !(l0 > 0.0) {
        return Err(PricingError::InvalidArgument(format!(
            "clamp floor L0 must be positive, got {l0}"
        )));
    }
    let (mut beta, delta) = sensitivities_and_valuations(params, slate)?;
    let mut clamped = 0;
    for b in beta.iter_mut() {
        if *b < l0 {
            *b = l0;
            clamped += 1;
        }
    }
    assemble(&beta, &delta, cfg, clamped)
}

/// Upper bound `P = 1/L0 + B^u` on every optimal price, where `B^u` solves
/// `B = (N/L0) exp(-(1 + L0 B)) exp(W)`.
pub fn price_upper_bound(bounds: &MarketBounds) -> Result<f64> {
    bounds.validate()?;
    let beta = vec![bounds.l0; bounds.n_max];
    let delta = vec![bounds.w_bound; bounds.n_max];
    let upper_markup = solve_markup_raw(&beta, &delta, &FixedPointConfig::default())?;
    Ok(1.0 / bounds.l0 + upper_markup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Lambert-W values, evaluated at 30 digits: W(1/e), W(2/e), W(1).
    const W_INV_E: f64 = 0.278_464_542_761_073_8;
    const W_TWO_OVER_E: f64 = 0.463_055_513_365_548_9;
    const OMEGA: f64 = 0.567_143_290_409_784;

    fn single(theta: f64, gamma: f64) -> (ModelParams, Slate) {
        (
            ModelParams::new(vec![theta], vec![gamma], 10.0).unwrap(),
            Slate::new(vec![vec![1.0]], 1).unwrap(),
        )
    }

    #[test]
    fn markup_examples() {
        let cfg = FixedPointConfig::default();
        let (p, s) = single(0.0, 1.0);
        assert_abs_diff_eq!(solve_markup(&p, &s, &cfg).unwrap(), W_INV_E, epsilon = 1e-10);

        let (p, s) = single(2.0, 2.0);
        assert_abs_diff_eq!(solve_markup(&p, &s, &cfg).unwrap(), 0.5, epsilon = 1e-10);

        let p = ModelParams::new(vec![0.0], vec![1.0], 10.0).unwrap();
        let s = Slate::new(vec![vec![1.0], vec![1.0]], 2).unwrap();
        assert_abs_diff_eq!(solve_markup(&p, &s, &cfg).unwrap(), W_TWO_OVER_E, epsilon = 1e-10);
    }

    #[test]
    fn price_examples() {
        let cfg = FixedPointConfig::default();
        let (p, s) = single(2.0, 2.0);
        assert_abs_diff_eq!(price_slate(&p, &s, &cfg).unwrap().as_slice()[0], 1.0, epsilon = 1e-10);

        let (p, s) = single(0.0, 1.0);
        assert_abs_diff_eq!(
            price_slate(&p, &s, &cfg).unwrap().as_slice()[0],
            1.0 + W_INV_E,
            epsilon = 1e-10
        );

        let p = ModelParams::new(vec![0.3, -0.2], vec![1.0, 0.4], 10.0).unwrap();
        let s = Slate::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], 2).unwrap();
        let prices = price_slate(&p, &s, &cfg).unwrap();
        assert_eq!(prices.as_slice()[0], prices.as_slice()[1]);
    }

    #[test]
    fn upper_bound_examples() {
        let p = price_upper_bound(&MarketBounds::new(1.0, 0.0, 1).unwrap()).unwrap();
        assert_abs_diff_eq!(p, 1.0 + W_INV_E, epsilon = 1e-10);
        let p = price_upper_bound(&MarketBounds::new(1.0, 1.0, 1).unwrap()).unwrap();
        assert_abs_diff_eq!(p, 1.0 + OMEGA, epsilon = 1e-10);

        let mut last = 0.0;
        for n in 1..=8 {
            let p = price_upper_bound(&MarketBounds::new(0.5, 2.0, n).unwrap()).unwrap();
            assert!(p > last);
            last = p;
        }
        assert!(MarketBounds::new(0.0, 1.0, 1).is_err());
        assert!(MarketBounds::new(-1.0, 1.0, 1).is_err());
    }

    #[test]
    fn non_positive_sensitivity_is_rejected() {
        let (p, s) = single(1.0, -0.5);
        assert!(matches!(
            solve_markup(&p, &s, &FixedPointConfig::default()),
            Err(PricingError::AssumptionViolation { index: 0, .. })
        ));
        let (p, s) = single(1.0, 0.0);
        assert!(price_slate(&p, &s, &FixedPointConfig::default()).is_err());
    }

    #[test]
    fn clamping_raises_sensitivity_to_floor() {
        let cfg = FixedPointConfig::default();
        let (p, s) = single(0.0, -0.5);
        let out = price_slate_clamped(&p, &s, &cfg, 1.0).unwrap();
        assert_eq!(out.clamped, 1);
        assert_abs_diff_eq!(out.prices.as_slice()[0], 1.0 + W_INV_E, epsilon = 1e-10);

        let (p, s) = single(2.0, 2.0);
        let out = price_slate_clamped(&p, &s, &cfg, 0.5).unwrap();
        assert_eq!(out.clamped, 0);
        assert_eq!(out.prices, price_slate(&p, &s, &cfg).unwrap());
    }

    #[test]
    fn tight_budget_reports_non_convergence() {
        let cfg = FixedPointConfig {
            tolerance: 1e-14,
            max_iterations: 2,
        };
        let (p, s) = single(0.0, 1.0);
        assert!(matches!(
            solve_markup(&p, &s, &cfg),
            Err(PricingError::NonConvergence { .. })
        ));
        let bad = FixedPointConfig {
            tolerance: 0.0,
            max_iterations: 10,
        };
        assert!(solve_markup(&p, &s, &bad).is_err());
    }
}
