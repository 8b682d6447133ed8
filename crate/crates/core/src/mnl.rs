//! Multinomial logit demand.
//!
//! A customer facing a slate of products `x_1..x_n` priced at `p_1..p_n`
//! buys product `i` with probability
//!
//! ```text
//! q_i = exp(u_i) / (1 + sum_l exp(u_l)),   u_i = <x_i, theta> - <x_i, gamma> p_i
//! ```
//!
//! and walks away with the remaining mass. The outside option has utility 0.
//! All exponentials are evaluated with a shared max-shift so utilities of a
//! few hundred in magnitude stay finite.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};

/// Relative slack accepted on the norm budget so projected estimates that
/// land on the sphere up to rounding are still valid.
const NORM_SLACK: f64 = 1e-9;

/// Demand parameters `nu = (theta, gamma)` together with the norm budget `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsWire")]
pub struct ModelParams {
    theta: Vec<f64>,
    gamma: Vec<f64>,
    w_bound: f64,
}

#[derive(Deserialize)]
struct ParamsWire {
    theta: Vec<f64>,
    gamma: Vec<f64>,
    w_bound: f64,
}

impl TryFrom<ParamsWire> for ModelParams {
    type Error = PricingError;

    fn try_from(w: ParamsWire) -> Result<Self> {
        Self::new(w.theta, w.gamma, w.w_bound)
    }
}

impl ModelParams {
    pub fn new(theta: Vec<f64>, gamma: Vec<f64>, w_bound: f64) -> Result<Self> {
        if theta.is_empty() {
            return Err(PricingError::InvalidArgument(
                "parameter dimension must be at least 1".into(),
            ));
        }
        if theta.len() != gamma.len() {
            return Err(PricingError::DimensionMismatch {
                expected: theta.len(),
                got: gamma.len(),
                context: "gamma length",
            });
        }
        if !(w_bound.is_finite() && w_bound > 0.0) {
            return Err(PricingError::InvalidArgument(format!(
                "norm budget W must be positive and finite, got {w_bound}"
            )));
        }
        if theta.iter().chain(gamma.iter()).any(|v| !v.is_finite()) {
            return Err(PricingError::InvalidArgument("parameters must be finite".into()));
        }
        let params = Self { theta, gamma, w_bound };
        let norm = params.norm();
        if norm > w_bound * (1.0 + NORM_SLACK) {
            return Err(PricingError::InvalidArgument(format!(
                "||(theta, gamma)|| = {norm} exceeds the norm budget W = {w_bound}"
            )));
        }
        Ok(params)
    }

    /// Builds parameters from the stacked vector `(theta, gamma)` of length `2d`.
    pub fn from_stacked(nu: &[f64], w_bound: f64) -> Result<Self> {
        if nu.is_empty() || !nu.len().is_multiple_of(2) {
            return Err(PricingError::InvalidArgument(format!(
                "stacked parameter vector must have even positive length, got {}",
                nu.len()
            )));
        }
        let d = nu.len() / 2;
        Self::new(nu[..d].to_vec(), nu[d..].to_vec(), w_bound)
    }

    /// The all-zero parameter vector of dimension `d`.
    pub fn zeros(d: usize, w_bound: f64) -> Result<Self> {
        Self::new(vec![0.0; d], vec![0.0; d], w_bound)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn w_bound(&self) -> f64 {
        self.w_bound
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `(theta, gamma)` concatenated.
    pub fn stacked(&self) -> Vec<f64> {
        let mut nu = Vec::with_capacity(2 * self.dim());
        nu.extend_from_slice(&self.theta);
        nu.extend_from_slice(&self.gamma);
        nu
    }

    /// Euclidean norm of the stacked vector.
    pub fn norm(&self) -> f64 {
        self.theta
            .iter()
            .chain(self.gamma.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `<x, theta>`.
    pub fn valuation(&self, feature: &[f64]) -> f64 {
        dot(feature, &self.theta)
    }

    /// `<x, gamma>`, the price sensitivity of a product.
    pub fn sensitivity(&self, feature: &[f64]) -> f64 {
        dot(feature, &self.gamma)
    }
}

/// One period's consideration set: `n <= n_max` products with `d` features each,
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slate {
    features: Vec<f64>,
    n: usize,
    d: usize,
    n_max: usize,
}

impl Slate {
    pub fn new(rows: Vec<Vec<f64>>, n_max: usize) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(PricingError::DimensionMismatch {
                expected: d,
                got: bad.len(),
                context: "slate row length",
            });
        }
        let n = rows.len();
        Self::from_row_major(rows.into_iter().flatten().collect(), n, d, n_max)
    }

    pub fn from_row_major(features: Vec<f64>, n: usize, d: usize, n_max: usize) -> Result<Self> {
        if n == 0 || n > n_max {
            return Err(PricingError::InvalidArgument(format!(
                "slate size must lie in 1..={n_max}, got {n}"
            )));
        }
        if d == 0 {
            return Err(PricingError::InvalidArgument(
                "feature dimension must be at least 1".into(),
            ));
        }
        if features.len() != n * d {
            return Err(PricingError::DimensionMismatch {
                expected: n * d,
                got: features.len(),
                context: "slate feature buffer",
            });
        }
        if let Some(v) = features.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(PricingError::InvalidArgument(format!(
                "feature entries must lie in [-1, 1], got {v}"
            )));
        }
        Ok(Self { features, n, d, n_max })
    }

    /// Number of products.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d)
    }

    pub fn row_major(&self) -> &[f64] {
        &self.features
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// Posted prices for the products of a slate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(PricingError::InvalidArgument(format!(
                "prices must be finite and non-negative, got {p}"
            )));
        }
        Ok(Self(prices))
    }

    /// The same price for every product.
    pub fn uniform(price: f64, n: usize) -> Result<Self> {
        Self::new(vec![price; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for PriceVector {
    type Error = PricingError;

    fn try_from(prices: Vec<f64>) -> Result<Self> {
        Self::new(prices)
    }
}

impl From<PriceVector> for Vec<f64> {
    fn from(p: PriceVector) -> Self {
        p.0
    }
}

/// The customer's decision in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum ChoiceOutcome {
    /// Zero-based index into the slate.
    Product(usize),
    NoPurchase,
}

impl ChoiceOutcome {
    /// Slot in a probability vector of length `n + 1` (no-purchase last).
    pub fn slot(self, n: usize) -> usize {
        match self {
            ChoiceOutcome::Product(i) => i,
            ChoiceOutcome::NoPurchase => n,
        }
    }

    pub fn check_bounds(self, n: usize) -> Result<()> {
        match self {
            ChoiceOutcome::Product(i) if i >= n => Err(PricingError::InvalidArgument(format!(
                "chosen product {i} is outside a slate of {n} products"
            ))),
            _ => Ok(()),
        }
    }
}

impl TryFrom<i64> for ChoiceOutcome {
    type Error = PricingError;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(ChoiceOutcome::NoPurchase),
            i if i >= 0 => Ok(ChoiceOutcome::Product(i as usize)),
            other => Err(PricingError::InvalidArgument(format!(
                "outcome must be a product index or -1, got {other}"
            ))),
        }
    }
}

impl From<ChoiceOutcome> for i64 {
    fn from(c: ChoiceOutcome) -> Self {
        match c {
            ChoiceOutcome::Product(i) => i as i64,
            ChoiceOutcome::NoPurchase => -1,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_feature(params: &ModelParams, feature: &[f64]) -> Result<()> {
    if feature.len() != params.dim() {
        return Err(PricingError::DimensionMismatch {
            expected: params.dim(),
            got: feature.len(),
            context: "feature length",
        });
    }
    Ok(())
}

pub(crate) fn check_consistent(params: &ModelParams, slate: &Slate, prices: &PriceVector) -> Result<()> {
    if slate.dim() != params.dim() {
        return Err(PricingError::DimensionMismatch {
            expected: params.dim(),
            got: slate.dim(),
            context: "slate feature dimension",
        });
    }
    if prices.len() != slate.len() {
        return Err(PricingError::DimensionMismatch {
            expected: slate.len(),
            got: prices.len(),
            context: "price vector length",
        });
    }
    Ok(())
}

/// Deterministic utility `<x, theta> - <x, gamma> p`.
pub fn utility(params: &ModelParams, feature: &[f64], price: f64) -> Result<f64> {
    check_feature(params, feature)?;
    Ok(params.valuation(feature) - params.sensitivity(feature) * price)
}

/// Utilities of every product in the slate.
pub fn utilities(params: &ModelParams, slate: &Slate, prices: &PriceVector) -> Result<Vec<f64>> {
    check_consistent(params, slate, prices)?;
    Ok(slate
        .rows()
        .zip(prices.as_slice())
        .map(|(x, &p)| params.valuation(x) - params.sensitivity(x) * p)
        .collect())
}

/// `ln(1 + sum_l exp(u_l))`, evaluated with a max-shift.
pub fn log_partition(utils: &[f64]) -> f64 {
    let shift = utils.iter().copied().fold(0.0_f64, f64::max);
    let sum: f64 = (-shift).exp() + utils.iter().map(|u| (u - shift).exp()).sum::<f64>();
    shift + sum.ln()
}

/// Choice probabilities from utilities; the last entry is the outside option.
pub fn probabilities_from_utilities(utils: &[f64]) -> Vec<f64> {
    let shift = utils.iter().copied().fold(0.0_f64, f64::max);
    let mut probs: Vec<f64> = utils.iter().map(|u| (u - shift).exp()).collect();
    probs.push((-shift).exp());
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|q| *q /= total);
    probs
}

/// Purchase probabilities for each product followed by the no-purchase probability.
pub fn choice_probabilities(params: &ModelParams, slate: &Slate, prices: &PriceVector) -> Result<Vec<f64>> {
    Ok(probabilities_from_utilities(&utilities(params, slate, prices)?))
}

/// One standard Gumbel draw, `-ln(-ln U)` with `U` uniform on the open interval.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

/// Gumbel-max draw over the products plus the outside option (utility 0).
///
/// Consumes exactly `n + 1` Gumbel variates; a further uniform draw is taken
/// only when several alternatives tie for the maximum.
pub fn sample_from_utilities<R: Rng + ?Sized>(utils: &[f64], rng: &mut R) -> ChoiceOutcome {
    let n = utils.len();
    let perturbed: Vec<f64> = utils
        .iter()
        .copied()
        .chain(std::iter::once(0.0))
        .map(|u| u + sample_gumbel(rng))
        .collect();
    let best = perturbed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..=n).filter(|&i| perturbed[i] == best).collect();
    let slot = if winners.len() == 1 {
        winners[0]
    } else {
        winners[rng.random_range(0..winners.len())]
    };
    if slot == n {
        ChoiceOutcome::NoPurchase
    } else {
        ChoiceOutcome::Product(slot)
    }
}

/// Simulates the customer's choice by maximising utility plus Gumbel noise.
pub fn sample_choice<R: Rng + ?Sized>(
    params: &ModelParams,
    slate: &Slate,
    prices: &PriceVector,
    rng: &mut R,
) -> Result<ChoiceOutcome> {
    Ok(sample_from_utilities(&utilities(params, slate, prices)?, rng))
}

/// Expected revenue `sum_i q_i p_i`.
pub fn expected_revenue(params: &ModelParams, slate: &Slate, prices: &PriceVector) -> Result<f64> {
    let probs = choice_probabilities(params, slate, prices)?;
    Ok(probs.iter().zip(prices.as_slice()).map(|(q, p)| q * p).sum())
}
