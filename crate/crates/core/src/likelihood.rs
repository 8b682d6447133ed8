//! Negative log-likelihood of observed sales and its norm-constrained minimiser.
//!
//! Writing `x~ = (x, -p x)` for the augmented feature of a product posted at
//! price `p`, the utility is linear in `nu = (theta, gamma)`: `u = <x~, nu>`.
//! The per-record loss is `ln(1 + sum_l exp(u_l)) - u_chosen` (with `u = 0`
//! for no purchase), so the averaged loss is convex in `nu`. Its gradient is
//! `E_q[x~] - x~_chosen` and its Hessian the covariance of `x~` under the
//! choice probabilities, the outside option sitting at `x~ = 0`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::mnl::{
    check_consistent, dot, log_partition, probabilities_from_utilities, ChoiceOutcome, ModelParams, PriceVector, Slate,
};

/// One observed period: what was offered, at which prices, and what was bought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordWire", into = "RecordWire")]
pub struct SalesRecord {
    slate: Slate,
    prices: PriceVector,
    outcome: ChoiceOutcome,
}

/// JSONL layout: `{"features": [[..], ..], "prices": [..], "outcome": i}`
/// with `outcome = -1` for no purchase.
#[derive(Serialize, Deserialize)]
struct RecordWire {
    features: Vec<Vec<f64>>,
    prices: Vec<f64>,
    outcome: i64,
}

impl TryFrom<RecordWire> for SalesRecord {
    type Error = PricingError;

    fn try_from(w: RecordWire) -> Result<Self> {
        let n = w.features.len();
        let slate = Slate::new(w.features, n)?;
        SalesRecord::new(slate, PriceVector::new(w.prices)?, w.outcome.try_into()?)
    }
}

impl From<SalesRecord> for RecordWire {
    fn from(r: SalesRecord) -> Self {
        RecordWire {
            features: r.slate.to_rows(),
            prices: r.prices.into_inner(),
            outcome: r.outcome.into(),
        }
    }
}

impl SalesRecord {
    pub fn new(slate: Slate, prices: PriceVector, outcome: ChoiceOutcome) -> Result<Self> {
        if prices.len() != slate.len() {
            return Err(PricingError::DimensionMismatch {
                expected: slate.len(),
                got: prices.len(),
                context: "price vector length",
            });
        }
        outcome.check_bounds(slate.len())?;
        Ok(Self { slate, prices, outcome })
    }

    pub fn slate(&self) -> &Slate {
        &self.slate
    }

    pub fn prices(&self) -> &PriceVector {
        &self.prices
    }

    pub fn outcome(&self) -> ChoiceOutcome {
        self.outcome
    }

    /// Augmented feature `(x_i, -p_i x_i)` of product `i`.
    pub fn augmented_feature(&self, i: usize) -> Vec<f64> {
        let x = self.slate.row(i);
        let p = self.prices.as_slice()[i];
        x.iter().copied().chain(x.iter().map(|v| -p * v)).collect()
    }

    fn utilities(&self, nu: &[f64]) -> Vec<f64> {
        let d = self.slate.dim();
        let (theta, gamma) = nu.split_at(d);
        self.slate
            .rows()
            .zip(self.prices.as_slice())
            .map(|(x, p)| dot(x, theta) - p * dot(x, gamma))
            .collect()
    }
}

/// Ordered collection of sales records sharing one feature dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SalesLog {
    records: Vec<SalesRecord>,
}

/// A JSONL line that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct LogParseError {
    /// One-based line number.
    pub line: usize,
    pub message: String,
}

impl SalesLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<SalesRecord>) -> Result<Self> {
        let mut log = Self::new();
        for r in records {
            log.push(r)?;
        }
        Ok(log)
    }

    pub fn push(&mut self, record: SalesRecord) -> Result<()> {
        if let Some(d) = self.dim() {
            if record.slate.dim() != d {
                return Err(PricingError::DimensionMismatch {
                    expected: d,
                    got: record.slate.dim(),
                    context: "record feature dimension",
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[SalesRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Feature dimension, `None` while empty.
    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.slate.dim())
    }

    /// Reads one JSON record per line. Blank lines and lines starting with `#` are skipped.
    pub fn read_jsonl<R: BufRead>(reader: R) -> std::result::Result<Self, LogParseError> {
        let mut log = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| LogParseError {
                line: line_no,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let record: SalesRecord = serde_json::from_str(&line).map_err(|e| LogParseError {
                line: line_no,
                message: e.to_string(),
            })?;
            log.push(record).map_err(|e| LogParseError {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(log)
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut writer, r)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Settings for the constrained maximum-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Radius `W` of the feasible ball.
    pub w_bound: f64,
    #[serde(default = "default_grad_tolerance")]
    pub grad_tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_step_init")]
    pub step_init: f64,
}

fn default_grad_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    5000
}

fn default_step_init() -> f64 {
    1.0
}

impl EstimatorConfig {
    pub fn new(w_bound: f64) -> Self {
        Self {
            w_bound,
            grad_tolerance: default_grad_tolerance(),
            max_iterations: default_max_iterations(),
            step_init: default_step_init(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.w_bound) || !positive(self.grad_tolerance) || !positive(self.step_init) {
            return Err(PricingError::Config(format!(
                "estimator settings must be positive: W = {}, grad_tolerance = {}, step_init = {}",
                self.w_bound, self.grad_tolerance, self.step_init
            )));
        }
        if self.max_iterations == 0 {
            return Err(PricingError::Config(
                "estimator max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`fit_mle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParams,
    pub converged: bool,
    pub iterations: usize,
    pub loss: f64,
    /// `||nu - Proj(nu - grad L(nu))||` at the returned point.
    pub projected_gradient_norm: f64,
}

fn check_log(nu: &ModelParams, log: &SalesLog) -> Result<()> {
    match log.dim() {
        None => Err(PricingError::InvalidArgument("sales log is empty".into())),
        Some(d) if d != nu.dim() => Err(PricingError::DimensionMismatch {
            expected: nu.dim(),
            got: d,
            context: "sales log feature dimension",
        }),
        Some(_) => Ok(()),
    }
}

fn loss_raw(nu: &[f64], log: &SalesLog) -> f64 {
    let total: f64 = log
        .records
        .iter()
        .map(|r| {
            let u = r.utilities(nu);
            let chosen = match r.outcome {
                ChoiceOutcome::Product(i) => u[i],
                ChoiceOutcome::NoPurchase => 0.0,
            };
            log_partition(&u) - chosen
        })
        .sum();
    total / log.len() as f64
}

fn loss_and_gradient_raw(nu: &[f64], log: &SalesLog) -> (f64, Vec<f64>) {
    let d = nu.len() / 2;
    let mut grad = vec![0.0; 2 * d];
    let mut total = 0.0;
    for r in &log.records {
        let u = r.utilities(nu);
        let q = probabilities_from_utilities(&u);
        let prices = r.prices.as_slice();
        for (l, x) in r.slate.rows().enumerate() {
            let mut w = q[l];
            if r.outcome == ChoiceOutcome::Product(l) {
                w -= 1.0;
            }
            if w != 0.0 {
                for j in 0..d {
                    grad[j] += w * x[j];
                    grad[d + j] -= w * prices[l] * x[j];
                }
            }
        }
        let chosen = match r.outcome {
            ChoiceOutcome::Product(i) => u[i],
            ChoiceOutcome::NoPurchase => 0.0,
        };
        total += log_partition(&u) - chosen;
    }
    let scale = 1.0 / log.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (total * scale, grad)
}

/// Average negative log-likelihood of the log under `nu`.
pub fn neg_log_likelihood(nu: &ModelParams, log: &SalesLog) -> Result<f64> {
    check_log(nu, log)?;
    Ok(loss_raw(&nu.stacked(), log))
}

/// Gradient of [`neg_log_likelihood`] with respect to `(theta, gamma)`.
pub fn nll_gradient(nu: &ModelParams, log: &SalesLog) -> Result<Vec<f64>> {
    check_log(nu, log)?;
    Ok(loss_and_gradient_raw(&nu.stacked(), log).1)
}

/// Hessian of [`neg_log_likelihood`]: the averaged choice-probability
/// covariance of the augmented features.
pub fn nll_hessian(nu: &ModelParams, log: &SalesLog) -> Result<DMatrix<f64>> {
    check_log(nu, log)?;
    let stacked = nu.stacked();
    let dim = stacked.len();
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    for r in &log.records {
        let q = probabilities_from_utilities(&r.utilities(&stacked));
        let mut mean = nalgebra::DVector::<f64>::zeros(dim);
        let mut second = DMatrix::<f64>::zeros(dim, dim);
        for (l, &ql) in q.iter().take(r.slate.len()).enumerate() {
            let xt = nalgebra::DVector::from_vec(r.augmented_feature(l));
            mean.axpy(ql, &xt, 1.0);
            second.ger(ql, &xt, &xt, 1.0);
        }
        second.ger(-1.0, &mean, &mean, 1.0);
        hess += second;
    }
    hess /= log.len() as f64;
    // exact symmetry regardless of accumulation order
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}

/// Radial projection onto the Euclidean ball of radius `radius`.
pub fn project_to_ball(v: &mut [f64], radius: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        let s = radius / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

fn projected_gradient_norm(x: &[f64], grad: &[f64], radius: f64) -> f64 {
    let mut probe: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
    project_to_ball(&mut probe, radius);
    x.iter().zip(&probe).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
/// Loss increases below this relative level are treated as rounding noise.
const ROUNDING_SLACK: f64 = 1e-14;

/// Norm-constrained maximum-likelihood estimate, starting from `nu = 0`.
///
/// Projected gradient descent with Armijo backtracking (step halving) along
/// the projection arc. The first trial step is `step_init`; later trial steps
/// use the Barzilai-Borwein ratio `s.s / s.y` of the last accepted move. The
/// fit is a deterministic function of the log and the settings. When the
/// iteration budget runs out the last iterate is returned with
/// `converged = false`.
pub fn fit_mle(log: &SalesLog, cfg: &EstimatorConfig) -> Result<FitReport> {
    cfg.validate()?;
    let d = log
        .dim()
        .ok_or_else(|| PricingError::InvalidArgument("sales log is empty".into()))?;
    let radius = cfg.w_bound;
    let mut x = vec![0.0; 2 * d];
    let (mut f, mut g) = loss_and_gradient_raw(&x, log);
    let mut trial = cfg.step_init;
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(&x, &g, radius);
    let mut converged = pg <= cfg.grad_tolerance;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let mut step = trial;
        let accepted = loop {
            let mut cand: Vec<f64> = x.iter().zip(&g).map(|(a, gi)| a - step * gi).collect();
            project_to_ball(&mut cand, radius);
            let decrease: f64 = g.iter().zip(cand.iter().zip(&x)).map(|(gi, (c, a))| gi * (c - a)).sum();
            let f_cand = loss_raw(&cand, log);
            if f_cand <= f + ARMIJO_C * decrease || f_cand - f <= ROUNDING_SLACK * f.abs().max(1.0) {
                break Some(cand);
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(next) = accepted else {
            break;
        };
        let (f_next, g_next) = loss_and_gradient_raw(&next, log);
        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let sy: f64 = s
            .iter()
            .zip(g_next.iter().zip(&g))
            .map(|(si, (gn, go))| si * (gn - go))
            .sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        trial = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(1e-10, 1e10)
        } else {
            cfg.step_init
        };
        x = next;
        f = f_next;
        g = g_next;
        pg = projected_gradient_norm(&x, &g, radius);
        converged = pg <= cfg.grad_tolerance;
    }

    Ok(FitReport {
        params: ModelParams::from_stacked(&x, radius)?,
        converged,
        iterations,
        loss: f,
        projected_gradient_norm: pg,
    })
}

/// Builds a record, checking that it agrees with `params`' dimension.
pub fn record_for(
    params: &ModelParams,
    slate: Slate,
    prices: PriceVector,
    outcome: ChoiceOutcome,
) -> Result<SalesRecord> {
    check_consistent(params, &slate, &prices)?;
    SalesRecord::new(slate, prices, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_product(x: f64, p: f64, outcome: ChoiceOutcome) -> SalesRecord {
        SalesRecord::new(
            Slate::new(vec![vec![x]], 1).unwrap(),
            PriceVector::new(vec![p]).unwrap(),
            outcome,
        )
        .unwrap()
    }

    fn zero(d: usize) -> ModelParams {
        ModelParams::zeros(d, 10.0).unwrap()
    }

    #[test]
    fn loss_examples() {
        let log = SalesLog::from_records(vec![one_product(1.0, 0.0, ChoiceOutcome::Product(0))]).unwrap();
        assert_abs_diff_eq!(neg_log_likelihood(&zero(1), &log).unwrap(), 2f64.ln(), epsilon = 1e-15);

        // u = theta - gamma p = -100
        let nu = ModelParams::new(vec![-100.0], vec![0.0], 200.0).unwrap();
        let log = SalesLog::from_records(vec![one_product(1.0, 0.5, ChoiceOutcome::NoPurchase)]).unwrap();
        let l = neg_log_likelihood(&nu, &log).unwrap();
        assert!((0.0..1e-40).contains(&l));

        let nu = ModelParams::new(vec![0.4], vec![0.7], 10.0).unwrap();
        let a = one_product(0.9, 0.3, ChoiceOutcome::Product(0));
        let b = one_product(-0.5, 0.8, ChoiceOutcome::NoPurchase);
        let la = neg_log_likelihood(&nu, &SalesLog::from_records(vec![a.clone()]).unwrap()).unwrap();
        let lb = neg_log_likelihood(&nu, &SalesLog::from_records(vec![b.clone()]).unwrap()).unwrap();
        let lab = neg_log_likelihood(&nu, &SalesLog::from_records(vec![a, b]).unwrap()).unwrap();
        assert_abs_diff_eq!(lab, 0.5 * (la + lb), epsilon = 1e-15);
    }

    #[test]
    fn empty_log_is_rejected() {
        let log = SalesLog::new();
        assert!(neg_log_likelihood(&zero(1), &log).is_err());
        assert!(nll_gradient(&zero(1), &log).is_err());
        assert!(nll_hessian(&zero(1), &log).is_err());
        assert!(fit_mle(&log, &EstimatorConfig::new(1.0)).is_err());
    }

    #[test]
    fn gradient_example() {
        let log = SalesLog::from_records(vec![one_product(1.0, 0.0, ChoiceOutcome::Product(0))]).unwrap();
        let g = nll_gradient(&zero(1), &log).unwrap();
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_vanishes_when_frequencies_match_model() {
        // one product at u = ln 2 is bought with probability 2/3
        let ln2 = 2f64.ln();
        let nu = ModelParams::new(vec![ln2 + 0.5], vec![1.0], 10.0).unwrap();
        let rec = |o| {
            SalesRecord::new(
                Slate::new(vec![vec![1.0]], 1).unwrap(),
                PriceVector::new(vec![0.5]).unwrap(),
                o,
            )
            .unwrap()
        };
        let log = SalesLog::from_records(vec![
            rec(ChoiceOutcome::Product(0)),
            rec(ChoiceOutcome::Product(0)),
            rec(ChoiceOutcome::NoPurchase),
        ])
        .unwrap();
        for g in nll_gradient(&nu, &log).unwrap() {
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn hessian_example() {
        let log = SalesLog::from_records(vec![one_product(1.0, 0.0, ChoiceOutcome::Product(0))]).unwrap();
        let h = nll_hessian(&zero(1), &log).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_is_radial() {
        let mut v = vec![3.0, 4.0];
        project_to_ball(&mut v, 1.0);
        assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.8, epsilon = 1e-15);
        let mut w = vec![0.1, 0.1];
        project_to_ball(&mut w, 1.0);
        assert_eq!(w, vec![0.1, 0.1]);
    }

    #[test]
    fn fit_recovers_balanced_single_product() {
        // half the customers buy at p = 0 and half at p = 1, both with x = 1:
        // any nu with theta = 0 = gamma fits the p = 0 half; the p = 1 half
        // forces theta - gamma = 0 as well.
        let log = SalesLog::from_records(vec![
            one_product(1.0, 0.0, ChoiceOutcome::Product(0)),
            one_product(1.0, 0.0, ChoiceOutcome::NoPurchase),
            one_product(1.0, 1.0, ChoiceOutcome::Product(0)),
            one_product(1.0, 1.0, ChoiceOutcome::NoPurchase),
        ])
        .unwrap();
        let report = fit_mle(&log, &EstimatorConfig::new(5.0)).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert!(report.params.norm() < 1e-12);
    }

    #[test]
    fn fit_respects_active_constraint() {
        // everyone buys: the unconstrained optimum is at infinity
        let log = SalesLog::from_records(vec![
            one_product(1.0, 0.2, ChoiceOutcome::Product(0)),
            one_product(0.5, 0.9, ChoiceOutcome::Product(0)),
        ])
        .unwrap();
        let report = fit_mle(&log, &EstimatorConfig::new(2.0)).unwrap();
        assert!(report.converged, "{report:?}");
        assert_abs_diff_eq!(report.params.norm(), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let log = SalesLog::from_records(vec![
            one_product(1.0, 0.25, ChoiceOutcome::Product(0)),
            one_product(-0.5, 0.75, ChoiceOutcome::NoPurchase),
        ])
        .unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"features":[[1.0]],"prices":[0.25],"outcome":0}"#
        );
        let back = SalesLog::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, log);
        let commented = format!("# seed: 7\n\n{text}");
        assert_eq!(SalesLog::read_jsonl(commented.as_bytes()).unwrap(), log);

        let bad = "{\"features\":[[1.0]],\"prices\":[0.5],\"outcome\":0}\n{\"features\":[[1.0]],\"prices\":[0.5],\"outcome\":3}\n";
        let err = SalesLog::read_jsonl(bad.as_bytes()).unwrap_err();
        assert_eq!(err.line, 2);
        let mixed = "{\"features\":[[1.0]],\"prices\":[0.5],\"outcome\":0}\n{\"features\":[[1.0, 0.0]],\"prices\":[0.5],\"outcome\":0}\n";
        assert_eq!(SalesLog::read_jsonl(mixed.as_bytes()).unwrap_err().line, 2);
        assert!(SalesLog::read_jsonl("not json".as_bytes()).is_err());
    }
}
