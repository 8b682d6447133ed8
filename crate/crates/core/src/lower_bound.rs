//! Scalar pricing problems with an uninformative price, and exact
//! trajectory KL / regret by enumerating purchase histories.
//!
//! With one product whose feature is `x = 1` and `theta = gamma`, the purchase
//! probability is `q(p, theta) = e^{theta(1-p)} / (1 + e^{theta(1-p)})`. Every
//! curve passes through `q(1, theta) = 1/2`, so posting `p = 1` reveals
//! nothing about `theta`, while `p = 1` is also the optimal price at
//! `theta = 2`. The routines here evaluate the quantities that make this
//! tension quantitative, exactly rather than by sampling.

use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::root::bisect_increasing;

/// Enumeration visits `2^depth` histories; deeper requests are refused.
pub const MAX_ENUMERATION_DEPTH: usize = 20;

/// Default bisection tolerance for [`scalar_optimal_price`].
pub const OPTIMAL_PRICE_TOLERANCE: f64 = 1e-13;

/// Margin below zero tolerated as floating-point noise when judging an inequality.
pub const NUMERIC_SLACK: f64 = 1e-12;

/// Price interval `P` and parameter interval `Theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarClass {
    pub price_range: (f64, f64),
    pub theta_range: (f64, f64),
}

impl Default for ScalarClass {
    fn default() -> Self {
        Self {
            price_range: (2.0 / 5.0, 4.0 / 3.0),
            theta_range: (3.0 / 2.0, 5.0 / 2.0),
        }
    }
}

impl ScalarClass {
    /// Checks the intervals and that `P` contains `[1/theta_max, max(1, 2/theta_min)]`,
    /// which is where every optimal price of the class lies.
    pub fn validate(&self) -> Result<()> {
        let (p_min, p_max) = self.price_range;
        let (t_min, t_max) = self.theta_range;
        if !(p_min >= 0.0 && p_min <= p_max && p_max.is_finite()) {
            return Err(PricingError::Config(format!("invalid price range [{p_min}, {p_max}]")));
        }
        if !(t_min > 0.0 && t_min <= t_max && t_max.is_finite()) {
            return Err(PricingError::Config(format!("invalid theta range [{t_min}, {t_max}]")));
        }
        let lo = 1.0 / t_max;
        let hi = f64::max(1.0, 2.0 / t_min);
        if p_min > lo * (1.0 + 1e-12) || p_max < hi * (1.0 - 1e-12) {
            return Err(PricingError::Config(format!(
                "price range [{p_min}, {p_max}] must contain [{lo}, {hi}] so optimal prices stay inside"
            )));
        }
        Ok(())
    }

    pub fn contains_price(&self, p: f64) -> bool {
        p >= self.price_range.0 && p <= self.price_range.1
    }

    pub fn clip_price(&self, p: f64) -> f64 {
        p.clamp(self.price_range.0, self.price_range.1)
    }
}

/// Purchase probability `q(p, theta)`.
pub fn scalar_q(p: f64, theta: f64) -> f64 {
    let z = theta * (1.0 - p);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Expected revenue `r(p; theta) = p q(p, theta)`.
pub fn scalar_revenue(p: f64, theta: f64) -> f64 {
    p * scalar_q(p, theta)
}

/// Closed-form `r''(p; theta)`.
pub fn scalar_revenue_curvature(p: f64, theta: f64) -> f64 {
    let e = (theta * (1.0 - p)).exp();
    theta * e * (theta * p * (1.0 - e) - 2.0 * (1.0 + e)) / (1.0 + e).powi(3)
}

/// Optimal price, the root of `theta p = 1 + e^{theta(1-p)}` on
/// `[1/theta, max(1, 2/theta)]`.
pub fn scalar_optimal_price(theta: f64, tol: f64) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(PricingError::InvalidArgument(format!(
            "theta must be positive, got {theta}"
        )));
    }
    bisect_increasing(
        |p| theta * p - 1.0 - (theta * (1.0 - p)).exp(),
        1.0 / theta,
        f64::max(1.0, 2.0 / theta),
        tol,
        400,
    )
}

/// `KL(Bern(a) || Bern(b))`.
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

/// A deterministic pricing rule for the scalar problem: history of purchase
/// indicators `y_1..y_{s-1}` in, price `p_s` out.
pub trait ScalarPolicy {
    fn price(&self, history: &[bool]) -> f64;

    fn name(&self) -> String {
        "custom".to_string()
    }
}

impl<F: Fn(&[bool]) -> f64> ScalarPolicy for F {
    fn price(&self, history: &[bool]) -> f64 {
        self(history)
    }
}

/// Posts `p` regardless of history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedScalarPrice(pub f64);

impl ScalarPolicy for FixedScalarPrice {
    fn price(&self, _: &[bool]) -> f64 {
        self.0
    }

    fn name(&self) -> String {
        format!("fixed({:.4})", self.0)
    }
}

/// Starts at `start` and moves by `step` in reaction to each observation,
/// clipped to the class price range after every move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScalarPolicy {
    pub start: f64,
    pub step: f64,
    pub raise_after_purchase: bool,
    pub lower_after_no_purchase: bool,
    pub class: ScalarClass,
}

impl ScalarPolicy for StepScalarPolicy {
    fn price(&self, history: &[bool]) -> f64 {
        history.iter().fold(self.class.clip_price(self.start), |p, &bought| {
            let moved = match (bought, self.raise_after_purchase, self.lower_after_no_purchase) {
                (true, true, _) => p + self.step,
                (false, _, true) => p - self.step,
                _ => p,
            };
            self.class.clip_price(moved)
        })
    }

    fn name(&self) -> String {
        match (self.raise_after_purchase, self.lower_after_no_purchase) {
            (true, true) => format!("step-both({:.2},{:.2})", self.start, self.step),
            (true, false) => format!("raise-after-purchase({:.2},{:.2})", self.start, self.step),
            (false, true) => format!("lower-after-no-purchase({:.2},{:.2})", self.start, self.step),
            (false, false) => format!("fixed({:.4})", self.start),
        }
    }
}

/// Per-depth cumulative KL and regret along a policy's history tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProfile {
    /// `kl[s-1] = KL(f_s^{theta0} ; f_s^{theta1})`.
    pub kl: Vec<f64>,
    /// `regret[s-1]` = expected regret over periods `1..=s` under `theta0`.
    pub regret: Vec<f64>,
}

fn check_depth(depth: usize) -> Result<()> {
    if depth > MAX_ENUMERATION_DEPTH {
        return Err(PricingError::ResourceLimit(format!(
            "enumeration depth {depth} exceeds the limit of {MAX_ENUMERATION_DEPTH} (2^depth histories)"
        )));
    }
    Ok(())
}

/// Walks all `2^depth` histories under `theta0`, accumulating the chain-rule
/// KL against `theta1` and the expected regret under `theta0`.
pub fn trajectory_profile<P: ScalarPolicy + ?Sized>(
    policy: &P,
    theta0: f64,
    theta1: f64,
    depth: usize,
) -> Result<TrajectoryProfile> {
    check_depth(depth)?;
    let best = scalar_revenue(scalar_optimal_price(theta0, OPTIMAL_PRICE_TOLERANCE)?, theta0);
    let mut kl = vec![0.0; depth];
    let mut regret = vec![0.0; depth];
    let mut history = Vec::with_capacity(depth);
    let mut bad_price = None;

    #[allow(clippy::too_many_arguments)]
    fn walk<P: ScalarPolicy + ?Sized>(
        policy: &P,
        theta0: f64,
        theta1: f64,
        best: f64,
        prob: f64,
        history: &mut Vec<bool>,
        kl: &mut [f64],
        regret: &mut [f64],
        bad_price: &mut Option<f64>,
    ) {
        let s = history.len();
        if s == kl.len() {
            return;
        }
        let p = policy.price(history);
        if !(p.is_finite() && p >= 0.0) {
            *bad_price = Some(p);
            return;
        }
        let q0 = scalar_q(p, theta0);
        let q1 = scalar_q(p, theta1);
        kl[s] += prob * bernoulli_kl(q0, q1);
        regret[s] += prob * (best - scalar_revenue(p, theta0));
        for (bought, w) in [(true, q0), (false, 1.0 - q0)] {
            if w > 0.0 {
                history.push(bought);
                walk(policy, theta0, theta1, best, prob * w, history, kl, regret, bad_price);
                history.pop();
            }
        }
    }

    walk(
        policy,
        theta0,
        theta1,
        best,
        1.0,
        &mut history,
        &mut kl,
        &mut regret,
        &mut bad_price,
    );
    if let Some(p) = bad_price {
        return Err(PricingError::InvalidArgument(format!(
            "policy emitted an invalid price {p}"
        )));
    }
    for s in 1..depth {
        kl[s] += kl[s - 1];
        regret[s] += regret[s - 1];
    }
    Ok(TrajectoryProfile { kl, regret })
}

/// Exact `KL(f_t^{pi, theta0} ; f_t^{pi, theta1})` of the purchase histories.
pub fn kl_trajectory<P: ScalarPolicy + ?Sized>(policy: &P, theta0: f64, theta1: f64, t: usize) -> Result<f64> {
    Ok(trajectory_profile(policy, theta0, theta1, t)?
        .kl
        .last()
        .copied()
        .unwrap_or(0.0))
}

/// Exact expected regret over `t` periods under `theta`.
pub fn scalar_regret<P: ScalarPolicy + ?Sized>(policy: &P, theta: f64, t: usize) -> Result<f64> {
    Ok(trajectory_profile(policy, theta, theta, t)?
        .regret
        .last()
        .copied()
        .unwrap_or(0.0))
}

/// Constants of the inequalities checked by [`verify_scalar_lemmas`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaConstants {
    pub theta0: f64,
    /// `r(p*) - r(p) >= curvature (p* - p)^2`.
    pub curvature: f64,
    /// `|p*(theta) - p*(theta0)| >= sensitivity |theta - theta0|`.
    pub sensitivity: f64,
    /// `KL <= kl_factor (theta0 - theta)^2 Regret(theta0)`.
    pub kl_factor: f64,
    /// `Regret(theta0) + Regret(theta1) >= sqrt(T) / cost_denominator * e^{-KL}`.
    pub cost_denominator: f64,
    /// `r'' <= -concavity` on the class.
    pub concavity: f64,
}

impl Default for LemmaConstants {
    fn default() -> Self {
        Self {
            theta0: 2.0,
            curvature: 1.0 / 520.0,
            sensitivity: 0.2,
            kl_factor: 3640.0,
            cost_denominator: 2080.0 * 41.0 * 41.0,
            concavity: 1.0 / 260.0,
        }
    }
}

/// Settings of a lemma verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaCheckConfig {
    pub grid_resolution: usize,
    pub class: ScalarClass,
    pub constants: LemmaConstants,
    /// Deepest history tree used for the KL-versus-regret inequality.
    pub kl_depth: usize,
    /// Horizons of the two-point regret inequality.
    pub cost_horizons: Vec<usize>,
    /// Price step of the two history-dependent battery policies.
    pub battery_step: f64,
}

impl Default for LemmaCheckConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 100,
            class: ScalarClass::default(),
            constants: LemmaConstants::default(),
            kl_depth: 10,
            cost_horizons: vec![4, 9, 16],
            battery_step: 0.05,
        }
    }
}

/// Where an inequality came closest to failing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorstPoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

/// Outcome of one inequality family. `worst_margin` is the smallest value of
/// `(bound side) - (other side)`, so a non-negative margin means it holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub name: String,
    pub description: String,
    pub asserted: bool,
    pub passed: bool,
    pub checks: usize,
    pub worst_margin: f64,
    pub arg_worst: WorstPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub grid_resolution: usize,
    pub class: ScalarClass,
    pub constants: LemmaConstants,
    pub families: Vec<FamilyResult>,
    /// True when every asserted family passed.
    pub all_passed: bool,
}

impl LemmaReport {
    pub fn family(&self, name: &str) -> Option<&FamilyResult> {
        self.families.iter().find(|f| f.name == name)
    }
}

struct Tracker {
    result: FamilyResult,
}

impl Tracker {
    fn new(name: &str, description: &str, asserted: bool) -> Self {
        Self {
            result: FamilyResult {
                name: name.into(),
                description: description.into(),
                asserted,
                passed: true,
                checks: 0,
                worst_margin: f64::INFINITY,
                arg_worst: WorstPoint::default(),
            },
        }
    }

    fn record(&mut self, margin: f64, at: impl FnOnce() -> WorstPoint) {
        self.result.checks += 1;
        if !(margin >= self.result.worst_margin) {
            self.result.worst_margin = margin;
            self.result.arg_worst = at();
        }
    }

    fn finish(mut self) -> FamilyResult {
        self.result.passed = self.result.worst_margin >= -NUMERIC_SLACK;
        self.result
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// The falsification battery: fixed prices on an 11-point grid of `P`, plus
/// a raise-after-purchase and a lower-after-no-purchase policy starting at 1.
pub fn policy_battery(class: &ScalarClass, step: f64) -> Vec<Box<dyn ScalarPolicy + Sync>> {
    let mut battery: Vec<Box<dyn ScalarPolicy + Sync>> = linspace(class.price_range.0, class.price_range.1, 11)
        .into_iter()
        .map(|p| Box::new(FixedScalarPrice(p)) as Box<dyn ScalarPolicy + Sync>)
        .collect();
    for (raise, lower) in [(true, false), (false, true)] {
        battery.push(Box::new(StepScalarPolicy {
            start: 1.0,
            step,
            raise_after_purchase: raise,
            lower_after_no_purchase: lower,
            class: *class,
        }));
    }
    battery
}

/// Evaluates the scalar-class inequalities on a uniform `P x Theta` grid and
/// on the policy battery.
pub fn verify_scalar_lemmas(cfg: &LemmaCheckConfig) -> Result<LemmaReport> {
    if cfg.grid_resolution < 10 {
        return Err(PricingError::InvalidArgument(format!(
            "grid_resolution must be at least 10, got {}",
            cfg.grid_resolution
        )));
    }
    cfg.class.validate()?;
    check_depth(cfg.kl_depth)?;
    for &t in &cfg.cost_horizons {
        check_depth(t)?;
        if t < 2 {
            return Err(PricingError::InvalidArgument(format!(
                "cost horizons must be at least 2, got {t}"
            )));
        }
    }
    let c = cfg.constants;
    let class = cfg.class;
    let theta0 = c.theta0;
    let prices = linspace(class.price_range.0, class.price_range.1, cfg.grid_resolution);
    let mut thetas = linspace(class.theta_range.0, class.theta_range.1, cfg.grid_resolution);
    if class.theta_range.0 <= theta0 && theta0 <= class.theta_range.1 && !thetas.contains(&theta0) {
        thetas.push(theta0);
        thetas.sort_by(f64::total_cmp);
    }
    let p_star0 = scalar_optimal_price(theta0, OPTIMAL_PRICE_TOLERANCE)?;
    let p_stars: Vec<f64> = thetas
        .iter()
        .map(|&t| scalar_optimal_price(t, OPTIMAL_PRICE_TOLERANCE))
        .collect::<Result<_>>()?;

    let mut range = Tracker::new("optimal_price_in_range", "p*(theta) lies in P", true);
    let mut slope = Tracker::new(
        "optimal_price_sensitivity",
        "|p*(theta) - p*(theta0)| >= c |theta - theta0|",
        true,
    );
    for (&theta, &ps) in thetas.iter().zip(&p_stars) {
        let at = || WorstPoint {
            theta: Some(theta),
            p: Some(ps),
            ..Default::default()
        };
        range.record((ps - class.price_range.0).min(class.price_range.1 - ps), at);
        slope.record((ps - p_star0).abs() - c.sensitivity * (theta - theta0).abs(), at);
    }

    let mut info = Tracker::new(
        "purchase_gap_at_reference_optimum",
        "|q(p,theta) - q(p,theta0)| <= |theta - theta0| |p*(theta0) - p|",
        true,
    );
    let mut info_stated = Tracker::new(
        "purchase_gap_at_own_optimum",
        "|q(p,theta) - q(p,theta0)| <= |theta - theta0| |p*(theta) - p| (reported only)",
        false,
    );
    let mut curv = Tracker::new(
        "revenue_quadratic_gap",
        "r(p*(theta)) - r(p) >= c (p*(theta) - p)^2",
        true,
    );
    let mut concave = Tracker::new("revenue_concavity", "r''(p; theta) <= -c on P x Theta", true);
    for (&theta, &ps) in thetas.iter().zip(&p_stars) {
        let best = scalar_revenue(ps, theta);
        for &p in &prices {
            let at = || WorstPoint {
                p: Some(p),
                theta: Some(theta),
                ..Default::default()
            };
            let gap = (scalar_q(p, theta) - scalar_q(p, theta0)).abs();
            info.record((theta - theta0).abs() * (p_star0 - p).abs() - gap, at);
            info_stated.record((theta - theta0).abs() * (ps - p).abs() - gap, at);
            curv.record(best - scalar_revenue(p, theta) - c.curvature * (ps - p).powi(2), at);
            concave.record(-c.concavity - scalar_revenue_curvature(p, theta), at);
        }
    }

    let battery = policy_battery(&class, cfg.battery_step);

    let mut kl_bound = Tracker::new(
        "kl_regret_tradeoff",
        "KL(f_t^theta0 ; f_t^theta) <= c (theta0 - theta)^2 Regret(t, theta0)",
        true,
    );
    let mut uninformative = Tracker::new(
        "uninformative_price",
        "posting p = 1 yields zero KL between any two parameters",
        true,
    );
    for pol in &battery {
        for &theta in &thetas {
            let prof = trajectory_profile(pol.as_ref(), theta0, theta, cfg.kl_depth)?;
            for (s, (&kl, &reg)) in prof.kl.iter().zip(&prof.regret).enumerate() {
                kl_bound.record(c.kl_factor * (theta0 - theta).powi(2) * reg - kl, || WorstPoint {
                    theta: Some(theta),
                    policy: Some(pol.name()),
                    depth: Some(s + 1),
                    ..Default::default()
                });
            }
        }
    }
    let one = FixedScalarPrice(1.0);
    let coarse = linspace(class.theta_range.0, class.theta_range.1, cfg.grid_resolution.min(21));
    for &ta in &coarse {
        for &tb in &coarse {
            let prof = trajectory_profile(&one, ta, tb, cfg.kl_depth)?;
            for (s, &kl) in prof.kl.iter().enumerate() {
                uninformative.record(0.0 - kl, || WorstPoint {
                    theta: Some(tb),
                    p: Some(1.0),
                    depth: Some(s + 1),
                    ..Default::default()
                });
            }
        }
    }

    let mut cost = Tracker::new(
        "two_point_regret",
        "Regret(T, theta0) + Regret(T, theta1) >= sqrt(T)/c e^{-KL}, theta1 = theta0 + T^{-1/4}/4",
        true,
    );
    for &horizon in &cfg.cost_horizons {
        let theta1 = theta0 + 0.25 * (horizon as f64).powf(-0.25);
        for pol in &battery {
            let kl = kl_trajectory(pol.as_ref(), theta0, theta1, horizon)?;
            let r0 = scalar_regret(pol.as_ref(), theta0, horizon)?;
            let r1 = scalar_regret(pol.as_ref(), theta1, horizon)?;
            let bound = (horizon as f64).sqrt() / c.cost_denominator * (-kl).exp();
            cost.record(r0 + r1 - bound, || WorstPoint {
                theta: Some(theta1),
                policy: Some(pol.name()),
                depth: Some(horizon),
                ..Default::default()
            });
        }
    }

    let families: Vec<FamilyResult> = [
        range,
        info,
        info_stated,
        curv,
        slope,
        concave,
        kl_bound,
        uninformative,
        cost,
    ]
    .into_iter()
    .map(Tracker::finish)
    .collect();
    let all_passed = families.iter().filter(|f| f.asserted).all(|f| f.passed);
    Ok(LemmaReport {
        grid_resolution: cfg.grid_resolution,
        class,
        constants: c,
        families,
        all_passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn q_examples() {
        for theta in [0.1, 1.5, 2.0, 7.0] {
            assert_eq!(scalar_q(1.0, theta), 0.5);
        }
        assert_abs_diff_eq!(scalar_q(4.0 / 3.0, 1.5), 0.377_540_668_798_145_4, epsilon = 1e-15);
        assert_abs_diff_eq!(scalar_q(0.4, 2.5), 0.817_574_476_193_643_7, epsilon = 1e-15);
        assert!(scalar_q(-1e6, 1.0) > 0.0 && scalar_q(-1e6, 1.0) <= 1.0);
    }

    #[test]
    fn optimal_price_examples() {
        assert_eq!(scalar_optimal_price(2.0, OPTIMAL_PRICE_TOLERANCE).unwrap(), 1.0);
        assert_abs_diff_eq!(
            scalar_optimal_price(2.5, OPTIMAL_PRICE_TOLERANCE).unwrap(),
            0.905_983_888_050_200_2,
            epsilon = 1e-12
        );
        let p = scalar_optimal_price(1.5, OPTIMAL_PRICE_TOLERANCE).unwrap();
        assert!((0.4..=4.0 / 3.0).contains(&p));
        assert!(scalar_optimal_price(0.0, 1e-12).is_err());
    }

    #[test]
    fn fixed_price_kl_closed_form() {
        let kl = kl_trajectory(&FixedScalarPrice(0.5), 2.0, 2.25, 3).unwrap();
        assert_abs_diff_eq!(kl, 0.004_518_379_204_023_995, epsilon = 1e-15);
        let one = bernoulli_kl(scalar_q(0.5, 2.0), scalar_q(0.5, 2.25));
        assert_abs_diff_eq!(kl, 3.0 * one, epsilon = 1e-15);
    }

    #[test]
    fn uninformative_price_has_zero_kl() {
        for depth in [1, 5, 12] {
            assert_eq!(kl_trajectory(&FixedScalarPrice(1.0), 1.6, 2.4, depth).unwrap(), 0.0);
        }
        assert_eq!(kl_trajectory(&FixedScalarPrice(0.7), 2.0, 2.0, 6).unwrap(), 0.0);
    }

    #[test]
    fn regret_examples() {
        assert_eq!(scalar_regret(&FixedScalarPrice(1.0), 2.0, 8).unwrap(), 0.0);
        let t = 5;
        let expected = t as f64 * (0.5 - 0.5 * scalar_q(0.5, 2.0));
        assert_abs_diff_eq!(
            scalar_regret(&FixedScalarPrice(0.5), 2.0, t).unwrap(),
            expected,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(expected / t as f64, 0.134_470_710_684_997_56, epsilon = 1e-15);
    }

    #[test]
    fn depth_limit_is_enforced() {
        assert!(matches!(
            kl_trajectory(&FixedScalarPrice(1.0), 2.0, 2.1, 21),
            Err(PricingError::ResourceLimit(_))
        ));
        assert_eq!(kl_trajectory(&FixedScalarPrice(1.0), 2.0, 2.1, 0).unwrap(), 0.0);
    }

    #[test]
    fn step_policy_clips_to_class() {
        let class = ScalarClass::default();
        let pol = StepScalarPolicy {
            start: 1.3,
            step: 0.05,
            raise_after_purchase: true,
            lower_after_no_purchase: false,
            class,
        };
        assert_eq!(pol.price(&[]), 1.3);
        assert_eq!(pol.price(&[true]), 4.0 / 3.0);
        assert_eq!(pol.price(&[true, false, true]), 4.0 / 3.0);
        let down = StepScalarPolicy {
            start: 0.42,
            raise_after_purchase: false,
            lower_after_no_purchase: true,
            ..pol
        };
        assert_eq!(down.price(&[false]), 0.4);
    }

    #[test]
    fn class_validation() {
        assert!(ScalarClass::default().validate().is_ok());
        let narrow = ScalarClass {
            price_range: (0.95, 1.0),
            ..Default::default()
        };
        assert!(narrow.validate().is_err());
        let inverted = ScalarClass {
            theta_range: (2.0, 1.0),
            ..Default::default()
        };
        assert!(inverted.validate().is_err());
    }

    #[test]
    fn coarse_report_matches_known_outcome() {
        let cfg = LemmaCheckConfig {
            grid_resolution: 10,
            kl_depth: 6,
            ..Default::default()
        };
        let report = verify_scalar_lemmas(&cfg).unwrap();
        for f in &report.families {
            if f.name == "optimal_price_sensitivity" {
                // The average slope of p* over [2, 2.5] is about 0.188, below 0.2.
                assert!(!f.passed);
                assert_eq!(f.arg_worst.theta, Some(2.5));
            } else {
                assert!(!f.asserted || f.passed, "{f:?}");
            }
        }
        assert!(!report.all_passed);
        let mut loose = cfg.clone();
        loose.constants.sensitivity = 0.18;
        assert!(verify_scalar_lemmas(&loose).unwrap().all_passed);
        assert!(verify_scalar_lemmas(&LemmaCheckConfig {
            grid_resolution: 9,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn tampered_curvature_constant_fails() {
        let mut cfg = LemmaCheckConfig {
            grid_resolution: 10,
            kl_depth: 4,
            ..Default::default()
        };
        cfg.constants.curvature = 10.0;
        let report = verify_scalar_lemmas(&cfg).unwrap();
        assert!(!report.all_passed);
        assert!(!report.family("revenue_quadratic_gap").unwrap().passed);
    }
}
