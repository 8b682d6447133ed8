//! Episodic explore/exploit pricing (M3P) and simple reference policies.
//!
//! Episode `k` lasts `k + d` periods. Its first `d` periods post independent
//! uniform prices on `[0, C]`; at the end of that exploration phase the
//! demand parameters are refit by constrained maximum likelihood on every
//! exploration record seen so far, and the remaining `k` periods post the
//! optimal prices for the refit estimate. Exploitation sales never enter
//! the estimation log. The policy does not need to know the horizon.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::likelihood::{fit_mle, EstimatorConfig, SalesLog, SalesRecord};
use crate::mnl::{ChoiceOutcome, ModelParams, PriceVector, Slate};
use crate::oracle::{price_slate, price_slate_clamped, FixedPointConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Exploit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        }
    }
}

/// Episode lengths `k + d`, `k = 1, 2, ...`, starting at period 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSchedule {
    d: u64,
}

impl EpisodeSchedule {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(PricingError::InvalidArgument(
                "feature dimension must be at least 1".into(),
            ));
        }
        Ok(Self { d: d as u64 })
    }

    pub fn exploration_len(&self) -> u64 {
        self.d
    }

    pub fn episode_len(&self, k: u64) -> u64 {
        k + self.d
    }

    /// Number of periods in episodes `1..k` (i.e. before episode `k` starts).
    pub fn periods_before(&self, k: u64) -> u64 {
        let m = k - 1;
        m * (m + 1) / 2 + m * self.d
    }

    /// Episode and phase of period `t >= 1`.
    pub fn position(&self, t: u64) -> (u64, Phase) {
        assert!(t >= 1, "periods are numbered from 1");
        // periods_before(k) < t  <=>  (k-1)^2 + (2d+1)(k-1) < 2t
        let b = 2.0 * self.d as f64 + 1.0;
        let guess = ((-b + (b * b + 8.0 * t as f64).sqrt()) / 2.0).floor() as u64 + 1;
        let mut k = guess.max(1);
        while k > 1 && self.periods_before(k) >= t {
            k -= 1;
        }
        while self.periods_before(k + 1) < t {
            k += 1;
        }
        let offset = t - self.periods_before(k);
        let phase = if offset <= self.d {
            Phase::Explore
        } else {
            Phase::Exploit
        };
        (k, phase)
    }
}

/// Episode and phase of period `t` (1-based) when exploration lasts `d` periods.
pub fn phase_of(t: u64, d: usize) -> Result<(u64, Phase)> {
    if t == 0 {
        return Err(PricingError::InvalidArgument("periods are numbered from 1".into()));
    }
    Ok(EpisodeSchedule::new(d)?.position(t))
}

/// Counters a policy may expose to the simulator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDiagnostics {
    /// Exploitation periods in which an estimated sensitivity was raised to `L0`.
    pub clamped_periods: u64,
    pub refits: u64,
    pub unconverged_refits: u64,
}

/// A seller's pricing rule, driven one period at a time.
pub trait PricingPolicy {
    fn act(&mut self, slate: &Slate) -> Result<PriceVector>;

    /// Feedback for the period the policy just priced.
    fn observe(&mut self, slate: &Slate, prices: &PriceVector, outcome: ChoiceOutcome) -> Result<()>;

    /// Episode and phase of the upcoming period, for schedule-based policies.
    fn position(&self) -> Option<(u64, Phase)> {
        None
    }

    fn diagnostics(&self) -> PolicyDiagnostics {
        PolicyDiagnostics::default()
    }
}

/// Settings of the M3P policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M3pConfig {
    pub d: usize,
    /// Sensitivity floor used when an estimate violates the positivity assumption.
    pub l0: f64,
    /// Exploration prices are uniform on `[0, exploration_cap]`.
    pub exploration_cap: f64,
    pub estimator: EstimatorConfig,
    pub fixed_point: FixedPointConfig,
}

impl M3pConfig {
    pub fn new(d: usize, w_bound: f64, l0: f64) -> Self {
        Self {
            d,
            l0,
            exploration_cap: 1.0,
            estimator: EstimatorConfig::new(w_bound),
            fixed_point: FixedPointConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(PricingError::Config("d must be at least 1".into()));
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
        self.estimator.validate()?;
        self.fixed_point.validate()
    }
}

/// Mutable state of one M3P trajectory.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub episode: u64,
    /// Periods of the current episode already observed.
    pub period_in_episode: u64,
    pub estimate: ModelParams,
    /// Every exploration record so far.
    pub exploration_log: SalesLog,
    pub rng: ChaCha8Rng,
    pub clamp_count: u64,
    pub refits: u64,
    pub unconverged_refits: u64,
}

/// The M3P policy.
#[derive(Debug, Clone)]
pub struct M3pPolicy {
    cfg: M3pConfig,
    schedule: EpisodeSchedule,
    state: PolicyState,
}

impl M3pPolicy {
    pub fn new(cfg: M3pConfig, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            schedule: EpisodeSchedule::new(cfg.d)?,
            state: PolicyState {
                episode: 1,
                period_in_episode: 0,
                estimate: ModelParams::zeros(cfg.d, cfg.estimator.w_bound)?,
                exploration_log: SalesLog::new(),
                rng,
                clamp_count: 0,
                refits: 0,
                unconverged_refits: 0,
            },
            cfg,
        })
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn config(&self) -> &M3pConfig {
        &self.cfg
    }

    pub fn current_phase(&self) -> Phase {
        if self.state.period_in_episode < self.schedule.exploration_len() {
            Phase::Explore
        } else {
            Phase::Exploit
        }
    }

    fn refit(&mut self) -> Result<()> {
        let report = fit_mle(&self.state.exploration_log, &self.cfg.estimator)?;
        self.state.refits += 1;
        if !report.converged {
            self.state.unconverged_refits += 1;
        }
        self.state.estimate = report.params;
        Ok(())
    }
}

impl PricingPolicy for M3pPolicy {
    fn act(&mut self, slate: &Slate) -> Result<PriceVector> {
        match self.current_phase() {
            Phase::Explore => {
                let cap = self.cfg.exploration_cap;
                let rng = &mut self.state.rng;
                PriceVector::new((0..slate.len()).map(|_| cap * rng.random::<f64>()).collect())
            }
            Phase::Exploit => {
                let out = price_slate_clamped(&self.state.estimate, slate, &self.cfg.fixed_point, self.cfg.l0)?;
                if out.clamped > 0 {
                    self.state.clamp_count += 1;
                }
                Ok(out.prices)
            }
        }
    }

    fn observe(&mut self, slate: &Slate, prices: &PriceVector, outcome: ChoiceOutcome) -> Result<()> {
        let phase = self.current_phase();
        if phase == Phase::Explore {
            self.state
                .exploration_log
                .push(SalesRecord::new(slate.clone(), prices.clone(), outcome)?)?;
        }
        self.state.period_in_episode += 1;
        if phase == Phase::Explore && self.state.period_in_episode == self.schedule.exploration_len() {
            self.refit()?;
        }
        if self.state.period_in_episode == self.schedule.episode_len(self.state.episode) {
            self.state.episode += 1;
            self.state.period_in_episode = 0;
        }
        Ok(())
    }

    fn position(&self) -> Option<(u64, Phase)> {
        Some((self.state.episode, self.current_phase()))
    }

    fn diagnostics(&self) -> PolicyDiagnostics {
        PolicyDiagnostics {
            clamped_periods: self.state.clamp_count,
            refits: self.state.refits,
            unconverged_refits: self.state.unconverged_refits,
        }
    }
}

/// The clairvoyant benchmark: optimal prices under the true parameters.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    truth: ModelParams,
    cfg: FixedPointConfig,
}

impl OraclePolicy {
    pub fn new(truth: ModelParams, cfg: FixedPointConfig) -> Self {
        Self { truth, cfg }
    }
}

impl PricingPolicy for OraclePolicy {
    fn act(&mut self, slate: &Slate) -> Result<PriceVector> {
        price_slate(&self.truth, slate, &self.cfg)
    }

    fn observe(&mut self, _: &Slate, _: &PriceVector, _: ChoiceOutcome) -> Result<()> {
        Ok(())
    }
}

/// Posts the same price on every product in every period.
#[derive(Debug, Clone, Copy)]
pub struct FixedPricePolicy {
    price: f64,
}

impl FixedPricePolicy {
    pub fn new(price: f64) -> Result<Self> {
        if !(price.is_finite() && price >= 0.0) {
            return Err(PricingError::InvalidArgument(format!(
                "fixed price must be finite and non-negative, got {price}"
            )));
        }
        Ok(Self { price })
    }
}

impl PricingPolicy for FixedPricePolicy {
    fn act(&mut self, slate: &Slate) -> Result<PriceVector> {
        PriceVector::uniform(self.price, slate.len())
    }

    fn observe(&mut self, _: &Slate, _: &PriceVector, _: ChoiceOutcome) -> Result<()> {
        Ok(())
    }
}
