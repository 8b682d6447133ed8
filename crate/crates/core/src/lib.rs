//! Contextual multi-product dynamic pricing under multinomial logit demand.
//!
//! - [`mnl`]: choice probabilities, expected revenue, Gumbel-max sampling.
//! - [`oracle`]: optimal prices for known parameters via the common-markup equation.
//! - [`likelihood`]: negative log-likelihood, derivatives and the constrained MLE.
//! - [`policy`]: the episodic explore/exploit policy (M3P) and reference policies.
//! - [`simulator`]: synthetic markets, pseudo-regret ledgers, replication.
//! - [`lower_bound`]: the scalar uninformative-price problem and exact KL/regret enumeration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod likelihood;
pub mod lower_bound;
pub mod mnl;
pub mod oracle;
pub mod policy;
pub mod root;
pub mod simulator;

pub use error::{PricingError, Result};
pub use likelihood::{
    fit_mle, neg_log_likelihood, nll_gradient, nll_hessian, EstimatorConfig, FitReport, SalesLog, SalesRecord,
};
pub use mnl::{
    choice_probabilities, expected_revenue, sample_choice, utility, ChoiceOutcome, ModelParams, PriceVector, Slate,
};
pub use oracle::{price_slate, price_upper_bound, solve_markup, FixedPointConfig, MarketBounds};
pub use policy::{phase_of, M3pConfig, M3pPolicy, Phase, PricingPolicy};
pub use simulator::{generate_slate, replicate, run, FeatureGenerator, MarketConfig, RegretLedger};
