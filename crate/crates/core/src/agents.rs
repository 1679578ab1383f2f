//! Searcher and reseller behavior: per-round valuations, bidding strategies
//! and lane selection for trades.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntityId, EthAmount, Regime};
use crate::resale::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Searcher,
    Reseller,
}

/// How an agent bids in the primary auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// Bids `shade * v` whenever that clears the reserve.
    Competitive,
    /// Relies on the reseller. Submits `probe_bid` with probability
    /// `probe_probability`, and bids competitively only when `shade * v`
    /// reaches `compete_above`.
    ResaleUser {
        probe_bid: EthAmount,
        #[serde(default = "one")]
        probe_probability: f64,
        #[serde(default)]
        compete_above: Option<EthAmount>,
    },
    /// Always the same bid, if it clears the reserve.
    FixedBidReseller { bid: EthAmount },
    /// Bids `(1 + markup) * v`, where `v` is the agent's estimate of
    /// aggregate resale demand for the round.
    ValueTrackingReseller { markup: f64 },
    /// Never bids.
    Abstain,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeStrategy {
    pub regime: Regime,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: EntityId,
    pub role: Role,
    /// Per-round value in ETH per unit of squared one-second volatility.
    pub value_coeff: f64,
    #[serde(default = "one")]
    pub shade: f64,
    /// Standard deviation of the additive valuation noise, in ETH.
    #[serde(default)]
    pub noise_sd: f64,
    pub strategy: Strategy,
    /// Overrides `strategy` inside the listed regimes.
    #[serde(default)]
    pub regime_strategies: Vec<RegimeStrategy>,
    /// Probability of acting on a given arbitrage opportunity.
    #[serde(default = "one")]
    pub opportunity_rate: f64,
    /// Reaction latency to an opportunity.
    #[serde(default = "default_latency")]
    pub latency_ms: u64,
    /// Uniform extra latency in `[0, jitter_ms]`.
    #[serde(default = "default_jitter")]
    pub jitter_ms: u64,
    /// Submits through the reseller when the reseller controls the lane.
    #[serde(default)]
    pub subscribed: bool,
    #[serde(default)]
    pub channel: Channel,
    /// Share of an opportunity's expected edge declared as resale payment.
    #[serde(default = "default_payment_fraction")]
    pub payment_fraction: f64,
}

fn default_latency() -> u64 {
    10
}

fn default_jitter() -> u64 {
    20
}

fn default_payment_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("agent {agent}: {field} {msg}")]
pub struct AgentError {
    pub agent: String,
    pub field: &'static str,
    pub msg: String,
}

fn check_strategy(s: &Strategy) -> Result<(), String> {
    match s {
        Strategy::ResaleUser {
            probe_bid,
            probe_probability,
            compete_above,
        } => {
            if !probe_bid.is_positive() {
                return Err("probe_bid must be positive".into());
            }
            if !(0.0..=1.0).contains(probe_probability) {
                return Err("probe_probability must lie in [0, 1]".into());
            }
            if compete_above.is_some_and(|c| !c.is_positive()) {
                return Err("compete_above must be positive".into());
            }
        }
        Strategy::FixedBidReseller { bid } if !bid.is_positive() => {
            return Err("fixed bid must be positive".into());
        }
        Strategy::ValueTrackingReseller { markup } if !(markup.is_finite() && *markup > -1.0) => {
            return Err("markup must be greater than -1".into());
        }
        _ => {}
    }
    Ok(())
}

impl AgentSpec {
    pub fn validate(&self) -> Result<(), AgentError> {
        let err = |field: &'static str, msg: &str| AgentError {
            agent: self.id.to_string(),
            field,
            msg: msg.into(),
        };
        if !(self.value_coeff.is_finite() && self.value_coeff >= 0.0) {
            return Err(err("value_coeff", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.shade) {
            return Err(err("shade", "must lie in [0, 1]"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(err("noise_sd", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.opportunity_rate) {
            return Err(err("opportunity_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.payment_fraction) {
            return Err(err("payment_fraction", "must lie in [0, 1]"));
        }
        std::iter::once(&self.strategy)
            .chain(self.regime_strategies.iter().map(|r| &r.strategy))
            .try_for_each(check_strategy)
            .map_err(|m| err("strategy", &m))
    }

    /// Strategy in force during `regime`.
    pub fn strategy_for(&self, regime: Option<Regime>) -> &Strategy {
        regime
            .and_then(|r| self.regime_strategies.iter().find(|s| s.regime == r))
            .map_or(&self.strategy, |s| &s.strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundValuation {
    pub round_index: u64,
    pub agent: EntityId,
    pub v: EthAmount,
}

/// `v = k * sigma^2 + noise`, clipped at zero.
pub fn value_round<R: Rng + ?Sized>(
    agent: &AgentSpec,
    round_index: u64,
    sigma_forecast: f64,
    rng: &mut R,
) -> RoundValuation {
    let base = agent.value_coeff * sigma_forecast * sigma_forecast;
    let noise = if agent.noise_sd > 0.0 {
        Normal::new(0.0, agent.noise_sd).map_or(0.0, |n| n.sample(rng))
    } else {
        0.0
    };
    RoundValuation {
        round_index,
        agent: agent.id.clone(),
        v: EthAmount::from_f64((base + noise).max(0.0)),
    }
}

/// Bid amount for one round, or `None` to abstain.
pub fn bid_decision<R: Rng + ?Sized>(
    agent: &AgentSpec,
    strategy: &Strategy,
    valuation: &RoundValuation,
    reserve: EthAmount,
    rng: &mut R,
) -> Option<EthAmount> {
    let shaded = valuation.v.mul_f64(agent.shade);
    let amount = match strategy {
        Strategy::Competitive => shaded,
        Strategy::ResaleUser {
            probe_bid,
            probe_probability,
            compete_above,
        } => {
            if compete_above.is_some_and(|c| shaded >= c) {
                shaded
            } else if *probe_probability >= 1.0 || rng.random::<f64>() < *probe_probability {
                *probe_bid
            } else {
                return None;
            }
        }
        Strategy::FixedBidReseller { bid } => *bid,
        Strategy::ValueTrackingReseller { markup } => valuation.v.mul_f64(1.0 + markup),
        Strategy::Abstain => return None,
    };
    (amount.is_positive() && amount >= reserve).then_some(amount)
}

/// Who holds the express lane at a given moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlState<'a> {
    pub controller: Option<&'a EntityId>,
    pub controller_is_reseller: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    Express,
    ViaResale {
        reseller: EntityId,
        declared_payment: EthAmount,
        channel: Channel,
    },
    Regular,
}

/// Picks the lane for a trade whose expected edge is `edge`.
pub fn route_trade(agent: &AgentSpec, edge: EthAmount, control: ControlState<'_>) -> Route {
    match control.controller {
        Some(c) if c == &agent.id => Route::Express,
        Some(c) if control.controller_is_reseller && agent.subscribed => Route::ViaResale {
            reseller: c.clone(),
            declared_payment: edge.max(EthAmount::ZERO).mul_f64(agent.payment_fraction),
            channel: agent.channel,
        },
        _ => Route::Regular,
    }
}
