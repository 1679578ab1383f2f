//! CEX–DEX arbitrage opportunities derived from the price path.
//!
//! The DEX price stays put until the centralized price drifts more than
//! `threshold` (in log terms) away from it. At that point an arbitrage trade
//! pulls the DEX price back to the edge of the no-arbitrage band. Trade size
//! grows linearly with the excess deviation, so the edge is quadratic in it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{TimeMs, UsdAmount};
use crate::price::{PriceSeries, RESOLUTION_MS};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpportunityConfig {
    /// Quote asset of the DEX pool; valued at 1 USD.
    #[serde(default = "default_quote")]
    pub quote_asset: String,
    /// Log deviation beyond which arbitrage is profitable.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Proportional DEX fee paid on the traded notional.
    #[serde(default = "default_threshold")]
    pub dex_fee: f64,
    /// ETH traded per unit of excess log deviation.
    pub depth_eth: f64,
    /// Transaction fee charged per executed trade.
    #[serde(default)]
    pub tx_fee_usd: UsdAmount,
}

fn default_quote() -> String {
    "USDT".into()
}

fn default_threshold() -> f64 {
    5e-4
}

impl OpportunityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err("threshold must be positive".into());
        }
        if !(self.dex_fee.is_finite() && (0.0..1.0).contains(&self.dex_fee)) {
            return Err("dex_fee must lie in [0, 1)".into());
        }
        if !(self.depth_eth.is_finite() && self.depth_eth > 0.0) {
            return Err("depth_eth must be positive".into());
        }
        if self.tx_fee_usd.is_negative() {
            return Err("tx_fee_usd must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Buy ETH on the DEX (DEX price below CEX).
    BuyEth,
    /// Sell ETH on the DEX.
    SellEth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Opportunity {
    pub id: u64,
    pub time: TimeMs,
    pub side: Side,
    /// ETH traded.
    pub size_eth: f64,
    /// Average DEX execution price before fees.
    pub dex_price: f64,
    /// CEX mid at detection.
    pub cex_price: f64,
    pub fee: f64,
}

impl Opportunity {
    /// Edge at the detection-time CEX mid, USD.
    pub fn expected_edge_usd(&self) -> f64 {
        match self.side {
            Side::BuyEth => self.size_eth * (self.cex_price - self.dex_price * (1.0 + self.fee)),
            Side::SellEth => self.size_eth * (self.dex_price * (1.0 - self.fee) - self.cex_price),
        }
    }

    /// `(buy asset amount, sell asset amount)` in ETH and quote units.
    pub fn legs(&self) -> (f64, f64) {
        match self.side {
            Side::BuyEth => (
                self.size_eth,
                self.size_eth * self.dex_price * (1.0 + self.fee),
            ),
            Side::SellEth => (
                self.size_eth * self.dex_price * (1.0 - self.fee),
                self.size_eth,
            ),
        }
    }
}

/// Slack on the no-arbitrage band, in log-price units.
const BAND_EPS: f64 = 1e-12;

/// Scans samples with index in `[from, to)` and emits opportunities in time
/// order. Each opportunity is placed at a uniform offset within its second.
pub fn scan(
    series: &PriceSeries,
    from: usize,
    to: usize,
    cfg: &OpportunityConfig,
    rng: &mut StreamRng,
) -> Vec<Opportunity> {
    let prices = series.prices();
    let to = to.min(prices.len());
    if from >= to {
        return Vec::new();
    }
    let mut dex = prices[from];
    let mut out = Vec::new();
    for (i, &cex) in prices.iter().enumerate().take(to).skip(from) {
        let dev = (cex / dex).ln();
        // a pool left exactly at the band edge must not re-trigger on rounding
        if dev.abs() <= cfg.threshold + BAND_EPS {
            continue;
        }
        let excess = dev.abs() - cfg.threshold;
        let target = if dev > 0.0 {
            cex * (-cfg.threshold).exp()
        } else {
            cex * cfg.threshold.exp()
        };
        let offset = rng.random_range(0..RESOLUTION_MS);
        out.push(Opportunity {
            id: out.len() as u64,
            time: series.time_at(i) + offset,
            side: if dev > 0.0 {
                Side::BuyEth
            } else {
                Side::SellEth
            },
            size_eth: cfg.depth_eth * excess,
            dex_price: (dex * target).sqrt(),
            cex_price: cex,
            fee: cfg.dex_fee,
        });
        dex = target;
    }
    out
}
