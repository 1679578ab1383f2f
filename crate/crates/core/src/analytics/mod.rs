//! Empirical metrics computed identically over simulated traces and
//! ingested data.
//!
//! Every table is broken down by regime and closes with an `All` period
//! covering the whole input.

mod auctions;
mod classify;
mod hourly;
mod searchers;
pub mod stats;
mod surplus;

pub use auctions::{
    bid_distribution, bidder_combinations, combination_label, daily_gaps, gap_summary,
    hourly_loss_profile, relative_bid_gap, win_shares, BidDistributionRow, CombinationRow,
    DailyGapRow, GapSummaryRow, LossRow, SessionWindow, WinShareRow,
};
pub use classify::{classify_cex_dex, ClassifierRules, SwapRecord};
pub use hourly::{hourly_points, pnl_vol_corr, vol_corr, CorrelationRow, HourlyPoint};
pub use searchers::{pnl_summary, PnlRow};
pub use stats::{pearson_with_p, Correlation, StatsError};
pub use surplus::{resale_revenue, surplus_decompose, PaymentRecord, ResaleRevenueRow, SurplusRow};

use crate::auction::AuctionOutcome;
use crate::markout::Trade;
use crate::model::{Regime, UsdAmount};

/// Label of the whole-input period.
pub const ALL: &str = "All";

/// A settled (or failed) round together with its regime and the ETH/USD
/// mid price at bid close.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub regime: Regime,
    pub outcome: AuctionOutcome,
    pub eth_usd: Option<f64>,
}

/// A priced trade: markout PnL and the transaction fee counted in the
/// surplus identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    pub regime: Regime,
    pub trade: Trade,
    pub pnl: UsdAmount,
    pub tx_fee: UsdAmount,
}

/// Splits items into one group per regime present (in timeline order)
/// followed by the `All` group.
pub(crate) fn by_period<T>(items: &[T], regime: impl Fn(&T) -> Regime) -> Vec<(String, Vec<&T>)> {
    let mut out: Vec<(String, Vec<&T>)> = Regime::ALL
        .iter()
        .map(|r| {
            (
                r.name().to_string(),
                items.iter().filter(|i| regime(i) == *r).collect::<Vec<_>>(),
            )
        })
        .filter(|(_, v)| !v.is_empty())
        .collect();
    out.push((ALL.to_string(), items.iter().collect()));
    out
}
