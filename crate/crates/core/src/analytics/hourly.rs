//! Hourly aggregation and volatility correlations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{mean, pearson_with_p};
use super::{by_period, RoundRecord, TradeRecord, ALL};
use crate::model::{EthAmount, Regime, TimeMs, MS_PER_HOUR};
use crate::price::{realized_vol, PriceSeries, RESOLUTION_MS};

/// Metrics of one UTC hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyPoint {
    pub hour_start: TimeMs,
    /// Regime of the earliest round or trade in the hour.
    pub regime: Regime,
    /// Realized one-second volatility within the hour.
    pub vol: f64,
    /// Number of rounds in the hour with at least one bid.
    pub rounds_with_bids: usize,
    pub mean_top_bid: Option<f64>,
    pub mean_paid_bid: Option<f64>,
    pub trades: usize,
    /// Positive markout PnL per sender, USD.
    pub pnl: BTreeMap<String, f64>,
}

/// Builds hourly points for every hour containing a round or a trade and
/// fully covered by `eth`; other hours are dropped.
pub fn hourly_points(
    rounds: &[RoundRecord],
    trades: &[TradeRecord],
    eth: &PriceSeries,
) -> Vec<HourlyPoint> {
    struct Acc {
        regime: (TimeMs, Regime),
        tops: Vec<f64>,
        paid: Vec<f64>,
        trades: usize,
        pnl: BTreeMap<String, f64>,
    }
    let mut hours: BTreeMap<u64, Acc> = BTreeMap::new();
    let mut touch = |t: TimeMs, regime: Regime| {
        let acc = hours.entry(t.hour_index()).or_insert_with(|| Acc {
            regime: (t, regime),
            tops: Vec::new(),
            paid: Vec::new(),
            trades: 0,
            pnl: BTreeMap::new(),
        });
        if t < acc.regime.0 {
            acc.regime = (t, regime);
        }
    };
    for r in rounds {
        touch(r.outcome.bounds.start, r.regime);
    }
    for t in trades {
        touch(t.trade.time, t.regime);
    }
    for r in rounds.iter().filter(|r| r.outcome.has_bids()) {
        let acc = hours
            .get_mut(&r.outcome.bounds.start.hour_index())
            .expect("hour touched");
        acc.tops.extend(r.outcome.top_bid.map(EthAmount::to_f64));
        if r.outcome.is_settled() {
            acc.paid.extend(r.outcome.paid.map(EthAmount::to_f64));
        }
    }
    for t in trades {
        let acc = hours
            .get_mut(&t.trade.time.hour_index())
            .expect("hour touched");
        acc.trades += 1;
        let pnl = t.pnl.to_f64();
        if pnl > 0.0 {
            *acc.pnl.entry(t.trade.sender.to_string()).or_insert(0.0) += pnl;
        }
    }
    hours
        .into_iter()
        .filter_map(|(h, acc)| {
            let last = TimeMs(h * MS_PER_HOUR + MS_PER_HOUR - RESOLUTION_MS);
            let vol = realized_vol(eth, last, MS_PER_HOUR - RESOLUTION_MS).ok()?;
            Some(HourlyPoint {
                hour_start: TimeMs(h * MS_PER_HOUR),
                regime: acc.regime.1,
                vol,
                rounds_with_bids: acc.tops.len(),
                mean_top_bid: mean(&acc.tops),
                mean_paid_bid: mean(&acc.paid),
                trades: acc.trades,
                pnl: acc.pnl,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// Metric or entity correlated with hourly volatility.
    pub series: String,
    pub period: String,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
    /// Why `r` is missing, if it is.
    pub note: String,
}

fn corr_row(series: &str, period: &str, pairs: &[(f64, f64)]) -> CorrelationRow {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let (r, p, note) = match pearson_with_p(&x, &y) {
        Ok(c) => (Some(c.r), Some(c.p), String::new()),
        Err(e) => (None, None, e.to_string()),
    };
    CorrelationRow {
        series: series.into(),
        period: period.into(),
        r,
        p,
        n: pairs.len(),
        note,
    }
}

/// Hourly volatility against mean paid and mean top bids, over hours with
/// at least one bid.
pub fn vol_corr(points: &[HourlyPoint]) -> Vec<CorrelationRow> {
    let mut rows = Vec::new();
    for (period, group) in by_period(points, |p| p.regime) {
        let paid: Vec<(f64, f64)> = group
            .iter()
            .filter(|p| p.rounds_with_bids > 0)
            .filter_map(|p| p.mean_paid_bid.map(|b| (p.vol, b)))
            .collect();
        let top: Vec<(f64, f64)> = group
            .iter()
            .filter(|p| p.rounds_with_bids > 0)
            .filter_map(|p| p.mean_top_bid.map(|b| (p.vol, b)))
            .collect();
        rows.push(corr_row("paid_bid", &period, &paid));
        rows.push(corr_row("top_bid", &period, &top));
    }
    rows
}

/// Hourly volatility against hourly positive PnL, per sender and in total,
/// over hours with at least one trade.
pub fn pnl_vol_corr(points: &[HourlyPoint]) -> Vec<CorrelationRow> {
    let traded: Vec<&HourlyPoint> = points.iter().filter(|p| p.trades > 0).collect();
    let mut senders: Vec<&str> = traded
        .iter()
        .flat_map(|p| p.pnl.keys().map(String::as_str))
        .collect();
    senders.sort_unstable();
    senders.dedup();
    let periods = by_period(&traded, |p| p.regime);
    let mut rows = Vec::new();
    for series in senders.iter().copied().chain([ALL]) {
        for (period, group) in &periods {
            let pairs: Vec<(f64, f64)> = group
                .iter()
                .map(|p| {
                    let pnl = if series == ALL {
                        p.pnl.values().sum()
                    } else {
                        p.pnl.get(series).copied().unwrap_or(0.0)
                    };
                    (p.vol, pnl)
                })
                .collect();
            rows.push(corr_row(series, period, &pairs));
        }
    }
    rows
}
