//! Searcher activity: positive-PnL trade summaries per sender and lane.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::stats::{mean, median};
use super::{by_period, TradeRecord, ALL};
use crate::model::UsdAmount;
use crate::sequencer::Lane;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlRow {
    pub sender: String,
    pub period: String,
    /// `express`, `regular` or `all`.
    pub lane: String,
    pub trades: usize,
    pub positive_trades: usize,
    /// Sum of positive markout PnL.
    pub total_pnl_usd: UsdAmount,
    pub mean_pnl_usd: Option<f64>,
    pub median_pnl_usd: Option<f64>,
    /// Share of this sender's positive trades in the period using the lane.
    pub lane_share: Option<f64>,
}

/// Aggregates restricted to trades with positive PnL; `trades` still counts
/// every priced trade.
pub fn pnl_summary(trades: &[TradeRecord]) -> Vec<PnlRow> {
    let senders: BTreeSet<String> = trades.iter().map(|t| t.trade.sender.to_string()).collect();
    let periods = by_period(trades, |t| t.regime);
    let mut rows = Vec::new();
    for sender in senders.iter().map(String::as_str).chain([ALL]) {
        for (period, group) in &periods {
            let mine: Vec<&&TradeRecord> = group
                .iter()
                .filter(|t| sender == ALL || t.trade.sender.as_str() == sender)
                .collect();
            let positive_all = mine.iter().filter(|t| t.pnl.is_positive()).count();
            for lane in [Some(Lane::Express), Some(Lane::Regular), None] {
                let sel: Vec<&&&TradeRecord> = mine
                    .iter()
                    .filter(|t| lane.is_none_or(|l| t.trade.lane == l))
                    .collect();
                let pos: Vec<UsdAmount> = sel
                    .iter()
                    .map(|t| t.pnl)
                    .filter(|p| p.is_positive())
                    .collect();
                let as_f64: Vec<f64> = pos.iter().map(|p| p.to_f64()).collect();
                rows.push(PnlRow {
                    sender: sender.to_string(),
                    period: period.clone(),
                    lane: lane.map_or("all", Lane::as_str).to_string(),
                    trades: sel.len(),
                    positive_trades: pos.len(),
                    total_pnl_usd: pos.iter().sum(),
                    mean_pnl_usd: mean(&as_f64),
                    median_pnl_usd: median(&as_f64),
                    lane_share: (positive_all > 0).then(|| pos.len() as f64 / positive_all as f64),
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markout::Trade;
    use crate::model::{EntityId, Regime, TimeMs};

    fn rec(sender: &str, lane: Lane, pnl: &str) -> TradeRecord {
        TradeRecord {
            regime: Regime::PreKairos,
            trade: Trade {
                trade_id: "t".into(),
                time: TimeMs(0),
                buy_asset: "ETH".into(),
                x: Default::default(),
                sell_asset: "USDT".into(),
                y: Default::default(),
                fees: Default::default(),
                lane,
                sender: EntityId::new(sender).unwrap(),
            },
            pnl: pnl.parse().unwrap(),
            tx_fee: UsdAmount::ZERO,
        }
    }

    #[test]
    fn positive_filter_and_lanes() {
        let trades = [
            rec("wm", Lane::Express, "10"),
            rec("wm", Lane::Regular, "-4"),
            rec("wm", Lane::Regular, "2"),
        ];
        let rows = pnl_summary(&trades);
        let get = |lane: &str| {
            rows.iter()
                .find(|r| r.sender == "wm" && r.period == ALL && r.lane == lane)
                .unwrap()
        };
        assert_eq!(get("all").trades, 3);
        assert_eq!(get("all").positive_trades, 2);
        assert_eq!(get("all").total_pnl_usd, "12".parse().unwrap());
        assert_eq!(get("express").lane_share, Some(0.5));
        assert_eq!(get("regular").median_pnl_usd, Some(2.0));
    }
}
