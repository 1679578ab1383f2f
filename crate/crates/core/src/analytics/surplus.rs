//! Surplus decomposition and the reseller's revenue gap.

use serde::{Deserialize, Serialize};

use super::{by_period, RoundRecord, TradeRecord};
use crate::model::{EntityId, EthAmount, Regime, TimeMs, Usd, UsdAmount};
use crate::resale::{revenue_gap, Channel};
use crate::sequencer::Lane;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusRow {
    pub period: String,
    /// `all` trades, or `express` (time-boosted) trades only.
    pub scope: String,
    pub positive_trades: usize,
    pub total_pnl_usd: UsdAmount,
    pub tx_fees_usd: UsdAmount,
    pub bids_paid_usd: UsdAmount,
    /// `total_pnl - tx_fees - bids_paid`, exact.
    pub net_surplus_usd: UsdAmount,
    pub top_bids_usd: UsdAmount,
    pub captured_share_paid: Option<f64>,
    pub captured_share_top: Option<f64>,
    /// Settled rounds skipped for lack of an ETH/USD price.
    pub unpriced_rounds: usize,
    /// `zero_pnl` when the shares are undefined.
    pub flag: String,
}

impl SurplusRow {
    /// `net + fees + bids == total`, exactly.
    pub fn balances(&self) -> bool {
        self.net_surplus_usd + self.tx_fees_usd + self.bids_paid_usd == self.total_pnl_usd
    }
}

/// Distinct period names in timeline order, `All` last.
fn period_union<'a>(names: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.contains(n) {
            out.push(n.clone());
        }
    }
    out.sort_by_key(|p| {
        Regime::ALL
            .iter()
            .position(|r| r.name() == p)
            .unwrap_or(Regime::ALL.len())
    });
    out
}

fn to_usd(eth: EthAmount, rate: f64) -> UsdAmount {
    eth.convert::<Usd>(rate)
}

/// Splits positive-PnL searcher surplus into fees, auction payments and
/// the remainder, per regime and for the whole input. Bids are valued at
/// the ETH/USD price at bid close.
pub fn surplus_decompose(trades: &[TradeRecord], rounds: &[RoundRecord]) -> Vec<SurplusRow> {
    let trade_periods = by_period(trades, |t| t.regime);
    let round_periods = by_period(rounds, |r| r.regime);
    let periods = period_union(
        round_periods
            .iter()
            .map(|(p, _)| p)
            .chain(trade_periods.iter().map(|(p, _)| p)),
    );

    let mut rows = Vec::new();
    for period in periods {
        let ts: Vec<&TradeRecord> = trade_periods
            .iter()
            .find(|(p, _)| *p == period)
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        let rs: Vec<&RoundRecord> = round_periods
            .iter()
            .find(|(p, _)| *p == period)
            .map(|(_, v)| v.clone())
            .unwrap_or_default();

        let (mut bids_paid, mut top_bids, mut unpriced) = (UsdAmount::ZERO, UsdAmount::ZERO, 0);
        for r in rs.iter().filter(|r| r.outcome.is_settled()) {
            match (r.eth_usd, r.outcome.paid, r.outcome.top_bid) {
                (Some(rate), Some(paid), Some(top)) => {
                    bids_paid += to_usd(paid, rate);
                    top_bids += to_usd(top, rate);
                }
                _ => unpriced += 1,
            }
        }

        for scope in ["all", "express"] {
            let positive: Vec<&&TradeRecord> = ts
                .iter()
                .filter(|t| t.pnl.is_positive())
                .filter(|t| scope == "all" || t.trade.lane == Lane::Express)
                .collect();
            let pnl: UsdAmount = positive.iter().map(|t| t.pnl).sum();
            let fees: UsdAmount = positive.iter().map(|t| t.tx_fee).sum();
            rows.push(SurplusRow {
                period: period.clone(),
                scope: scope.into(),
                positive_trades: positive.len(),
                total_pnl_usd: pnl,
                tx_fees_usd: fees,
                bids_paid_usd: bids_paid,
                net_surplus_usd: pnl - fees - bids_paid,
                top_bids_usd: top_bids,
                captured_share_paid: bids_paid.ratio(pnl),
                captured_share_top: top_bids.ratio(pnl),
                unpriced_rounds: unpriced,
                flag: if pnl.is_zero() {
                    "zero_pnl".into()
                } else {
                    String::new()
                },
            });
        }
    }
    rows
}

/// A payment received by the reseller.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentRecord {
    pub time: TimeMs,
    pub regime: Regime,
    pub channel: Channel,
    pub amount: EthAmount,
    pub eth_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResaleRevenueRow {
    pub reseller: String,
    pub period: String,
    pub rounds_won: usize,
    pub bids_paid_eth: EthAmount,
    pub observable_eth: EthAmount,
    pub subscription_eth: EthAmount,
    pub bids_paid_usd: UsdAmount,
    pub observable_usd: UsdAmount,
    /// `bids_paid_usd - observable_usd`.
    pub gap_usd: UsdAmount,
    pub unpriced: usize,
}

/// What the reseller paid in the primary auction against the payments it
/// visibly received on chain. Subscription payments are reported but never
/// counted as observable.
pub fn resale_revenue(
    reseller: &EntityId,
    rounds: &[RoundRecord],
    payments: &[PaymentRecord],
) -> Vec<ResaleRevenueRow> {
    let won: Vec<&RoundRecord> = rounds
        .iter()
        .filter(|r| r.outcome.winner.as_ref() == Some(reseller))
        .collect();
    let round_periods = by_period(&won, |r| r.regime);
    let pay_periods = by_period(payments, |p| p.regime);
    period_union(
        round_periods
            .iter()
            .map(|(p, _)| p)
            .chain(pay_periods.iter().map(|(p, _)| p)),
    )
    .into_iter()
    .map(|period| {
        let rs: Vec<&&RoundRecord> = round_periods
            .iter()
            .find(|(p, _)| *p == period)
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        let ps: Vec<&PaymentRecord> = pay_periods
            .iter()
            .find(|(p, _)| *p == period)
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        let mut unpriced = 0;
        let (mut paid_eth, mut paid_usd) = (EthAmount::ZERO, UsdAmount::ZERO);
        for r in &rs {
            let paid = r.outcome.paid.unwrap_or(EthAmount::ZERO);
            paid_eth += paid;
            match r.eth_usd {
                Some(rate) => paid_usd += to_usd(paid, rate),
                None => unpriced += 1,
            }
        }
        let (mut obs_eth, mut obs_usd, mut sub_eth) =
            (EthAmount::ZERO, UsdAmount::ZERO, EthAmount::ZERO);
        for p in &ps {
            match p.channel {
                Channel::Subscription => sub_eth += p.amount,
                Channel::OnChain => {
                    obs_eth += p.amount;
                    match p.eth_usd {
                        Some(rate) => obs_usd += to_usd(p.amount, rate),
                        None => unpriced += 1,
                    }
                }
            }
        }
        let gap = revenue_gap(paid_usd, obs_usd);
        ResaleRevenueRow {
            reseller: reseller.to_string(),
            period,
            rounds_won: rs.len(),
            bids_paid_eth: paid_eth,
            observable_eth: obs_eth,
            subscription_eth: sub_eth,
            bids_paid_usd: gap.bids_paid,
            observable_usd: gap.observable,
            gap_usd: gap.gap,
            unpriced,
        }
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::ALL;
    use crate::auction::{settle, Bid};
    use crate::markout::Trade;
    use crate::model::RoundSchedule;

    fn usd(s: &str) -> UsdAmount {
        s.parse().unwrap()
    }

    fn trade(pnl: &str, fee: &str, lane: Lane) -> TradeRecord {
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
                sender: EntityId::new("wm").unwrap(),
            },
            pnl: usd(pnl),
            tx_fee: usd(fee),
        }
    }

    fn round(paid_top: (&str, &str), rate: f64) -> RoundRecord {
        let b = RoundSchedule::default().round_bounds(1);
        let bids = [
            Bid {
                bidder: EntityId::new("a").unwrap(),
                amount: paid_top.1.parse().unwrap(),
                submitted_at: b.start,
                round_index: 1,
            },
            Bid {
                bidder: EntityId::new("b").unwrap(),
                amount: paid_top.0.parse().unwrap(),
                submitted_at: b.start,
                round_index: 1,
            },
        ];
        RoundRecord {
            regime: Regime::PreKairos,
            outcome: settle(&bids, "0.001".parse().unwrap(), b),
            eth_usd: Some(rate),
        }
    }

    #[test]
    fn identity_and_shares() {
        let trades = [
            trade("100", "5", Lane::Express),
            trade("-20", "1", Lane::Regular),
        ];
        let rounds = [round(("0.005", "0.01"), 2_000.0)];
        let rows = surplus_decompose(&trades, &rounds);
        let all = rows
            .iter()
            .find(|r| r.period == ALL && r.scope == "all")
            .unwrap();
        assert_eq!(all.total_pnl_usd, usd("100"));
        assert_eq!(all.tx_fees_usd, usd("5"));
        assert_eq!(all.bids_paid_usd, usd("10"));
        assert_eq!(all.net_surplus_usd, usd("85"));
        assert_eq!(all.captured_share_paid, Some(0.1));
        assert_eq!(all.top_bids_usd, usd("20"));
    }

    #[test]
    fn zero_pnl_is_flagged() {
        let rows = surplus_decompose(&[], &[round(("0.005", "0.01"), 2_000.0)]);
        assert!(rows
            .iter()
            .all(|r| r.flag == "zero_pnl" && r.captured_share_paid.is_none()));
    }

    #[test]
    fn subscription_is_not_observable() {
        let kai = EntityId::new("a").unwrap();
        let rounds = [round(("0.005", "0.01"), 2_000.0)];
        let pay = |ch, amt: &str| PaymentRecord {
            time: TimeMs(0),
            regime: Regime::PreKairos,
            channel: ch,
            amount: amt.parse().unwrap(),
            eth_usd: Some(2_000.0),
        };
        let payments = [
            pay(Channel::OnChain, "0.002"),
            pay(Channel::Subscription, "0.005"),
        ];
        let rows = resale_revenue(&kai, &rounds, &payments);
        let all = rows.iter().find(|r| r.period == ALL).unwrap();
        assert_eq!(all.observable_eth, "0.002".parse().unwrap());
        assert_eq!(all.subscription_eth, "0.005".parse().unwrap());
        assert_eq!(all.bids_paid_usd, usd("10"));
        assert_eq!(all.gap_usd, usd("6"));
    }
}
