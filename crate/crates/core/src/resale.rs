//! Just-in-time resale of express-lane access.
//!
//! The reseller collects submissions in fixed windows (100 ms by default),
//! orders each window's batch by declared payment and releases it through
//! the express lane at the end of the window. Payments arrive either on
//! chain, where they are observable, or through an off-chain subscription.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Amount, EntityId, EthAmount, TimeMs, Unit};
use crate::sequencer::{Lane, ResaleRoute, TxEvent, TxId};

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[default]
    OnChain,
    Subscription,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::OnChain => "onchain",
            Channel::Subscription => "subscription",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "onchain" | "on-chain" | "on_chain" => Ok(Channel::OnChain),
            "subscription" | "offchain" | "off-chain" => Ok(Channel::Subscription),
            other => Err(format!("unknown payment channel `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResaleError {
    #[error("tx {tx} arrived at {arrival}, outside window [{start}, {end})")]
    OutsideWindow {
        tx: TxId,
        arrival: TimeMs,
        start: TimeMs,
        end: TimeMs,
    },
    #[error("window length must be positive")]
    ZeroWindow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub tx: TxEvent,
    pub declared_payment: EthAmount,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubAuctionWindow {
    pub window_start: TimeMs,
    pub window_length_ms: u64,
    submissions: Vec<Submission>,
}

/// One payment received by the reseller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Receipt {
    pub window_start_ms: TimeMs,
    pub tx_id: TxId,
    pub channel: Channel,
    pub payment_eth: EthAmount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleasedBatch {
    pub window_start: TimeMs,
    pub release: TimeMs,
    /// Transactions in batch order with `executed_at` assigned.
    pub txs: Vec<TxEvent>,
    pub receipts: Vec<Receipt>,
}

impl ReleasedBatch {
    pub fn onchain_total(&self) -> EthAmount {
        channel_total(&self.receipts, Channel::OnChain)
    }

    pub fn subscription_total(&self) -> EthAmount {
        channel_total(&self.receipts, Channel::Subscription)
    }
}

fn channel_total(receipts: &[Receipt], channel: Channel) -> EthAmount {
    receipts
        .iter()
        .filter(|r| r.channel == channel)
        .map(|r| r.payment_eth)
        .sum()
}

impl SubAuctionWindow {
    pub fn new(window_start: TimeMs, window_length_ms: u64) -> Result<Self, ResaleError> {
        if window_length_ms == 0 {
            return Err(ResaleError::ZeroWindow);
        }
        Ok(Self {
            window_start,
            window_length_ms,
            submissions: Vec::new(),
        })
    }

    /// The window of length `len` containing `t`, aligned to `origin`.
    pub fn containing(t: TimeMs, origin: TimeMs, len: u64) -> Result<Self, ResaleError> {
        let offset = (t - origin) / len.max(1) * len;
        Self::new(origin + offset, len)
    }

    pub fn end(&self) -> TimeMs {
        self.window_start + self.window_length_ms
    }

    pub fn submissions(&self) -> &[Submission] {
        &self.submissions
    }

    pub fn is_empty(&self) -> bool {
        self.submissions.is_empty()
    }

    pub fn submit(&mut self, submission: Submission) -> Result<(), ResaleError> {
        let arrival = submission.tx.arrival;
        if arrival < self.window_start || arrival >= self.end() {
            return Err(ResaleError::OutsideWindow {
                tx: submission.tx.tx_id,
                arrival,
                start: self.window_start,
                end: self.end(),
            });
        }
        self.submissions.push(submission);
        Ok(())
    }

    /// Closes the window: orders by declared payment (descending), then
    /// arrival, then tx id, releases at window end and stamps each
    /// transaction with `release + resale_latency_ms`.
    pub fn close(self, reseller: &EntityId, resale_latency_ms: u64) -> ReleasedBatch {
        let release = self.end();
        let mut subs = self.submissions;
        subs.sort_by(|a, b| {
            b.declared_payment
                .cmp(&a.declared_payment)
                .then(a.tx.arrival.cmp(&b.tx.arrival))
                .then(a.tx.tx_id.cmp(&b.tx.tx_id))
        });
        let mut txs = Vec::with_capacity(subs.len());
        let mut receipts = Vec::with_capacity(subs.len());
        for (pos, sub) in subs.into_iter().enumerate() {
            let mut tx = sub.tx;
            tx.lane = Lane::Express;
            tx.resale = Some(ResaleRoute {
                reseller: reseller.clone(),
                latency_ms: resale_latency_ms,
                declared_payment: sub.declared_payment,
                batch_release: Some(release),
                batch_position: Some(pos as u32),
            });
            tx.executed_at = Some(release + resale_latency_ms);
            receipts.push(Receipt {
                window_start_ms: self.window_start,
                tx_id: tx.tx_id,
                channel: sub.channel,
                payment_eth: sub.declared_payment,
            });
            txs.push(tx);
        }
        ReleasedBatch {
            window_start: self.window_start,
            release,
            txs,
            receipts,
        }
    }
}

/// Per-round reseller accounts, keyed by round start.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LedgerEntry<U: Unit = crate::model::Eth> {
    pub bids_paid_primary: Amount<U>,
    pub onchain_receipts: Amount<U>,
    pub subscription_receipts: Amount<U>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResaleLedger {
    entries: BTreeMap<TimeMs, LedgerEntry>,
}

/// Primary-auction spend versus what the reseller visibly earned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RevenueGap<U: Unit = crate::model::Eth> {
    pub bids_paid: Amount<U>,
    pub observable: Amount<U>,
    pub gap: Amount<U>,
}

/// `gap = bids_paid - observable`; negative when visible receipts exceed
/// what the reseller paid.
pub fn revenue_gap<U: Unit>(bids_paid: Amount<U>, observable: Amount<U>) -> RevenueGap<U> {
    RevenueGap {
        bids_paid,
        observable,
        gap: bids_paid - observable,
    }
}

impl ResaleLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn entry(&mut self, round_start: TimeMs) -> &mut LedgerEntry {
        self.entries.entry(round_start).or_default()
    }

    pub fn record_primary_payment(&mut self, round_start: TimeMs, paid: EthAmount) {
        self.entry(round_start).bids_paid_primary += paid;
    }

    pub fn record_receipt(&mut self, round_start: TimeMs, channel: Channel, amount: EthAmount) {
        let e = self.entry(round_start);
        match channel {
            Channel::OnChain => e.onchain_receipts += amount,
            Channel::Subscription => e.subscription_receipts += amount,
        }
    }

    pub fn record_batch(&mut self, round_start: TimeMs, batch: &ReleasedBatch) {
        for r in &batch.receipts {
            self.record_receipt(round_start, r.channel, r.payment_eth);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&TimeMs, &LedgerEntry)> {
        self.entries.iter()
    }

    pub fn totals(&self, over: Range<TimeMs>) -> LedgerEntry {
        let mut total = LedgerEntry::default();
        for e in self.entries.range(over).map(|(_, e)| e) {
            total.bids_paid_primary += e.bids_paid_primary;
            total.onchain_receipts += e.onchain_receipts;
            total.subscription_receipts += e.subscription_receipts;
        }
        total
    }

    /// Observable revenue counts on-chain receipts only.
    pub fn revenue_gap(&self, over: Range<TimeMs>) -> RevenueGap {
        let t = self.totals(over);
        revenue_gap(t.bids_paid_primary, t.onchain_receipts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UsdAmount;

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn eth(s: &str) -> EthAmount {
        s.parse().unwrap()
    }

    fn sub(n: u64, arrival: u64, pay: &str, channel: Channel) -> Submission {
        Submission {
            tx: TxEvent::new(TxId(n), id("s"), TimeMs(arrival), Lane::Express, 0),
            declared_payment: eth(pay),
            channel,
        }
    }

    #[test]
    fn batch_is_ordered_by_payment() {
        let mut w = SubAuctionWindow::new(TimeMs(1_000), 100).unwrap();
        w.submit(sub(1, 1_000, "0.003", Channel::OnChain)).unwrap();
        w.submit(sub(2, 1_010, "0.001", Channel::OnChain)).unwrap();
        w.submit(sub(3, 1_020, "0.002", Channel::OnChain)).unwrap();
        let b = w.close(&id("kai"), 80);
        let pays: Vec<_> = b
            .receipts
            .iter()
            .map(|r| r.payment_eth.to_string())
            .collect();
        assert_eq!(pays, ["0.003", "0.002", "0.001"]);
        assert_eq!(b.release, TimeMs(1_100));
        assert!(b.txs.iter().all(|t| t.executed_at == Some(TimeMs(1_180))));
        let positions: Vec<_> = b
            .txs
            .iter()
            .map(|t| t.resale.as_ref().unwrap().batch_position.unwrap())
            .collect();
        assert_eq!(positions, [0, 1, 2]);
    }

    #[test]
    fn payment_ties_break_on_arrival_then_id() {
        let mut w = SubAuctionWindow::new(TimeMs(0), 100).unwrap();
        w.submit(sub(9, 50, "0.002", Channel::OnChain)).unwrap();
        w.submit(sub(4, 50, "0.002", Channel::OnChain)).unwrap();
        w.submit(sub(1, 60, "0.002", Channel::OnChain)).unwrap();
        let ids: Vec<_> = w.close(&id("k"), 0).txs.iter().map(|t| t.tx_id.0).collect();
        assert_eq!(ids, [4, 9, 1]);
    }

    #[test]
    fn only_onchain_payments_are_observable() {
        let mut w = SubAuctionWindow::new(TimeMs(0), 100).unwrap();
        w.submit(sub(1, 1, "0.002", Channel::OnChain)).unwrap();
        w.submit(sub(2, 2, "0.005", Channel::Subscription)).unwrap();
        let b = w.close(&id("k"), 50);
        let mut ledger = ResaleLedger::new();
        ledger.record_primary_payment(TimeMs(0), eth("0.004"));
        ledger.record_batch(TimeMs(0), &b);
        let gap = ledger.revenue_gap(TimeMs(0)..TimeMs(60_000));
        assert_eq!(gap.observable, eth("0.002"));
        assert_eq!(gap.gap, eth("0.002"));
        assert_eq!(
            ledger.totals(TimeMs(0)..TimeMs(1)).subscription_receipts,
            eth("0.005")
        );
    }

    #[test]
    fn empty_window_releases_empty_batch() {
        let b = SubAuctionWindow::new(TimeMs(0), 100)
            .unwrap()
            .close(&id("k"), 80);
        assert!(b.txs.is_empty());
        assert!(b.receipts.is_empty());
    }

    #[test]
    fn submissions_outside_window_are_rejected() {
        let mut w = SubAuctionWindow::new(TimeMs(1_000), 100).unwrap();
        assert!(w.submit(sub(1, 1_100, "0.001", Channel::OnChain)).is_err());
        assert!(w.submit(sub(1, 999, "0.001", Channel::OnChain)).is_err());
        assert!(SubAuctionWindow::new(TimeMs(0), 0).is_err());
    }

    #[test]
    fn window_alignment() {
        let w = SubAuctionWindow::containing(TimeMs(51_250), TimeMs(51_000), 100).unwrap();
        assert_eq!(w.window_start, TimeMs(51_200));
        assert_eq!(w.end(), TimeMs(51_300));
    }

    #[test]
    fn usd_gap_from_observed_totals() {
        let g = revenue_gap(UsdAmount::whole(151_302), UsdAmount::whole(8_001));
        assert_eq!(g.gap, UsdAmount::whole(143_301));
        let z = revenue_gap(UsdAmount::ZERO, UsdAmount::ZERO);
        assert_eq!(z.gap, UsdAmount::ZERO);
    }

    #[test]
    fn negative_gap_when_receipts_exceed_bids() {
        let g = revenue_gap(eth("0.001"), eth("0.003"));
        assert_eq!(g.gap, eth("-0.002"));
    }
}
