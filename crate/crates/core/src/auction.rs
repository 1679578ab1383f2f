//! Sealed-bid second-price auction with a reserve price.
//!
//! Bids are collected during `[round.start, round.bid_close)` and the round
//! is settled once at bid close. Each bidder's latest admissible bid
//! supersedes their earlier ones. Ranking is by amount (descending), then
//! submission time (earlier first), then bidder id (lexicographic).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{EntityId, EthAmount, RoundBounds, TimeMs};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bid {
    pub bidder: EntityId,
    pub amount: EthAmount,
    pub submitted_at: TimeMs,
    pub round_index: u64,
}

/// A bidder's effective bid after the latest-bid rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankedBid {
    pub bidder: EntityId,
    pub amount: EthAmount,
    pub submitted_at: TimeMs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionOutcome {
    pub round_index: u64,
    pub bounds: RoundBounds,
    pub reserve: EthAmount,
    pub winner: Option<EntityId>,
    /// Highest admissible bid, even when it did not meet the reserve.
    pub top_bid: Option<EthAmount>,
    /// Second-highest admissible bid.
    pub second_bid: Option<EthAmount>,
    pub paid: Option<EthAmount>,
    pub admissible_bid_count: usize,
    /// Effective bids in rank order.
    pub ranked: Vec<RankedBid>,
}

impl AuctionOutcome {
    pub fn has_bids(&self) -> bool {
        !self.ranked.is_empty()
    }

    pub fn participated(&self, id: &EntityId) -> bool {
        self.ranked.iter().any(|b| &b.bidder == id)
    }

    pub fn bid_of(&self, id: &EntityId) -> Option<EthAmount> {
        self.ranked
            .iter()
            .find(|b| &b.bidder == id)
            .map(|b| b.amount)
    }

    pub fn is_settled(&self) -> bool {
        self.winner.is_some()
    }
}

fn rank(a: &RankedBid, b: &RankedBid) -> Ordering {
    b.amount
        .cmp(&a.amount)
        .then(a.submitted_at.cmp(&b.submitted_at))
        .then_with(|| a.bidder.cmp(&b.bidder))
}

/// Settles one round. Bids from other rounds, outside the bidding window or
/// with a non-positive amount are inadmissible and ignored.
pub fn settle(bids: &[Bid], reserve: EthAmount, round: RoundBounds) -> AuctionOutcome {
    // Latest admissible bid per bidder; equal timestamps resolve to input order.
    let mut latest: BTreeMap<&EntityId, &Bid> = BTreeMap::new();
    for bid in bids {
        let admissible = bid.round_index == round.index
            && round.in_bidding_window(bid.submitted_at)
            && bid.amount.is_positive();
        if !admissible {
            continue;
        }
        match latest.get(&bid.bidder) {
            Some(prev) if prev.submitted_at > bid.submitted_at => {}
            _ => {
                latest.insert(&bid.bidder, bid);
            }
        }
    }

    let mut ranked: Vec<RankedBid> = latest
        .into_values()
        .map(|b| RankedBid {
            bidder: b.bidder.clone(),
            amount: b.amount,
            submitted_at: b.submitted_at,
        })
        .collect();
    ranked.sort_by(rank);

    let top_bid = ranked.first().map(|b| b.amount);
    let second_bid = ranked.get(1).map(|b| b.amount);
    let (winner, paid) = match ranked.first() {
        Some(top) if top.amount >= reserve => {
            let paid = second_bid.map_or(reserve, |s| s.max(reserve));
            (Some(top.bidder.clone()), Some(paid))
        }
        _ => (None, None),
    };

    AuctionOutcome {
        round_index: round.index,
        bounds: round,
        reserve,
        winner,
        top_bid,
        second_bid,
        paid,
        admissible_bid_count: ranked.len(),
        ranked,
    }
}

/// Open bid book for a single round; the simulation loop is its only writer.
#[derive(Debug, Clone)]
pub struct BidBook {
    round: RoundBounds,
    bids: Vec<Bid>,
}

impl BidBook {
    pub fn new(round: RoundBounds) -> Self {
        Self {
            round,
            bids: Vec::new(),
        }
    }

    pub fn round(&self) -> RoundBounds {
        self.round
    }

    pub fn submit(&mut self, bid: Bid) {
        self.bids.push(bid);
    }

    pub fn bids(&self) -> &[Bid] {
        &self.bids
    }

    pub fn close(self, reserve: EthAmount) -> (AuctionOutcome, Vec<Bid>) {
        let outcome = settle(&self.bids, reserve, self.round);
        (outcome, self.bids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RoundSchedule;

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn eth(s: &str) -> EthAmount {
        s.parse().unwrap()
    }

    fn round() -> RoundBounds {
        RoundSchedule::default().round_bounds(10)
    }

    fn bid(who: &str, amount: &str, offset_ms: u64) -> Bid {
        let r = round();
        Bid {
            bidder: id(who),
            amount: eth(amount),
            submitted_at: r.start + offset_ms,
            round_index: r.index,
        }
    }

    #[test]
    fn second_price_with_two_bidders() {
        let out = settle(
            &[bid("wm", "0.0075", 1_000), bid("sel", "0.0062", 2_000)],
            eth("0.001"),
            round(),
        );
        assert_eq!(out.winner, Some(id("wm")));
        assert_eq!(out.paid, Some(eth("0.0062")));
        assert_eq!(out.top_bid, Some(eth("0.0075")));
    }

    #[test]
    fn sole_bidder_pays_reserve() {
        let out = settle(&[bid("kai", "0.004", 5)], eth("0.001"), round());
        assert_eq!(out.winner, Some(id("kai")));
        assert_eq!(out.paid, Some(eth("0.001")));
    }

    #[test]
    fn all_bids_below_reserve_fail() {
        let out = settle(
            &[bid("a", "0.0005", 5), bid("b", "0.0007", 6)],
            eth("0.001"),
            round(),
        );
        assert_eq!(out.winner, None);
        assert_eq!(out.paid, None);
        assert_eq!(out.top_bid, Some(eth("0.0007")));
        assert_eq!(out.admissible_bid_count, 2);
    }

    #[test]
    fn ties_break_on_submission_time_then_id() {
        let out = settle(
            &[bid("b", "0.002", 20), bid("a", "0.002", 10)],
            eth("0.001"),
            round(),
        );
        assert_eq!(out.winner, Some(id("a")));
        assert_eq!(out.paid, Some(eth("0.002")));

        let out = settle(
            &[bid("b", "0.002", 10), bid("a", "0.002", 10)],
            eth("0.001"),
            round(),
        );
        assert_eq!(out.winner, Some(id("a")));
    }

    #[test]
    fn latest_bid_supersedes_and_late_bids_are_ignored() {
        let r = round();
        let late = Bid {
            submitted_at: r.bid_close,
            ..bid("a", "0.05", 0)
        };
        let out = settle(
            &[
                bid("a", "0.009", 100),
                bid("a", "0.003", 200),
                bid("b", "0.004", 150),
                late,
            ],
            eth("0.001"),
            r,
        );
        assert_eq!(out.winner, Some(id("b")));
        assert_eq!(out.paid, Some(eth("0.003")));
        assert_eq!(out.admissible_bid_count, 2);
    }

    #[test]
    fn bids_for_other_rounds_or_before_start_are_inadmissible() {
        let r = round();
        let early = Bid {
            submitted_at: TimeMs(r.start.0 - 1),
            ..bid("a", "0.01", 0)
        };
        let other = Bid {
            round_index: r.index + 1,
            ..bid("b", "0.01", 0)
        };
        let out = settle(&[early, other], eth("0.001"), r);
        assert!(!out.has_bids());
        assert_eq!(out.winner, None);
    }

    #[test]
    fn empty_book_has_no_winner() {
        let (out, bids) = BidBook::new(round()).close(eth("0.001"));
        assert!(bids.is_empty());
        assert_eq!(out.winner, None);
        assert_eq!(out.top_bid, None);
    }
}
