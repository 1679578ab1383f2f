//! Auction-level metrics: bid gaps, win shares, participation
//! combinations, bid distributions and the reseller's loss profile.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::stats::{median, summarize};
use super::{by_period, RoundRecord, ALL};
use crate::auction::AuctionOutcome;
use crate::model::{EntityId, EthAmount, MS_PER_DAY};

/// `(top - paid) / top` for a settled round.
pub fn relative_bid_gap(outcome: &AuctionOutcome) -> Option<f64> {
    outcome.winner.as_ref()?;
    let (top, paid) = (outcome.top_bid?, outcome.paid?);
    (top - paid).ratio(top)
}

/// `paid <= 1.1 * reserve`, evaluated exactly.
fn paid_near_reserve(outcome: &AuctionOutcome) -> bool {
    outcome
        .paid
        .is_some_and(|p| p.raw() * 10 <= outcome.reserve.raw() * 11)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummaryRow {
    pub period: String,
    pub rounds: usize,
    pub rounds_with_bids: usize,
    pub settled_rounds: usize,
    /// Median over settled rounds.
    pub median_gap: Option<f64>,
    /// Median over UTC days of the daily median gap.
    pub median_daily_gap: Option<f64>,
    pub mean_gap: Option<f64>,
    /// Share of settled rounds paying at most 10% above the reserve.
    pub paid_near_reserve_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyGapRow {
    pub day_start_utc_ms: u64,
    pub period: String,
    pub settled_rounds: usize,
    pub median_gap: f64,
    pub median_top_bid_eth: f64,
    pub median_paid_bid_eth: f64,
}

/// Daily medians over settled rounds, grouped by UTC day and regime (a
/// day crossing a regime boundary yields one row per regime).
pub fn daily_gaps(rounds: &[RoundRecord]) -> Vec<DailyGapRow> {
    let mut days: BTreeMap<(u64, crate::model::Regime), Vec<&AuctionOutcome>> = BTreeMap::new();
    for r in rounds.iter().filter(|r| r.outcome.is_settled()) {
        days.entry((r.outcome.bounds.start.day_index(), r.regime))
            .or_default()
            .push(&r.outcome);
    }
    days.into_iter()
        .map(|((day, regime), outs)| {
            let gaps: Vec<f64> = outs.iter().filter_map(|o| relative_bid_gap(o)).collect();
            let tops: Vec<f64> = outs
                .iter()
                .filter_map(|o| o.top_bid.map(EthAmount::to_f64))
                .collect();
            let paid: Vec<f64> = outs
                .iter()
                .filter_map(|o| o.paid.map(EthAmount::to_f64))
                .collect();
            DailyGapRow {
                day_start_utc_ms: day * MS_PER_DAY,
                period: regime.name().to_string(),
                settled_rounds: outs.len(),
                median_gap: median(&gaps).unwrap_or(0.0),
                median_top_bid_eth: median(&tops).unwrap_or(0.0),
                median_paid_bid_eth: median(&paid).unwrap_or(0.0),
            }
        })
        .collect()
}

pub fn gap_summary(rounds: &[RoundRecord]) -> Vec<GapSummaryRow> {
    let daily = daily_gaps(rounds);
    by_period(rounds, |r| r.regime)
        .into_iter()
        .map(|(period, group)| {
            let settled: Vec<&AuctionOutcome> = group
                .iter()
                .map(|r| &r.outcome)
                .filter(|o| o.is_settled())
                .collect();
            let gaps: Vec<f64> = settled.iter().filter_map(|o| relative_bid_gap(o)).collect();
            let day_medians: Vec<f64> = daily
                .iter()
                .filter(|d| period == ALL || d.period == period)
                .map(|d| d.median_gap)
                .collect();
            let near = settled.iter().filter(|o| paid_near_reserve(o)).count();
            GapSummaryRow {
                rounds: group.len(),
                rounds_with_bids: group.iter().filter(|r| r.outcome.has_bids()).count(),
                settled_rounds: settled.len(),
                median_gap: median(&gaps),
                median_daily_gap: median(&day_medians),
                mean_gap: super::stats::mean(&gaps),
                paid_near_reserve_share: (!settled.is_empty())
                    .then(|| near as f64 / settled.len() as f64),
                period,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinShareRow {
    pub entity: String,
    pub period: String,
    pub wins: usize,
    /// Rounds with at least one admissible bid.
    pub rounds: usize,
    pub share: Option<f64>,
}

/// Wins per entity over rounds with at least one bid. Entities are listed
/// by total wins (descending), then id; every entity that ever bid appears.
pub fn win_shares(rounds: &[RoundRecord]) -> Vec<WinShareRow> {
    let with_bids: Vec<&RoundRecord> = rounds.iter().filter(|r| r.outcome.has_bids()).collect();
    let mut totals: BTreeMap<&EntityId, usize> = BTreeMap::new();
    for r in &with_bids {
        for b in &r.outcome.ranked {
            totals.entry(&b.bidder).or_insert(0);
        }
        if let Some(w) = &r.outcome.winner {
            *totals.entry(w).or_insert(0) += 1;
        }
    }
    let mut entities: Vec<(&EntityId, usize)> = totals.into_iter().collect();
    entities.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let periods = by_period(&with_bids, |r| r.regime);
    let mut rows = Vec::new();
    for (entity, _) in entities {
        for (period, group) in &periods {
            let wins = group
                .iter()
                .filter(|r| r.outcome.winner.as_ref() == Some(entity))
                .count();
            rows.push(WinShareRow {
                entity: entity.to_string(),
                period: period.clone(),
                wins,
                rounds: group.len(),
                share: (!group.is_empty()).then(|| wins as f64 / group.len() as f64),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationRow {
    pub combination: String,
    pub period: String,
    pub rounds: usize,
    pub share: Option<f64>,
    /// Rounds in this bucket where an untracked entity also bid.
    pub with_other_bidders: usize,
}

/// Label of a participation subset, given as a bit mask over `tracked`.
pub fn combination_label(tracked: &[EntityId], mask: usize) -> String {
    if mask == 0 {
        return "None".into();
    }
    tracked
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, e)| e.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

/// Subset masks ordered by size, then by tracked order.
fn masks(k: usize) -> Vec<usize> {
    let mut m: Vec<usize> = (0..1usize << k).collect();
    m.sort_by_key(|&x| {
        let bits: Vec<usize> = (0..k).filter(|i| x & (1 << i) != 0).collect();
        (bits.len(), bits)
    });
    m
}

/// Partitions every round by which tracked entities bid. Rounds with no
/// bids at all fall in `None`, together with rounds where only untracked
/// entities bid.
pub fn bidder_combinations(rounds: &[RoundRecord], tracked: &[EntityId]) -> Vec<CombinationRow> {
    let mask_of = |o: &AuctionOutcome| {
        tracked
            .iter()
            .enumerate()
            .filter(|(_, e)| o.participated(e))
            .fold(0usize, |m, (i, _)| m | (1 << i))
    };
    let has_other = |o: &AuctionOutcome| o.ranked.iter().any(|b| !tracked.contains(&b.bidder));
    let mut rows = Vec::new();
    for (period, group) in by_period(rounds, |r| r.regime) {
        let mut counts = vec![(0usize, 0usize); 1 << tracked.len()];
        for r in &group {
            let c = &mut counts[mask_of(&r.outcome)];
            c.0 += 1;
            c.1 += usize::from(has_other(&r.outcome));
        }
        for m in masks(tracked.len()) {
            let (n, others) = counts[m];
            rows.push(CombinationRow {
                combination: combination_label(tracked, m),
                period: period.clone(),
                rounds: n,
                share: (!group.is_empty()).then(|| n as f64 / group.len() as f64),
                with_other_bidders: others,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidDistributionRow {
    pub entity: String,
    pub period: String,
    pub n: usize,
    pub p25_eth: f64,
    pub median_eth: f64,
    pub p75_eth: f64,
    pub p99_eth: f64,
    pub mean_eth: f64,
}

/// Distribution of each entity's effective bids per period.
pub fn bid_distribution(rounds: &[RoundRecord]) -> Vec<BidDistributionRow> {
    let entities: BTreeSet<&EntityId> = rounds
        .iter()
        .flat_map(|r| r.outcome.ranked.iter().map(|b| &b.bidder))
        .collect();
    let periods = by_period(rounds, |r| r.regime);
    let mut rows = Vec::new();
    for e in entities {
        for (period, group) in &periods {
            let bids: Vec<f64> = group
                .iter()
                .filter_map(|r| r.outcome.bid_of(e))
                .map(EthAmount::to_f64)
                .collect();
            if let Some(s) = summarize(&bids) {
                rows.push(BidDistributionRow {
                    entity: e.to_string(),
                    period: period.clone(),
                    n: s.n,
                    p25_eth: s.p25,
                    median_eth: s.median,
                    p75_eth: s.p75,
                    p99_eth: s.p99,
                    mean_eth: s.mean,
                });
            }
        }
    }
    rows
}

/// Trading session in UTC minutes of the day, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionWindow {
    pub start_minute: u32,
    pub end_minute: u32,
}

impl Default for SessionWindow {
    /// 14:30 to 21:00 UTC.
    fn default() -> Self {
        Self {
            start_minute: 14 * 60 + 30,
            end_minute: 21 * 60,
        }
    }
}

impl SessionWindow {
    pub fn contains_minute(&self, minute: u32) -> bool {
        self.start_minute <= minute && minute < self.end_minute
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    /// `00` to `23` for UTC hours, or `in_session` / `out_of_session`.
    pub bucket: String,
    pub participated: usize,
    pub lost: usize,
    pub loss_rate: Option<f64>,
    pub median_own_bid_eth: Option<f64>,
    pub median_top_bid_eth: Option<f64>,
}

/// How often `reseller` bid and did not win, by UTC hour of the round start
/// and by whether the round started inside `session`.
pub fn hourly_loss_profile(
    rounds: &[RoundRecord],
    reseller: &EntityId,
    session: SessionWindow,
) -> Vec<LossRow> {
    let part: Vec<&AuctionOutcome> = rounds
        .iter()
        .map(|r| &r.outcome)
        .filter(|o| o.participated(reseller))
        .collect();
    let row = |bucket: String, outs: Vec<&&AuctionOutcome>| {
        let lost = outs
            .iter()
            .filter(|o| o.winner.as_ref() != Some(reseller))
            .count();
        let own: Vec<f64> = outs
            .iter()
            .filter_map(|o| o.bid_of(reseller))
            .map(EthAmount::to_f64)
            .collect();
        let top: Vec<f64> = outs
            .iter()
            .filter_map(|o| o.top_bid)
            .map(EthAmount::to_f64)
            .collect();
        LossRow {
            bucket,
            participated: outs.len(),
            lost,
            loss_rate: (!outs.is_empty()).then(|| lost as f64 / outs.len() as f64),
            median_own_bid_eth: median(&own),
            median_top_bid_eth: median(&top),
        }
    };
    let mut rows: Vec<LossRow> = (0..24)
        .map(|h| {
            row(
                format!("{h:02}"),
                part.iter()
                    .filter(|o| o.bounds.start.hour_of_day() == h)
                    .collect(),
            )
        })
        .collect();
    let in_session = |o: &&&AuctionOutcome| session.contains_minute(o.bounds.start.minute_of_day());
    rows.push(row(
        "in_session".into(),
        part.iter().filter(in_session).collect(),
    ));
    rows.push(row(
        "out_of_session".into(),
        part.iter().filter(|o| !in_session(o)).collect(),
    ));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{settle, Bid};
    use crate::model::{Regime, RoundSchedule, TimeMs};

    fn eth(s: &str) -> EthAmount {
        s.parse().unwrap()
    }

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn record(index: u64, regime: Regime, bids: &[(&str, &str)]) -> RoundRecord {
        let round = RoundSchedule::default().round_bounds(index);
        let bids: Vec<Bid> = bids
            .iter()
            .enumerate()
            .map(|(i, (who, amt))| Bid {
                bidder: id(who),
                amount: eth(amt),
                submitted_at: round.start + i as u64,
                round_index: index,
            })
            .collect();
        RoundRecord {
            regime,
            outcome: settle(&bids, eth("0.001"), round),
            eth_usd: Some(2_000.0),
        }
    }

    #[test]
    fn gap_arithmetic() {
        let r = record(1, Regime::PreKairos, &[("a", "0.008"), ("b", "0.005")]);
        assert_eq!(relative_bid_gap(&r.outcome), Some(0.375));
        let r = record(1, Regime::PreKairos, &[("a", "0.005"), ("b", "0.005")]);
        assert_eq!(relative_bid_gap(&r.outcome), Some(0.0));
        let r = record(1, Regime::PreKairos, &[("a", "0.0005")]);
        assert_eq!(relative_bid_gap(&r.outcome), None);
    }

    #[test]
    fn single_round_full_share() {
        let rows = win_shares(&[record(1, Regime::Kairos, &[("a", "0.002")])]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].share, Some(1.0));
        assert_eq!(rows[1].period, ALL);
    }

    #[test]
    fn combinations_partition_rounds() {
        let tracked = [id("wm"), id("sel"), id("kai")];
        let rounds = [
            record(1, Regime::PreKairos, &[("wm", "0.002"), ("sel", "0.003")]),
            record(2, Regime::PreKairos, &[]),
            record(3, Regime::PreKairos, &[("x", "0.002")]),
            record(4, Regime::PreKairos, &[("kai", "0.004"), ("x", "0.002")]),
        ];
        let rows = bidder_combinations(&rounds, &tracked);
        let labels: Vec<&str> = rows
            .iter()
            .take(8)
            .map(|r| r.combination.as_str())
            .collect();
        assert_eq!(
            labels,
            [
                "None",
                "wm",
                "sel",
                "kai",
                "wm+sel",
                "wm+kai",
                "sel+kai",
                "wm+sel+kai"
            ]
        );
        let get = |c: &str| {
            rows.iter()
                .find(|r| r.combination == c && r.period == ALL)
                .unwrap()
        };
        assert_eq!(get("None").rounds, 2);
        assert_eq!(get("None").with_other_bidders, 1);
        assert_eq!(get("wm+sel").rounds, 1);
        assert_eq!(get("kai").with_other_bidders, 1);
        let total: usize = rows
            .iter()
            .filter(|r| r.period == ALL)
            .map(|r| r.rounds)
            .sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn loss_profile_counts() {
        let kai = id("kai");
        // round 870 starts at 14:30:51 UTC on day 0, round 0 at 00:00:51
        let rounds = [
            record(870, Regime::Kairos, &[("kai", "0.004"), ("wm", "0.005")]),
            record(871, Regime::Kairos, &[("kai", "0.004")]),
            record(0, Regime::Kairos, &[("kai", "0.004")]),
        ];
        let rows = hourly_loss_profile(&rounds, &kai, SessionWindow::default());
        let inside = rows.iter().find(|r| r.bucket == "in_session").unwrap();
        let outside = rows.iter().find(|r| r.bucket == "out_of_session").unwrap();
        assert_eq!((inside.participated, inside.lost), (2, 1));
        assert_eq!(inside.loss_rate, Some(0.5));
        assert_eq!((outside.participated, outside.lost), (1, 0));
        assert_eq!(rows[14].participated, 2);
        assert_eq!(TimeMs(870 * 60_000 + 51_000).minute_of_day(), 870);
    }

    #[test]
    fn distribution_per_entity() {
        let rounds = [
            record(1, Regime::PreKairos, &[("wm", "0.002"), ("sel", "0.003")]),
            record(2, Regime::PreKairos, &[("wm", "0.004")]),
        ];
        let rows = bid_distribution(&rounds);
        let wm = rows
            .iter()
            .find(|r| r.entity == "wm" && r.period == ALL)
            .unwrap();
        assert_eq!(wm.n, 2);
        assert!((wm.median_eth - 0.003).abs() < 1e-15);
    }

    #[test]
    fn near_reserve_is_exact() {
        let r = record(1, Regime::Kairos, &[("kai", "0.004"), ("sel", "0.0011")]);
        assert!(paid_near_reserve(&r.outcome));
        let r = record(
            1,
            Regime::Kairos,
            &[("kai", "0.004"), ("sel", "0.001100000000000001")],
        );
        assert!(!paid_near_reserve(&r.outcome));
    }
}
