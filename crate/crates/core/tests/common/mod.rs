//! Independent oracles and fixture helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use laneboost::analytics::SurplusRow;
use laneboost::auction::Bid;
use laneboost::config::ReplayConfig;
use laneboost::model::{EntityId, EthAmount, RoundBounds, RoundSchedule, TimeMs, UsdAmount};
use laneboost::replay::{replay, ReplayInputs, ReplayOutput};

pub fn id(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

pub fn eth(s: &str) -> EthAmount {
    s.parse().unwrap()
}

pub fn usd(s: &str) -> UsdAmount {
    s.parse().unwrap()
}

/// Random bid set for round `idx`: up to 8 bids from up to 5 bidders, some
/// outside the window, in the wrong round or non-positive.
pub fn random_round(rng: &mut ChaCha8Rng, idx: u64) -> (Vec<Bid>, EthAmount, RoundBounds) {
    let bounds = RoundSchedule::default().round_bounds(idx);
    let n = rng.random_range(0..=8);
    let bidders = ["a", "b", "c", "d", "e"];
    let bids = (0..n)
        .map(|_| {
            let at = match rng.random_range(0..10) {
                0 => bounds.start.0.saturating_sub(rng.random_range(1..5_000)),
                1 => bounds.bid_close.0 + rng.random_range(0..5_000),
                // few distinct timestamps so that ties occur
                _ => bounds.start.0 + 1_000 * rng.random_range(0..45),
            };
            let milli = match rng.random_range(0..10) {
                0 => 0,
                1 => -1,
                _ => rng.random_range(1..12i128),
            };
            Bid {
                bidder: id(bidders[rng.random_range(0..bidders.len())]),
                amount: EthAmount::from_raw(milli * 1_000_000_000_000_000),
                submitted_at: TimeMs(at),
                round_index: if rng.random_range(0..20) == 0 {
                    idx + 1
                } else {
                    idx
                },
            }
        })
        .collect();
    let reserve = EthAmount::from_raw(rng.random_range(1..6i128) * 1_000_000_000_000_000);
    (bids, reserve, bounds)
}

/// Brute force: keep each bidder's last admissible bid, pick the best and
/// the runner-up by repeated linear scans, then apply the reserve.
pub fn oracle_settle(
    bids: &[Bid],
    reserve: EthAmount,
    round: RoundBounds,
) -> (Option<EntityId>, Option<EthAmount>) {
    let admissible: Vec<&Bid> = bids
        .iter()
        .filter(|b| {
            b.round_index == round.index
                && b.submitted_at >= round.start
                && b.submitted_at < round.bid_close
                && b.amount > EthAmount::ZERO
        })
        .collect();
    let mut last: Vec<&Bid> = Vec::new();
    for b in &admissible {
        let later = admissible
            .iter()
            .any(|o| o.bidder == b.bidder && o.submitted_at > b.submitted_at);
        if later {
            continue;
        }
        // among equal timestamps the one given last counts
        last.retain(|o| o.bidder != b.bidder);
        last.push(b);
    }
    let beats = |a: &Bid, b: &Bid| {
        a.amount > b.amount
            || (a.amount == b.amount
                && (a.submitted_at < b.submitted_at
                    || (a.submitted_at == b.submitted_at && a.bidder < b.bidder)))
    };
    let best = |pool: &[&Bid]| -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, b) in pool.iter().enumerate() {
            if best.is_none_or(|j| beats(b, pool[j])) {
                best = Some(i);
            }
        }
        best
    };
    let Some(i) = best(&last) else {
        return (None, None);
    };
    let top = last.remove(i);
    if top.amount < reserve {
        return (None, None);
    }
    let paid = match best(&last) {
        Some(j) if last[j].amount > reserve => last[j].amount,
        _ => reserve,
    };
    (Some(top.bidder.clone()), Some(paid))
}

/// Last sample at or before `t` by a linear scan.
pub fn scan_price(samples: &[(u64, f64)], t: u64) -> Option<f64> {
    let mut found = None;
    for &(ts, p) in samples {
        if ts <= t {
            found = Some(p);
        }
    }
    found
}

/// Two-pass sample Pearson correlation.
pub fn textbook_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Two-sided Student-t tail probability by quadrature of the unnormalized
/// density, mapped onto [0, 1).
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    let kernel = |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let tail_from = |a: f64| {
        simpson(
            |u| {
                if u >= 1.0 {
                    0.0
                } else {
                    let x = a + u / (1.0 - u);
                    kernel(x) / ((1.0 - u) * (1.0 - u))
                }
            },
            0.0,
            1.0,
            400_000,
        )
    };
    (tail_from(t.abs()) / tail_from(0.0)).min(1.0)
}

/// Checks the surplus identity on every row and that regime rows sum to
/// the whole-period row, per scope.
pub fn check_surplus(rows: &[SurplusRow]) -> Result<(), String> {
    for r in rows {
        if r.net_surplus_usd + r.tx_fees_usd + r.bids_paid_usd != r.total_pnl_usd {
            return Err(format!("{} / {} does not balance", r.period, r.scope));
        }
    }
    for scope in ["all", "express"] {
        let (parts, whole): (Vec<&SurplusRow>, Vec<&SurplusRow>) = rows
            .iter()
            .filter(|r| r.scope == scope)
            .partition(|r| r.period != "All");
        let Some(whole) = whole.first() else {
            if parts.is_empty() {
                continue;
            }
            return Err(format!("{scope}: no All row"));
        };
        let sum = |f: fn(&SurplusRow) -> UsdAmount| parts.iter().map(|r| f(r)).sum::<UsdAmount>();
        if sum(|r| r.total_pnl_usd) != whole.total_pnl_usd
            || sum(|r| r.tx_fees_usd) != whole.tx_fees_usd
            || sum(|r| r.bids_paid_usd) != whole.bids_paid_usd
            || sum(|r| r.net_surplus_usd) != whole.net_surplus_usd
        {
            return Err(format!("{scope}: regime rows do not compose"));
        }
    }
    Ok(())
}

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn preset_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets")
}

pub struct Replayed {
    pub cfg: ReplayConfig,
    pub inputs: ReplayInputs,
    pub out: ReplayOutput,
}

/// Replays a committed fixture directory, using `payments.csv` when present.
pub fn replay_fixture(name: &str) -> Replayed {
    let dir = fixture_dir(name);
    let cfg = ReplayConfig::load(&dir.join("config.toml")).unwrap();
    let payments = dir.join("payments.csv");
    let inputs = ReplayInputs::load(
        &dir.join("auctions.csv"),
        Some(&dir.join("trades.csv")),
        &dir.join("prices.csv"),
        payments.exists().then_some(payments.as_path()),
    )
    .unwrap();
    let out = replay(&cfg, &inputs).unwrap();
    Replayed { cfg, inputs, out }
}
