//! Reserve-price policies, counterfactual revenue replay and grid
//! calibration of the volatility-indexed rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EthAmount, RoundBounds, TimeMs};
use crate::price::VolatilitySource;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveStep {
    pub start_utc_ms: TimeMs,
    pub amount: EthAmount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReservePolicy {
    Fixed {
        amount: EthAmount,
    },
    Schedule {
        steps: Vec<ReserveStep>,
    },
    /// `clamp(c * sigma^2, floor, cap)` in whole gwei, with sigma the
    /// realized one-second volatility over `window_ms` ending at bid close.
    VolIndexed {
        c: f64,
        window_ms: u64,
        #[serde(default = "default_floor")]
        floor: EthAmount,
        #[serde(default = "default_cap")]
        cap: EthAmount,
    },
}

pub fn default_floor() -> EthAmount {
    EthAmount::from_raw(crate::model::SCALE / 1_000)
}

pub fn default_cap() -> EthAmount {
    EthAmount::whole(1)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReserveError {
    #[error("invalid reserve policy: {0}")]
    InvalidPolicy(String),
    #[error("calibration needs at least one round with a bid")]
    EmptyData,
    #[error("calibration grid is empty")]
    EmptyGrid,
    #[error("invalid calibration grid: {0}")]
    InvalidGrid(String),
}

/// A reserve value and whether it came from a fallback rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReserveQuote {
    pub amount: EthAmount,
    /// Volatility data was missing (floor used), or the round precedes the
    /// first schedule step (first step used).
    pub fallback: bool,
}

impl ReservePolicy {
    pub fn fixed(amount: EthAmount) -> Self {
        ReservePolicy::Fixed { amount }
    }

    /// Checks the invariants required for running an auction: every amount
    /// positive, schedule strictly increasing, `floor <= cap`.
    pub fn validate(&self) -> Result<(), ReserveError> {
        let bad = |m: &str| Err(ReserveError::InvalidPolicy(m.into()));
        match self {
            ReservePolicy::Fixed { amount } if !amount.is_positive() => {
                bad("fixed reserve must be positive")
            }
            ReservePolicy::Schedule { steps } => {
                if steps.is_empty() {
                    return bad("schedule needs at least one step");
                }
                if steps.iter().any(|s| !s.amount.is_positive()) {
                    return bad("schedule amounts must be positive");
                }
                if steps
                    .windows(2)
                    .any(|w| w[1].start_utc_ms <= w[0].start_utc_ms)
                {
                    return bad("schedule steps must have strictly increasing start times");
                }
                Ok(())
            }
            ReservePolicy::VolIndexed {
                c,
                window_ms,
                floor,
                cap,
            } => {
                if !(c.is_finite() && *c >= 0.0) {
                    return bad("c must be non-negative");
                }
                if *window_ms < 2_000 {
                    return bad("volatility window must be at least 2 s");
                }
                if !floor.is_positive() || floor > cap {
                    return bad("need 0 < floor <= cap");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Volatility window this policy reads, if any.
    pub fn vol_window_ms(&self) -> Option<u64> {
        match self {
            ReservePolicy::VolIndexed { window_ms, .. } => Some(*window_ms),
            _ => None,
        }
    }
}

/// Reserve in force for `round`.
pub fn reserve_at(
    policy: &ReservePolicy,
    round: &RoundBounds,
    vol: Option<&dyn VolatilitySource>,
) -> ReserveQuote {
    match policy {
        ReservePolicy::Fixed { amount } => ReserveQuote {
            amount: *amount,
            fallback: false,
        },
        ReservePolicy::Schedule { steps } => {
            let idx = steps.partition_point(|s| s.start_utc_ms <= round.start);
            match idx {
                0 => ReserveQuote {
                    amount: steps.first().map_or(EthAmount::ZERO, |s| s.amount),
                    fallback: true,
                },
                i => ReserveQuote {
                    amount: steps[i - 1].amount,
                    fallback: false,
                },
            }
        }
        ReservePolicy::VolIndexed {
            c,
            window_ms,
            floor,
            cap,
        } => match vol.map(|v| v.sigma(round.bid_close, *window_ms)) {
            Some(Ok(sigma)) => ReserveQuote {
                amount: vol_indexed(*c, sigma, *floor, *cap),
                fallback: false,
            },
            _ => ReserveQuote {
                amount: *floor,
                fallback: true,
            },
        },
    }
}

/// Raw units per gwei.
const GWEI: i128 = 1_000_000_000;

/// `c * sigma^2` truncated to whole gwei, then clamped. Truncation keeps
/// floating-point noise out of the fixed-point reserve.
pub fn vol_indexed(c: f64, sigma: f64, floor: EthAmount, cap: EthAmount) -> EthAmount {
    from_sigma_sq(c * sigma * sigma).clamp(floor, cap)
}

fn from_sigma_sq(value: f64) -> EthAmount {
    let raw = EthAmount::from_f64(value).raw();
    EthAmount::from_raw(raw - raw.rem_euclid(GWEI))
}

/// Auction data held fixed during a counterfactual replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HistoricalRound {
    pub round_start: TimeMs,
    pub bid_close: TimeMs,
    pub top_bid: EthAmount,
    /// Absent when the round had a single admissible bid.
    pub second_bid: Option<EthAmount>,
}

impl HistoricalRound {
    fn bounds(&self) -> RoundBounds {
        RoundBounds {
            index: 0,
            start: self.round_start,
            bid_close: self.bid_close,
            end: self.bid_close,
        }
    }

    /// Second-price revenue under reserve `r`.
    pub fn revenue_under(&self, r: EthAmount) -> EthAmount {
        if self.top_bid >= r {
            self.second_bid.map_or(r, |s| s.max(r))
        } else {
            EthAmount::ZERO
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplayResult {
    pub revenue: EthAmount,
    /// Sum of top bids.
    pub benchmark: EthAmount,
    pub recovery_ratio: f64,
    pub sales: usize,
    pub fallbacks: usize,
}

/// Revenue the policy would have raised with bids held fixed.
pub fn replay_revenue(
    policy: &ReservePolicy,
    rounds: &[HistoricalRound],
    vol: Option<&dyn VolatilitySource>,
) -> ReplayResult {
    let mut revenue = EthAmount::ZERO;
    let mut benchmark = EthAmount::ZERO;
    let (mut sales, mut fallbacks) = (0, 0);
    for round in rounds {
        let quote = reserve_at(policy, &round.bounds(), vol);
        fallbacks += usize::from(quote.fallback);
        if round.top_bid >= quote.amount {
            sales += 1;
        }
        revenue += round.revenue_under(quote.amount);
        benchmark += round.top_bid;
    }
    ReplayResult {
        revenue,
        benchmark,
        recovery_ratio: revenue.ratio(benchmark).unwrap_or(0.0),
        sales,
        fallbacks,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationGrid {
    pub windows_s: Vec<u64>,
    pub c_values: Vec<f64>,
    #[serde(default = "default_floor")]
    pub floor: EthAmount,
    #[serde(default = "default_cap")]
    pub cap: EthAmount,
}

impl CalibrationGrid {
    pub fn validate(&self) -> Result<(), ReserveError> {
        if self.windows_s.is_empty() || self.c_values.is_empty() {
            return Err(ReserveError::EmptyGrid);
        }
        if self.windows_s.iter().any(|w| *w < 2) {
            return Err(ReserveError::InvalidGrid(
                "windows must be at least 2 s".into(),
            ));
        }
        if self.c_values.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(ReserveError::InvalidGrid(
                "c values must be non-negative".into(),
            ));
        }
        if self.floor.is_negative() || self.floor > self.cap {
            return Err(ReserveError::InvalidGrid("need 0 <= floor <= cap".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub window_s: u64,
    pub c: f64,
    pub recovery_ratio: f64,
    pub revenue: EthAmount,
    pub sales: usize,
    /// Rounds whose volatility window was not covered (floor used).
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    /// Cells in window-major order, each axis in the order given.
    pub grid: Vec<GridCell>,
    pub best: GridCell,
    pub benchmark: EthAmount,
    pub rounds: usize,
}

/// Evaluates every `(window, c)` cell and picks the highest recovery ratio;
/// ties go to the smaller `c`, then the smaller window. Cells are evaluated
/// in parallel on the current rayon pool; the result does not depend on the
/// number of threads.
pub fn calibrate<V: VolatilitySource + Sync>(
    rounds: &[HistoricalRound],
    vol: &V,
    grid: &CalibrationGrid,
) -> Result<CalibrationReport, ReserveError> {
    grid.validate()?;
    if rounds.is_empty() {
        return Err(ReserveError::EmptyData);
    }
    let benchmark: EthAmount = rounds.iter().map(|r| r.top_bid).sum();
    if !benchmark.is_positive() {
        return Err(ReserveError::EmptyData);
    }

    let per_window: Vec<Vec<GridCell>> = grid
        .windows_s
        .par_iter()
        .map(|&window_s| {
            let sigma_sq: Vec<Option<f64>> = rounds
                .iter()
                .map(|r| vol.sigma(r.bid_close, window_s * 1_000).ok().map(|s| s * s))
                .collect();
            grid.c_values
                .iter()
                .map(|&c| {
                    let mut revenue = EthAmount::ZERO;
                    let (mut sales, mut fallbacks) = (0, 0);
                    for (round, s2) in rounds.iter().zip(&sigma_sq) {
                        let reserve = match s2 {
                            Some(s2) => from_sigma_sq(c * s2).clamp(grid.floor, grid.cap),
                            None => {
                                fallbacks += 1;
                                grid.floor
                            }
                        };
                        if round.top_bid >= reserve {
                            sales += 1;
                        }
                        revenue += round.revenue_under(reserve);
                    }
                    GridCell {
                        window_s,
                        c,
                        recovery_ratio: revenue.ratio(benchmark).unwrap_or(0.0),
                        revenue,
                        sales,
                        fallbacks,
                    }
                })
                .collect()
        })
        .collect();
    let cells: Vec<GridCell> = per_window.into_iter().flatten().collect();

    let best = *cells
        .iter()
        .reduce(|best, cell| {
            let better = cell.revenue > best.revenue
                || (cell.revenue == best.revenue
                    && (cell.c < best.c || (cell.c == best.c && cell.window_s < best.window_s)));
            if better {
                cell
            } else {
                best
            }
        })
        .expect("grid is non-empty");

    Ok(CalibrationReport {
        grid: cells,
        best,
        benchmark,
        rounds: rounds.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{timeline, RoundSchedule};
    use crate::price::{PriceError, PriceSeries};

    fn eth(s: &str) -> EthAmount {
        s.parse().unwrap()
    }

    struct ConstVol(f64);

    impl VolatilitySource for ConstVol {
        fn sigma(&self, _end: TimeMs, _window_ms: u64) -> Result<f64, PriceError> {
            Ok(self.0)
        }
    }

    fn round_at(t: TimeMs) -> RoundBounds {
        let s = RoundSchedule::default();
        s.round_bounds(s.round_containing(t).unwrap())
    }

    fn timeline_schedule() -> ReservePolicy {
        ReservePolicy::Schedule {
            steps: vec![
                ReserveStep {
                    start_utc_ms: timeline::STUDY_START,
                    amount: eth("0.001"),
                },
                ReserveStep {
                    start_utc_ms: timeline::RESERVE_RAISED,
                    amount: eth("0.0075"),
                },
                ReserveStep {
                    start_utc_ms: timeline::RESERVE_REVERTED,
                    amount: eth("0.001"),
                },
            ],
        }
    }

    #[test]
    fn schedule_lookup() {
        let p = timeline_schedule();
        p.validate().unwrap();
        // 2026-02-20 00:00:00 UTC
        let q = reserve_at(&p, &round_at(TimeMs(1_771_545_600_000)), None);
        assert_eq!(q.amount, eth("0.0075"));
        assert!(!q.fallback);
        let q = reserve_at(&p, &round_at(timeline::RESERVE_REVERTED), None);
        assert_eq!(q.amount, eth("0.001"));
        let q = reserve_at(&p, &round_at(TimeMs(1_000_000)), None);
        assert!(q.fallback);
    }

    #[test]
    fn vol_indexed_clamps() {
        let p = ReservePolicy::VolIndexed {
            c: 2.0,
            window_ms: 60_000,
            floor: eth("0.001"),
            cap: eth("1"),
        };
        let r = round_at(TimeMs(10_000_000));
        assert_eq!(
            reserve_at(&p, &r, Some(&ConstVol(0.0))).amount,
            eth("0.001")
        );
        assert_eq!(
            reserve_at(&p, &r, Some(&ConstVol(0.01))).amount,
            eth("0.001")
        );
        assert_eq!(reserve_at(&p, &r, Some(&ConstVol(0.1))).amount, eth("0.02"));
        assert_eq!(reserve_at(&p, &r, Some(&ConstVol(10.0))).amount, eth("1"));
    }

    #[test]
    fn missing_vol_falls_back_to_floor() {
        let p = ReservePolicy::VolIndexed {
            c: 2.0,
            window_ms: 60_000,
            floor: eth("0.001"),
            cap: eth("1"),
        };
        let series = PriceSeries::new("ETH", TimeMs(0), vec![1.0; 10]).unwrap();
        let q = reserve_at(&p, &round_at(TimeMs(10_000_000)), Some(&series));
        assert_eq!(q.amount, eth("0.001"));
        assert!(q.fallback);
        assert!(reserve_at(&p, &round_at(TimeMs(10_000_000)), None).fallback);
    }

    fn hist(top: &str, second: Option<&str>) -> HistoricalRound {
        HistoricalRound {
            round_start: TimeMs(0),
            bid_close: TimeMs(45_000),
            top_bid: eth(top),
            second_bid: second.map(eth),
        }
    }

    #[test]
    fn zero_reserve_replays_pure_second_price() {
        let rounds = [hist("0.005", Some("0.002")), hist("0.003", Some("0.001"))];
        let r = replay_revenue(&ReservePolicy::fixed(EthAmount::ZERO), &rounds, None);
        assert_eq!(r.revenue, eth("0.003"));
        assert_eq!(r.benchmark, eth("0.008"));
    }

    #[test]
    fn universal_failure() {
        let rounds = [hist("0.005", Some("0.002"))];
        let r = replay_revenue(&ReservePolicy::fixed(eth("1")), &rounds, None);
        assert_eq!(r.revenue, EthAmount::ZERO);
        assert_eq!(r.recovery_ratio, 0.0);
        assert_eq!(r.sales, 0);
    }

    #[test]
    fn single_cell_grid() {
        let rounds = [hist("0.005", None)];
        let grid = CalibrationGrid {
            windows_s: vec![60],
            c_values: vec![1.0],
            floor: EthAmount::ZERO,
            cap: eth("1"),
        };
        let report = calibrate(&rounds, &ConstVol(0.05), &grid).unwrap();
        assert_eq!(report.grid.len(), 1);
        assert_eq!(report.best, report.grid[0]);
        assert_eq!(report.best.revenue, eth("0.0025"));
    }

    #[test]
    fn empty_inputs_are_errors() {
        let grid = CalibrationGrid {
            windows_s: vec![60],
            c_values: vec![1.0],
            floor: EthAmount::ZERO,
            cap: eth("1"),
        };
        assert_eq!(
            calibrate(&[], &ConstVol(0.1), &grid),
            Err(ReserveError::EmptyData)
        );
        let empty = CalibrationGrid {
            c_values: vec![],
            ..grid
        };
        assert_eq!(
            calibrate(&[hist("0.1", None)], &ConstVol(0.1), &empty),
            Err(ReserveError::EmptyGrid)
        );
    }

    #[test]
    fn ties_prefer_smaller_c_then_window() {
        // every cell fails to sell except none; all revenue zero -> first by c, window
        let rounds = [hist("0.0001", None)];
        let grid = CalibrationGrid {
            windows_s: vec![300, 60],
            c_values: vec![5.0, 3.0],
            floor: eth("1"),
            cap: eth("1"),
        };
        let report = calibrate(&rounds, &ConstVol(0.1), &grid).unwrap();
        assert_eq!((report.best.window_s, report.best.c), (60, 3.0));
    }

    #[test]
    fn policy_validation() {
        assert!(ReservePolicy::fixed(EthAmount::ZERO).validate().is_err());
        assert!(ReservePolicy::Schedule { steps: vec![] }
            .validate()
            .is_err());
        let p = ReservePolicy::VolIndexed {
            c: 1.0,
            window_ms: 60_000,
            floor: eth("2"),
            cap: eth("1"),
        };
        assert!(p.validate().is_err());
    }
}
