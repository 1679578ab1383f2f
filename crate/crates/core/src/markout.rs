//! Markout PnL: a trade valued at mid prices a fixed horizon after execution.

use serde::Serialize;

use crate::model::{EntityId, TimeMs, TokenAmount, UsdAmount};
use crate::price::{PriceBook, PriceError};
use crate::sequencer::Lane;

/// Default markout horizon.
pub const DEFAULT_HORIZON_MS: u64 = 5_000;

/// A swap receiving `x` units of `buy_asset` for `y` units of `sell_asset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trade {
    pub trade_id: String,
    pub time: TimeMs,
    pub buy_asset: String,
    pub x: TokenAmount,
    pub sell_asset: String,
    pub y: TokenAmount,
    pub fees: UsdAmount,
    pub lane: Lane,
    pub sender: EntityId,
}

impl Trade {
    /// Rejects negative quantities and fees.
    pub fn validate(&self) -> Result<(), String> {
        if self.x.is_negative() || self.y.is_negative() {
            return Err(format!("trade {}: negative token quantity", self.trade_id));
        }
        if self.fees.is_negative() {
            return Err(format!("trade {}: negative fees", self.trade_id));
        }
        Ok(())
    }
}

/// Π = x·P_A(t+m) − y·P_B(t+m) − fees, using the last price sample at or
/// before `t + m`.
pub fn markout_pnl(trade: &Trade, book: &PriceBook, horizon_ms: u64) -> Result<f64, PriceError> {
    let at = trade.time + horizon_ms;
    let pa = book.usd_price(&trade.buy_asset, at)?;
    let pb = book.usd_price(&trade.sell_asset, at)?;
    Ok(trade.x.to_f64() * pa - trade.y.to_f64() * pb - trade.fees.to_f64())
}

/// Markouts for a trade set, split into priced trades and trades the price
/// data could not cover.
#[derive(Debug, Clone, Default)]
pub struct MarkoutSet {
    /// `(trade index, Π)` in input order.
    pub priced: Vec<(usize, f64)>,
    pub excluded: Vec<(usize, PriceError)>,
}

pub fn markout_all(trades: &[Trade], book: &PriceBook, horizon_ms: u64) -> MarkoutSet {
    let mut out = MarkoutSet::default();
    for (i, t) in trades.iter().enumerate() {
        match markout_pnl(t, book, horizon_ms) {
            Ok(pi) => out.priced.push((i, pi)),
            Err(e) => out.excluded.push((i, e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::price::PriceSeries;

    fn trade(x: &str, y: &str, fees: &str, t: u64) -> Trade {
        Trade {
            trade_id: "t".into(),
            time: TimeMs(t),
            buy_asset: "WETH".into(),
            x: x.parse().unwrap(),
            sell_asset: "USDT".into(),
            y: y.parse().unwrap(),
            fees: fees.parse().unwrap(),
            lane: Lane::Regular,
            sender: EntityId::new("a").unwrap(),
        }
    }

    fn book() -> PriceBook {
        let mut b = PriceBook::new();
        b.insert(
            PriceSeries::new(
                "ETH",
                TimeMs(0),
                vec![
                    3_000.0, 3_000.0, 3_000.0, 3_000.0, 3_000.0, 3_010.0, 3_020.0,
                ],
            )
            .unwrap(),
        );
        b
    }

    #[test]
    fn empty_trade_is_zero() {
        assert_eq!(
            markout_pnl(&trade("0", "0", "0", 0), &book(), 5_000).unwrap(),
            0.0
        );
    }

    #[test]
    fn direct_substitution() {
        let pi = markout_pnl(&trade("2", "6000", "2", 0), &book(), 5_000).unwrap();
        assert!((pi - 18.0).abs() < 1e-9);
    }

    #[test]
    fn uses_stale_sample_never_future() {
        // t + m = 5 999 ms falls between the samples at 5 000 and 6 000
        let pi = markout_pnl(&trade("1", "0", "0", 999), &book(), 5_000).unwrap();
        assert_eq!(pi, 3_010.0);
    }

    #[test]
    fn missing_coverage_is_excluded() {
        let trades = vec![trade("1", "1", "0", 0), trade("1", "1", "0", 10_000)];
        let set = markout_all(&trades, &book(), 5_000);
        assert_eq!(set.priced.len(), 1);
        assert_eq!(set.excluded.len(), 1);
        assert_eq!(set.excluded[0].0, 1);
    }

    #[test]
    fn linear_in_quantities() {
        let a = markout_pnl(&trade("1.5", "4000", "3", 0), &book(), 5_000).unwrap();
        let b = markout_pnl(&trade("3", "8000", "6", 0), &book(), 5_000).unwrap();
        assert!((2.0 * a - b).abs() < 1e-9);
    }
}
