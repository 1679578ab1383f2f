//! Replay of ingested auction, trade, price and payment data through the
//! same settlement and analytics code used by the simulator.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::{classify_cex_dex, PaymentRecord, RoundRecord, SwapRecord, TradeRecord};
use crate::auction::{settle, Bid};
use crate::config::ReplayConfig;
use crate::io::{
    columns, read_rows, AuctionRow, ExclusionRow, IoError, PaymentRow, PriceRow, ReceiptRow,
    RoundRow, TradeRow, TRADE_BASE_COLUMNS,
};
use crate::markout::{markout_pnl, Trade};
use crate::model::{ModelError, UsdAmount};
use crate::price::{
    canonical_asset, PriceBook, PriceError, PriceSeries, RollingVol, VolatilitySource,
};
use crate::report::{
    add_analytics, add_records, round_vol_rows, Bundle, Dataset, DatasetMeta, Format,
};
use crate::resale::Channel;
use crate::reserve::{reserve_at, HistoricalRound};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{file}: {source}")]
    Price {
        file: String,
        #[source]
        source: PriceError,
    },
    #[error("{file}:{line}: {msg}")]
    Input {
        file: String,
        line: u64,
        msg: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A reseller payment as ingested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PaymentInput {
    Observed(PaymentRow),
    Receipt(ReceiptRow),
}

#[derive(Debug, Clone, Default)]
pub struct ReplayInputs {
    pub auctions: Vec<(u64, AuctionRow)>,
    pub auctions_file: String,
    pub trades: Vec<(u64, TradeRow)>,
    pub prices: PriceBook,
    pub payments: Vec<PaymentInput>,
}

pub fn read_auctions(path: &Path) -> Result<Vec<(u64, AuctionRow)>, IoError> {
    Ok(read_rows(path, &[columns::<AuctionRow>()])?.rows)
}

pub fn read_trades(path: &Path) -> Result<Vec<(u64, TradeRow)>, IoError> {
    let all = columns::<TradeRow>();
    Ok(read_rows(path, &[&all[..TRADE_BASE_COLUMNS], all])?.rows)
}

/// Accepts observed payments (`tx_hash,utc_ms,payment_eth`) or reseller
/// receipts.
pub fn read_payments(path: &Path) -> Result<Vec<PaymentInput>, IoError> {
    match read_rows::<PaymentRow>(path, &[columns::<PaymentRow>()]) {
        Ok(p) => Ok(p
            .rows
            .into_iter()
            .map(|(_, r)| PaymentInput::Observed(r))
            .collect()),
        Err(IoError::Header { .. }) => {
            let layouts: &[&[&str]] = &[columns::<PaymentRow>(), columns::<ReceiptRow>()];
            let p = read_rows::<ReceiptRow>(path, layouts)?;
            Ok(p.rows
                .into_iter()
                .map(|(_, r)| PaymentInput::Receipt(r))
                .collect())
        }
        Err(e) => Err(e),
    }
}

/// One series per canonical asset; samples may come in any order.
pub fn read_prices(path: &Path) -> Result<PriceBook, ReplayError> {
    let rows = read_rows::<PriceRow>(path, &[columns::<PriceRow>()])?.rows;
    let mut by_asset: BTreeMap<String, Vec<(crate::model::TimeMs, f64)>> = BTreeMap::new();
    for (_, r) in rows {
        by_asset
            .entry(canonical_asset(&r.asset))
            .or_default()
            .push((r.utc_ms, r.mid_price));
    }
    let mut book = PriceBook::new();
    for (asset, mut samples) in by_asset {
        samples.sort_by_key(|s| s.0);
        let series =
            PriceSeries::from_samples(asset, &samples).map_err(|source| ReplayError::Price {
                file: path.display().to_string(),
                source,
            })?;
        book.insert(series);
    }
    Ok(book)
}

/// Rounds with a top bid from a `rounds.csv` file, for calibration.
pub fn read_historical_rounds(path: &Path) -> Result<Vec<HistoricalRound>, IoError> {
    let rows = read_rows::<RoundRow>(path, &[columns::<RoundRow>()])?.rows;
    Ok(rows
        .into_iter()
        .filter_map(|(_, r)| {
            Some(HistoricalRound {
                round_start: r.round_start_utc_ms,
                bid_close: r.bid_close_utc_ms,
                top_bid: r.top_bid_eth?,
                second_bid: r.second_bid_eth,
            })
        })
        .collect())
}

impl ReplayInputs {
    pub fn load(
        auctions: &Path,
        trades: Option<&Path>,
        prices: &Path,
        payments: Option<&Path>,
    ) -> Result<Self, ReplayError> {
        Ok(Self {
            auctions: read_auctions(auctions)?,
            auctions_file: auctions.display().to_string(),
            trades: trades.map(read_trades).transpose()?.unwrap_or_default(),
            prices: read_prices(prices)?,
            payments: payments.map(read_payments).transpose()?.unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub rounds: Vec<RoundRecord>,
    pub bids: Vec<Bid>,
    pub trades: Vec<TradeRecord>,
    pub exclusions: Vec<ExclusionRow>,
    pub payments: Vec<PaymentRecord>,
    pub reserve_fallbacks: usize,
}

/// Settles every round present in the auction data with the configured
/// reserve, classifies and marks out trades, and prices reseller payments.
pub fn replay(cfg: &ReplayConfig, inputs: &ReplayInputs) -> Result<ReplayOutput, ReplayError> {
    let schedule = &cfg.schedule;
    let reference = inputs.prices.get(&cfg.reference_asset);
    let vol = reference.cloned().map(RollingVol::new);

    let mut by_round: BTreeMap<u64, Vec<Bid>> = BTreeMap::new();
    for (line, row) in &inputs.auctions {
        let idx = schedule
            .round_starting_at(row.round_start_utc_ms)
            .ok_or_else(|| ReplayError::Input {
                file: inputs.auctions_file.clone(),
                line: *line,
                msg: format!(
                    "`round_start_utc_ms` {} is not a round start",
                    row.round_start_utc_ms
                ),
            })?;
        by_round.entry(idx).or_default().push(Bid {
            bidder: row.bidder.clone(),
            amount: row.amount_eth,
            submitted_at: row.submitted_utc_ms,
            round_index: idx,
        });
    }
    let eth_usd = |t| inputs.prices.usd_price(&cfg.reference_asset, t).ok();
    let mut rounds = Vec::with_capacity(by_round.len());
    let mut bids = Vec::new();
    let mut reserve_fallbacks = 0;
    for (idx, round_bids) in by_round {
        let bounds = schedule.round_bounds(idx);
        let quote = reserve_at(
            &cfg.reserve,
            &bounds,
            vol.as_ref().map(|v| v as &dyn VolatilitySource),
        );
        reserve_fallbacks += usize::from(quote.fallback);
        rounds.push(RoundRecord {
            regime: cfg.regimes.regime_of(bounds.start)?,
            outcome: settle(&round_bids, quote.amount, bounds),
            eth_usd: eth_usd(bounds.bid_close),
        });
        bids.extend(round_bids);
    }

    let mut trades = Vec::new();
    let mut exclusions = Vec::new();
    for (_, row) in &inputs.trades {
        let mut exclude = |reason: &str, detail: String| {
            exclusions.push(ExclusionRow {
                trade_id: row.trade_id.clone(),
                reason: reason.into(),
                detail,
            })
        };
        let mut sender = row.sender.clone();
        if let Some(rules) = &cfg.classifier {
            let (Some(contract), Some(swap_events)) = (&row.contract, row.swap_events) else {
                exclude("unclassifiable", "missing contract or swap_events".into());
                continue;
            };
            let rec = SwapRecord {
                contract,
                swap_events,
                buy_asset: &row.buy_asset,
                sell_asset: &row.sell_asset,
            };
            if !classify_cex_dex(&rec, rules) {
                exclude("not_cex_dex", String::new());
                continue;
            }
            if let Some(e) = rules.entity_of(contract) {
                sender = e.clone();
            }
        }
        let trade = Trade {
            trade_id: row.trade_id.clone(),
            time: row.utc_ms,
            buy_asset: row.buy_asset.clone(),
            x: row.x,
            sell_asset: row.sell_asset.clone(),
            y: row.y,
            fees: row.fees_usd,
            lane: row.lane,
            sender,
        };
        if let Err(e) = trade.validate() {
            exclude("invalid", e);
            continue;
        }
        let regime = match cfg.regimes.regime_of(trade.time) {
            Ok(r) => r,
            Err(e) => {
                exclude("outside_regimes", e.to_string());
                continue;
            }
        };
        match markout_pnl(&trade, &inputs.prices, cfg.markout_horizon_ms) {
            Ok(pnl) => trades.push(TradeRecord {
                regime,
                trade,
                pnl: UsdAmount::from_f64(pnl),
                tx_fee: row.tx_fee_usd.unwrap_or(UsdAmount::ZERO),
            }),
            Err(e) => exclude("missing_price_coverage", e.to_string()),
        }
    }

    let mut payments = Vec::with_capacity(inputs.payments.len());
    for p in &inputs.payments {
        let (time, channel, amount) = match p {
            PaymentInput::Observed(r) => (r.utc_ms, Channel::OnChain, r.payment_eth),
            PaymentInput::Receipt(r) => (r.window_start_ms, r.channel, r.payment_eth),
        };
        payments.push(PaymentRecord {
            time,
            regime: cfg.regimes.regime_of(time)?,
            channel,
            amount,
            eth_usd: eth_usd(time),
        });
    }

    Ok(ReplayOutput {
        rounds,
        bids,
        trades,
        exclusions,
        payments,
        reserve_fallbacks,
    })
}

/// Input coverage of a replay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub name: String,
    pub rounds: usize,
    pub bids: usize,
    pub trades_in: usize,
    pub trades_priced: usize,
    pub excluded: BTreeMap<String, usize>,
    pub payments: usize,
    pub reserve_fallbacks: usize,
    pub reference_series: bool,
}

impl ReplayOutput {
    pub fn coverage(&self, cfg: &ReplayConfig, inputs: &ReplayInputs) -> Coverage {
        let mut excluded = BTreeMap::new();
        for e in &self.exclusions {
            *excluded.entry(e.reason.clone()).or_insert(0) += 1;
        }
        Coverage {
            name: cfg.name.clone(),
            rounds: self.rounds.len(),
            bids: self.bids.len(),
            trades_in: inputs.trades.len(),
            trades_priced: self.trades.len(),
            excluded,
            payments: self.payments.len(),
            reserve_fallbacks: self.reserve_fallbacks,
            reference_series: inputs.prices.get(&cfg.reference_asset).is_some(),
        }
    }

    /// Record files, analytics tables and the coverage report.
    pub fn bundle(&self, cfg: &ReplayConfig, inputs: &ReplayInputs, format: Format) -> Bundle {
        let tracked = if cfg.analytics.tracked.is_empty() {
            let mut seen = Vec::new();
            for b in &self.bids {
                if !seen.contains(&b.bidder) {
                    seen.push(b.bidder.clone());
                }
            }
            seen
        } else {
            cfg.analytics.tracked.clone()
        };
        let meta = DatasetMeta {
            schedule: cfg.schedule,
            reference_asset: cfg.reference_asset.clone(),
            tracked,
            reseller: cfg.analytics.reseller.clone(),
            session: cfg.analytics.session,
        };
        let mut b = Bundle::new();
        add_records(
            &mut b,
            &meta,
            &self.rounds,
            &self.bids,
            &self.trades,
            &self.payments,
        );
        let eth = inputs.prices.get(&cfg.reference_asset);
        if let Some(series) = eth {
            let vol = RollingVol::new(series.clone());
            b.add_table(
                "round_vol",
                &round_vol_rows(&self.rounds, &vol, cfg.analytics.round_vol_window_ms),
                Format::Csv,
            );
        }
        b.add_table("exclusions", &self.exclusions, Format::Csv);
        let ds = Dataset {
            rounds: &self.rounds,
            trades: &self.trades,
            payments: &self.payments,
            eth,
            tracked: meta.tracked.clone(),
            reseller: meta.reseller.clone(),
            session: meta.session,
        };
        add_analytics(&mut b, &ds, format);
        b.add_json("coverage.json", &self.coverage(cfg, inputs));
        b
    }
}
