//! Output bundles: analytics tables, record files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{
    bid_distribution, bidder_combinations, daily_gaps, gap_summary, hourly_loss_profile,
    hourly_points, pnl_summary, pnl_vol_corr, resale_revenue, surplus_decompose, vol_corr,
    win_shares, PaymentRecord, RoundRecord, SessionWindow, TradeRecord,
};
use crate::auction::{settle, Bid};
use crate::io::{
    columns, read_rows, to_csv_bytes, AuctionRow, CalibrationRow, IoError, MarkoutRow, PriceRow,
    ResellerPaymentRow, RoundRow, TradeRow, TRADE_BASE_COLUMNS,
};
use crate::markout::Trade;
use crate::model::{EntityId, EthAmount, Regime, RoundSchedule, TimeMs};
use crate::price::{PriceSeries, VolatilitySource};
use crate::reserve::{CalibrationReport, GridCell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Files of one output bundle, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_bytes(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    /// Adds `rows` as `<stem>.csv` or `<stem>.json`.
    pub fn add_table<T: Serialize + DeserializeOwned>(
        &mut self,
        stem: &str,
        rows: &[T],
        format: Format,
    ) {
        let bytes = match format {
            Format::Csv => to_csv_bytes(rows),
            Format::Json => json_bytes(&rows),
        };
        self.add_bytes(format!("{stem}.{}", format.extension()), bytes);
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        self.add_bytes(name, json_bytes(value));
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.files.iter().map(|(n, b)| (n.as_str(), b.as_slice()))
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    /// SHA-256 of every file, keyed by name.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.files
            .iter()
            .map(|(n, b)| (n.clone(), sha256_hex(b)))
            .collect()
    }

    /// Writes every file plus `manifest.json` (with output digests filled
    /// in) under `dir`.
    pub fn write(&self, dir: &Path, mut manifest: Manifest) -> Result<(), IoError> {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| IoError::io(&path, e))?;
        }
        manifest.outputs = self.digests();
        let path = dir.join("manifest.json");
        fs::write(&path, json_bytes(&manifest)).map_err(|e| IoError::io(&path, e))
    }
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallTime {
    pub start_utc_ms: u64,
    pub end_utc_ms: u64,
}

/// Provenance of a bundle. Wall-clock times are included only on request so
/// that bundles stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub name: String,
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<WallTime>,
}

impl Manifest {
    pub fn new(command: &str, name: &str) -> Self {
        Self {
            tool: "laneboost".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            name: name.into(),
            seed: None,
            config_sha256: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: Vec::new(),
            wall_time: None,
        }
    }
}

/// Hourly inputs of the volatility correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRow {
    pub hour_start_utc_ms: TimeMs,
    pub regime: String,
    pub vol: f64,
    pub rounds_with_bids: usize,
    pub mean_top_bid_eth: Option<f64>,
    pub mean_paid_bid_eth: Option<f64>,
    pub trades: usize,
    pub positive_pnl_usd: f64,
}

/// Inputs of the analytics tables.
pub struct Dataset<'a> {
    pub rounds: &'a [RoundRecord],
    pub trades: &'a [TradeRecord],
    pub payments: &'a [PaymentRecord],
    /// ETH/USD reference series; hourly tables are skipped without it.
    pub eth: Option<&'a PriceSeries>,
    pub tracked: Vec<EntityId>,
    pub reseller: Option<EntityId>,
    pub session: SessionWindow,
}

/// Adds every analytics table to `bundle`.
pub fn add_analytics(bundle: &mut Bundle, ds: &Dataset<'_>, format: Format) {
    bundle.add_table("gap_summary", &gap_summary(ds.rounds), format);
    bundle.add_table("daily_gaps", &daily_gaps(ds.rounds), format);
    bundle.add_table("rounds_won", &win_shares(ds.rounds), format);
    bundle.add_table(
        "bidder_combinations",
        &bidder_combinations(ds.rounds, &ds.tracked),
        format,
    );
    bundle.add_table("bid_distribution", &bid_distribution(ds.rounds), format);
    if let Some(eth) = ds.eth {
        let points = hourly_points(ds.rounds, ds.trades, eth);
        let rows: Vec<HourlyRow> = points
            .iter()
            .map(|p| HourlyRow {
                hour_start_utc_ms: p.hour_start,
                regime: p.regime.name().into(),
                vol: p.vol,
                rounds_with_bids: p.rounds_with_bids,
                mean_top_bid_eth: p.mean_top_bid,
                mean_paid_bid_eth: p.mean_paid_bid,
                trades: p.trades,
                positive_pnl_usd: p.pnl.values().sum(),
            })
            .collect();
        bundle.add_table("hourly", &rows, format);
        bundle.add_table("vol_corr", &vol_corr(&points), format);
        bundle.add_table("pnl_vol_corr", &pnl_vol_corr(&points), format);
    }
    bundle.add_table("pnl_summary", &pnl_summary(ds.trades), format);
    bundle.add_table("surplus", &surplus_decompose(ds.trades, ds.rounds), format);
    if let Some(r) = &ds.reseller {
        bundle.add_table(
            "loss_profile",
            &hourly_loss_profile(ds.rounds, r, ds.session),
            format,
        );
        bundle.add_table(
            "resale_revenue",
            &resale_revenue(r, ds.rounds, ds.payments),
            format,
        );
    }
}

pub fn round_rows(rounds: &[RoundRecord]) -> Vec<RoundRow> {
    rounds
        .iter()
        .map(|r| {
            let o = &r.outcome;
            RoundRow {
                round_index: o.round_index,
                round_start_utc_ms: o.bounds.start,
                bid_close_utc_ms: o.bounds.bid_close,
                regime: r.regime.name().into(),
                reserve_eth: o.reserve,
                bids: o.admissible_bid_count,
                winner: o.winner.clone(),
                top_bid_eth: o.top_bid,
                second_bid_eth: o.second_bid,
                paid_eth: o.paid,
                eth_usd: r.eth_usd,
            }
        })
        .collect()
}

/// Per-round realized volatility at bid close, as a tidy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundVolRow {
    pub round_start_utc_ms: TimeMs,
    pub window_ms: u64,
    pub sigma: Option<f64>,
}

pub fn round_vol_rows(
    rounds: &[RoundRecord],
    vol: &dyn VolatilitySource,
    window_ms: u64,
) -> Vec<RoundVolRow> {
    rounds
        .iter()
        .map(|r| RoundVolRow {
            round_start_utc_ms: r.outcome.bounds.start,
            window_ms,
            sigma: vol.sigma(r.outcome.bounds.bid_close, window_ms).ok(),
        })
        .collect()
}

pub fn auction_rows(bids: &[Bid], round_start: impl Fn(&Bid) -> TimeMs) -> Vec<AuctionRow> {
    bids.iter()
        .map(|b| AuctionRow {
            round_start_utc_ms: round_start(b),
            bidder: b.bidder.clone(),
            amount_eth: b.amount,
            submitted_utc_ms: b.submitted_at,
        })
        .collect()
}

pub fn trade_rows(trades: &[TradeRecord]) -> Vec<TradeRow> {
    trades
        .iter()
        .map(|t| TradeRow {
            trade_id: t.trade.trade_id.clone(),
            utc_ms: t.trade.time,
            buy_asset: t.trade.buy_asset.clone(),
            x: t.trade.x,
            sell_asset: t.trade.sell_asset.clone(),
            y: t.trade.y,
            fees_usd: t.trade.fees,
            lane: t.trade.lane,
            sender: t.trade.sender.clone(),
            tx_fee_usd: Some(t.tx_fee),
            contract: None,
            swap_events: None,
        })
        .collect()
}

pub fn markout_rows(trades: &[TradeRecord]) -> Vec<MarkoutRow> {
    trades
        .iter()
        .map(|t| MarkoutRow {
            trade_id: t.trade.trade_id.clone(),
            utc_ms: t.trade.time,
            sender: t.trade.sender.clone(),
            lane: t.trade.lane,
            regime: t.regime.name().into(),
            pnl_usd: t.pnl,
            tx_fee_usd: t.tx_fee,
        })
        .collect()
}

pub fn payment_rows(payments: &[PaymentRecord]) -> Vec<ResellerPaymentRow> {
    payments
        .iter()
        .map(|p| ResellerPaymentRow {
            utc_ms: p.time,
            regime: p.regime.name().into(),
            channel: p.channel,
            payment_eth: p.amount,
            eth_usd: p.eth_usd,
        })
        .collect()
}

pub fn price_rows(series: &PriceSeries) -> Vec<PriceRow> {
    series
        .samples()
        .map(|(t, p)| PriceRow {
            utc_ms: t,
            asset: series.asset().to_string(),
            mid_price: p,
        })
        .collect()
}

/// What a bundle needs to have its analytics recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub schedule: RoundSchedule,
    pub reference_asset: String,
    pub tracked: Vec<EntityId>,
    pub reseller: Option<EntityId>,
    pub session: SessionWindow,
}

pub const DATASET_FILE: &str = "dataset.json";

/// Adds the record files shared by simulation and replay bundles. These are
/// always CSV so that `report` and `replay` can read them back.
pub fn add_records(
    bundle: &mut Bundle,
    meta: &DatasetMeta,
    rounds: &[RoundRecord],
    bids: &[Bid],
    trades: &[TradeRecord],
    payments: &[PaymentRecord],
) {
    bundle.add_json(DATASET_FILE, meta);
    bundle.add_table("rounds", &round_rows(rounds), Format::Csv);
    let bids = auction_rows(bids, |b| meta.schedule.round_bounds(b.round_index).start);
    bundle.add_table("bids", &bids, Format::Csv);
    bundle.add_table("trades", &trade_rows(trades), Format::Csv);
    bundle.add_table("markouts", &markout_rows(trades), Format::Csv);
    bundle.add_table("reseller_payments", &payment_rows(payments), Format::Csv);
}

/// Records read back from a bundle directory.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub meta: DatasetMeta,
    pub rounds: Vec<RoundRecord>,
    pub trades: Vec<TradeRecord>,
    pub payments: Vec<PaymentRecord>,
    pub eth: Option<PriceSeries>,
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{file}: {msg}")]
    Invalid { file: String, msg: String },
}

fn invalid(dir: &Path, file: &str, msg: impl Into<String>) -> BundleError {
    BundleError::Invalid {
        file: dir.join(file).display().to_string(),
        msg: msg.into(),
    }
}

/// Reads the record files of a bundle and re-settles every round from its
/// bids, checking the result against `rounds.csv`.
pub fn load_bundle(dir: &Path) -> Result<LoadedBundle, BundleError> {
    let meta_path = dir.join(DATASET_FILE);
    let meta_src = fs::read(&meta_path).map_err(|e| IoError::io(&meta_path, e))?;
    let meta: DatasetMeta =
        serde_json::from_slice(&meta_src).map_err(|e| invalid(dir, DATASET_FILE, e.to_string()))?;

    let bids = read_rows::<AuctionRow>(&dir.join("bids.csv"), &[columns::<AuctionRow>()])?.rows;
    let mut by_round: BTreeMap<u64, Vec<Bid>> = BTreeMap::new();
    for (line, b) in bids {
        let idx = meta
            .schedule
            .round_starting_at(b.round_start_utc_ms)
            .ok_or_else(|| invalid(dir, "bids.csv", format!("line {line}: not a round start")))?;
        by_round.entry(idx).or_default().push(Bid {
            bidder: b.bidder,
            amount: b.amount_eth,
            submitted_at: b.submitted_utc_ms,
            round_index: idx,
        });
    }
    let round_rows = read_rows::<RoundRow>(&dir.join("rounds.csv"), &[columns::<RoundRow>()])?.rows;
    let mut rounds = Vec::with_capacity(round_rows.len());
    for (line, r) in round_rows {
        let bounds = meta.schedule.round_bounds(r.round_index);
        let outcome = settle(
            by_round.get(&r.round_index).map_or(&[][..], Vec::as_slice),
            r.reserve_eth,
            bounds,
        );
        if outcome.winner != r.winner
            || outcome.paid != r.paid_eth
            || outcome.top_bid != r.top_bid_eth
            || outcome.second_bid != r.second_bid_eth
        {
            return Err(invalid(
                dir,
                "rounds.csv",
                format!("line {line}: outcome does not match bids.csv"),
            ));
        }
        let regime: Regime = r.regime.parse().map_err(|e: crate::model::ModelError| {
            invalid(dir, "rounds.csv", format!("line {line}: {e}"))
        })?;
        rounds.push(RoundRecord {
            regime,
            outcome,
            eth_usd: r.eth_usd,
        });
    }

    let all = columns::<TradeRow>();
    let trade_rows =
        read_rows::<TradeRow>(&dir.join("trades.csv"), &[&all[..TRADE_BASE_COLUMNS], all])?.rows;
    let by_id: BTreeMap<&str, &TradeRow> = trade_rows
        .iter()
        .map(|(_, t)| (t.trade_id.as_str(), t))
        .collect();
    let markouts =
        read_rows::<MarkoutRow>(&dir.join("markouts.csv"), &[columns::<MarkoutRow>()])?.rows;
    let mut trades = Vec::with_capacity(markouts.len());
    for (line, m) in markouts {
        let t = by_id.get(m.trade_id.as_str()).ok_or_else(|| {
            invalid(
                dir,
                "markouts.csv",
                format!("line {line}: unknown trade `{}`", m.trade_id),
            )
        })?;
        let regime: Regime = m.regime.parse().map_err(|e: crate::model::ModelError| {
            invalid(dir, "markouts.csv", format!("line {line}: {e}"))
        })?;
        trades.push(TradeRecord {
            regime,
            trade: Trade {
                trade_id: t.trade_id.clone(),
                time: t.utc_ms,
                buy_asset: t.buy_asset.clone(),
                x: t.x,
                sell_asset: t.sell_asset.clone(),
                y: t.y,
                fees: t.fees_usd,
                lane: t.lane,
                sender: t.sender.clone(),
            },
            pnl: m.pnl_usd,
            tx_fee: m.tx_fee_usd,
        });
    }

    let pay_rows = read_rows::<ResellerPaymentRow>(
        &dir.join("reseller_payments.csv"),
        &[columns::<ResellerPaymentRow>()],
    )?
    .rows;
    let mut payments = Vec::with_capacity(pay_rows.len());
    for (line, p) in pay_rows {
        let regime: Regime = p.regime.parse().map_err(|e: crate::model::ModelError| {
            invalid(dir, "reseller_payments.csv", format!("line {line}: {e}"))
        })?;
        payments.push(PaymentRecord {
            time: p.utc_ms,
            regime,
            channel: p.channel,
            amount: p.payment_eth,
            eth_usd: p.eth_usd,
        });
    }

    let prices_path = dir.join("prices.csv");
    let eth = if prices_path.exists() {
        let book = crate::replay::read_prices(&prices_path)
            .map_err(|e| invalid(dir, "prices.csv", e.to_string()))?;
        book.get(&meta.reference_asset).cloned()
    } else {
        None
    };
    Ok(LoadedBundle {
        meta,
        rounds,
        trades,
        payments,
        eth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub rounds: usize,
    pub cells: usize,
    pub benchmark_eth: EthAmount,
    pub best: GridCell,
}

/// `calibration.<ext>` with one row per grid cell plus a best-cell summary.
pub fn calibration_bundle(report: &CalibrationReport, format: Format) -> Bundle {
    let rows: Vec<CalibrationRow> = report
        .grid
        .iter()
        .map(|c| CalibrationRow {
            window_s: c.window_s,
            c: c.c,
            recovery_ratio: c.recovery_ratio,
        })
        .collect();
    let mut b = Bundle::new();
    b.add_table("calibration", &rows, format);
    b.add_json(
        "calibration_summary.json",
        &CalibrationSummary {
            rounds: report.rounds,
            cells: report.grid.len(),
            benchmark_eth: report.benchmark,
            best: report.best,
        },
    );
    b
}
