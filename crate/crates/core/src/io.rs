//! CSV schemas for inputs and traces.
//!
//! Headers are checked exactly against the column lists below; a field
//! that fails to parse is reported with its column name and line.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_aux::serde_introspection::serde_introspect;
use thiserror::Error;

use crate::model::{EntityId, EthAmount, TimeMs, TokenAmount, UsdAmount};
use crate::resale::Channel;
use crate::sequencer::{Lane, TxEvent, TxId};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: header mismatch: expected `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: column `{column}`: {msg}")]
    Field {
        path: String,
        line: u64,
        column: String,
        msg: String,
    },
    #[error("{path}:{line}: {msg}")]
    Record {
        path: String,
        line: u64,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Csv { path: String, msg: String },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Column names of a row type, in serialization order.
pub fn columns<T: DeserializeOwned>() -> &'static [&'static str] {
    serde_introspect::<T>()
}

/// One bid; the schema of `auctions.csv`. `round_start_utc_ms` is the
/// start of the round whose bidding window the bid was placed in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionRow {
    pub round_start_utc_ms: TimeMs,
    pub bidder: EntityId,
    pub amount_eth: EthAmount,
    pub submitted_utc_ms: TimeMs,
}

/// One auction outcome; the schema of `rounds.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round_index: u64,
    pub round_start_utc_ms: TimeMs,
    pub bid_close_utc_ms: TimeMs,
    pub regime: String,
    pub reserve_eth: EthAmount,
    pub bids: usize,
    pub winner: Option<EntityId>,
    pub top_bid_eth: Option<EthAmount>,
    pub second_bid_eth: Option<EthAmount>,
    pub paid_eth: Option<EthAmount>,
    pub eth_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tx_id: u64,
    pub sender: EntityId,
    pub lane: Lane,
    pub via_resale: bool,
    pub arrival_ms: TimeMs,
    pub executed_ms: Option<TimeMs>,
    pub round_index: u64,
}

impl From<&TxEvent> for TraceRow {
    fn from(tx: &TxEvent) -> Self {
        Self {
            tx_id: tx.tx_id.0,
            sender: tx.sender.clone(),
            lane: tx.lane,
            via_resale: tx.via_resale(),
            arrival_ms: tx.arrival,
            executed_ms: tx.executed_at,
            round_index: tx.round_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiptRow {
    pub window_start_ms: TimeMs,
    pub tx_id: TxId,
    pub channel: Channel,
    pub payment_eth: EthAmount,
}

/// On-chain payment to the reseller, as observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRow {
    pub tx_hash: String,
    pub utc_ms: TimeMs,
    pub payment_eth: EthAmount,
}

/// Reseller payment with its regime and valuation price; written to bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResellerPaymentRow {
    pub utc_ms: TimeMs,
    pub regime: String,
    pub channel: Channel,
    pub payment_eth: EthAmount,
    pub eth_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub utc_ms: TimeMs,
    pub asset: String,
    pub mid_price: f64,
}

/// One swap: bought `x` of `buy_asset`, sold `y` of `sell_asset`. The last
/// three columns are optional and appear together or not at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRow {
    pub trade_id: String,
    pub utc_ms: TimeMs,
    pub buy_asset: String,
    pub x: TokenAmount,
    pub sell_asset: String,
    pub y: TokenAmount,
    pub fees_usd: UsdAmount,
    pub lane: Lane,
    pub sender: EntityId,
    #[serde(default)]
    pub tx_fee_usd: Option<UsdAmount>,
    #[serde(default)]
    pub contract: Option<String>,
    #[serde(default)]
    pub swap_events: Option<u32>,
}

pub const TRADE_BASE_COLUMNS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkoutRow {
    pub trade_id: String,
    pub utc_ms: TimeMs,
    pub sender: EntityId,
    pub lane: Lane,
    pub regime: String,
    pub pnl_usd: UsdAmount,
    pub tx_fee_usd: UsdAmount,
}

/// Trade dropped during replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRow {
    pub trade_id: String,
    pub reason: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub window_s: u64,
    pub c: f64,
    pub recovery_ratio: f64,
}

/// Parsed rows with the 1-based line each came from.
#[derive(Debug)]
pub struct Parsed<T> {
    pub rows: Vec<(u64, T)>,
    /// Header line as read.
    pub header: Vec<String>,
}

/// Reads `path`, accepting any of `layouts` as its header.
pub fn read_rows<T: DeserializeOwned>(
    path: &Path,
    layouts: &[&[&str]],
) -> Result<Parsed<T>, IoError> {
    let mut src = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut src))
        .map_err(|e| IoError::io(path, e))?;
    parse_rows(&src, &path.display().to_string(), layouts)
}

/// Parses CSV text; `name` labels errors.
pub fn parse_rows<T: DeserializeOwned>(
    src: &str,
    name: &str,
    layouts: &[&[&str]],
) -> Result<Parsed<T>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(src.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(name, e, &[]))?
        .iter()
        .map(str::to_string)
        .collect();
    if !layouts
        .iter()
        .any(|l| l.iter().copied().eq(header.iter().map(String::as_str)))
    {
        return Err(IoError::Header {
            path: name.into(),
            expected: layouts
                .iter()
                .map(|l| l.join(","))
                .collect::<Vec<_>>()
                .join("` or `"),
            found: header.join(","),
        });
    }
    let headers = csv::StringRecord::from(header.clone());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(name, e, &header))?;
        let line = rec.position().map_or(0, |p| p.line());
        match rec.deserialize::<T>(Some(&headers)) {
            Ok(row) => rows.push((line, row)),
            Err(e) => {
                let msg = deser_msg(&e);
                let err = csv_error(name, e, &header);
                return Err(match err {
                    IoError::Record { path, line, msg: m } => {
                        match locate_column::<T>(&rec, &headers, &msg) {
                            Some(i) => IoError::Field {
                                path,
                                line,
                                column: header[i].clone(),
                                msg: m,
                            },
                            None => IoError::Record { path, line, msg: m },
                        }
                    }
                    other => other,
                });
            }
        }
    }
    Ok(Parsed { rows, header })
}

/// Finds the column behind a custom deserialization error by parsing ever
/// longer prefixes of the record until the same error reappears.
fn locate_column<T: DeserializeOwned>(
    rec: &csv::StringRecord,
    headers: &csv::StringRecord,
    msg: &str,
) -> Option<usize> {
    (1..=rec.len())
        .find(|&k| {
            let r: csv::StringRecord = rec.iter().take(k).collect();
            let h: csv::StringRecord = headers.iter().take(k).collect();
            matches!(r.deserialize::<T>(Some(&h)), Err(e) if deser_msg(&e) == msg)
        })
        .map(|k| k - 1)
}

fn deser_msg(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.kind().to_string(),
        other => format!("{other:?}"),
    }
}

fn csv_error(name: &str, e: csv::Error, header: &[String]) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(i) => IoError::Field {
                path: name.into(),
                line,
                column: header
                    .get(i as usize)
                    .cloned()
                    .unwrap_or_else(|| format!("#{i}")),
                msg: err.kind().to_string(),
            },
            None => IoError::Record {
                path: name.into(),
                line,
                msg: err.kind().to_string(),
            },
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => IoError::Record {
            path: name.into(),
            line,
            msg: format!("expected {expected_len} fields, found {len}"),
        },
        kind => IoError::Csv {
            path: name.into(),
            msg: format!("{kind:?}"),
        },
    }
}

/// Serializes rows as CSV, writing the header even when there are none.
pub fn write_csv<T: Serialize + DeserializeOwned, W: Write>(
    w: W,
    rows: &[T],
) -> Result<(), csv::Error> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(columns::<T>())?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn to_csv_bytes<T: Serialize + DeserializeOwned>(rows: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    buf
}

/// Joins `dir` and `file`.
pub fn in_dir(dir: &Path, file: &str) -> PathBuf {
    dir.join(file)
}
