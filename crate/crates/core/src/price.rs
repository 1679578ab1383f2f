//! One-second mid-price series, realized volatility and the synthetic
//! price generator.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TimeMs;
use crate::rng::substream;

/// Sample spacing of every price series.
pub const RESOLUTION_MS: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriceError {
    #[error("{asset}: price series does not cover {t}")]
    MissingCoverage { asset: String, t: TimeMs },
    #[error("{asset}: fewer than two samples in the volatility window ending at {end}")]
    InsufficientSamples { asset: String, end: TimeMs },
    #[error("{asset}: non-positive or non-finite price {price} at {t}")]
    NonPositivePrice {
        asset: String,
        t: TimeMs,
        price: f64,
    },
    #[error("{asset}: sample at {t} breaks the fixed 1 s spacing")]
    IrregularSpacing { asset: String, t: TimeMs },
    #[error("no price series for asset `{0}`")]
    UnknownAsset(String),
    #[error("invalid price process parameters: {0}")]
    InvalidParams(String),
}

/// Mid prices at a fixed 1 s spacing starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    asset: String,
    start: TimeMs,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        asset: impl Into<String>,
        start: TimeMs,
        prices: Vec<f64>,
    ) -> Result<Self, PriceError> {
        let asset = asset.into();
        for (i, &p) in prices.iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(PriceError::NonPositivePrice {
                    asset,
                    t: start + i as u64 * RESOLUTION_MS,
                    price: p,
                });
            }
        }
        Ok(Self {
            asset,
            start,
            prices,
        })
    }

    /// Builds a series from explicit samples, which must be strictly
    /// increasing at exactly 1 s spacing.
    pub fn from_samples(
        asset: impl Into<String>,
        samples: &[(TimeMs, f64)],
    ) -> Result<Self, PriceError> {
        let asset = asset.into();
        let Some(&(start, _)) = samples.first() else {
            return Self::new(asset, TimeMs(0), Vec::new());
        };
        for (i, (t, _)) in samples.iter().enumerate() {
            if *t != start + i as u64 * RESOLUTION_MS {
                return Err(PriceError::IrregularSpacing { asset, t: *t });
            }
        }
        Self::new(asset, start, samples.iter().map(|s| s.1).collect())
    }

    pub fn asset(&self) -> &str {
        &self.asset
    }

    pub fn start(&self) -> TimeMs {
        self.start
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn time_at(&self, idx: usize) -> TimeMs {
        self.start + idx as u64 * RESOLUTION_MS
    }

    pub fn samples(&self) -> impl Iterator<Item = (TimeMs, f64)> + '_ {
        self.prices
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.time_at(i), p))
    }

    /// Exclusive end of coverage: one resolution step past the last sample.
    pub fn end(&self) -> TimeMs {
        self.start + self.prices.len() as u64 * RESOLUTION_MS
    }

    /// Index of the last sample at or before `t`, if `t` is covered.
    pub fn index_at_or_before(&self, t: TimeMs) -> Option<usize> {
        if t < self.start || t >= self.end() {
            return None;
        }
        Some(((t - self.start) / RESOLUTION_MS) as usize)
    }

    /// Price of the last sample at or before `t`; never looks ahead.
    pub fn price_at(&self, t: TimeMs) -> Result<f64, PriceError> {
        self.index_at_or_before(t)
            .map(|i| self.prices[i])
            .ok_or_else(|| PriceError::MissingCoverage {
                asset: self.asset.clone(),
                t,
            })
    }

    /// Inclusive index range of samples in `[end - window, end]`.
    fn window_indices(&self, end: TimeMs, window_ms: u64) -> Result<(usize, usize), PriceError> {
        let from = TimeMs(
            end.0
                .checked_sub(window_ms)
                .ok_or_else(|| self.missing(end))?,
        );
        if from < self.start {
            return Err(self.missing(from));
        }
        let last = self
            .index_at_or_before(end)
            .ok_or_else(|| self.missing(end))?;
        let first = (from - self.start).div_ceil(RESOLUTION_MS);
        let first = first as usize;
        if first >= last {
            return Err(PriceError::InsufficientSamples {
                asset: self.asset.clone(),
                end,
            });
        }
        Ok((first, last))
    }

    fn missing(&self, t: TimeMs) -> PriceError {
        PriceError::MissingCoverage {
            asset: self.asset.clone(),
            t,
        }
    }
}

/// Population standard deviation of log returns between consecutive
/// samples in `[end - window, end]`.
pub fn realized_vol(series: &PriceSeries, end: TimeMs, window_ms: u64) -> Result<f64, PriceError> {
    let (first, last) = series.window_indices(end, window_ms)?;
    let p = &series.prices[first..=last];
    let n = (p.len() - 1) as f64;
    let mean = p.windows(2).map(|w| (w[1] / w[0]).ln()).sum::<f64>() / n;
    let var = p
        .windows(2)
        .map(|w| {
            let d = (w[1] / w[0]).ln() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(var.sqrt())
}

/// Anything that can report realized volatility for a window ending at a
/// given time.
pub trait VolatilitySource {
    fn sigma(&self, end: TimeMs, window_ms: u64) -> Result<f64, PriceError>;
}

impl VolatilitySource for PriceSeries {
    fn sigma(&self, end: TimeMs, window_ms: u64) -> Result<f64, PriceError> {
        realized_vol(self, end, window_ms)
    }
}

/// Prefix sums of log returns for O(1) window volatility; used when the
/// same series is queried for many windows (reserve calibration).
#[derive(Debug, Clone)]
pub struct RollingVol {
    series: PriceSeries,
    // sums over returns 0..i, where return j is ln(p[j+1]/p[j])
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl RollingVol {
    pub fn new(series: PriceSeries) -> Self {
        let mut sum = Vec::with_capacity(series.len());
        let mut sum_sq = Vec::with_capacity(series.len());
        let (mut s, mut s2) = (0.0, 0.0);
        sum.push(0.0);
        sum_sq.push(0.0);
        for w in series.prices.windows(2) {
            let r = (w[1] / w[0]).ln();
            s += r;
            s2 += r * r;
            sum.push(s);
            sum_sq.push(s2);
        }
        Self {
            series,
            sum,
            sum_sq,
        }
    }

    pub fn series(&self) -> &PriceSeries {
        &self.series
    }
}

impl VolatilitySource for RollingVol {
    fn sigma(&self, end: TimeMs, window_ms: u64) -> Result<f64, PriceError> {
        let (first, last) = self.series.window_indices(end, window_ms)?;
        let n = (last - first) as f64;
        let mean = (self.sum[last] - self.sum[first]) / n;
        let mean_sq = (self.sum_sq[last] - self.sum_sq[first]) / n;
        Ok((mean_sq - mean * mean).max(0.0).sqrt())
    }
}

/// Canonical asset symbol: wrapped majors map to their underlying.
pub fn canonical_asset(symbol: &str) -> String {
    let s = symbol.trim().to_ascii_uppercase();
    match s.as_str() {
        "WETH" => "ETH".into(),
        "WBTC" => "BTC".into(),
        _ => s,
    }
}

/// Stablecoins valued at exactly 1 USD unless a series is supplied.
pub const USD_PEGGED: [&str; 3] = ["USDC", "USDT", "USD"];

/// Per-asset price series.
#[derive(Debug, Clone, Default)]
pub struct PriceBook {
    series: BTreeMap<String, PriceSeries>,
}

impl PriceBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: PriceSeries) {
        self.series.insert(canonical_asset(&series.asset), series);
    }

    pub fn get(&self, asset: &str) -> Option<&PriceSeries> {
        self.series.get(&canonical_asset(asset))
    }

    pub fn assets(&self) -> impl Iterator<Item = &PriceSeries> {
        self.series.values()
    }

    /// USD mid price of `asset` at the last sample at or before `t`.
    pub fn usd_price(&self, asset: &str, t: TimeMs) -> Result<f64, PriceError> {
        let key = canonical_asset(asset);
        match self.series.get(&key) {
            Some(s) => s.price_at(t),
            None if USD_PEGGED.contains(&key.as_str()) => Ok(1.0),
            None => Err(PriceError::UnknownAsset(asset.to_string())),
        }
    }
}

/// Step volatility in force from `start_utc_ms` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolLevel {
    pub start_utc_ms: TimeMs,
    /// Standard deviation of one-second log returns.
    pub step_vol: f64,
}

/// Geometric random walk at 1 s steps with regime-dependent step
/// volatility, optionally modulated by a mean-reverting log-volatility
/// factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceProcessParams {
    #[serde(default = "default_asset")]
    pub asset: String,
    pub initial_price: f64,
    pub levels: Vec<VolLevel>,
    /// Stationary standard deviation of the log-volatility factor.
    #[serde(default)]
    pub vol_of_vol: f64,
    /// Mean-reversion time of the log-volatility factor, in seconds.
    #[serde(default = "default_reversion")]
    pub vol_reversion_s: f64,
}

fn default_asset() -> String {
    "ETH".into()
}

fn default_reversion() -> f64 {
    3_600.0
}

impl PriceProcessParams {
    pub fn constant(asset: &str, initial_price: f64, start: TimeMs, step_vol: f64) -> Self {
        Self {
            asset: asset.into(),
            initial_price,
            levels: vec![VolLevel {
                start_utc_ms: start,
                step_vol,
            }],
            vol_of_vol: 0.0,
            vol_reversion_s: default_reversion(),
        }
    }

    pub fn validate(&self) -> Result<(), PriceError> {
        let bad = |m: &str| Err(PriceError::InvalidParams(m.into()));
        if !(self.initial_price.is_finite() && self.initial_price > 0.0) {
            return bad("initial_price must be positive");
        }
        if self.levels.is_empty() {
            return bad("at least one volatility level is required");
        }
        if self
            .levels
            .iter()
            .any(|l| !(l.step_vol.is_finite() && l.step_vol > 0.0))
        {
            return bad("step_vol must be positive");
        }
        if self
            .levels
            .windows(2)
            .any(|w| w[1].start_utc_ms <= w[0].start_utc_ms)
        {
            return bad("volatility levels must have increasing start times");
        }
        if !(self.vol_of_vol.is_finite() && self.vol_of_vol >= 0.0) {
            return bad("vol_of_vol must be non-negative");
        }
        if !(self.vol_reversion_s.is_finite() && self.vol_reversion_s > 0.0) {
            return bad("vol_reversion_s must be positive");
        }
        Ok(())
    }

    fn step_vol_at(&self, t: TimeMs) -> f64 {
        let idx = self.levels.partition_point(|l| l.start_utc_ms <= t);
        self.levels[idx.saturating_sub(1)].step_vol
    }
}

/// Generates `len` samples starting at `start`, deterministic in `seed`.
pub fn generate_series(
    seed: u64,
    params: &PriceProcessParams,
    start: TimeMs,
    len: usize,
) -> Result<PriceSeries, PriceError> {
    params.validate()?;
    let mut rng = substream(seed, &format!("price/{}", params.asset));
    let phi = (-1.0 / params.vol_reversion_s).exp();
    let innovation = params.vol_of_vol * (1.0 - phi * phi).sqrt();
    let mut log_vol: f64 = if params.vol_of_vol > 0.0 {
        params.vol_of_vol * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    let mut prices = Vec::with_capacity(len);
    let mut log_p = params.initial_price.ln();
    for i in 0..len {
        prices.push(log_p.exp());
        let t = start + i as u64 * RESOLUTION_MS;
        let sigma = params.step_vol_at(t) * log_vol.exp();
        let z: f64 = rng.sample(StandardNormal);
        log_p += sigma * z - 0.5 * sigma * sigma;
        if params.vol_of_vol > 0.0 {
            let e: f64 = rng.sample(StandardNormal);
            log_vol = phi * log_vol + innovation * e;
        }
    }
    PriceSeries::new(params.asset.clone(), start, prices)
}
