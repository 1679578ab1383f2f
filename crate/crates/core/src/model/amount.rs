//! Fixed-point money with 18 fractional decimal digits.
//!
//! Amounts carry a zero-sized unit marker so that ETH, USD and token
//! quantities cannot be mixed by accident. All arithmetic on the raw
//! representation is exact integer arithmetic; conversions to and from
//! `f64` only happen at the analytics boundary and round half away from
//! zero at the 18th decimal.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::iter::Sum;
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of fractional decimal digits.
pub const DECIMALS: u32 = 18;
/// Raw units per whole unit (10^18).
pub const SCALE: i128 = 1_000_000_000_000_000_000;

/// Unit marker for an [`Amount`].
pub trait Unit: Copy + 'static {
    const SYMBOL: &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Eth;
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Usd;
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tokens;

impl Unit for Eth {
    const SYMBOL: &'static str = "ETH";
}
impl Unit for Usd {
    const SYMBOL: &'static str = "USD";
}
impl Unit for Tokens {
    const SYMBOL: &'static str = "token-units";
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmountParseError {
    #[error("empty amount")]
    Empty,
    #[error("invalid amount `{0}`")]
    Invalid(String),
    #[error("amount `{0}` has more than 18 fractional digits")]
    TooPrecise(String),
    #[error("amount `{0}` overflows")]
    Overflow(String),
}

/// Signed fixed-point quantity in unit `U`.
pub struct Amount<U> {
    raw: i128,
    unit: PhantomData<U>,
}

pub type EthAmount = Amount<Eth>;
pub type UsdAmount = Amount<Usd>;
pub type TokenAmount = Amount<Tokens>;

impl<U> Amount<U> {
    pub const ZERO: Self = Self::from_raw(0);

    pub const fn from_raw(raw: i128) -> Self {
        Self {
            raw,
            unit: PhantomData,
        }
    }

    pub const fn raw(self) -> i128 {
        self.raw
    }

    pub const fn whole(units: i64) -> Self {
        Self::from_raw(units as i128 * SCALE)
    }

    /// Nearest representable amount to `value`. Non-finite input maps to zero.
    pub fn from_f64(value: f64) -> Self {
        if !value.is_finite() {
            return Self::ZERO;
        }
        Self::from_raw((value * SCALE as f64).round() as i128)
    }

    pub fn to_f64(self) -> f64 {
        let whole = self.raw / SCALE;
        let frac = self.raw % SCALE;
        whole as f64 + frac as f64 / SCALE as f64
    }

    /// `self * factor`, rounded to the nearest raw unit.
    pub fn mul_f64(self, factor: f64) -> Self {
        Self::from_f64(self.to_f64() * factor)
    }

    /// Converts into another unit at `rate` (target units per source unit).
    ///
    /// The rate is rounded to 9 decimals and applied in integer arithmetic,
    /// so decimal prices such as `2345.67` convert exactly.
    pub fn convert<V>(self, rate: f64) -> Amount<V> {
        const NANO: i128 = 1_000_000_000;
        if !rate.is_finite() || rate.abs() >= 1e18 {
            return Amount::from_f64(self.to_f64() * rate);
        }
        let rate_nano = (rate * NANO as f64).round() as i128;
        match self.raw.checked_mul(rate_nano) {
            Some(p) => {
                let q = p.div_euclid(NANO);
                let r = p.rem_euclid(NANO);
                // round half up
                let q = if 2 * r >= NANO { q + 1 } else { q };
                Amount::from_raw(q)
            }
            None => Amount::from_f64(self.to_f64() * rate),
        }
    }

    pub fn checked_add(self, rhs: Self) -> Option<Self> {
        self.raw.checked_add(rhs.raw).map(Self::from_raw)
    }

    pub fn is_zero(self) -> bool {
        self.raw == 0
    }

    pub fn is_positive(self) -> bool {
        self.raw > 0
    }

    pub fn is_negative(self) -> bool {
        self.raw < 0
    }

    pub fn abs(self) -> Self {
        Self::from_raw(self.raw.abs())
    }

    pub fn max(self, other: Self) -> Self {
        if other.raw > self.raw {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other.raw < self.raw {
            other
        } else {
            self
        }
    }

    pub fn clamp(self, lo: Self, hi: Self) -> Self {
        self.max(lo).min(hi)
    }

    /// Ratio `self / denom` as a float; `None` when `denom` is zero.
    pub fn ratio(self, denom: Self) -> Option<f64> {
        if denom.raw == 0 {
            None
        } else {
            Some(self.raw as f64 / denom.raw as f64)
        }
    }
}

// Manual impls so that the unit marker does not need to implement anything.
impl<U> Clone for Amount<U> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<U> Copy for Amount<U> {}
impl<U> PartialEq for Amount<U> {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw
    }
}
impl<U> Eq for Amount<U> {}
impl<U> PartialOrd for Amount<U> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<U> Ord for Amount<U> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.raw.cmp(&other.raw)
    }
}
impl<U> Hash for Amount<U> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.raw.hash(state)
    }
}
impl<U> Default for Amount<U> {
    fn default() -> Self {
        Self::ZERO
    }
}

impl<U> Add for Amount<U> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_raw(self.raw + rhs.raw)
    }
}
impl<U> Sub for Amount<U> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_raw(self.raw - rhs.raw)
    }
}
impl<U> Neg for Amount<U> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_raw(-self.raw)
    }
}
impl<U> AddAssign for Amount<U> {
    fn add_assign(&mut self, rhs: Self) {
        self.raw += rhs.raw;
    }
}
impl<U> SubAssign for Amount<U> {
    fn sub_assign(&mut self, rhs: Self) {
        self.raw -= rhs.raw;
    }
}
impl<U> Sum for Amount<U> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, x| acc + x)
    }
}
impl<'a, U> Sum<&'a Amount<U>> for Amount<U> {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, x| acc + *x)
    }
}

/// Canonical decimal rendering: no exponent, trailing fractional zeros trimmed.
impl<U> fmt::Display for Amount<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.raw < 0 { "-" } else { "" };
        let abs = self.raw.unsigned_abs();
        let scale = SCALE as u128;
        let whole = abs / scale;
        let frac = abs % scale;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{frac:018}");
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl<U: Unit> fmt::Debug for Amount<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self, U::SYMBOL)
    }
}

impl<U> FromStr for Amount<U> {
    type Err = AmountParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(AmountParseError::Empty);
        }
        let invalid = || AmountParseError::Invalid(s.to_string());
        let overflow = || AmountParseError::Overflow(s.to_string());
        let (negative, body) = match s.as_bytes()[0] {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(invalid());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(invalid());
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > DECIMALS as usize {
            return Err(AmountParseError::TooPrecise(s.to_string()));
        }
        let whole: i128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| overflow())?
        };
        let mut frac: i128 = 0;
        for b in frac_trimmed.bytes() {
            frac = frac * 10 + i128::from(b - b'0');
        }
        frac *= 10i128.pow(DECIMALS - frac_trimmed.len() as u32);
        let raw = whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(overflow)?;
        Ok(Self::from_raw(if negative { -raw } else { raw }))
    }
}

impl<U> Serialize for Amount<U> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de, U> Deserialize<'de> for Amount<U> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
