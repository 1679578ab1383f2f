//! Core domain types shared by every other module: money, time, round
//! schedule, participant identifiers and regime segmentation.

mod amount;
mod regime;
mod time;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use amount::{
    Amount, AmountParseError, Eth, EthAmount, TokenAmount, Tokens, Unit, Usd, UsdAmount, DECIMALS,
    SCALE,
};
pub use regime::{timeline, Regime, RegimeBoundary, RegimeSegmentation};
pub use time::{RoundBounds, RoundSchedule, TimeMs, MS_PER_DAY, MS_PER_HOUR, MS_PER_SECOND};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("time {t} precedes the first regime boundary {first}")]
    OutOfRange { t: TimeMs, first: TimeMs },
    #[error("invalid regime segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("unknown regime `{0}`")]
    UnknownRegime(String),
    #[error("invalid round schedule: {0}")]
    InvalidSchedule(String),
    #[error("entity id must be non-empty")]
    EmptyEntityId,
}

/// Opaque participant label, e.g. `wintermute` or `kairos`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(ModelError::EmptyEntityId);
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        EntityId::new(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for EntityId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityId::new(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_ids_must_be_non_empty() {
        assert!(EntityId::new("").is_err());
        assert!(EntityId::new("  ").is_err());
        assert_eq!(EntityId::new("kairos").unwrap().as_str(), "kairos");
    }
}
