use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ModelError, TimeMs};

/// Analysis zone of the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "Pre-Kairos", alias = "PreKairos")]
    PreKairos,
    Kairos,
    #[serde(alias = "Reserve Price Adaptation")]
    ReservePriceAdaptation,
    #[serde(alias = "Steady State")]
    SteadyState,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::PreKairos,
        Regime::Kairos,
        Regime::ReservePriceAdaptation,
        Regime::SteadyState,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::PreKairos => "Pre-Kairos",
            Regime::Kairos => "Kairos",
            Regime::ReservePriceAdaptation => "ReservePriceAdaptation",
            Regime::SteadyState => "SteadyState",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Pre-Kairos" | "PreKairos" => Ok(Regime::PreKairos),
            "Kairos" => Ok(Regime::Kairos),
            "ReservePriceAdaptation" | "Reserve Price Adaptation" => {
                Ok(Regime::ReservePriceAdaptation)
            }
            "SteadyState" | "Steady State" => Ok(Regime::SteadyState),
            other => Err(ModelError::UnknownRegime(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeBoundary {
    pub start_utc_ms: TimeMs,
    pub regime: Regime,
}

/// Ordered regime start times; each regime covers `[start, next_start)` and
/// the last one extends indefinitely.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegimeSegmentation {
    boundaries: Vec<RegimeBoundary>,
}

/// Study-period event times (UTC).
pub mod timeline {
    use super::TimeMs;

    /// 2026-02-01 00:00:00
    pub const STUDY_START: TimeMs = TimeMs(1_769_904_000_000);
    /// 2026-02-12 20:31:51, dominant searchers switch to the reseller.
    pub const RESALE_ADOPTION: TimeMs = TimeMs(1_770_928_311_000);
    /// 2026-02-18 20:01:51, reserve raised from 0.001 to 0.0075 ETH.
    pub const RESERVE_RAISED: TimeMs = TimeMs(1_771_444_911_000);
    /// 2026-02-25 19:49:51, reserve reverted to 0.001 ETH.
    pub const RESERVE_REVERTED: TimeMs = TimeMs(1_772_048_991_000);
    /// 2026-03-12 00:00:00
    pub const STUDY_END: TimeMs = TimeMs(1_773_273_600_000);
}

impl RegimeSegmentation {
    pub fn new(boundaries: Vec<RegimeBoundary>) -> Result<Self, ModelError> {
        if boundaries.is_empty() {
            return Err(ModelError::InvalidSegmentation(
                "no regime boundaries".into(),
            ));
        }
        for w in boundaries.windows(2) {
            if w[1].start_utc_ms <= w[0].start_utc_ms {
                return Err(ModelError::InvalidSegmentation(format!(
                    "boundary {} is not after {}",
                    w[1].start_utc_ms, w[0].start_utc_ms
                )));
            }
        }
        Ok(Self { boundaries })
    }

    /// A single regime covering everything from `start`.
    pub fn single(start: TimeMs, regime: Regime) -> Self {
        Self {
            boundaries: vec![RegimeBoundary {
                start_utc_ms: start,
                regime,
            }],
        }
    }

    /// The four-zone partition of the February–March 2026 study period.
    pub fn study_period() -> Self {
        use timeline::*;
        let b = |t, regime| RegimeBoundary {
            start_utc_ms: t,
            regime,
        };
        Self {
            boundaries: vec![
                b(STUDY_START, Regime::PreKairos),
                b(RESALE_ADOPTION, Regime::Kairos),
                b(RESERVE_RAISED, Regime::ReservePriceAdaptation),
                b(RESERVE_REVERTED, Regime::SteadyState),
            ],
        }
    }

    pub fn boundaries(&self) -> &[RegimeBoundary] {
        &self.boundaries
    }

    pub fn start(&self) -> TimeMs {
        self.boundaries[0].start_utc_ms
    }

    /// Regimes in timeline order, without duplicates.
    pub fn regimes(&self) -> Vec<Regime> {
        let mut out: Vec<Regime> = Vec::new();
        for b in &self.boundaries {
            if !out.contains(&b.regime) {
                out.push(b.regime);
            }
        }
        out
    }

    pub fn regime_of(&self, t: TimeMs) -> Result<Regime, ModelError> {
        // index of the last boundary <= t
        let idx = self.boundaries.partition_point(|b| b.start_utc_ms <= t);
        if idx == 0 {
            return Err(ModelError::OutOfRange {
                t,
                first: self.start(),
            });
        }
        Ok(self.boundaries[idx - 1].regime)
    }
}

impl<'de> Deserialize<'de> for RegimeSegmentation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let boundaries = Vec::<RegimeBoundary>::deserialize(d)?;
        RegimeSegmentation::new(boundaries).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::timeline::*;
    use super::*;

    #[test]
    fn study_timestamps_match_calendar() {
        use chrono::{TimeZone, Utc};
        let ms = |y, mo, d, h, mi, s| {
            TimeMs(
                Utc.with_ymd_and_hms(y, mo, d, h, mi, s)
                    .unwrap()
                    .timestamp_millis() as u64,
            )
        };
        assert_eq!(STUDY_START, ms(2026, 2, 1, 0, 0, 0));
        assert_eq!(RESALE_ADOPTION, ms(2026, 2, 12, 20, 31, 51));
        assert_eq!(RESERVE_RAISED, ms(2026, 2, 18, 20, 1, 51));
        assert_eq!(RESERVE_REVERTED, ms(2026, 2, 25, 19, 49, 51));
        assert_eq!(STUDY_END, ms(2026, 3, 12, 0, 0, 0));
    }

    #[test]
    fn regime_lookup_uses_half_open_intervals() {
        let seg = RegimeSegmentation::study_period();
        let just_before = TimeMs(RESALE_ADOPTION.0 - 1);
        assert_eq!(seg.regime_of(just_before).unwrap(), Regime::PreKairos);
        assert_eq!(seg.regime_of(RESALE_ADOPTION).unwrap(), Regime::Kairos);
        assert_eq!(
            seg.regime_of(RESERVE_RAISED).unwrap(),
            Regime::ReservePriceAdaptation
        );
        assert_eq!(
            seg.regime_of(RESERVE_REVERTED).unwrap(),
            Regime::SteadyState
        );
        assert_eq!(
            seg.regime_of(TimeMs(u64::MAX)).unwrap(),
            Regime::SteadyState
        );
    }

    #[test]
    fn before_first_boundary_is_an_error() {
        let seg = RegimeSegmentation::study_period();
        assert!(matches!(
            seg.regime_of(TimeMs(STUDY_START.0 - 1)),
            Err(ModelError::OutOfRange { .. })
        ));
    }

    #[test]
    fn boundaries_must_increase() {
        let b = |t, regime| RegimeBoundary {
            start_utc_ms: TimeMs(t),
            regime,
        };
        assert!(RegimeSegmentation::new(vec![]).is_err());
        assert!(
            RegimeSegmentation::new(vec![b(5, Regime::PreKairos), b(5, Regime::Kairos)]).is_err()
        );
        assert!(
            RegimeSegmentation::new(vec![b(5, Regime::PreKairos), b(6, Regime::Kairos)]).is_ok()
        );
    }

    #[test]
    fn names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
        }
    }
}
