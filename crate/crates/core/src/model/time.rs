use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Milliseconds since the Unix epoch, UTC.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeMs(pub u64);

pub const MS_PER_SECOND: u64 = 1_000;
pub const MS_PER_HOUR: u64 = 3_600_000;
pub const MS_PER_DAY: u64 = 86_400_000;

impl TimeMs {
    pub const fn ms(self) -> u64 {
        self.0
    }

    pub fn saturating_sub_ms(self, ms: u64) -> TimeMs {
        TimeMs(self.0.saturating_sub(ms))
    }

    /// UTC hour of day, 0..24.
    pub fn hour_of_day(self) -> u32 {
        ((self.0 % MS_PER_DAY) / MS_PER_HOUR) as u32
    }

    /// Minute of the UTC day, 0..1440.
    pub fn minute_of_day(self) -> u32 {
        ((self.0 % MS_PER_DAY) / 60_000) as u32
    }

    /// Index of the UTC day since the epoch.
    pub fn day_index(self) -> u64 {
        self.0 / MS_PER_DAY
    }

    /// Index of the UTC hour since the epoch.
    pub fn hour_index(self) -> u64 {
        self.0 / MS_PER_HOUR
    }
}

impl Add<u64> for TimeMs {
    type Output = TimeMs;
    fn add(self, ms: u64) -> TimeMs {
        TimeMs(self.0 + ms)
    }
}

impl Sub for TimeMs {
    type Output = u64;
    /// Elapsed milliseconds; saturates at zero.
    fn sub(self, rhs: TimeMs) -> u64 {
        self.0.saturating_sub(rhs.0)
    }
}

impl fmt::Display for TimeMs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Round timing. Rounds are aligned so that, with the defaults, every round
/// starts at wall-clock second 51 (the minute shifted by 9 seconds).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoundSchedule {
    pub round_length_ms: u64,
    pub wall_clock_shift_ms: u64,
    pub bid_close_offset_ms: u64,
}

impl Default for RoundSchedule {
    fn default() -> Self {
        Self {
            round_length_ms: 60_000,
            wall_clock_shift_ms: 9_000,
            bid_close_offset_ms: 45_000,
        }
    }
}

/// Start, bid close and end of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundBounds {
    pub index: u64,
    pub start: TimeMs,
    pub bid_close: TimeMs,
    pub end: TimeMs,
}

impl RoundBounds {
    pub fn contains(&self, t: TimeMs) -> bool {
        self.start <= t && t < self.end
    }

    pub fn in_bidding_window(&self, t: TimeMs) -> bool {
        self.start <= t && t < self.bid_close
    }
}

impl RoundSchedule {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.round_length_ms == 0 {
            return Err(ModelError::InvalidSchedule(
                "round_length_ms must be positive".into(),
            ));
        }
        if self.bid_close_offset_ms == 0 || self.bid_close_offset_ms >= self.round_length_ms {
            return Err(ModelError::InvalidSchedule(
                "bid_close_offset_ms must lie strictly inside the round".into(),
            ));
        }
        if self.wall_clock_shift_ms >= self.round_length_ms {
            return Err(ModelError::InvalidSchedule(
                "wall_clock_shift_ms must be shorter than the round".into(),
            ));
        }
        Ok(())
    }

    /// Offset of every round start from a multiple of the round length.
    fn phase_ms(&self) -> u64 {
        (self.round_length_ms - self.wall_clock_shift_ms) % self.round_length_ms
    }

    pub fn round_bounds(&self, round_index: u64) -> RoundBounds {
        let start = TimeMs(round_index * self.round_length_ms + self.phase_ms());
        RoundBounds {
            index: round_index,
            start,
            bid_close: start + self.bid_close_offset_ms,
            end: start + self.round_length_ms,
        }
    }

    /// Index of the round whose [start, end) contains `t`, if any round does.
    pub fn round_containing(&self, t: TimeMs) -> Option<u64> {
        let phase = self.phase_ms();
        (t.0 >= phase).then(|| (t.0 - phase) / self.round_length_ms)
    }

    /// Index of the round starting exactly at `t`, if one does.
    pub fn round_starting_at(&self, t: TimeMs) -> Option<u64> {
        let idx = self.round_containing(t)?;
        (self.round_bounds(idx).start == t).then_some(idx)
    }

    /// First round starting at or after `t`.
    pub fn first_round_at_or_after(&self, t: TimeMs) -> u64 {
        match self.round_containing(t) {
            Some(i) if self.round_bounds(i).start == t => i,
            Some(i) => i + 1,
            None => 0,
        }
    }
}
