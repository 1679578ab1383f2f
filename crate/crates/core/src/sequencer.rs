//! Sequencer model: a regular FCFS queue delayed by a fixed amount merged
//! with an express FCFS queue that executes immediately.
//!
//! When an express and a regular transaction end up with the same
//! execution time, the express one goes first. Inside a resale batch the
//! batch position decides.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntityId, EthAmount, TimeMs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Express,
    Regular,
}

impl Lane {
    pub fn as_str(self) -> &'static str {
        match self {
            Lane::Express => "express",
            Lane::Regular => "regular",
        }
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Lane {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "express" | "fast" | "timeboosted" | "time-boosted" => Ok(Lane::Express),
            "regular" => Ok(Lane::Regular),
            other => Err(format!("unknown lane `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u64);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a resale transaction reaches the sequencer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResaleRoute {
    pub reseller: EntityId,
    pub latency_ms: u64,
    pub declared_payment: EthAmount,
    /// Set when the sub-auction window closes.
    pub batch_release: Option<TimeMs>,
    /// Position inside the released batch.
    pub batch_position: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxEvent {
    pub tx_id: TxId,
    pub sender: EntityId,
    pub arrival: TimeMs,
    pub lane: Lane,
    /// Present iff the transaction goes through the reseller.
    pub resale: Option<ResaleRoute>,
    /// Trade this transaction would execute, if any.
    pub payload: Option<u64>,
    pub round_index: u64,
    pub executed_at: Option<TimeMs>,
}

impl TxEvent {
    pub fn new(
        tx_id: TxId,
        sender: EntityId,
        arrival: TimeMs,
        lane: Lane,
        round_index: u64,
    ) -> Self {
        Self {
            tx_id,
            sender,
            arrival,
            lane,
            resale: None,
            payload: None,
            round_index,
            executed_at: None,
        }
    }

    pub fn via_resale(&self) -> bool {
        self.resale.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequencerConfig {
    pub regular_delay_ms: u64,
    pub express_base_latency_ms: u64,
}

impl Default for SequencerConfig {
    fn default() -> Self {
        Self {
            regular_delay_ms: 200,
            express_base_latency_ms: 0,
        }
    }
}

impl SequencerConfig {
    pub fn validate(&self) -> Result<(), SequencerError> {
        if self.regular_delay_ms == 0 {
            return Err(SequencerError::InvalidConfig(
                "regular_delay_ms must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequencerError {
    #[error("tx {tx}: express submission from {sender}, who does not control the lane")]
    Unauthorized { tx: TxId, sender: EntityId },
    #[error("tx {0}: resale batch has not been released")]
    Unreleased(TxId),
    #[error("invalid sequencer config: {0}")]
    InvalidConfig(String),
}

/// Computes the execution time of `tx` given who controls the express lane.
///
/// Unauthorized express submissions are rejected; the caller re-routes them
/// to the regular lane (see [`assign_or_fallback`]).
pub fn assign_execution(
    tx: &TxEvent,
    cfg: &SequencerConfig,
    controller: Option<&EntityId>,
) -> Result<TimeMs, SequencerError> {
    match tx.lane {
        Lane::Regular => Ok(tx.arrival + cfg.regular_delay_ms),
        Lane::Express => match &tx.resale {
            None if controller == Some(&tx.sender) => Ok(tx.arrival + cfg.express_base_latency_ms),
            Some(route) if controller == Some(&route.reseller) => {
                let release = route
                    .batch_release
                    .ok_or(SequencerError::Unreleased(tx.tx_id))?;
                Ok(release + route.latency_ms)
            }
            _ => Err(SequencerError::Unauthorized {
                tx: tx.tx_id,
                sender: tx.sender.clone(),
            }),
        },
    }
}

/// Assigns `executed_at`, falling back to the regular lane in the same
/// millisecond when an express submission is rejected. Returns whether the
/// transaction was re-routed.
pub fn assign_or_fallback(
    tx: &mut TxEvent,
    cfg: &SequencerConfig,
    controller: Option<&EntityId>,
) -> Result<bool, SequencerError> {
    match assign_execution(tx, cfg, controller) {
        Ok(t) => {
            tx.executed_at = Some(t);
            Ok(false)
        }
        Err(SequencerError::Unauthorized { .. }) => {
            tx.lane = Lane::Regular;
            tx.resale = None;
            tx.executed_at = Some(tx.arrival + cfg.regular_delay_ms);
            Ok(true)
        }
        Err(e) => Err(e),
    }
}

/// Total order used by the sequencer.
pub fn execution_key(tx: &TxEvent) -> (TimeMs, u8, u32, TimeMs, TxId) {
    let lane_rank = match tx.lane {
        Lane::Express => 0,
        Lane::Regular => 1,
    };
    let batch_pos = tx
        .resale
        .as_ref()
        .and_then(|r| r.batch_position)
        .unwrap_or(0);
    (
        tx.executed_at.unwrap_or(TimeMs(u64::MAX)),
        lane_rank,
        batch_pos,
        tx.arrival,
        tx.tx_id,
    )
}

/// Orders transactions by execution time; ties go express-first, then by
/// batch position, arrival and tx id.
pub fn merged_order(mut events: Vec<TxEvent>) -> Vec<TxEvent> {
    events.sort_by_key(execution_key);
    events
}

/// Sorts in place; used on large traces.
pub fn sort_merged(events: &mut [TxEvent]) {
    events.sort_by_key(execution_key);
}

/// Whether every resale batch is guaranteed to execute before any regular
/// transaction that arrived during its collection window.
pub fn resale_guarantee_holds(
    cfg: &SequencerConfig,
    window_ms: u64,
    resale_latency_ms: u64,
) -> bool {
    // Worst case: a regular tx arriving at window start executes at
    // start + delay; the batch executes at start + window + latency.
    window_ms + resale_latency_ms <= cfg.regular_delay_ms
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn tx(n: u64, who: &str, arrival: u64, lane: Lane) -> TxEvent {
        TxEvent::new(TxId(n), id(who), TimeMs(arrival), lane, 0)
    }

    #[test]
    fn regular_tx_is_delayed_200ms() {
        let cfg = SequencerConfig::default();
        let t = tx(1, "a", 1_000, Lane::Regular);
        assert_eq!(assign_execution(&t, &cfg, None).unwrap(), TimeMs(1_200));
    }

    #[test]
    fn express_tx_executes_immediately_for_controller() {
        let cfg = SequencerConfig::default();
        let t = tx(1, "a", 1_000, Lane::Express);
        assert_eq!(
            assign_execution(&t, &cfg, Some(&id("a"))).unwrap(),
            TimeMs(1_000)
        );
        let slow = SequencerConfig {
            express_base_latency_ms: 7,
            ..cfg
        };
        assert_eq!(
            assign_execution(&t, &slow, Some(&id("a"))).unwrap(),
            TimeMs(1_007)
        );
    }

    #[test]
    fn unauthorized_express_is_rejected_and_falls_back() {
        let cfg = SequencerConfig::default();
        let mut t = tx(1, "a", 1_000, Lane::Express);
        assert!(matches!(
            assign_execution(&t, &cfg, Some(&id("b"))),
            Err(SequencerError::Unauthorized { .. })
        ));
        assert!(assign_or_fallback(&mut t, &cfg, None).unwrap());
        assert_eq!(t.lane, Lane::Regular);
        assert_eq!(t.executed_at, Some(TimeMs(1_200)));
    }

    #[test]
    fn resale_tx_needs_reseller_control_and_release() {
        let cfg = SequencerConfig::default();
        let mut t = tx(1, "a", 1_010, Lane::Express);
        t.resale = Some(ResaleRoute {
            reseller: id("kai"),
            latency_ms: 80,
            declared_payment: EthAmount::ZERO,
            batch_release: None,
            batch_position: None,
        });
        assert_eq!(
            assign_execution(&t, &cfg, Some(&id("kai"))),
            Err(SequencerError::Unreleased(TxId(1)))
        );
        t.resale.as_mut().unwrap().batch_release = Some(TimeMs(1_100));
        assert_eq!(
            assign_execution(&t, &cfg, Some(&id("kai"))).unwrap(),
            TimeMs(1_180)
        );
        assert!(assign_execution(&t, &cfg, Some(&id("a"))).is_err());
    }

    #[test]
    fn express_beats_earlier_regular() {
        let cfg = SequencerConfig::default();
        let mut r = tx(1, "a", 1_000, Lane::Regular);
        let mut e = tx(2, "b", 1_150, Lane::Express);
        r.executed_at = Some(assign_execution(&r, &cfg, Some(&id("b"))).unwrap());
        e.executed_at = Some(assign_execution(&e, &cfg, Some(&id("b"))).unwrap());
        let order = merged_order(vec![r, e]);
        assert_eq!(order[0].tx_id, TxId(2));
    }

    #[test]
    fn regular_fcfs_is_preserved() {
        let cfg = SequencerConfig::default();
        let mut txs = vec![tx(2, "a", 7, Lane::Regular), tx(1, "b", 5, Lane::Regular)];
        for t in &mut txs {
            t.executed_at = Some(assign_execution(t, &cfg, None).unwrap());
        }
        let order = merged_order(txs);
        assert_eq!(order[0].arrival, TimeMs(5));
        assert_eq!(order[1].arrival, TimeMs(7));
    }

    #[test]
    fn ties_go_express_first() {
        let mut r = tx(1, "a", 0, Lane::Regular);
        r.executed_at = Some(TimeMs(200));
        let mut e = tx(2, "b", 200, Lane::Express);
        e.executed_at = Some(TimeMs(200));
        let order = merged_order(vec![r, e]);
        assert_eq!(order[0].lane, Lane::Express);
    }

    #[test]
    fn guarantee_condition() {
        let cfg = SequencerConfig::default();
        assert!(resale_guarantee_holds(&cfg, 100, 80));
        assert!(resale_guarantee_holds(&cfg, 100, 99));
        assert!(!resale_guarantee_holds(&cfg, 100, 120));
    }
}
