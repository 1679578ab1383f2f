//! Scenario and replay configuration files (TOML).
//!
//! Unknown keys are rejected. Errors carry the line of the offending key
//! when it can be located in the source.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, Role};
use crate::analytics::{ClassifierRules, SessionWindow};
use crate::markout::DEFAULT_HORIZON_MS;
use crate::model::{timeline, EntityId, EthAmount, RegimeSegmentation, RoundSchedule, TimeMs};
use crate::price::PriceProcessParams;
use crate::reserve::{CalibrationGrid, ReservePolicy, ReserveStep};
use crate::sequencer::{resale_guarantee_holds, SequencerConfig};
use crate::sim::OpportunityConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub file: Option<String>,
    pub line: Option<usize>,
    /// Dotted path of the offending key, e.g. `agents[1].shade`.
    pub key: Option<String>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}")?;
            if let Some(line) = self.line {
                write!(f, ":{line}")?;
            }
            write!(f, ": ")?;
        } else if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        write!(f, "{}", self.msg)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn at(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Self {
            file: None,
            line: None,
            key: Some(key.into()),
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResellerConfig {
    pub id: EntityId,
    #[serde(default = "default_window")]
    pub window_ms: u64,
    #[serde(default = "default_resale_latency")]
    pub latency_ms: u64,
    /// Flat fee per subscribed searcher for each round the reseller
    /// controls, paid off chain.
    #[serde(default)]
    pub subscription_fee_eth: EthAmount,
}

fn default_window() -> u64 {
    100
}

fn default_resale_latency() -> u64 {
    80
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsConfig {
    /// Entities whose participation combinations are tabulated; defaults to
    /// every agent in a scenario.
    #[serde(default)]
    pub tracked: Vec<EntityId>,
    /// Entity whose loss profile and revenue gap are reported.
    #[serde(default)]
    pub reseller: Option<EntityId>,
    #[serde(default)]
    pub session: SessionWindow,
    /// Window of the per-round volatility column in `rounds.csv`.
    #[serde(default = "default_round_vol_window")]
    pub round_vol_window_ms: u64,
}

fn default_round_vol_window() -> u64 {
    300_000
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            tracked: Vec::new(),
            reseller: None,
            session: SessionWindow::default(),
            round_vol_window_ms: default_round_vol_window(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Also write the generated price series.
    #[serde(default)]
    pub prices: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_utc_ms: TimeMs,
    pub duration_rounds: u64,
    #[serde(default)]
    pub schedule: RoundSchedule,
    #[serde(default)]
    pub sequencer: SequencerConfig,
    pub regimes: RegimeSegmentation,
    pub reserve: ReservePolicy,
    pub prices: PriceProcessParams,
    pub opportunities: OpportunityConfig,
    /// Volatility window agents use to value a round.
    #[serde(default = "default_valuation_window")]
    pub valuation_window_ms: u64,
    #[serde(default = "default_horizon")]
    pub markout_horizon_ms: u64,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub reseller: Option<ResellerConfig>,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_start() -> TimeMs {
    timeline::STUDY_START
}

fn default_valuation_window() -> u64 {
    300_000
}

fn default_horizon() -> u64 {
    DEFAULT_HORIZON_MS
}

impl ScenarioConfig {
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: Self = parse(src)?;
        cfg.validate().map_err(|e| locate(src, e))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = read(path)?;
        Self::from_toml(&src).map_err(|e| with_file(e, path))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration_rounds == 0 {
            return Err(ConfigError::at("duration_rounds", "must be positive"));
        }
        self.schedule
            .validate()
            .map_err(|e| ConfigError::at("schedule", e.to_string()))?;
        self.sequencer
            .validate()
            .map_err(|e| ConfigError::at("sequencer.regular_delay_ms", e.to_string()))?;
        if self.regimes.start() > self.start_utc_ms {
            return Err(ConfigError::at(
                "regimes",
                "first regime must start at or before start_utc_ms",
            ));
        }
        self.reserve
            .validate()
            .map_err(|e| ConfigError::at(reserve_key(&self.reserve), e.to_string()))?;
        self.prices
            .validate()
            .map_err(|e| ConfigError::at("prices", e.to_string()))?;
        self.opportunities
            .validate()
            .map_err(|e| ConfigError::at("opportunities", e))?;
        if self.valuation_window_ms < 2_000 {
            return Err(ConfigError::at(
                "valuation_window_ms",
                "must be at least 2000",
            ));
        }
        if self.analytics.round_vol_window_ms < 2_000 {
            return Err(ConfigError::at(
                "analytics.round_vol_window_ms",
                "must be at least 2000",
            ));
        }
        let mut ids = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !ids.insert(&a.id) {
                return Err(ConfigError::at(
                    format!("agents[{i}].id"),
                    format!("duplicate agent id `{}`", a.id),
                ));
            }
            a.validate()
                .map_err(|e| ConfigError::at(format!("agents[{i}].{}", e.field), e.msg))?;
        }
        if let Some(r) = &self.reseller {
            let agent = self.agents.iter().find(|a| a.id == r.id);
            if !agent.is_some_and(|a| a.role == Role::Reseller) {
                return Err(ConfigError::at(
                    "reseller.id",
                    format!("`{}` must be an agent with role = \"reseller\"", r.id),
                ));
            }
            if r.window_ms == 0 || !self.schedule.round_length_ms.is_multiple_of(r.window_ms) {
                return Err(ConfigError::at(
                    "reseller.window_ms",
                    "must be positive and divide the round length",
                ));
            }
            if !resale_guarantee_holds(&self.sequencer, r.window_ms, r.latency_ms) {
                log::warn!(
                    "resale window {} ms + latency {} ms exceeds the regular delay; batches may lose to regular transactions",
                    r.window_ms,
                    r.latency_ms
                );
            }
        }
        Ok(())
    }

    /// Entities tabulated in participation combinations.
    pub fn tracked_entities(&self) -> Vec<EntityId> {
        if self.analytics.tracked.is_empty() {
            self.agents.iter().map(|a| a.id.clone()).collect()
        } else {
            self.analytics.tracked.clone()
        }
    }

    pub fn reported_reseller(&self) -> Option<EntityId> {
        self.analytics
            .reseller
            .clone()
            .or_else(|| self.reseller.as_ref().map(|r| r.id.clone()))
    }
}

fn reserve_key(p: &ReservePolicy) -> &'static str {
    match p {
        ReservePolicy::Fixed { .. } => "reserve.amount",
        ReservePolicy::Schedule { .. } => "reserve.steps",
        ReservePolicy::VolIndexed { .. } => "reserve",
    }
}

/// Inputs and settings for `replay` and `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub schedule: RoundSchedule,
    #[serde(default = "RegimeSegmentation::study_period")]
    pub regimes: RegimeSegmentation,
    /// Reserve used to settle replayed rounds.
    #[serde(default = "study_reserve")]
    pub reserve: ReservePolicy,
    #[serde(default = "default_horizon")]
    pub markout_horizon_ms: u64,
    /// Asset whose series is the ETH/USD reference.
    #[serde(default = "default_reference")]
    pub reference_asset: String,
    #[serde(default)]
    pub classifier: Option<ClassifierRules>,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
    #[serde(default)]
    pub calibration: Option<CalibrationGrid>,
}

fn default_reference() -> String {
    "ETH".into()
}

/// Reserve steps of the study period: 0.001 ETH, raised to 0.0075 ETH,
/// then reverted.
pub fn study_reserve() -> ReservePolicy {
    let base: EthAmount = EthAmount::from_raw(crate::model::SCALE / 1_000);
    ReservePolicy::Schedule {
        steps: vec![
            ReserveStep {
                start_utc_ms: TimeMs(0),
                amount: base,
            },
            ReserveStep {
                start_utc_ms: timeline::RESERVE_RAISED,
                amount: EthAmount::from_raw(crate::model::SCALE * 75 / 10_000),
            },
            ReserveStep {
                start_utc_ms: timeline::RESERVE_REVERTED,
                amount: base,
            },
        ],
    }
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            schedule: RoundSchedule::default(),
            regimes: RegimeSegmentation::study_period(),
            reserve: study_reserve(),
            markout_horizon_ms: DEFAULT_HORIZON_MS,
            reference_asset: default_reference(),
            classifier: None,
            analytics: AnalyticsConfig::default(),
            calibration: None,
        }
    }
}

impl ReplayConfig {
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: Self = parse(src)?;
        cfg.validate().map_err(|e| locate(src, e))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = read(path)?;
        Self::from_toml(&src).map_err(|e| with_file(e, path))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.schedule
            .validate()
            .map_err(|e| ConfigError::at("schedule", e.to_string()))?;
        // A zero fixed reserve is a valid counterfactual in replay.
        if !matches!(self.reserve, ReservePolicy::Fixed { amount } if amount.is_zero()) {
            self.reserve
                .validate()
                .map_err(|e| ConfigError::at(reserve_key(&self.reserve), e.to_string()))?;
        }
        if let Some(g) = &self.calibration {
            g.validate()
                .map_err(|e| ConfigError::at("calibration", e.to_string()))?;
        }
        if self.analytics.round_vol_window_ms < 2_000 {
            return Err(ConfigError::at(
                "analytics.round_vol_window_ms",
                "must be at least 2000",
            ));
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: Some(path.display().to_string()),
        line: None,
        key: None,
        msg: e.to_string(),
    })
}

fn with_file(mut e: ConfigError, path: &Path) -> ConfigError {
    e.file = Some(path.display().to_string());
    e
}

fn parse<T: serde::de::DeserializeOwned>(src: &str) -> Result<T, ConfigError> {
    toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(src, s.start));
        ConfigError {
            file: None,
            line,
            key: None,
            msg: e.message().to_string(),
        }
    })
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Finds the line defining a dotted key path such as `agents[1].shade` or
/// `reserve.c`. Only plain `key = value` lines under table headers are
/// recognised, which covers the files this crate reads.
pub fn find_key_line(src: &str, path: &str) -> Option<usize> {
    let mut segments: Vec<(String, Option<usize>)> = path
        .split('.')
        .map(|seg| match seg.split_once('[') {
            Some((name, rest)) => (name.to_string(), rest.trim_end_matches(']').parse().ok()),
            None => (seg.to_string(), None),
        })
        .collect();
    let (leaf, _) = segments.pop()?;

    let lines: Vec<&str> = src.lines().collect();
    // Resolve the table header the leaf lives under.
    let header: String = segments
        .iter()
        .map(|(n, _)| n.as_str())
        .collect::<Vec<_>>()
        .join(".");
    let index = segments.last().and_then(|(_, i)| *i).unwrap_or(0);
    let (mut from, mut to) = (0, lines.len());
    if !header.is_empty() {
        let mut seen = 0;
        let mut found = None;
        for (i, l) in lines.iter().enumerate() {
            let t = l.trim();
            if t == format!("[{header}]") || t == format!("[[{header}]]") {
                if seen == index {
                    found = Some(i);
                    break;
                }
                seen += 1;
            }
        }
        from = found? + 1;
    }
    for (i, l) in lines.iter().enumerate().skip(from) {
        if l.trim_start().starts_with('[') {
            to = i;
            break;
        }
    }
    lines[from..to]
        .iter()
        .position(|l| {
            l.trim_start()
                .strip_prefix(leaf.as_str())
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|p| from + p + 1)
        .or_else(|| (!header.is_empty()).then_some(from))
}

fn locate(src: &str, mut e: ConfigError) -> ConfigError {
    if e.line.is_none() {
        if let Some(key) = &e.key {
            e.line = find_key_line(src, key);
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = r#"seed = 1
duration_rounds = 10

[[agents]]
id = "a"
shade = 0.5

[[agents]]
id = "b"
shade = 1.5

[reserve]
kind = "fixed"
amount = "0.001"
"#;

    #[test]
    fn finds_keys_in_array_tables() {
        assert_eq!(find_key_line(SRC, "duration_rounds"), Some(2));
        assert_eq!(find_key_line(SRC, "agents[1].shade"), Some(10));
        assert_eq!(find_key_line(SRC, "agents[0].shade"), Some(6));
        assert_eq!(find_key_line(SRC, "reserve.amount"), Some(14));
        assert_eq!(find_key_line(SRC, "agents[5].shade"), None);
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = ScenarioConfig::from_toml("seed = 1\nduration_rounds = \n").unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ReplayConfig::from_toml("bogus = 1\n").unwrap_err();
        assert!(err.msg.contains("bogus"), "{err}");
        assert_eq!(err.line, Some(1));
    }

    #[test]
    fn replay_defaults() {
        let cfg = ReplayConfig::from_toml("").unwrap();
        assert_eq!(cfg, ReplayConfig::default());
    }
}
