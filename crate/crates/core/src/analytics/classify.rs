//! CEX–DEX arbitrage heuristic over ingested transaction records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::EntityId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierRules {
    /// Known arbitrage contracts per entity; compared case-insensitively.
    pub target_contracts: BTreeMap<EntityId, BTreeSet<String>>,
    #[serde(default = "default_liquid")]
    pub liquid_assets: BTreeSet<String>,
    #[serde(default = "default_max_swaps")]
    pub max_swap_events: u32,
}

fn default_liquid() -> BTreeSet<String> {
    ["WETH", "WBTC", "ARB", "USDC", "USDT"]
        .map(String::from)
        .into()
}

fn default_max_swaps() -> u32 {
    1
}

/// Fields the heuristic reads from a transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapRecord<'a> {
    pub contract: &'a str,
    pub swap_events: u32,
    pub buy_asset: &'a str,
    pub sell_asset: &'a str,
}

impl ClassifierRules {
    pub fn entity_of(&self, contract: &str) -> Option<&EntityId> {
        self.target_contracts
            .iter()
            .find(|(_, set)| set.iter().any(|c| c.eq_ignore_ascii_case(contract)))
            .map(|(e, _)| e)
    }

    fn is_liquid(&self, asset: &str) -> bool {
        self.liquid_assets
            .iter()
            .any(|a| a.eq_ignore_ascii_case(asset.trim()))
    }
}

/// A transaction counts as CEX–DEX arbitrage when it comes from a known
/// contract, emits exactly the allowed number of swap events and both legs
/// are liquid assets.
pub fn classify_cex_dex(record: &SwapRecord<'_>, rules: &ClassifierRules) -> bool {
    rules.entity_of(record.contract).is_some()
        && record.swap_events == rules.max_swap_events
        && record.buy_asset != record.sell_asset
        && rules.is_liquid(record.buy_asset)
        && rules.is_liquid(record.sell_asset)
}
