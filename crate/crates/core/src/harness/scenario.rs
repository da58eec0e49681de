//! Scenario files.
//!
//! A scenario is TOML mirroring [`ScenarioConfig`]. ETH amounts are decimal
//! strings (or integers) so that fractional values stay exact:
//!
//! ```toml
//! name = "honest"
//! seed = 7
//! total_ticks = 300
//!
//! [[providers]]
//! stake = "32"
//!
//! [[clients]]
//! protocol = "eco"
//! challenge_period = 24
//! checks = [{ at = 5, value = "10" }]
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::Strategy;
use crate::contract::{ConfigError, ContractConfig};
use crate::light_client::ClientConfig;
use crate::pricing::{Eth, PricingParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid scenario: {0}")]
    Contract(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpec {
    pub stake: Eth,
    #[serde(default = "honest")]
    pub strategy: Strategy,
    /// Tick of the register transaction; absent means part of genesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join_tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub withdraw_tick: Option<u64>,
    /// Register again (as a fresh record) at this tick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejoin_tick: Option<u64>,
}

fn honest() -> Strategy {
    Strategy::Honest
}

impl ProviderSpec {
    pub fn genesis(stake: Eth, strategy: Strategy) -> Self {
        ProviderSpec { stake, strategy, join_tick: None, withdraw_tick: None, rejoin_tick: None }
    }
}

/// A target state the client will verify. Its transaction is put in block
/// `at`; the client starts checking once that block is final.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub at: u64,
    pub value: Eth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientSpec {
    #[serde(flatten)]
    pub config: ClientConfig,
    #[serde(default = "default_balance")]
    pub balance: Eth,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    /// Inclusive tick ranges during which the client neither receives nor acts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offline: Vec<[u64; 2]>,
}

fn default_balance() -> Eth {
    Eth::whole(5)
}

impl ClientSpec {
    pub fn new(config: ClientConfig, checks: Vec<CheckSpec>) -> Self {
        ClientSpec { config, balance: default_balance(), checks, offline: Vec::new() }
    }

    pub fn is_offline(&self, tick: u64) -> bool {
        self.offline.iter().any(|[a, b]| *a <= tick && tick <= *b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub slots_per_epoch: u64,
    pub finality_depth_epochs: u64,
    pub update_epoch_blocks: u64,
    pub max_challenge_period: u64,
    pub delta_ticks: u64,
    pub total_ticks: u64,
    pub min_stake: Eth,
    pub watcher_bounty_bps: u32,
    pub max_coverage_duration: u64,
    pub watchers: usize,
    pub providers: Vec<ProviderSpec>,
    pub clients: Vec<ClientSpec>,
    pub pricing: PricingParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let c = ContractConfig::default();
        ScenarioConfig {
            name: "scenario".into(),
            seed: 0,
            slots_per_epoch: 4,
            finality_depth_epochs: 2,
            update_epoch_blocks: c.update_epoch_blocks,
            max_challenge_period: c.max_challenge_period,
            delta_ticks: 2,
            total_ticks: 200,
            min_stake: Eth(c.min_stake),
            watcher_bounty_bps: c.watcher_bounty_bps,
            max_coverage_duration: c.max_coverage_duration,
            watchers: 1,
            providers: Vec::new(),
            clients: Vec::new(),
            pricing: PricingParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn t_fin(&self) -> u64 {
        self.slots_per_epoch * self.finality_depth_epochs
    }

    pub fn contract_config(&self) -> ContractConfig {
        ContractConfig {
            min_stake: self.min_stake.wei(),
            update_epoch_blocks: self.update_epoch_blocks,
            max_challenge_period: self.max_challenge_period,
            max_coverage_duration: self.max_coverage_duration,
            watcher_bounty_bps: self.watcher_bounty_bps,
            pricing: self.pricing.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.slots_per_epoch == 0 || self.finality_depth_epochs == 0 {
            return bad("slots_per_epoch and finality_depth_epochs must be positive".into());
        }
        if self.delta_ticks == 0 {
            return bad("delta_ticks must be at least 1".into());
        }
        if self.update_epoch_blocks == 0 {
            return bad("update_epoch_blocks must be positive".into());
        }
        self.contract_config().validate(self.t_fin(), self.delta_ticks)?;
        if self.watchers == 0 {
            return bad("at least one watcher is required".into());
        }
        for (i, c) in self.clients.iter().enumerate() {
            let mut periods = vec![c.config.challenge_period];
            if c.config.protocol == crate::light_client::Protocol::Ins {
                periods.push(c.config.receipt_challenge_period);
            }
            if c.config.track_roster {
                periods.push(c.config.roster_challenge_period);
            }
            for cp in periods {
                if cp > self.max_challenge_period {
                    return bad(format!("client {i}: challenge period {cp} exceeds max_challenge_period"));
                }
            }
            for ch in &c.checks {
                if ch.at == 0 || ch.at > self.total_ticks {
                    return bad(format!("client {i}: check at tick {} is outside 1..={}", ch.at, self.total_ticks));
                }
                if ch.value.wei() == 0 {
                    return bad(format!("client {i}: check value must be positive"));
                }
            }
        }
        for (i, p) in self.providers.iter().enumerate() {
            if p.stake.wei() < self.min_stake.wei() {
                return bad(format!("provider {i}: stake below min_stake"));
            }
        }
        Ok(())
    }
}
