//! Per-run measurements and property violations.

use serde::{Deserialize, Serialize};

use crate::crypto::PublicKey;
use crate::light_client::{CheckId, Protocol, Purpose};
use crate::pricing::Eth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    /// An economic check accepted a hash that is not the final one.
    EcoSafety,
    /// An insured check accepted a wrong hash and was not paid in full.
    InsProtection,
    /// A client lost more than it paid in premiums and gas.
    NetLoss,
    Conservation,
    NoOverload,
    /// An honest provider was slashed.
    WatcherSoundness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub tick: u64,
    pub detail: String,
}

/// One accepted check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub check: CheckId,
    pub purpose: Purpose,
    pub protocol: Protocol,
    pub block_number: u64,
    /// Tick the check was started, for target checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started: Option<u64>,
    pub accepted_at: u64,
    pub latency: u64,
    pub signatures: usize,
    pub correct: bool,
    pub value: Eth,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub insurance_id: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub public_key: Option<PublicKey>,
    pub acceptances: Vec<Acceptance>,
    pub restarts: u64,
    pub failures: u64,
    pub heavy_checks: u64,
    pub bootstraps: u64,
    pub roster_predictions: u64,
    /// Epoch starts at which a roster-tracking client's roster was compared
    /// with the contract's, and how many of those differed.
    pub roster_comparisons: u64,
    pub roster_mismatches: u64,
    pub policies_bought: u64,
    pub premium_paid: Eth,
    pub gas_paid: Eth,
    pub compensation: Eth,
    pub initial_balance: Eth,
    pub final_balance: Eth,
    pub storage_bytes: usize,
}

impl ClientMetrics {
    pub fn target_acceptances(&self) -> impl Iterator<Item = &Acceptance> {
        self.acceptances.iter().filter(|a| a.purpose == Purpose::Target)
    }

    pub fn false_acceptances(&self) -> impl Iterator<Item = &Acceptance> {
        self.acceptances.iter().filter(|a| !a.correct)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub ticks: u64,
    pub t_fin: u64,
    pub clients: Vec<ClientMetrics>,
    /// Providers whose stake was seized, by index, with the tick.
    pub slashed: Vec<(usize, u64)>,
    /// Slash transactions that paid a claim against an already slashed provider.
    pub late_claims: u64,
    pub exits: Vec<(usize, u64)>,
    pub total_wei: Eth,
    pub burned: Eth,
    pub average_utilization: f64,
    pub violations: Vec<Violation>,
}

impl Metrics {
    pub fn violations_of(&self, kind: ViolationKind) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.kind == kind)
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}
