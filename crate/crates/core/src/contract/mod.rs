//! The slashing, registry and insurance contract.
//!
//! A deterministic state machine: transactions are applied in block order by
//! [`Contract::execute`], and [`Contract::process_block_boundary`] runs once
//! after every block to expire policies and release withdrawn stake. All
//! amounts are exact integer wei.
//!
//! The provider roster that light clients track is static within an update
//! epoch: a register or withdraw request landing in epoch `j` changes the
//! roster from epoch `j + 2` on, so the roster of epoch `i + 1` is fully
//! determined by the roster of epoch `i` and the requests of epoch `i - 1`.

mod wire;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Chain, ChainError};
use crate::codec::{tag, Encoder};
use crate::crypto::{Digest, PublicKey};
use crate::pricing::{self, PricingParams};

pub use wire::{Call, ContractTx, Outcome, Receipt, ResponseClaim, Revert, SlashEvent, SlashEvidence, SlashRejection};

pub type Wei = u128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("update epoch of {update_epoch_blocks} blocks is shorter than maxT_cp + T_fin + 2*delta = {required}")]
    UpdateEpochTooShort { update_epoch_blocks: u64, required: u64 },
    #[error("minimum stake must be positive")]
    ZeroMinStake,
    #[error("watcher bounty above 100%")]
    BountyTooLarge,
    #[error("max coverage duration must be positive")]
    ZeroMaxCoverage,
    #[error(transparent)]
    Pricing(#[from] pricing::PricingError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("epoch {requested} is more than one epoch ahead of {current}")]
pub struct EpochTooFar {
    pub requested: u64,
    pub current: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractConfig {
    pub min_stake: Wei,
    /// Length of an update epoch in blocks.
    pub update_epoch_blocks: u64,
    pub max_challenge_period: u64,
    pub max_coverage_duration: u64,
    /// Share of the non-compensation part of a slash paid to the watcher.
    pub watcher_bounty_bps: u32,
    pub pricing: PricingParams,
}

impl Default for ContractConfig {
    fn default() -> Self {
        ContractConfig {
            min_stake: pricing::eth(1),
            update_epoch_blocks: 96,
            max_challenge_period: 64,
            max_coverage_duration: 10_000,
            watcher_bounty_bps: 500,
            pricing: PricingParams::default(),
        }
    }
}

impl ContractConfig {
    /// Checks `B_u >= maxT_cp + T_fin + 2*delta` along with the basic ranges.
    pub fn validate(&self, t_fin: u64, delta: u64) -> Result<(), ConfigError> {
        let required = self.max_challenge_period + t_fin + 2 * delta;
        if self.update_epoch_blocks < required {
            return Err(ConfigError::UpdateEpochTooShort { update_epoch_blocks: self.update_epoch_blocks, required });
        }
        if self.min_stake == 0 {
            return Err(ConfigError::ZeroMinStake);
        }
        if self.watcher_bounty_bps > 10_000 {
            return Err(ConfigError::BountyTooLarge);
        }
        if self.max_coverage_duration == 0 {
            return Err(ConfigError::ZeroMaxCoverage);
        }
        self.pricing.validate()?;
        Ok(())
    }

    pub fn epoch_of(&self, block: u64) -> u64 {
        block / self.update_epoch_blocks
    }

    pub fn first_block_of(&self, epoch: u64) -> u64 {
        epoch * self.update_epoch_blocks
    }

    pub fn last_block_of(&self, epoch: u64) -> u64 {
        (epoch + 1) * self.update_epoch_blocks - 1
    }

    /// Flat cost of one `buyInsurance` call, whatever the provider count.
    /// `pricing.gas_units` is the gas a purchase burns.
    pub fn gas_cost(&self) -> Wei {
        self.pricing.gas_cost_wei()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProviderStatus {
    Active,
    Leaving,
    Exited,
    Slashed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderRecord {
    pub public_key: PublicKey,
    /// Incarnation counter; a provider that exits and registers again gets a
    /// fresh record and counts as a different provider.
    pub record_id: u64,
    pub stake: Wei,
    pub locked: Wei,
    pub status: ProviderStatus,
    pub genesis: bool,
    pub joined_epoch: u64,
    pub withdraw_requested_epoch: Option<u64>,
    /// Epoch whose last block releases the stake, once requested.
    pub release_epoch: Option<u64>,
}

impl ProviderRecord {
    pub fn attributable(&self) -> Wei {
        self.stake - self.locked
    }

    /// Member of the tracked roster for `epoch`.
    pub fn in_roster(&self, epoch: u64) -> bool {
        if matches!(self.status, ProviderStatus::Exited | ProviderStatus::Slashed) {
            return false;
        }
        let joined = self.genesis || self.joined_epoch + 2 <= epoch;
        let left = self.withdraw_requested_epoch.is_some_and(|w| w + 2 <= epoch);
        joined && !left
    }

    fn holds_stake(&self) -> bool {
        matches!(self.status, ProviderStatus::Active | ProviderStatus::Leaving)
    }
}

/// One provider as seen in [`Contract::active_set`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub public_key: PublicKey,
    pub stake: Wei,
    pub attributable: Wei,
    pub leaving: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyState {
    Open,
    Claimed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub provider: PublicKey,
    pub amount: Wei,
    /// Lock no longer counted in the provider's `locked` (expired or slashed).
    pub released: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsurancePolicy {
    pub id: u64,
    pub buyer: PublicKey,
    pub allocations: Vec<Allocation>,
    pub coverage_value: Wei,
    pub premium: Wei,
    pub start_block: u64,
    pub duration: u64,
    pub state: PolicyState,
    pub paid_out: Wei,
    pub settled: bool,
}

impl InsurancePolicy {
    /// Last block in which a claim is still honoured.
    pub fn last_covered_block(&self) -> u64 {
        self.start_block + self.duration
    }

    /// Boundary at which the policy expires.
    pub fn expiry_block(&self) -> u64 {
        self.start_block + self.duration + 1
    }

    pub fn is_live(&self) -> bool {
        !self.settled
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    PolicyExpired { id: u64 },
    EscrowBurned { id: u64, provider: PublicKey, amount: Wei },
    ProviderExited { provider: PublicKey, released: Wei },
    WithdrawalDeferred { provider: PublicKey, release_epoch: u64 },
}

#[derive(Debug, Clone, Default)]
pub struct Contract {
    config: ContractConfig,
    providers: BTreeMap<PublicKey, ProviderRecord>,
    retired: Vec<ProviderRecord>,
    policies: BTreeMap<u64, InsurancePolicy>,
    // Stake seized from a slashed provider but still owed to a live policy.
    escrow: BTreeMap<(u64, PublicKey), Wei>,
    balances: BTreeMap<PublicKey, Wei>,
    rewards: BTreeMap<PublicKey, Wei>,
    slash_events: Vec<SlashEvent>,
    burned: Wei,
    gas_collected: Wei,
    next_policy_id: u64,
    next_record_id: u64,
}

impl Contract {
    pub fn new(config: ContractConfig) -> Self {
        Contract { config, next_policy_id: 1, ..Default::default() }
    }

    pub fn config(&self) -> &ContractConfig {
        &self.config
    }

    /// Credits an external account. Only used to set up genesis balances.
    pub fn mint(&mut self, account: PublicKey, amount: Wei) {
        *self.balances.entry(account).or_default() += amount;
    }

    pub fn balance(&self, account: &PublicKey) -> Wei {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn provider(&self, pk: &PublicKey) -> Option<&ProviderRecord> {
        self.providers.get(pk)
    }

    pub fn providers(&self) -> impl Iterator<Item = &ProviderRecord> {
        self.providers.values()
    }

    pub fn retired_records(&self) -> &[ProviderRecord] {
        &self.retired
    }

    pub fn policy(&self, id: u64) -> Option<&InsurancePolicy> {
        self.policies.get(&id)
    }

    pub fn policies(&self) -> impl Iterator<Item = &InsurancePolicy> {
        self.policies.values()
    }

    pub fn slash_events(&self) -> &[SlashEvent] {
        &self.slash_events
    }

    pub fn reward_pool(&self, pk: &PublicKey) -> Wei {
        self.rewards.get(pk).copied().unwrap_or(0)
    }

    pub fn burned(&self) -> Wei {
        self.burned
    }

    pub fn gas_collected(&self) -> Wei {
        self.gas_collected
    }

    pub fn escrowed(&self) -> Wei {
        self.escrow.values().sum()
    }

    /// Sum of every wei the contract knows about. Constant after genesis minting.
    pub fn total_wei(&self) -> Wei {
        let stakes: Wei = self.providers.values().filter(|p| p.holds_stake()).map(|p| p.stake).sum();
        stakes
            + self.balances.values().sum::<Wei>()
            + self.rewards.values().sum::<Wei>()
            + self.escrowed()
            + self.burned
            + self.gas_collected
    }

    /// Providers whose status is `Active` right now.
    pub fn live_providers(&self) -> Vec<&ProviderRecord> {
        self.providers.values().filter(|p| p.status == ProviderStatus::Active).collect()
    }

    /// `(stake, locked)` for every provider currently holding stake.
    pub fn stake_snapshot(&self) -> Vec<(Wei, Wei)> {
        self.providers.values().filter(|p| p.holds_stake() && p.stake > 0).map(|p| (p.stake, p.locked)).collect()
    }

    /// Roster for `epoch`, which may be the current epoch or the next one.
    pub fn active_set(&self, epoch: u64, now_block: u64) -> Result<Vec<RosterEntry>, EpochTooFar> {
        let current = self.config.epoch_of(now_block);
        if epoch > current + 1 {
            return Err(EpochTooFar { requested: epoch, current });
        }
        Ok(self
            .providers
            .values()
            .filter(|p| p.in_roster(epoch))
            .map(|p| RosterEntry {
                public_key: p.public_key,
                stake: p.stake,
                attributable: p.attributable(),
                leaving: p.status == ProviderStatus::Leaving,
            })
            .collect())
    }

    /// Registers a provider, moving `stake` out of its external balance.
    pub fn register(&mut self, pk: PublicKey, stake: Wei, block: u64) -> Result<(), Revert> {
        self.register_inner(pk, stake, block, false)
    }

    /// Registers a provider that is part of the roster from epoch 0.
    pub fn register_genesis(&mut self, pk: PublicKey, stake: Wei) -> Result<(), Revert> {
        self.register_inner(pk, stake, 0, true)
    }

    fn register_inner(&mut self, pk: PublicKey, stake: Wei, block: u64, genesis: bool) -> Result<(), Revert> {
        if stake < self.config.min_stake {
            return Err(Revert::BelowMinStake);
        }
        if self.providers.get(&pk).is_some_and(|p| p.holds_stake()) {
            return Err(Revert::DuplicateProvider);
        }
        let bal = self.balances.entry(pk).or_default();
        if *bal < stake {
            return Err(Revert::InsufficientFunds);
        }
        *bal -= stake;
        if let Some(old) = self.providers.remove(&pk) {
            self.retired.push(old);
        }
        let record_id = self.next_record_id;
        self.next_record_id += 1;
        self.providers.insert(
            pk,
            ProviderRecord {
                public_key: pk,
                record_id,
                stake,
                locked: 0,
                status: ProviderStatus::Active,
                genesis,
                joined_epoch: self.config.epoch_of(block),
                withdraw_requested_epoch: None,
                release_epoch: None,
            },
        );
        Ok(())
    }

    /// Marks the provider `Leaving`; returns the epoch whose last block is
    /// scheduled to release the stake.
    pub fn request_withdraw(&mut self, pk: &PublicKey, block: u64) -> Result<u64, Revert> {
        let epoch = self.config.epoch_of(block);
        let p = self.providers.get_mut(pk).ok_or(Revert::NotActive)?;
        if p.status != ProviderStatus::Active {
            return Err(Revert::NotActive);
        }
        p.status = ProviderStatus::Leaving;
        p.withdraw_requested_epoch = Some(epoch);
        p.release_epoch = Some(epoch + 1);
        Ok(epoch + 1)
    }

    /// Buys a policy. Gas is charged even if the purchase reverts.
    pub fn buy_insurance(
        &mut self,
        buyer: PublicKey,
        allocations: &[(PublicKey, Wei)],
        coverage_value: Wei,
        duration: u64,
        block: u64,
    ) -> Result<(u64, Wei), Revert> {
        let gas = self.config.gas_cost();
        let bal = self.balances.entry(buyer).or_default();
        if *bal < gas {
            return Err(Revert::InsufficientFunds);
        }
        *bal -= gas;
        self.gas_collected += gas;

        if duration == 0 || duration > self.config.max_coverage_duration {
            return Err(Revert::InvalidDuration);
        }
        if allocations.is_empty() {
            return Err(Revert::InvalidAllocations);
        }
        for (i, (pk, _)) in allocations.iter().enumerate() {
            if allocations[..i].iter().any(|(other, _)| other == pk) {
                return Err(Revert::InvalidAllocations);
            }
        }
        for (pk, amount) in allocations {
            let p = self.providers.get(pk).ok_or(Revert::InactiveProvider)?;
            if p.status != ProviderStatus::Active {
                return Err(Revert::InactiveProvider);
            }
            if *amount > p.attributable() {
                return Err(Revert::InsufficientAttributableStake);
            }
        }
        let total: Wei = allocations.iter().map(|a| a.1).sum();
        if total < coverage_value {
            return Err(Revert::CoverageExceedsAllocations);
        }
        let premium =
            pricing::premium(&self.config.pricing, duration, coverage_value).map_err(|_| Revert::InvalidDuration)?;
        let bal = self.balances.entry(buyer).or_default();
        if *bal < premium {
            return Err(Revert::InsufficientFunds);
        }
        *bal -= premium;

        // premium goes to the allocated providers pro rata, remainder to the first
        let mut distributed = 0;
        for (pk, amount) in allocations {
            let share = (premium * amount).checked_div(total).unwrap_or(0);
            *self.rewards.entry(*pk).or_default() += share;
            distributed += share;
        }
        *self.rewards.entry(allocations[0].0).or_default() += premium - distributed;

        for (pk, amount) in allocations {
            self.providers.get_mut(pk).unwrap().locked += amount;
        }
        let id = self.next_policy_id;
        self.next_policy_id += 1;
        self.policies.insert(
            id,
            InsurancePolicy {
                id,
                buyer,
                allocations: allocations
                    .iter()
                    .map(|(pk, amount)| Allocation { provider: *pk, amount: *amount, released: false })
                    .collect(),
                coverage_value,
                premium,
                start_block: block,
                duration,
                state: PolicyState::Open,
                paid_out: 0,
                settled: false,
            },
        );
        Ok((id, premium))
    }

    /// Resolves a dispute against the chain's own finality rule.
    ///
    /// A valid dispute seizes the provider's whole stake. Stake allocated to
    /// live policies is held in escrow for those policies; the claimed
    /// policy (if the signed payload names one) is paid from its escrow at
    /// once. The free part pays the watcher bounty and the rest is burned.
    /// Further valid evidence naming another live policy that allocated this
    /// provider is paid from escrow even after the provider is slashed.
    pub fn slash(
        &mut self,
        evidence: &SlashEvidence,
        watcher: PublicKey,
        chain: &Chain,
        block: u64,
    ) -> Result<SlashEvent, SlashRejection> {
        let pk = evidence.provider;
        let status = self.providers.get(&pk).ok_or(SlashRejection::UnknownProvider)?.status;
        if !evidence.signature_valid() {
            return Err(SlashRejection::SignatureInvalid);
        }
        let n_b = evidence.claim.block_number;
        let finalized = match chain.finalized_block_hash(n_b) {
            Ok(h) => h,
            Err(ChainError::NotYetFinal { .. } | ChainError::UnknownHeight { .. }) => {
                return Err(SlashRejection::BlockNotYetFinal)
            }
            Err(ChainError::TxNotInBlock { .. }) => unreachable!(),
        };
        if finalized == evidence.claim.block_hash {
            return Err(SlashRejection::HashMatchesFinalized);
        }
        match status {
            ProviderStatus::Exited => return Err(SlashRejection::ProviderExited),
            ProviderStatus::Slashed => return self.late_claim(evidence, watcher, block),
            ProviderStatus::Active | ProviderStatus::Leaving => {}
        }

        let record = self.providers.get_mut(&pk).unwrap();
        let seized = record.stake;
        record.stake = 0;
        record.locked = 0;
        record.status = ProviderStatus::Slashed;

        let mut escrowed = 0;
        for policy in self.policies.values_mut().filter(|p| p.is_live()) {
            for alloc in policy.allocations.iter_mut().filter(|a| a.provider == pk && !a.released) {
                alloc.released = true;
                self.escrow.insert((policy.id, pk), alloc.amount);
                escrowed += alloc.amount;
            }
        }
        debug_assert!(escrowed <= seized);

        let compensation = match evidence.claim.insurance_id {
            Some(id) => self.pay_claim(id, pk, block),
            None => 0,
        };
        let free = seized - escrowed;
        let bounty = free * self.config.watcher_bounty_bps as u128 / 10_000;
        *self.balances.entry(watcher).or_default() += bounty;
        self.burned += free - bounty;

        let event = SlashEvent {
            provider_pk: pk,
            offending_signature: evidence.signature,
            block_number: n_b,
            signed_hash: evidence.claim.block_hash,
            slashed_amount: seized,
            insurance_id: evidence.claim.insurance_id,
            compensation,
            bounty,
            burned: free - bounty,
            watcher,
            recorded_in_block: block,
        };
        self.slash_events.push(event.clone());
        Ok(event)
    }

    fn late_claim(
        &mut self,
        evidence: &SlashEvidence,
        watcher: PublicKey,
        block: u64,
    ) -> Result<SlashEvent, SlashRejection> {
        let pk = evidence.provider;
        let Some(id) = evidence.claim.insurance_id else {
            return Err(SlashRejection::AlreadySlashed);
        };
        if !self.escrow.contains_key(&(id, pk)) {
            return Err(SlashRejection::AlreadySlashed);
        }
        let compensation = self.pay_claim(id, pk, block);
        let event = SlashEvent {
            provider_pk: pk,
            offending_signature: evidence.signature,
            block_number: evidence.claim.block_number,
            signed_hash: evidence.claim.block_hash,
            slashed_amount: 0,
            insurance_id: Some(id),
            compensation,
            bounty: 0,
            burned: 0,
            watcher,
            recorded_in_block: block,
        };
        self.slash_events.push(event.clone());
        Ok(event)
    }

    /// Pays policy `id` out of the escrow held for `(id, pk)`; any part of the
    /// escrow not needed is burned.
    fn pay_claim(&mut self, id: u64, pk: PublicKey, block: u64) -> Wei {
        let Some(policy) = self.policies.get_mut(&id) else { return 0 };
        if policy.settled || block > policy.last_covered_block() {
            return 0;
        }
        let Some(held) = self.escrow.remove(&(id, pk)) else { return 0 };
        let owed = policy.coverage_value - policy.paid_out;
        let pay = owed.min(held);
        policy.paid_out += pay;
        policy.state = PolicyState::Claimed;
        let buyer = policy.buyer;
        *self.balances.entry(buyer).or_default() += pay;
        self.burned += held - pay;
        pay
    }

    /// Applies one transaction and returns its outcome.
    pub fn execute(&mut self, tx: &ContractTx, chain: &Chain, block: u64) -> Outcome {
        let res = match &tx.call {
            Call::Register { stake } => self
                .register(tx.sender, *stake, block)
                .map(|_| Outcome::Registered { provider: tx.sender, stake: *stake }),
            Call::RequestWithdraw => self
                .request_withdraw(&tx.sender, block)
                .map(|release_epoch| Outcome::WithdrawRequested { provider: tx.sender, release_epoch }),
            Call::BuyInsurance { allocations, coverage_value, duration } => self
                .buy_insurance(tx.sender, allocations, *coverage_value, *duration, block)
                .map(|(id, premium)| Outcome::InsurancePurchased { id, premium }),
            Call::Slash { evidence } => {
                self.slash(evidence, tx.sender, chain, block).map(Outcome::Slashed).map_err(Revert::from)
            }
        };
        res.unwrap_or_else(Outcome::Reverted)
    }

    /// End-of-block processing: expire policies, then (at the last block of
    /// an update epoch) release stake of providers whose withdrawal is due.
    pub fn process_block_boundary(&mut self, block: u64) -> Vec<Effect> {
        let mut effects = Vec::new();

        let expiring: Vec<u64> =
            self.policies.values().filter(|p| p.is_live() && p.last_covered_block() < block).map(|p| p.id).collect();
        for id in expiring {
            let policy = self.policies.get_mut(&id).unwrap();
            for alloc in policy.allocations.iter_mut().filter(|a| !a.released) {
                alloc.released = true;
                if let Some(p) = self.providers.get_mut(&alloc.provider) {
                    p.locked -= alloc.amount;
                }
            }
            policy.settled = true;
            if policy.state == PolicyState::Open {
                policy.state = PolicyState::Expired;
            }
            let stale: Vec<(u64, PublicKey)> =
                self.escrow.range((id, PublicKey([0; 32]))..=(id, PublicKey([0xFF; 32]))).map(|(k, _)| *k).collect();
            for key in stale {
                let amount = self.escrow.remove(&key).unwrap();
                self.burned += amount;
                effects.push(Effect::EscrowBurned { id, provider: key.1, amount });
            }
            effects.push(Effect::PolicyExpired { id });
        }

        let epoch = self.config.epoch_of(block);
        if block == self.config.last_block_of(epoch) {
            let due: Vec<PublicKey> = self
                .providers
                .values()
                .filter(|p| p.status == ProviderStatus::Leaving && p.release_epoch.is_some_and(|e| e <= epoch))
                .map(|p| p.public_key)
                .collect();
            for pk in due {
                let last_expiry = self
                    .policies
                    .values()
                    .filter(|pol| pol.is_live() && pol.allocations.iter().any(|a| a.provider == pk && !a.released))
                    .map(|pol| pol.expiry_block())
                    .max();
                match last_expiry {
                    None => {
                        let p = self.providers.get_mut(&pk).unwrap();
                        let released = p.stake;
                        p.stake = 0;
                        p.status = ProviderStatus::Exited;
                        let reward = self.rewards.remove(&pk).unwrap_or(0);
                        *self.balances.entry(pk).or_default() += released + reward;
                        effects.push(Effect::ProviderExited { provider: pk, released });
                    }
                    Some(exp) => {
                        let release_epoch = self.config.epoch_of(exp) + 1;
                        self.providers.get_mut(&pk).unwrap().release_epoch = Some(release_epoch);
                        effects.push(Effect::WithdrawalDeferred { provider: pk, release_epoch });
                    }
                }
            }
        }
        effects
    }

    /// Checks `0 <= locked <= stake` for every provider and that each
    /// provider's lock equals the sum of its unreleased allocations.
    pub fn check_no_overload(&self) -> Result<(), String> {
        for p in self.providers.values() {
            if p.locked > p.stake {
                return Err(format!("provider {} locked {} > stake {}", p.public_key.short(), p.locked, p.stake));
            }
            let allocated: Wei = self
                .policies
                .values()
                .flat_map(|pol| pol.allocations.iter())
                .filter(|a| a.provider == p.public_key && !a.released)
                .map(|a| a.amount)
                .sum();
            if p.holds_stake() && allocated != p.locked {
                return Err(format!(
                    "provider {} locked {} but allocations sum to {}",
                    p.public_key.short(),
                    p.locked,
                    allocated
                ));
            }
        }
        Ok(())
    }

    /// Byte-exact encoding of the whole state; equal states encode equally.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::with_tag(tag::CONTRACT_STATE);
        e.u64(self.providers.len() as u64);
        for p in self.providers.values() {
            encode_record(&mut e, p);
        }
        e.u64(self.retired.len() as u64);
        for p in &self.retired {
            encode_record(&mut e, p);
        }
        e.u64(self.policies.len() as u64);
        for pol in self.policies.values() {
            e.u64(pol.id).pk(&pol.buyer).u64(pol.allocations.len() as u64);
            for a in &pol.allocations {
                e.pk(&a.provider).u128(a.amount).bool(a.released);
            }
            e.u128(pol.coverage_value)
                .u128(pol.premium)
                .u64(pol.start_block)
                .u64(pol.duration)
                .u8(pol.state as u8)
                .u128(pol.paid_out)
                .bool(pol.settled);
        }
        e.u64(self.escrow.len() as u64);
        for ((id, pk), v) in &self.escrow {
            e.u64(*id).pk(pk).u128(*v);
        }
        for map in [&self.balances, &self.rewards] {
            e.u64(map.len() as u64);
            for (pk, v) in map {
                e.pk(pk).u128(*v);
            }
        }
        e.u64(self.slash_events.len() as u64);
        for ev in &self.slash_events {
            e.bytes(&ev.encode());
        }
        e.u128(self.burned).u128(self.gas_collected).u64(self.next_policy_id).u64(self.next_record_id);
        e.finish()
    }

    pub fn state_digest(&self) -> Digest {
        crate::crypto::hash(&self.canonical_bytes())
    }
}

fn encode_record(e: &mut Encoder, p: &ProviderRecord) {
    e.pk(&p.public_key)
        .u64(p.record_id)
        .u128(p.stake)
        .u128(p.locked)
        .u8(p.status as u8)
        .bool(p.genesis)
        .u64(p.joined_epoch)
        .opt_u64(p.withdraw_requested_epoch)
        .opt_u64(p.release_epoch);
}

#[cfg(test)]
mod tests;
