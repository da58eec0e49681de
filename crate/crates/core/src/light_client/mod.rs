//! Light-client state machines for the economic and the insured protocol.
//!
//! [`LightClient`] is sans-IO: the caller feeds it ticks and messages, and
//! drains [`Output`]s to send and [`ClientEvent`]s to record. Several checks
//! can be in flight at once, each keyed by a [`CheckId`].
//!
//! An economic check queries providers whose stake backs the target value,
//! forwards every response to watchers, and accepts once `T_cp` has passed
//! since the last forward without a verified alert. An insured check first
//! buys a policy, confirms the purchase receipt with an economic check, then
//! queries the policy's providers with the policy id and accepts as soon as
//! the responses verify. It keeps listening afterwards so a payout can be
//! recorded.

mod roster;
mod selection;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::actors::{Alert, Query, SignedResponse};
use crate::chain::BlockHeader;
use crate::contract::{Call, ContractTx, Outcome, Receipt, Revert, RosterEntry, SlashEvent, Wei};
use crate::crypto::{hash, Digest, KeyPair, PublicKey};
use crate::pricing::{min_coverage_duration, CoverageInputs, Eth};

pub use roster::Roster;
pub use selection::{required_coverage, select_providers, SelectionError};

pub type CheckId = u64;

/// Rounds after which a check gives up.
pub const MAX_ROUNDS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Eco,
    Ins,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub protocol: Protocol,
    /// `T_cp` for economic checks; the post-acceptance listening window
    /// (`T_cp^1`) for insured ones.
    pub challenge_period: u64,
    /// `T_cp^0`, used to confirm the purchase receipt of a policy.
    pub receipt_challenge_period: u64,
    pub delta_comm: u64,
    pub delta_comp: u64,
    /// Follow registry receipts to predict the next roster instead of
    /// bootstrapping every epoch.
    pub track_roster: bool,
    /// Backing required for roster-maintenance checks.
    pub roster_check_value: Eth,
    pub roster_challenge_period: u64,
    /// Fixed policy length instead of the minimum coverage window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_duration: Option<u64>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            protocol: Protocol::Eco,
            challenge_period: 64,
            receipt_challenge_period: 64,
            delta_comm: 26,
            delta_comp: 1,
            track_roster: false,
            roster_check_value: Eth::whole(1),
            roster_challenge_period: 32,
            coverage_duration: None,
        }
    }
}

/// Chain and network constants every client knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Env {
    pub t_fin: u64,
    pub delta: u64,
    pub update_epoch_blocks: u64,
}

impl Env {
    pub fn epoch_of(&self, block: u64) -> u64 {
        block / self.update_epoch_blocks
    }
}

/// Trusted, expensive reads of the chain. Each call is one heavy check.
pub trait HeavyCheck {
    /// Roster of the update epoch containing `now`.
    fn active_set(&mut self, now: u64) -> (u64, Vec<RosterEntry>);
    /// Header of block `n` if it is final.
    fn finalized_header(&mut self, n: u64) -> Option<BlockHeader>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub block_number: u64,
    pub state_hash: Digest,
    pub value: Wei,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Purpose {
    Target,
    /// Confirms the purchase receipt for the insured check `parent`.
    InsuranceReceipt {
        parent: CheckId,
    },
    /// Confirms one registry receipt of update epoch `epoch`.
    Roster {
        epoch: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientPhase {
    Bootstrapping,
    AwaitingInsurance,
    Querying,
    Listening,
    Accepted,
    RejectedRestarting,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inbound {
    Response(SignedResponse),
    Alert(Alert),
    /// Untrusted pointer to the receipt of a transaction this client sent.
    ReceiptHint {
        block: u64,
        receipt: Vec<u8>,
    },
    /// Registry receipts of update epoch `epoch`, as `(block, receipt)`.
    RosterEvents {
        epoch: u64,
        events: Vec<(u64, Vec<u8>)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Query { to: PublicKey, query: Query },
    Forward(SignedResponse),
    Submit(ContractTx),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestartReason {
    Timeout { silent: Vec<PublicKey> },
    InvalidResponse { providers: Vec<PublicKey> },
    Disagreement,
    Alert { provider: PublicKey },
    InsuranceReverted { code: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientEvent {
    Bootstrapped {
        epoch: u64,
        providers: usize,
    },
    RosterAdvanced {
        epoch: u64,
    },
    RosterPredicted {
        epoch: u64,
        providers: usize,
    },
    Selected {
        check: CheckId,
        round: u32,
        providers: Vec<PublicKey>,
    },
    Forwarded {
        check: CheckId,
        provider: PublicKey,
    },
    InsuranceRequested {
        check: CheckId,
        tx_id: Digest,
        coverage: Wei,
        duration: u64,
    },
    InsuranceConfirmed {
        check: CheckId,
        id: u64,
        premium: Wei,
    },
    Accepted {
        check: CheckId,
        purpose: Purpose,
        block_number: u64,
        block_hash: Digest,
        state_hash: Digest,
        signatures: usize,
        latency: u64,
        insurance_id: Option<u64>,
        value: Wei,
    },
    Restarted {
        check: CheckId,
        round: u32,
        reason: RestartReason,
    },
    AlertVerified {
        provider: PublicKey,
        slash_block: u64,
    },
    AlertAfterAcceptance {
        check: CheckId,
        provider: PublicKey,
    },
    Compensated {
        check: CheckId,
        policy: u64,
        amount: Wei,
    },
    Failed {
        check: CheckId,
        reason: String,
    },
}

#[derive(Debug, Clone)]
enum Stage {
    Start,
    AwaitingInsurance {
        tx_id: Digest,
        allocations: Vec<(PublicKey, Wei)>,
        hint: Option<(u64, Vec<u8>)>,
        receipt_check: Option<CheckId>,
    },
    Querying {
        selected: Vec<PublicKey>,
        insurance_id: Option<u64>,
        responses: BTreeMap<PublicKey, SignedResponse>,
        sent: u64,
        last_forward: u64,
    },
    /// Economic: waiting out the challenge period before accepting.
    Waiting {
        responses: BTreeMap<PublicKey, SignedResponse>,
        last_forward: u64,
    },
    /// Insured: accepted, listening for a payout until `until`.
    Listening {
        until: u64,
    },
    Accepted,
    Failed,
}

#[derive(Debug, Clone)]
struct Check {
    purpose: Purpose,
    target: Target,
    protocol: Protocol,
    challenge_period: u64,
    excluded: BTreeSet<PublicKey>,
    /// Providers to avoid when another choice exists.
    avoid: BTreeSet<PublicKey>,
    round: u32,
    stage: Stage,
    restarting: bool,
    accepted_from: Vec<PublicKey>,
}

/// Registry receipts being confirmed, keyed by check, with their position
/// in chain order.
#[derive(Debug, Clone, Default)]
struct Prediction {
    pending: BTreeMap<CheckId, (usize, Vec<u8>)>,
    confirmed: Vec<(usize, Vec<u8>)>,
    ready: Option<Roster>,
}

/// One light client.
#[derive(Debug, Clone)]
pub struct LightClient {
    pub keypair: KeyPair,
    config: ClientConfig,
    env: Env,
    roster: Option<Roster>,
    prediction: Option<Prediction>,
    blacklist: BTreeSet<PublicKey>,
    checks: BTreeMap<CheckId, Check>,
    /// Policy id to the check that bought it.
    policies: BTreeMap<u64, CheckId>,
    paid: BTreeSet<(u64, PublicKey, u64)>,
    next_check: CheckId,
    nonce: u64,
    heavy_checks: u64,
    last_bootstrap: Option<u64>,
    outbox: Vec<Output>,
    events: Vec<ClientEvent>,
}

impl LightClient {
    pub fn new(keypair: KeyPair, config: ClientConfig, env: Env) -> Self {
        LightClient {
            keypair,
            config,
            env,
            roster: None,
            prediction: None,
            blacklist: BTreeSet::new(),
            checks: BTreeMap::new(),
            policies: BTreeMap::new(),
            paid: BTreeSet::new(),
            next_check: 1,
            nonce: 0,
            heavy_checks: 0,
            last_bootstrap: None,
            outbox: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public_key
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn heavy_checks(&self) -> u64 {
        self.heavy_checks
    }

    pub fn roster(&self) -> Option<&Roster> {
        self.roster.as_ref()
    }

    /// The prediction for the next epoch, once every registry receipt of the
    /// previous epoch has been confirmed.
    pub fn predicted_roster(&self) -> Option<&Roster> {
        self.prediction.as_ref().and_then(|p| p.ready.as_ref())
    }

    pub fn take_outputs(&mut self) -> Vec<Output> {
        std::mem::take(&mut self.outbox)
    }

    pub fn take_events(&mut self) -> Vec<ClientEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn phase(&self, id: CheckId) -> Option<ClientPhase> {
        let c = self.checks.get(&id)?;
        Some(match &c.stage {
            Stage::Start => ClientPhase::Bootstrapping,
            _ if c.restarting => ClientPhase::RejectedRestarting,
            Stage::AwaitingInsurance { .. } => ClientPhase::AwaitingInsurance,
            Stage::Querying { .. } => ClientPhase::Querying,
            Stage::Waiting { .. } | Stage::Listening { .. } => ClientPhase::Listening,
            Stage::Accepted => ClientPhase::Accepted,
            Stage::Failed => ClientPhase::Failed,
        })
    }

    /// True when no check is still in progress (insured listening included).
    pub fn is_idle(&self) -> bool {
        self.checks.values().all(|c| matches!(c.stage, Stage::Accepted | Stage::Failed))
    }

    /// Minimum policy length covering the receipt check, the listening
    /// window and the message and payout delays.
    pub fn coverage_window(&self) -> u64 {
        min_coverage_duration(&CoverageInputs {
            t_fin: self.env.t_fin,
            challenge_periods: vec![self.config.receipt_challenge_period, self.config.challenge_period],
            delta_comm: self.config.delta_comm,
            delta_comp: self.config.delta_comp,
        })
    }

    /// Number of persistent bytes kept between checks.
    pub fn storage_bytes(&self) -> usize {
        self.roster.as_ref().map_or(0, Roster::storage_bytes)
    }

    /// Starts verifying `target` with the configured protocol.
    pub fn start_check(&mut self, now: u64, target: Target, oracle: &mut dyn HeavyCheck) -> CheckId {
        let (protocol, cp) = (self.config.protocol, self.config.challenge_period);
        self.spawn(now, Purpose::Target, target, protocol, cp, BTreeSet::new(), oracle)
    }

    #[allow(clippy::too_many_arguments)]
    fn spawn(
        &mut self,
        now: u64,
        purpose: Purpose,
        target: Target,
        protocol: Protocol,
        challenge_period: u64,
        avoid: BTreeSet<PublicKey>,
        oracle: &mut dyn HeavyCheck,
    ) -> CheckId {
        let id = self.next_check;
        self.next_check += 1;
        let check = Check {
            purpose,
            target,
            protocol,
            challenge_period,
            excluded: BTreeSet::new(),
            avoid,
            round: 0,
            stage: Stage::Start,
            restarting: false,
            accepted_from: Vec::new(),
        };
        self.checks.insert(id, check);
        self.begin_round(id, now, oracle);
        id
    }

    fn emit(&mut self, ev: ClientEvent) {
        self.events.push(ev);
    }

    fn bootstrap(&mut self, now: u64, oracle: &mut dyn HeavyCheck) {
        let (epoch, entries) = oracle.active_set(now);
        self.heavy_checks += 1;
        self.last_bootstrap = Some(now);
        let mut roster = Roster::new(epoch, entries);
        for pk in &self.blacklist {
            roster.remove(pk);
        }
        self.emit(ClientEvent::Bootstrapped { epoch, providers: roster.entries.len() });
        self.roster = Some(roster);
        self.prediction = None;
    }

    /// Brings the roster to the current epoch, from the prediction if one is
    /// ready and otherwise with a heavy check.
    fn ensure_roster(&mut self, now: u64, oracle: &mut dyn HeavyCheck) {
        let epoch = self.env.epoch_of(now);
        if self.roster.as_ref().is_some_and(|r| r.epoch == epoch) {
            return;
        }
        let ready = self.roster.as_ref().is_some_and(|r| r.epoch + 1 == epoch)
            && self.prediction.as_ref().is_some_and(|p| p.ready.is_some());
        if ready {
            let mut next = self.prediction.take().unwrap().ready.unwrap();
            for pk in &self.blacklist {
                next.remove(pk);
            }
            self.roster = Some(next);
            self.emit(ClientEvent::RosterAdvanced { epoch });
        } else {
            self.bootstrap(now, oracle);
        }
    }

    fn next_tx(&mut self, call: Call) -> ContractTx {
        self.nonce += 1;
        ContractTx { sender: self.keypair.public_key, nonce: self.nonce, call }
    }

    fn candidates(&self, check: &Check, skip: &BTreeSet<PublicKey>) -> Vec<(PublicKey, Wei)> {
        let Some(roster) = &self.roster else { return Vec::new() };
        roster
            .entries
            .values()
            .filter(|e| {
                !e.leaving && !self.blacklist.contains(&e.public_key) && !check.excluded.contains(&e.public_key)
            })
            .filter(|e| !skip.contains(&e.public_key))
            .map(|e| (e.public_key, if check.protocol == Protocol::Ins { e.attributable } else { e.stake }))
            .collect()
    }

    fn pick(&self, id: CheckId) -> Result<Vec<(PublicKey, Wei)>, SelectionError> {
        let check = &self.checks[&id];
        let value = check.target.value;
        select_providers(&self.candidates(check, &check.avoid), value)
            .or_else(|_| select_providers(&self.candidates(check, &BTreeSet::new()), value))
    }

    fn select(&mut self, id: CheckId, now: u64, oracle: &mut dyn HeavyCheck) -> Option<Vec<(PublicKey, Wei)>> {
        self.ensure_roster(now, oracle);
        let mut picked = self.pick(id);
        if picked.is_err() && self.last_bootstrap != Some(now) {
            // the local copy may be stale, e.g. locks that have since expired
            self.bootstrap(now, oracle);
            picked = self.pick(id);
        }
        match picked {
            Ok(sel) => Some(sel),
            Err(e) => {
                self.fail(id, e.to_string());
                None
            }
        }
    }

    fn fail(&mut self, id: CheckId, reason: String) {
        if let Some(c) = self.checks.get_mut(&id) {
            c.stage = Stage::Failed;
            let parent = match c.purpose {
                Purpose::InsuranceReceipt { parent } => Some(parent),
                _ => None,
            };
            self.emit(ClientEvent::Failed { check: id, reason: reason.clone() });
            if let Some(p) = parent {
                self.fail(p, format!("receipt check failed: {reason}"));
            }
        }
    }

    fn begin_round(&mut self, id: CheckId, now: u64, oracle: &mut dyn HeavyCheck) {
        let round = {
            let c = self.checks.get_mut(&id).unwrap();
            c.round += 1;
            c.round
        };
        if round > MAX_ROUNDS {
            self.fail(id, "too many rounds".into());
            return;
        }
        let Some(selection) = self.select(id, now, oracle) else { return };
        let providers: Vec<PublicKey> = selection.iter().map(|s| s.0).collect();
        self.emit(ClientEvent::Selected { check: id, round, providers: providers.clone() });
        let c = self.checks.get(&id).unwrap();
        let target = c.target;
        match c.protocol {
            Protocol::Eco => self.send_queries(id, now, providers, None),
            Protocol::Ins => {
                let duration = self.config.coverage_duration.unwrap_or_else(|| self.coverage_window());
                let tx = self.next_tx(Call::BuyInsurance {
                    allocations: selection.clone(),
                    coverage_value: target.value,
                    duration,
                });
                let tx_id = tx.id();
                self.outbox.push(Output::Submit(tx));
                self.emit(ClientEvent::InsuranceRequested { check: id, tx_id, coverage: target.value, duration });
                let c = self.checks.get_mut(&id).unwrap();
                c.stage = Stage::AwaitingInsurance { tx_id, allocations: selection, hint: None, receipt_check: None };
            }
        }
    }

    fn send_queries(&mut self, id: CheckId, now: u64, providers: Vec<PublicKey>, insurance_id: Option<u64>) {
        let target = self.checks[&id].target;
        for pk in &providers {
            let query = Query::new(&self.keypair, target.block_number, target.state_hash, insurance_id);
            self.outbox.push(Output::Query { to: *pk, query });
        }
        let c = self.checks.get_mut(&id).unwrap();
        c.stage = Stage::Querying {
            selected: providers,
            insurance_id,
            responses: BTreeMap::new(),
            sent: now,
            last_forward: now,
        };
    }

    fn restart(
        &mut self,
        id: CheckId,
        now: u64,
        reason: RestartReason,
        exclude: &[PublicKey],
        oracle: &mut dyn HeavyCheck,
    ) {
        let round = {
            let c = self.checks.get_mut(&id).unwrap();
            c.excluded.extend(exclude.iter().copied());
            c.restarting = true;
            c.round
        };
        if let Some(Stage::AwaitingInsurance { receipt_check: Some(sub), .. }) = self.checks.get(&id).map(|c| &c.stage)
        {
            let sub = *sub;
            if let Some(s) = self.checks.get_mut(&sub) {
                s.stage = Stage::Failed;
            }
        }
        if matches!(reason, RestartReason::InsuranceReverted { .. }) {
            self.bootstrap(now, oracle);
        }
        self.emit(ClientEvent::Restarted { check: id, round, reason });
        self.begin_round(id, now, oracle);
    }

    pub fn on_message(&mut self, now: u64, msg: Inbound, oracle: &mut dyn HeavyCheck) {
        match msg {
            Inbound::Response(r) => self.on_response(now, r, oracle),
            Inbound::Alert(a) => self.on_alert(now, a, oracle),
            Inbound::ReceiptHint { block, receipt } => self.on_hint(block, receipt),
            Inbound::RosterEvents { epoch, events } => self.on_roster_events(now, epoch, events, oracle),
        }
    }

    fn on_response(&mut self, now: u64, r: SignedResponse, oracle: &mut dyn HeavyCheck) {
        let matching: Vec<CheckId> = self
            .checks
            .iter()
            .filter(|(_, c)| match &c.stage {
                Stage::Querying { selected, insurance_id, responses, .. } => {
                    selected.contains(&r.provider)
                        && !responses.contains_key(&r.provider)
                        && r.claim.block_number == c.target.block_number
                        && r.claim.state_hash == c.target.state_hash
                        && r.claim.insurance_id == *insurance_id
                }
                _ => false,
            })
            .map(|(id, _)| *id)
            .collect();
        for id in matching {
            self.outbox.push(Output::Forward(r.clone()));
            self.emit(ClientEvent::Forwarded { check: id, provider: r.provider });
            let c = self.checks.get_mut(&id).unwrap();
            let Stage::Querying { selected, responses, last_forward, .. } = &mut c.stage else { unreachable!() };
            responses.insert(r.provider, r.clone());
            *last_forward = now;
            if responses.len() == selected.len() {
                self.all_responses_in(id, now, oracle);
            }
        }
    }

    fn all_responses_in(&mut self, id: CheckId, now: u64, oracle: &mut dyn HeavyCheck) {
        let c = self.checks.get_mut(&id).unwrap();
        let Stage::Querying { responses, last_forward, insurance_id, .. } =
            std::mem::replace(&mut c.stage, Stage::Start)
        else {
            unreachable!()
        };
        match c.protocol {
            Protocol::Eco => {
                c.stage = Stage::Waiting { responses, last_forward };
                if c.challenge_period == 0 {
                    self.try_accept(id, now, oracle);
                }
            }
            Protocol::Ins => self.verify_and_accept(id, now, responses, insurance_id, 0, oracle),
        }
    }

    fn try_accept(&mut self, id: CheckId, now: u64, oracle: &mut dyn HeavyCheck) {
        let c = self.checks.get_mut(&id).unwrap();
        let Stage::Waiting { last_forward, .. } = c.stage else { return };
        if now < last_forward + c.challenge_period {
            return;
        }
        let Stage::Waiting { responses, last_forward } = std::mem::replace(&mut c.stage, Stage::Start) else {
            unreachable!()
        };
        self.verify_and_accept(id, now, responses, None, now - last_forward, oracle);
    }

    /// Checks every response and accepts if all are valid and agree.
    fn verify_and_accept(
        &mut self,
        id: CheckId,
        now: u64,
        responses: BTreeMap<PublicKey, SignedResponse>,
        insurance_id: Option<u64>,
        latency: u64,
        oracle: &mut dyn HeavyCheck,
    ) {
        let c = &self.checks[&id];
        let t = c.target;
        let bad: Vec<PublicKey> = responses
            .values()
            .filter(|r| !r.answers(t.block_number, &t.state_hash, insurance_id))
            .map(|r| r.provider)
            .collect();
        if !bad.is_empty() {
            self.restart(id, now, RestartReason::InvalidResponse { providers: bad.clone() }, &bad, oracle);
            return;
        }
        let hashes: BTreeSet<Digest> = responses.values().map(|r| r.claim.block_hash).collect();
        if hashes.len() != 1 {
            self.restart(id, now, RestartReason::Disagreement, &[], oracle);
            return;
        }
        let block_hash = *hashes.iter().next().unwrap();
        let c = self.checks.get_mut(&id).unwrap();
        c.restarting = false;
        c.accepted_from = responses.keys().copied().collect();
        c.stage = match c.protocol {
            Protocol::Eco => Stage::Accepted,
            Protocol::Ins => Stage::Listening { until: now + c.challenge_period },
        };
        let purpose = c.purpose;
        self.emit(ClientEvent::Accepted {
            check: id,
            purpose,
            block_number: t.block_number,
            block_hash,
            state_hash: t.state_hash,
            signatures: responses.len(),
            latency,
            insurance_id,
            value: t.value,
        });
        match purpose {
            Purpose::Target => {}
            Purpose::InsuranceReceipt { parent } => self.receipt_confirmed(parent, id, now, oracle),
            Purpose::Roster { .. } => self.roster_event_confirmed(id),
        }
    }

    fn receipt_confirmed(&mut self, parent: CheckId, sub: CheckId, now: u64, oracle: &mut dyn HeavyCheck) {
        let Some(Check {
            stage: Stage::AwaitingInsurance { tx_id, allocations, hint: Some((_, bytes)), receipt_check },
            ..
        }) = self.checks.get(&parent)
        else {
            return;
        };
        if *receipt_check != Some(sub) {
            return;
        }
        let tx_id = *tx_id;
        let allocations = allocations.clone();
        let receipt = Receipt::decode(bytes).ok().filter(|r| r.tx_id == tx_id);
        match receipt.map(|r| r.outcome) {
            Some(Outcome::InsurancePurchased { id, premium }) => {
                self.policies.insert(id, parent);
                if let Some(roster) = self.roster.as_mut() {
                    for (pk, amount) in &allocations {
                        if let Some(e) = roster.entries.get_mut(pk) {
                            e.attributable = e.attributable.saturating_sub(*amount);
                        }
                    }
                }
                self.emit(ClientEvent::InsuranceConfirmed { check: parent, id, premium });
                let providers = allocations.iter().map(|a| a.0).collect();
                self.send_queries(parent, now, providers, Some(id));
            }
            Some(Outcome::Reverted(r)) => {
                self.restart(parent, now, RestartReason::InsuranceReverted { code: r.to_string() }, &[], oracle);
            }
            _ => {
                let code = Revert::InvalidAllocations.to_string();
                self.restart(parent, now, RestartReason::InsuranceReverted { code }, &[], oracle);
            }
        }
    }

    fn on_hint(&mut self, block: u64, receipt: Vec<u8>) {
        let Ok(decoded) = Receipt::decode(&receipt) else { return };
        for c in self.checks.values_mut() {
            if let Stage::AwaitingInsurance { tx_id, hint, .. } = &mut c.stage {
                if *tx_id == decoded.tx_id && hint.is_none() {
                    *hint = Some((block, receipt.clone()));
                }
            }
        }
    }

    fn on_alert(&mut self, now: u64, alert: Alert, oracle: &mut dyn HeavyCheck) {
        let Some(event) = alert.verify() else { return };
        let pk = alert.offending_pk;
        let pays_us = self.payout_for(&event).is_some();
        if self.blacklist.contains(&pk) && !pays_us {
            return;
        }
        let confirmed = oracle.finalized_header(alert.slash_block);
        self.heavy_checks += 1;
        if confirmed.map(|h| h.hash()) != Some(alert.header.hash()) {
            return;
        }
        if let Some((check, policy)) = self.payout_for(&event) {
            self.paid.insert((policy, event.provider_pk, event.recorded_in_block));
            self.emit(ClientEvent::Compensated { check, policy, amount: event.compensation });
        }
        if !self.blacklist.insert(pk) {
            return;
        }
        self.emit(ClientEvent::AlertVerified { provider: pk, slash_block: alert.slash_block });
        if let Some(r) = self.roster.as_mut() {
            r.remove(&pk);
        }
        let affected: Vec<CheckId> = self
            .checks
            .iter()
            .filter(|(_, c)| match &c.stage {
                Stage::Querying { selected, .. } => selected.contains(&pk),
                Stage::Waiting { responses, .. } => responses.contains_key(&pk),
                Stage::AwaitingInsurance { allocations, .. } => allocations.iter().any(|a| a.0 == pk),
                _ => false,
            })
            .map(|(id, _)| *id)
            .collect();
        for (id, c) in &self.checks {
            if c.accepted_from.contains(&pk) {
                self.events.push(ClientEvent::AlertAfterAcceptance { check: *id, provider: pk });
            }
        }
        for id in affected {
            if matches!(self.checks[&id].stage, Stage::Failed) {
                continue;
            }
            self.restart(id, now, RestartReason::Alert { provider: pk }, &[pk], oracle);
        }
    }

    fn payout_for(&self, ev: &SlashEvent) -> Option<(CheckId, u64)> {
        let policy = ev.insurance_id?;
        let check = *self.policies.get(&policy)?;
        (ev.compensation > 0 && !self.paid.contains(&(policy, ev.provider_pk, ev.recorded_in_block)))
            .then_some((check, policy))
    }

    pub fn on_tick(&mut self, now: u64, oracle: &mut dyn HeavyCheck) {
        if self.config.track_roster && self.roster.is_some() {
            self.ensure_roster(now, oracle);
        }
        let ids: Vec<CheckId> = self.checks.keys().copied().collect();
        for id in ids {
            let Some(c) = self.checks.get(&id) else { continue };
            match &c.stage {
                Stage::Querying { selected, responses, sent, .. } => {
                    if now > sent + 2 * self.env.delta {
                        let silent: Vec<PublicKey> =
                            selected.iter().filter(|pk| !responses.contains_key(pk)).copied().collect();
                        self.restart(id, now, RestartReason::Timeout { silent: silent.clone() }, &silent, oracle);
                    }
                }
                Stage::Waiting { .. } => self.try_accept(id, now, oracle),
                Stage::Listening { until } => {
                    if now >= *until {
                        self.checks.get_mut(&id).unwrap().stage = Stage::Accepted;
                    }
                }
                Stage::AwaitingInsurance { hint: Some((block, bytes)), receipt_check: None, allocations, .. }
                    if now >= block + self.env.t_fin =>
                {
                    let target = Target { block_number: *block, state_hash: hash(bytes), value: c.target.value };
                    let avoid = allocations.iter().map(|a| a.0).collect();
                    let cp = self.config.receipt_challenge_period;
                    let purpose = Purpose::InsuranceReceipt { parent: id };
                    let sub = self.spawn(now, purpose, target, Protocol::Eco, cp, avoid, oracle);
                    if let Some(Stage::AwaitingInsurance { receipt_check, .. }) =
                        self.checks.get_mut(&id).map(|c| &mut c.stage)
                    {
                        *receipt_check = Some(sub);
                    }
                }
                _ => {}
            }
        }
    }

    fn on_roster_events(&mut self, now: u64, epoch: u64, events: Vec<(u64, Vec<u8>)>, oracle: &mut dyn HeavyCheck) {
        if !self.config.track_roster {
            return;
        }
        self.ensure_roster(now, oracle);
        if self.roster.as_ref().map(|r| r.epoch) != Some(epoch + 1) {
            return;
        }
        self.prediction = Some(Prediction::default());
        let value = self.config.roster_check_value.wei();
        let cp = self.config.roster_challenge_period;
        let mut pending = BTreeMap::new();
        for (seq, (block, bytes)) in events.into_iter().enumerate() {
            if self.env.epoch_of(block) != epoch {
                continue;
            }
            let target = Target { block_number: block, state_hash: hash(&bytes), value };
            let id = self.spawn(now, Purpose::Roster { epoch }, target, Protocol::Eco, cp, BTreeSet::new(), oracle);
            pending.insert(id, (seq, bytes));
        }
        if let Some(p) = self.prediction.as_mut() {
            p.pending = pending;
        }
        self.finish_prediction();
    }

    fn roster_event_confirmed(&mut self, id: CheckId) {
        let Some(p) = self.prediction.as_mut() else { return };
        if let Some(ev) = p.pending.remove(&id) {
            p.confirmed.push(ev);
        }
        self.finish_prediction();
    }

    fn finish_prediction(&mut self) {
        let Some(roster) = &self.roster else { return };
        let Some(p) = self.prediction.as_mut() else { return };
        if !p.pending.is_empty() || p.ready.is_some() {
            return;
        }
        p.confirmed.sort_by_key(|(seq, _)| *seq);
        let mut outcomes = Vec::new();
        for (_, bytes) in &p.confirmed {
            if let Ok(r) = Receipt::decode(bytes) {
                outcomes.push(r.outcome);
            }
        }
        let next = roster.predict_next(&outcomes);
        let size = next.entries.len();
        p.ready = Some(next);
        let epoch = roster.epoch + 1;
        if let Some(r) = self.roster.as_mut() {
            r.mark_leaving(&outcomes);
        }
        self.emit(ClientEvent::RosterPredicted { epoch, providers: size });
    }
}
