//! Discrete-time simulation of chain, contract, providers, watchers and
//! light clients over a synchronous network.
//!
//! Each tick runs in a fixed order: due messages are delivered, scheduled
//! actions fire, watchers and clients tick, client outputs are sent, the
//! pending transactions are executed into block `tick`, and the block
//! boundary is processed. Everything is derived from the scenario seed, so a
//! run is reproducible bit for bit.

mod log;
mod metrics;
mod network;
mod scenario;
pub mod sweep;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::actors::{ProviderNode, Strategy, Watcher, WatcherAction};
use crate::chain::{BlockHeader, Chain, Transaction};
use crate::codec::{tag, Encoder};
use crate::contract::{Call, Contract, ContractTx, Effect, Outcome, Receipt, RosterEntry, Wei};
use crate::crypto::{hash, keygen, PublicKey};
use crate::light_client::{ClientEvent, Env, HeavyCheck, Inbound, LightClient, Output, Protocol, Purpose, Target};
use crate::pricing::{average_utilization, to_f64, utilization_at_block, Eth, Ratio};

pub use log::{EventLog, LogRecord};
pub use metrics::{Acceptance, ClientMetrics, Metrics, Violation, ViolationKind};
pub use network::{ActorId, Envelope, Message, Network};
pub use scenario::{CheckSpec, ClientSpec, ProviderSpec, ScenarioConfig, ScenarioError};

/// Heavy checks answered from the simulator's own chain and contract.
pub struct GroundTruth<'a> {
    pub chain: &'a Chain,
    pub contract: &'a Contract,
}

impl HeavyCheck for GroundTruth<'_> {
    fn active_set(&mut self, now: u64) -> (u64, Vec<RosterEntry>) {
        let epoch = self.contract.config().epoch_of(now);
        (epoch, self.contract.active_set(epoch, now).unwrap_or_default())
    }

    fn finalized_header(&mut self, n: u64) -> Option<BlockHeader> {
        self.chain.finalized_block_hash(n).ok()?;
        Some(self.chain.block(n)?.header())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub log: EventLog,
}

fn key_seed(seed: u64, role: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (role << 40) ^ index as u64
}

/// The transaction a target check looks for.
pub fn target_payload(client: usize, check: usize, value: Wei) -> Transaction {
    let payload = Encoder::with_tag(tag::TX_PAYLOAD).u64(client as u64).u64(check as u64).u128(value).finish();
    Transaction::new(payload, 0)
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    let mut sim = Simulation::new(cfg.clone())?;
    while sim.tick() < cfg.total_ticks {
        sim.step();
    }
    Ok(sim.finish())
}

pub struct Simulation {
    cfg: ScenarioConfig,
    env: Env,
    chain: Chain,
    contract: Contract,
    network: Network,
    providers: Vec<ProviderNode>,
    watchers: Vec<Watcher<usize>>,
    clients: Vec<LightClient>,
    provider_index: BTreeMap<PublicKey, usize>,
    now: u64,
    pool: Vec<(ActorId, ContractTx)>,
    /// Per client, targets waiting to be checked, with their start tick.
    pending_starts: Vec<Vec<(u64, Target)>>,
    started: BTreeMap<(usize, u64), u64>,
    registry_receipts: Vec<(u64, Vec<u8>)>,
    initial_total: Wei,
    utilization: Vec<Ratio>,
    metrics: Metrics,
    log: EventLog,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let t_fin = cfg.t_fin();
        let env = Env { t_fin, delta: cfg.delta_ticks, update_epoch_blocks: cfg.update_epoch_blocks };
        let mut contract = Contract::new(cfg.contract_config());

        let mut providers = Vec::new();
        let mut provider_index = BTreeMap::new();
        for (i, spec) in cfg.providers.iter().enumerate() {
            let node = ProviderNode::new(keygen(key_seed(cfg.seed, 1, i)), spec.strategy);
            let pk = node.public_key();
            contract.mint(pk, spec.stake.wei());
            if spec.join_tick.is_none() {
                contract
                    .register_genesis(pk, spec.stake.wei())
                    .map_err(|e| ScenarioError::Invalid(format!("provider {i}: {e}")))?;
            }
            provider_index.insert(pk, i);
            providers.push(node);
        }
        let watchers = (0..cfg.watchers).map(|j| Watcher::new(keygen(key_seed(cfg.seed, 2, j)))).collect();

        let mut clients = Vec::new();
        let mut metrics = Metrics { scenario: cfg.name.clone(), seed: cfg.seed, t_fin, ..Default::default() };
        let mut pending_starts = Vec::new();
        for (k, spec) in cfg.clients.iter().enumerate() {
            let client = LightClient::new(keygen(key_seed(cfg.seed, 3, k)), spec.config.clone(), env);
            contract.mint(client.public_key(), spec.balance.wei());
            metrics.clients.push(ClientMetrics {
                public_key: Some(client.public_key()),
                initial_balance: spec.balance,
                ..Default::default()
            });
            let starts = spec
                .checks
                .iter()
                .enumerate()
                .map(|(j, ch)| {
                    let target = Target {
                        block_number: ch.at,
                        state_hash: target_payload(k, j, ch.value.wei()).id,
                        value: ch.value.wei(),
                    };
                    (ch.at + t_fin + 1, target)
                })
                .collect();
            pending_starts.push(starts);
            clients.push(client);
        }

        let mut actors = vec![ActorId::Chain];
        actors.extend((0..providers.len()).map(ActorId::Provider));
        actors.extend((0..cfg.watchers).map(ActorId::Watcher));
        actors.extend((0..clients.len()).map(ActorId::Client));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let network = Network::new(&actors, cfg.delta_ticks, &mut rng);

        Ok(Simulation {
            chain: Chain::new(cfg.slots_per_epoch, cfg.finality_depth_epochs),
            initial_total: contract.total_wei(),
            contract,
            network,
            providers,
            watchers,
            clients,
            provider_index,
            now: 0,
            pool: Vec::new(),
            pending_starts,
            started: BTreeMap::new(),
            registry_receipts: Vec::new(),
            utilization: Vec::new(),
            metrics,
            log: EventLog::default(),
            env,
            cfg,
        })
    }

    /// Last completed tick.
    pub fn tick(&self) -> u64 {
        self.now
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn contract(&self) -> &Contract {
        &self.contract
    }

    pub fn client(&self, k: usize) -> &LightClient {
        &self.clients[k]
    }

    pub fn provider_key(&self, i: usize) -> PublicKey {
        self.providers[i].public_key()
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    /// Advances one tick and produces block `tick`.
    pub fn step(&mut self) {
        self.now += 1;
        let t = self.now;

        for env in self.network.deliver(t) {
            self.log.push(t, env.to, format!("recv_{}", env.msg.kind()), env.msg.digest());
            self.deliver(t, env);
        }
        self.scheduled(t);

        for j in 0..self.watchers.len() {
            let actions = self.watchers[j].on_tick(&self.chain, &self.contract);
            self.watcher_actions(t, j, actions);
        }
        for k in 0..self.clients.len() {
            if self.cfg.clients[k].is_offline(t) {
                continue;
            }
            let mut oracle = GroundTruth { chain: &self.chain, contract: &self.contract };
            self.clients[k].on_tick(t, &mut oracle);
        }
        for k in 0..self.clients.len() {
            self.drain_client(t, k);
        }
        self.compare_rosters(t);
        self.produce_block(t);
    }

    fn deliver(&mut self, t: u64, env: Envelope) {
        match (env.to, env.msg) {
            (ActorId::Chain, Message::Tx(tx)) => self.pool.push((env.from, tx)),
            (ActorId::Provider(i), Message::Query(q)) => {
                let reply = self.providers[i].respond(&q, &self.chain, &self.contract);
                if let Some(resp) = reply.response {
                    self.network.send(t, env.to, env.from, Message::Response(resp));
                }
                if let Some(tx) = reply.tx {
                    self.pool.push((env.to, tx));
                }
            }
            (ActorId::Watcher(j), Message::Forward(resp)) => {
                let ActorId::Client(k) = env.from else { return };
                let actions = self.watchers[j].on_forward(resp, k, &self.chain, &self.contract);
                self.watcher_actions(t, j, actions);
            }
            (ActorId::Client(k), msg) => {
                if self.cfg.clients[k].is_offline(t) {
                    self.log.push(t, env.to, "dropped_offline", msg.digest());
                    return;
                }
                let inbound = match msg {
                    Message::Response(r) => Inbound::Response(r),
                    Message::Alert(a) => Inbound::Alert(a),
                    Message::ReceiptHint { block, receipt } => Inbound::ReceiptHint { block, receipt },
                    Message::RosterEvents { epoch, events } => Inbound::RosterEvents { epoch, events },
                    _ => return,
                };
                let mut oracle = GroundTruth { chain: &self.chain, contract: &self.contract };
                self.clients[k].on_message(t, inbound, &mut oracle);
            }
            _ => {}
        }
    }

    fn watcher_actions(&mut self, t: u64, j: usize, actions: Vec<WatcherAction<usize>>) {
        for a in actions {
            match a {
                WatcherAction::Submit(tx) => self.pool.push((ActorId::Watcher(j), tx)),
                WatcherAction::Alert { to, alert } => {
                    self.network.send(t, ActorId::Watcher(j), ActorId::Client(to), Message::Alert(alert));
                }
            }
        }
    }

    fn scheduled(&mut self, t: u64) {
        for (i, spec) in self.cfg.providers.iter().enumerate() {
            let call = if spec.join_tick == Some(t) || spec.rejoin_tick == Some(t) {
                Call::Register { stake: spec.stake.wei() }
            } else if spec.withdraw_tick == Some(t) {
                Call::RequestWithdraw
            } else {
                continue;
            };
            let tx = self.providers[i].next_tx(call);
            self.pool.push((ActorId::Provider(i), tx));
        }

        let b_u = self.cfg.update_epoch_blocks;
        let t_fin = self.env.t_fin;
        if t > t_fin + 1 && (t - t_fin - 1).is_multiple_of(b_u) {
            let epoch = (t - t_fin - 1) / b_u - 1;
            let events: Vec<(u64, Vec<u8>)> =
                self.registry_receipts.iter().filter(|(n, _)| n / b_u == epoch).cloned().collect();
            for k in 0..self.clients.len() {
                if self.cfg.clients[k].config.track_roster {
                    let msg = Message::RosterEvents { epoch, events: events.clone() };
                    self.network.send(t, ActorId::Chain, ActorId::Client(k), msg);
                }
            }
        }

        for k in 0..self.clients.len() {
            if self.cfg.clients[k].is_offline(t) {
                continue;
            }
            let (due, rest): (Vec<_>, Vec<_>) =
                std::mem::take(&mut self.pending_starts[k]).into_iter().partition(|(s, _)| *s <= t);
            self.pending_starts[k] = rest;
            for (_, target) in due {
                let mut oracle = GroundTruth { chain: &self.chain, contract: &self.contract };
                let id = self.clients[k].start_check(t, target, &mut oracle);
                self.started.insert((k, id), t);
            }
        }
    }

    fn drain_client(&mut self, t: u64, k: usize) {
        let from = ActorId::Client(k);
        for out in self.clients[k].take_outputs() {
            match out {
                Output::Query { to, query } => {
                    if let Some(&i) = self.provider_index.get(&to) {
                        self.network.send(t, from, ActorId::Provider(i), Message::Query(query));
                    }
                }
                Output::Forward(resp) => {
                    for j in 0..self.watchers.len() {
                        self.network.send(t, from, ActorId::Watcher(j), Message::Forward(resp.clone()));
                    }
                }
                Output::Submit(tx) => {
                    self.network.send(t, from, ActorId::Chain, Message::Tx(tx));
                }
            }
        }
        let protocol = self.cfg.clients[k].config.protocol;
        for ev in self.clients[k].take_events() {
            let debug = format!("{ev:?}");
            let name = debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string();
            let json = serde_json::to_vec(&ev).expect("event serializes");
            self.log.push(t, from, name, hash(&json));
            let m = &mut self.metrics.clients[k];
            match ev {
                ClientEvent::Accepted {
                    check,
                    purpose,
                    block_number,
                    block_hash,
                    signatures,
                    latency,
                    insurance_id,
                    value,
                    ..
                } => {
                    let correct = self.chain.block(block_number).map(|b| b.hash) == Some(block_hash);
                    let protocol = if purpose == Purpose::Target { protocol } else { Protocol::Eco };
                    if protocol == Protocol::Eco && !correct {
                        self.metrics.violations.push(Violation {
                            kind: ViolationKind::EcoSafety,
                            tick: t,
                            detail: format!("client {k} check {check} accepted a wrong hash for block {block_number}"),
                        });
                    }
                    m.acceptances.push(Acceptance {
                        check,
                        purpose,
                        protocol,
                        block_number,
                        started: self.started.get(&(k, check)).copied(),
                        accepted_at: t,
                        latency,
                        signatures,
                        correct,
                        value: Eth(value),
                        insurance_id,
                    });
                }
                ClientEvent::Bootstrapped { .. } => m.bootstraps += 1,
                ClientEvent::RosterPredicted { .. } => m.roster_predictions += 1,
                ClientEvent::Restarted { .. } => m.restarts += 1,
                ClientEvent::Failed { .. } => m.failures += 1,
                _ => {}
            }
        }
    }

    /// At each epoch start, a roster-tracking client's roster must match the
    /// contract's.
    fn compare_rosters(&mut self, t: u64) {
        let b_u = self.cfg.update_epoch_blocks;
        if !t.is_multiple_of(b_u) {
            return;
        }
        let epoch = t / b_u;
        let truth: BTreeSet<(PublicKey, Wei)> = self
            .contract
            .active_set(epoch, t)
            .unwrap_or_default()
            .into_iter()
            .map(|e| (e.public_key, e.stake))
            .collect();
        for k in 0..self.clients.len() {
            if !self.cfg.clients[k].config.track_roster || self.cfg.clients[k].is_offline(t) {
                continue;
            }
            let Some(roster) = self.clients[k].roster() else { continue };
            let m = &mut self.metrics.clients[k];
            m.roster_comparisons += 1;
            let mine: BTreeSet<(PublicKey, Wei)> = roster.membership().into_iter().collect();
            if roster.epoch != epoch || mine != truth {
                m.roster_mismatches += 1;
            }
        }
    }

    fn produce_block(&mut self, t: u64) {
        let mut body: Vec<Transaction> = Vec::new();
        for (k, spec) in self.cfg.clients.iter().enumerate() {
            for (j, ch) in spec.checks.iter().enumerate() {
                if ch.at == t {
                    body.push(target_payload(k, j, ch.value.wei()));
                }
            }
        }
        let gas = self.contract.config().gas_cost();
        let mut hints = Vec::new();
        for (from, tx) in std::mem::take(&mut self.pool) {
            let balance_before = self.contract.balance(&tx.sender);
            let outcome = self.contract.execute(&tx, &self.chain, t);
            let receipt = Receipt { tx_id: tx.id(), block_number: t, outcome: outcome.clone() };
            let bytes = receipt.encode();
            self.record_outcome(t, from, &tx, &outcome, balance_before, gas);
            if matches!(outcome, Outcome::Registered { .. } | Outcome::WithdrawRequested { .. }) {
                self.registry_receipts.push((t, bytes.clone()));
            }
            body.push(Transaction::new(tx.encode(), 0));
            body.push(Transaction::new(bytes.clone(), 0));
            if let ActorId::Client(_) = from {
                hints.push((from, bytes));
            }
        }
        let hash = self.chain.append_block(body).hash;
        self.log.push(t, ActorId::Chain, "block", hash);
        for (to, receipt) in hints {
            self.network.send(t, ActorId::Chain, to, Message::ReceiptHint { block: t, receipt });
        }

        for effect in self.contract.process_block_boundary(t) {
            let (name, pk) = match &effect {
                Effect::PolicyExpired { .. } => ("policy_expired", None),
                Effect::EscrowBurned { provider, .. } => ("escrow_burned", Some(*provider)),
                Effect::ProviderExited { provider, .. } => ("provider_exited", Some(*provider)),
                Effect::WithdrawalDeferred { provider, .. } => ("withdrawal_deferred", Some(*provider)),
            };
            if let (Effect::ProviderExited { .. }, Some(pk)) = (&effect, pk) {
                if let Some(&i) = self.provider_index.get(&pk) {
                    self.metrics.exits.push((i, t));
                }
            }
            self.log.push(t, ActorId::Chain, name, hash_of_debug(&effect));
        }

        let total = self.contract.total_wei();
        if total != self.initial_total {
            self.metrics.violations.push(Violation {
                kind: ViolationKind::Conservation,
                tick: t,
                detail: format!("total {total} != initial {}", self.initial_total),
            });
        }
        if let Err(detail) = self.contract.check_no_overload() {
            self.metrics.violations.push(Violation { kind: ViolationKind::NoOverload, tick: t, detail });
        }
        if let Ok(u) = utilization_at_block(&self.contract.stake_snapshot()) {
            self.utilization.push(u);
        }
    }

    fn record_outcome(
        &mut self,
        t: u64,
        from: ActorId,
        tx: &ContractTx,
        outcome: &Outcome,
        balance_before: Wei,
        gas: Wei,
    ) {
        let name = match outcome {
            Outcome::Registered { .. } => "registered".to_string(),
            Outcome::WithdrawRequested { .. } => "withdraw_requested".to_string(),
            Outcome::InsurancePurchased { .. } => "insurance_purchased".to_string(),
            Outcome::Slashed(_) => "slashed".to_string(),
            Outcome::Reverted(r) => format!("reverted:{r}"),
        };
        self.log.push(t, from, format!("exec_{name}"), tx.id());
        if let (ActorId::Client(k), Call::BuyInsurance { .. }) = (from, &tx.call) {
            let m = &mut self.metrics.clients[k];
            if balance_before >= gas {
                m.gas_paid.0 += gas;
            }
            if let Outcome::InsurancePurchased { premium, .. } = outcome {
                m.premium_paid.0 += premium;
                m.policies_bought += 1;
            }
        }
        if let Outcome::Slashed(ev) = outcome {
            let i = self.provider_index.get(&ev.provider_pk).copied();
            if ev.slashed_amount > 0 {
                if let Some(i) = i {
                    self.metrics.slashed.push((i, t));
                }
            } else {
                self.metrics.late_claims += 1;
            }
            if let Some(i) = i {
                if self.providers[i].strategy == Strategy::Honest {
                    self.metrics.violations.push(Violation {
                        kind: ViolationKind::WatcherSoundness,
                        tick: t,
                        detail: format!("honest provider {i} slashed"),
                    });
                }
            }
        }
    }

    /// Final accounting and end-of-run property checks.
    pub fn finish(mut self) -> RunOutput {
        let t = self.now;
        self.metrics.ticks = t;
        self.metrics.total_wei = Eth(self.contract.total_wei());
        self.metrics.burned = Eth(self.contract.burned());
        self.metrics.average_utilization = average_utilization(&self.utilization).map(|r| to_f64(&r)).unwrap_or(0.0);

        let mut compensation: BTreeMap<PublicKey, Wei> = BTreeMap::new();
        for ev in self.contract.slash_events() {
            if let Some(policy) = ev.insurance_id.and_then(|id| self.contract.policy(id)) {
                *compensation.entry(policy.buyer).or_default() += ev.compensation;
            }
        }
        for (k, client) in self.clients.iter().enumerate() {
            let pk = client.public_key();
            let m = &mut self.metrics.clients[k];
            m.heavy_checks = client.heavy_checks();
            m.storage_bytes = client.storage_bytes();
            m.final_balance = Eth(self.contract.balance(&pk));
            m.compensation = Eth(compensation.get(&pk).copied().unwrap_or(0));
            if self.cfg.clients[k].config.protocol != Protocol::Ins {
                continue;
            }
            let mut unrecovered: i128 = 0;
            for a in m.false_acceptances().filter(|a| a.protocol == Protocol::Ins) {
                unrecovered += a.value.0 as i128;
                let paid = a.insurance_id.and_then(|id| self.contract.policy(id)).map_or(0, |p| p.paid_out);
                if paid < a.value.0 {
                    self.metrics.violations.push(Violation {
                        kind: ViolationKind::InsProtection,
                        tick: t,
                        detail: format!("client {k} check {} lost {} but was paid {paid}", a.check, a.value),
                    });
                }
            }
            let loss = m.initial_balance.0 as i128 - m.final_balance.0 as i128 + unrecovered;
            let bound = (m.premium_paid.0 + m.gas_paid.0) as i128;
            if loss > bound {
                self.metrics.violations.push(Violation {
                    kind: ViolationKind::NetLoss,
                    tick: t,
                    detail: format!("client {k} lost {loss} wei, above premiums and gas {bound}"),
                });
            }
        }
        RunOutput { metrics: self.metrics, log: self.log }
    }
}

fn hash_of_debug<T: std::fmt::Debug>(v: &T) -> crate::crypto::Digest {
    hash(format!("{v:?}").as_bytes())
}
