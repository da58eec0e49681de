//! Synchronous network with a fixed delay per directed edge.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::actors::{Alert, Query, SignedResponse};
use crate::contract::ContractTx;
use crate::crypto::{hash, hash_tagged, Digest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ActorId {
    /// The chain's transaction pool and receipt feed.
    Chain,
    Provider(usize),
    Watcher(usize),
    Client(usize),
}

impl std::fmt::Display for ActorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActorId::Chain => f.write_str("chain"),
            ActorId::Provider(i) => write!(f, "provider{i}"),
            ActorId::Watcher(i) => write!(f, "watcher{i}"),
            ActorId::Client(i) => write!(f, "client{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Query(Query),
    Response(SignedResponse),
    Forward(SignedResponse),
    Alert(Alert),
    Tx(ContractTx),
    ReceiptHint { block: u64, receipt: Vec<u8> },
    RosterEvents { epoch: u64, events: Vec<(u64, Vec<u8>)> },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Query(_) => "query",
            Message::Response(_) => "response",
            Message::Forward(_) => "forward",
            Message::Alert(_) => "alert",
            Message::Tx(_) => "tx",
            Message::ReceiptHint { .. } => "receipt_hint",
            Message::RosterEvents { .. } => "roster_events",
        }
    }

    /// Digest of the message's canonical content.
    pub fn digest(&self) -> Digest {
        match self {
            Message::Query(q) => {
                hash_tagged(0, &[&q.block_number.to_be_bytes(), q.state_hash.as_bytes(), q.signature.as_bytes()])
            }
            Message::Response(r) | Message::Forward(r) => {
                hash_tagged(0, &[&r.claim.signing_bytes(), r.signature.as_bytes()])
            }
            Message::Alert(a) => hash(&a.receipt),
            Message::Tx(tx) => tx.id(),
            Message::ReceiptHint { receipt, .. } => hash(receipt),
            Message::RosterEvents { epoch, events } => {
                let mut parts: Vec<Vec<u8>> = vec![epoch.to_be_bytes().to_vec()];
                parts.extend(events.iter().map(|(_, r)| r.clone()));
                let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
                hash_tagged(0, &refs)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub from: ActorId,
    pub to: ActorId,
    pub sent: u64,
    pub deliver_at: u64,
    pub msg: Message,
}

/// Delivery queue. Every edge gets one delay in `[1, delta]`, drawn up front
/// from the scenario seed; messages on an edge arrive in send order.
#[derive(Debug, Clone)]
pub struct Network {
    delta: u64,
    delays: BTreeMap<(ActorId, ActorId), u64>,
    queue: BTreeMap<(u64, u64), Envelope>,
    seq: u64,
}

impl Network {
    pub fn new(actors: &[ActorId], delta: u64, rng: &mut ChaCha8Rng) -> Self {
        assert!(delta >= 1);
        let mut delays = BTreeMap::new();
        for a in actors {
            for b in actors {
                if a != b {
                    delays.insert((*a, *b), rng.gen_range(1..=delta));
                }
            }
        }
        Network { delta, delays, queue: BTreeMap::new(), seq: 0 }
    }

    pub fn delay(&self, from: ActorId, to: ActorId) -> u64 {
        self.delays.get(&(from, to)).copied().unwrap_or(self.delta)
    }

    pub fn send(&mut self, now: u64, from: ActorId, to: ActorId, msg: Message) -> u64 {
        let deliver_at = now + self.delay(from, to);
        debug_assert!(deliver_at - now <= self.delta);
        self.queue.insert((deliver_at, self.seq), Envelope { from, to, sent: now, deliver_at, msg });
        self.seq += 1;
        deliver_at
    }

    /// Removes and returns everything due at or before `now`, in send order.
    pub fn deliver(&mut self, now: u64) -> Vec<Envelope> {
        let rest = self.queue.split_off(&(now + 1, 0));
        let due = std::mem::replace(&mut self.queue, rest);
        due.into_values().collect()
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
