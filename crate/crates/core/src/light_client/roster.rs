//! The client's copy of the provider roster and its epoch-ahead prediction.

use std::collections::BTreeMap;

use crate::contract::{Outcome, RosterEntry, Wei};
use crate::crypto::PublicKey;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    pub epoch: u64,
    pub entries: BTreeMap<PublicKey, RosterEntry>,
}

impl Roster {
    pub fn new(epoch: u64, entries: Vec<RosterEntry>) -> Self {
        Roster { epoch, entries: entries.into_iter().map(|e| (e.public_key, e)).collect() }
    }

    /// Roster for `epoch + 1`: this one with the previous epoch's registry
    /// outcomes applied in chain order.
    pub fn predict_next(&self, events: &[Outcome]) -> Roster {
        let mut entries = self.entries.clone();
        for ev in events {
            match ev {
                Outcome::Registered { provider, stake } => {
                    entries.insert(
                        *provider,
                        RosterEntry { public_key: *provider, stake: *stake, attributable: *stake, leaving: false },
                    );
                }
                Outcome::WithdrawRequested { provider, .. } => {
                    entries.remove(provider);
                }
                _ => {}
            }
        }
        Roster { epoch: self.epoch + 1, entries }
    }

    /// Flags providers whose withdrawal request is known.
    pub fn mark_leaving(&mut self, events: &[Outcome]) {
        for ev in events {
            if let Outcome::WithdrawRequested { provider, .. } = ev {
                if let Some(e) = self.entries.get_mut(provider) {
                    e.leaving = true;
                }
            }
        }
    }

    pub fn remove(&mut self, pk: &PublicKey) {
        self.entries.remove(pk);
    }

    /// `(pk, stake)` pairs, the part of an entry that a prediction can know.
    pub fn membership(&self) -> Vec<(PublicKey, Wei)> {
        self.entries.values().map(|e| (e.public_key, e.stake)).collect()
    }

    /// Persistent size at one 32-byte key plus two 16-byte amounts per entry.
    pub fn storage_bytes(&self) -> usize {
        8 + self.entries.len() * (32 + 16 + 16 + 1)
    }
}
