//! Data providers and watchers.
//!
//! Providers answer queries according to a fixed [`Strategy`]. Watchers audit
//! forwarded responses against the chain, submit slash transactions, and
//! alert clients once the slash is final.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::chain::{BlockHeader, Chain, Transaction};
use crate::codec::{tag, Encoder};
use crate::contract::{
    Call, Contract, ContractTx, Outcome, ProviderStatus, Receipt, ResponseClaim, Revert, SlashEvent, SlashEvidence,
    SlashRejection,
};
use crate::crypto::{
    hash, hash_tagged, merkle_verify, sign, verify, Digest, KeyPair, MerkleProof, MerkleTree, PublicKey, Signature,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    Honest,
    /// Signs a fabricated block hash backed by a self-consistent fake header.
    WrongHash,
    /// Signs the hash of the current, not yet final, tip block.
    UnfinalizedHash,
    Unresponsive,
    /// Lies like `WrongHash` and requests withdrawal in the same tick.
    ExitScam,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Honest, Strategy::WrongHash, Strategy::UnfinalizedHash, Strategy::Unresponsive, Strategy::ExitScam];

    pub fn lies(self) -> bool {
        matches!(self, Strategy::WrongHash | Strategy::UnfinalizedHash | Strategy::ExitScam)
    }
}

/// A light client's request for `(n_B, h_s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub block_number: u64,
    pub state_hash: Digest,
    pub insurance_id: Option<u64>,
    pub client: PublicKey,
    pub signature: Signature,
}

impl Query {
    fn payload(block_number: u64, state_hash: &Digest, insurance_id: Option<u64>) -> Vec<u8> {
        let t = if insurance_id.is_some() { tag::QUERY_INSURED } else { tag::QUERY };
        let mut e = Encoder::with_tag(t);
        e.u64(block_number).digest(state_hash);
        if let Some(id) = insurance_id {
            e.u64(id);
        }
        e.finish()
    }

    pub fn new(client: &KeyPair, block_number: u64, state_hash: Digest, insurance_id: Option<u64>) -> Self {
        let signature = sign(&client.secret_key, &Self::payload(block_number, &state_hash, insurance_id));
        Query { block_number, state_hash, insurance_id, client: client.public_key, signature }
    }

    pub fn signature_valid(&self) -> bool {
        verify(&self.client, &Self::payload(self.block_number, &self.state_hash, self.insurance_id), &self.signature)
    }
}

/// A provider's signed answer. The header and proof are not signed; the
/// client checks them against the signed block hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedResponse {
    pub claim: ResponseClaim,
    pub header: BlockHeader,
    pub proof: MerkleProof,
    pub provider: PublicKey,
    pub signature: Signature,
}

impl SignedResponse {
    pub fn new(kp: &KeyPair, claim: ResponseClaim, header: BlockHeader, proof: MerkleProof) -> Self {
        let signature = sign(&kp.secret_key, &claim.signing_bytes());
        SignedResponse { claim, header, proof, provider: kp.public_key, signature }
    }

    pub fn signature_valid(&self) -> bool {
        verify(&self.provider, &self.claim.signing_bytes(), &self.signature)
    }

    /// Header hashes to the signed `h_B` and `h_s` is included under it.
    pub fn proof_valid(&self) -> bool {
        self.header.number == self.claim.block_number
            && self.header.hash() == self.claim.block_hash
            && merkle_verify(&self.header.transactions_root, self.claim.state_hash.as_bytes(), &self.proof)
    }

    /// Full client-side check against the query it answers.
    pub fn answers(&self, block_number: u64, state_hash: &Digest, insurance_id: Option<u64>) -> bool {
        self.claim.block_number == block_number
            && self.claim.state_hash == *state_hash
            && self.claim.insurance_id == insurance_id
            && self.signature_valid()
            && self.proof_valid()
    }

    pub fn evidence(&self) -> SlashEvidence {
        SlashEvidence { provider: self.provider, claim: self.claim, signature: self.signature }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlertKind {
    ProviderSlashed,
    ProviderInactive,
}

/// Watcher-to-client notice, carrying a proof that the slash receipt is in
/// block `slash_block`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alert {
    pub kind: AlertKind,
    pub offending_pk: PublicKey,
    pub slash_block: u64,
    pub header: BlockHeader,
    pub receipt: Vec<u8>,
    pub proof: MerkleProof,
}

impl Alert {
    /// Checks the inclusion proof and returns the recorded slash event. The
    /// header itself still has to be confirmed final by a heavy check.
    pub fn verify(&self) -> Option<SlashEvent> {
        if self.header.number != self.slash_block {
            return None;
        }
        if !merkle_verify(&self.header.transactions_root, hash(&self.receipt).as_bytes(), &self.proof) {
            return None;
        }
        match Receipt::decode(&self.receipt).ok()?.outcome {
            Outcome::Slashed(ev) if ev.provider_pk == self.offending_pk => Some(ev),
            _ => None,
        }
    }
}

/// The receipt transaction written right after transaction `tx_id`.
pub fn receipt_tx<'a>(chain: &'a Chain, tx_id: &Digest) -> Option<(u64, &'a Transaction)> {
    let (n, i) = chain.locate(tx_id)?;
    Some((n, chain.block(n)?.transactions.get(i + 1)?))
}

pub fn receipt_of(chain: &Chain, tx_id: &Digest) -> Option<(u64, Receipt)> {
    let (n, tx) = receipt_tx(chain, tx_id)?;
    Some((n, Receipt::decode(&tx.payload).ok()?))
}

/// The receipt that first slashed `pk`, if any.
pub fn slash_receipt_for(chain: &Chain, contract: &Contract, pk: &PublicKey) -> Option<(u64, Transaction)> {
    let ev = contract.slash_events().iter().find(|e| e.provider_pk == *pk && e.slashed_amount > 0)?;
    let block = chain.block(ev.recorded_in_block)?;
    block
        .transactions
        .iter()
        .find(|tx| {
            tx.payload.first() == Some(&tag::RECEIPT)
                && matches!(Receipt::decode(&tx.payload), Ok(Receipt { outcome: Outcome::Slashed(ref e), .. })
                    if e.provider_pk == *pk && e.slashed_amount > 0)
        })
        .map(|tx| (block.number, tx.clone()))
}

fn alert_for(chain: &Chain, kind: AlertKind, pk: PublicKey, n: u64, receipt: &Transaction) -> Option<Alert> {
    let block = chain.block(n)?;
    let proof = chain.inclusion_proof(n, &receipt.id).ok()?;
    Some(Alert {
        kind,
        offending_pk: pk,
        slash_block: n,
        header: block.header(),
        receipt: receipt.payload.clone(),
        proof,
    })
}

/// What a provider does with one query.
#[derive(Debug, Clone, Default)]
pub struct ProviderReply {
    pub response: Option<SignedResponse>,
    pub tx: Option<ContractTx>,
}

#[derive(Debug, Clone)]
pub struct ProviderNode {
    pub keypair: KeyPair,
    pub strategy: Strategy,
    nonce: u64,
    withdrawn: bool,
}

impl ProviderNode {
    pub fn new(keypair: KeyPair, strategy: Strategy) -> Self {
        ProviderNode { keypair, strategy, nonce: 0, withdrawn: false }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public_key
    }

    pub fn next_tx(&mut self, call: Call) -> ContractTx {
        self.nonce += 1;
        ContractTx { sender: self.keypair.public_key, nonce: self.nonce, call }
    }

    pub fn respond(&mut self, query: &Query, chain: &Chain, contract: &Contract) -> ProviderReply {
        if !query.signature_valid() {
            return ProviderReply::default();
        }
        let status = contract.provider(&self.public_key()).map(|p| p.status);
        let n = query.block_number;
        match self.strategy {
            Strategy::Honest => {
                if status != Some(ProviderStatus::Active) || !chain.is_finalized(n) {
                    return ProviderReply::default();
                }
                let block = chain.block(n).unwrap();
                let Ok(proof) = chain.inclusion_proof(n, &query.state_hash) else {
                    return ProviderReply::default();
                };
                let claim = ResponseClaim {
                    block_number: n,
                    block_hash: block.hash,
                    state_hash: query.state_hash,
                    insurance_id: query.insurance_id,
                };
                ProviderReply {
                    response: Some(SignedResponse::new(&self.keypair, claim, block.header(), proof)),
                    tx: None,
                }
            }
            Strategy::Unresponsive => ProviderReply::default(),
            Strategy::UnfinalizedHash => {
                if matches!(status, None | Some(ProviderStatus::Exited)) {
                    return ProviderReply::default();
                }
                let tip = chain.tip();
                let proof = chain.inclusion_proof(n, &query.state_hash).unwrap_or(MerkleProof {
                    leaf_index: 0,
                    leaf_count: 1,
                    siblings: vec![],
                });
                let claim = ResponseClaim {
                    block_number: n,
                    block_hash: tip.hash,
                    state_hash: query.state_hash,
                    insurance_id: query.insurance_id,
                };
                ProviderReply {
                    response: Some(SignedResponse::new(&self.keypair, claim, tip.header(), proof)),
                    tx: None,
                }
            }
            Strategy::WrongHash | Strategy::ExitScam => {
                if matches!(status, None | Some(ProviderStatus::Exited)) {
                    return ProviderReply::default();
                }
                if self.strategy == Strategy::ExitScam && status != Some(ProviderStatus::Active) {
                    return ProviderReply::default();
                }
                let response = self.fabricate(query);
                let tx = (self.strategy == Strategy::ExitScam && !self.withdrawn).then(|| {
                    self.withdrawn = true;
                    self.next_tx(Call::RequestWithdraw)
                });
                ProviderReply { response: Some(response), tx }
            }
        }
    }

    /// A fake block `n` whose transaction tree contains the queried state, so
    /// the response passes every check a light client can do on its own.
    fn fabricate(&self, query: &Query) -> SignedResponse {
        let decoy = hash_tagged(0xF0, &[self.keypair.public_key.as_bytes(), &query.block_number.to_be_bytes()]);
        let leaves = [query.state_hash.as_bytes().as_slice(), decoy.as_bytes().as_slice()];
        let tree = MerkleTree::new(&leaves).expect("two leaves");
        let header = BlockHeader { number: query.block_number, parent_hash: decoy, transactions_root: tree.root() };
        let claim = ResponseClaim {
            block_number: query.block_number,
            block_hash: header.hash(),
            state_hash: query.state_hash,
            insurance_id: query.insurance_id,
        };
        SignedResponse::new(&self.keypair, claim, header, tree.prove(0).expect("index 0"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Dispute(SlashEvidence),
    /// Signed by an already slashed provider; carries the earlier slash proof.
    ProviderInactive(Alert),
    /// The claimed block is not final yet; check again later.
    Pending,
    /// Not signed by the named provider, or by one the contract never knew.
    Unattributable,
}

/// Audits one forwarded response against the full chain and the contract.
pub fn watcher_check(resp: &SignedResponse, chain: &Chain, contract: &Contract) -> Verdict {
    if !resp.signature_valid() {
        return Verdict::Unattributable;
    }
    let Some(record) = contract.provider(&resp.provider) else {
        return Verdict::Unattributable;
    };
    let Ok(finalized) = chain.finalized_block_hash(resp.claim.block_number) else {
        return Verdict::Pending;
    };
    let wrong = finalized != resp.claim.block_hash;
    match record.status {
        _ if wrong => Verdict::Dispute(resp.evidence()),
        ProviderStatus::Slashed => match prior_slash_alert(chain, contract, &resp.provider) {
            Some(alert) => Verdict::ProviderInactive(alert),
            None => Verdict::Pending,
        },
        ProviderStatus::Exited => Verdict::Unattributable,
        ProviderStatus::Active | ProviderStatus::Leaving => Verdict::Ok,
    }
}

/// Alert proving `pk` was already slashed, once that slash is final.
fn prior_slash_alert(chain: &Chain, contract: &Contract, pk: &PublicKey) -> Option<Alert> {
    let (n, tx) = slash_receipt_for(chain, contract, pk)?;
    if !chain.is_finalized(n) {
        return None;
    }
    alert_for(chain, AlertKind::ProviderInactive, *pk, n, &tx)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WatcherAction<C> {
    Submit(ContractTx),
    Alert { to: C, alert: Alert },
}

#[derive(Debug, Clone)]
struct Dispute<C> {
    tx_id: Digest,
    client: C,
    response: SignedResponse,
}

/// An honest watcher. `C` identifies the client to alert.
#[derive(Debug, Clone)]
pub struct Watcher<C> {
    pub keypair: KeyPair,
    nonce: u64,
    pending: Vec<(SignedResponse, C)>,
    disputes: Vec<Dispute<C>>,
    inactive: Vec<(PublicKey, C)>,
    seen: BTreeSet<(Digest, C)>,
}

impl<C: Clone + Ord> Watcher<C> {
    pub fn new(keypair: KeyPair) -> Self {
        Watcher {
            keypair,
            nonce: 0,
            pending: Vec::new(),
            disputes: Vec::new(),
            inactive: Vec::new(),
            seen: BTreeSet::new(),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public_key
    }

    pub fn on_forward(
        &mut self,
        resp: SignedResponse,
        from: C,
        chain: &Chain,
        contract: &Contract,
    ) -> Vec<WatcherAction<C>> {
        let digest = hash_tagged(0, &[&resp.claim.signing_bytes(), resp.provider.as_bytes()]);
        if !self.seen.insert((digest, from.clone())) {
            return Vec::new();
        }
        self.audit(resp, from, chain, contract)
    }

    fn audit(&mut self, resp: SignedResponse, from: C, chain: &Chain, contract: &Contract) -> Vec<WatcherAction<C>> {
        match watcher_check(&resp, chain, contract) {
            Verdict::Ok | Verdict::Unattributable => Vec::new(),
            Verdict::Pending => {
                self.pending.push((resp, from));
                Vec::new()
            }
            Verdict::ProviderInactive(alert) => vec![WatcherAction::Alert { to: from, alert }],
            Verdict::Dispute(evidence) => {
                self.nonce += 1;
                let tx =
                    ContractTx { sender: self.keypair.public_key, nonce: self.nonce, call: Call::Slash { evidence } };
                self.disputes.push(Dispute { tx_id: tx.id(), client: from, response: resp });
                vec![WatcherAction::Submit(tx)]
            }
        }
    }

    /// Re-examines deferred forwards and turns final slash receipts into alerts.
    pub fn on_tick(&mut self, chain: &Chain, contract: &Contract) -> Vec<WatcherAction<C>> {
        let mut out = Vec::new();
        for (resp, from) in std::mem::take(&mut self.pending) {
            out.extend(self.audit(resp, from, chain, contract));
        }
        let mut keep = Vec::new();
        for d in std::mem::take(&mut self.disputes) {
            let Some((n, tx)) = receipt_tx(chain, &d.tx_id) else {
                keep.push(d);
                continue;
            };
            if !chain.is_finalized(n) {
                keep.push(d);
                continue;
            }
            let Ok(receipt) = Receipt::decode(&tx.payload) else { continue };
            match receipt.outcome {
                Outcome::Slashed(_) => {
                    if let Some(alert) = alert_for(chain, AlertKind::ProviderSlashed, d.response.provider, n, tx) {
                        out.push(WatcherAction::Alert { to: d.client, alert });
                    }
                }
                Outcome::Reverted(Revert::Slash(SlashRejection::AlreadySlashed)) => {
                    self.inactive.push((d.response.provider, d.client));
                }
                Outcome::Reverted(Revert::Slash(SlashRejection::BlockNotYetFinal)) => {
                    self.pending.push((d.response, d.client));
                }
                _ => {}
            }
        }
        self.disputes = keep;
        let mut still = Vec::new();
        for (pk, client) in std::mem::take(&mut self.inactive) {
            match prior_slash_alert(chain, contract, &pk) {
                Some(alert) => out.push(WatcherAction::Alert { to: client, alert }),
                None => still.push((pk, client)),
            }
        }
        self.inactive = still;
        out
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty() && self.disputes.is_empty() && self.inactive.is_empty()
    }
}

#[cfg(test)]
mod tests;
