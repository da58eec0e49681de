//! Canonical encodings of signed claims, contract calls and receipts.

use crate::codec::{tag, DecodeError, Decoder, Encoder};
use crate::crypto::{hash, verify, Digest, PublicKey, Signature};

/// The statement a provider signs: "block `n_B` has hash `h_B` and contains
/// state `h_s`", optionally bound to an insurance policy.
///
/// Wire layout: `tag(1) ∥ n_B(8) ∥ h_B(32) ∥ h_s(32) [∥ ID_ins(8)]`, where the
/// tag is [`tag::RESPONSE_INSURED`] exactly when the policy id is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseClaim {
    pub block_number: u64,
    pub block_hash: Digest,
    pub state_hash: Digest,
    pub insurance_id: Option<u64>,
}

impl ResponseClaim {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let t = if self.insurance_id.is_some() { tag::RESPONSE_INSURED } else { tag::RESPONSE };
        let mut e = Encoder::with_tag(t);
        e.u64(self.block_number).digest(&self.block_hash).digest(&self.state_hash);
        if let Some(id) = self.insurance_id {
            e.u64(id);
        }
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let insured = match d.u8()? {
            tag::RESPONSE => false,
            tag::RESPONSE_INSURED => true,
            t => return Err(DecodeError::UnknownTag(t)),
        };
        let block_number = d.u64()?;
        let block_hash = d.digest()?;
        let state_hash = d.digest()?;
        let insurance_id = if insured { Some(d.u64()?) } else { None };
        d.finish()?;
        Ok(ResponseClaim { block_number, block_hash, state_hash, insurance_id })
    }
}

/// What a watcher hands the contract to prove misbehaviour.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlashEvidence {
    pub provider: PublicKey,
    pub claim: ResponseClaim,
    pub signature: Signature,
}

impl SlashEvidence {
    pub fn signature_valid(&self) -> bool {
        verify(&self.provider, &self.claim.signing_bytes(), &self.signature)
    }

    fn encode_into(&self, e: &mut Encoder) {
        e.pk(&self.provider).bytes(&self.claim.signing_bytes()).sig(&self.signature);
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let provider = d.pk()?;
        let claim = ResponseClaim::decode(d.bytes()?)?;
        let signature = d.sig()?;
        Ok(SlashEvidence { provider, claim, signature })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    Register { stake: u128 },
    RequestWithdraw,
    BuyInsurance { allocations: Vec<(PublicKey, u128)>, coverage_value: u128, duration: u64 },
    Slash { evidence: SlashEvidence },
}

/// A transaction addressed to the contract. `sender` plays the role of the
/// authenticated caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractTx {
    pub sender: PublicKey,
    pub nonce: u64,
    pub call: Call,
}

impl ContractTx {
    pub fn encode(&self) -> Vec<u8> {
        let t = match self.call {
            Call::Register { .. } => tag::TX_REGISTER,
            Call::RequestWithdraw => tag::TX_WITHDRAW,
            Call::BuyInsurance { .. } => tag::TX_BUY_INSURANCE,
            Call::Slash { .. } => tag::TX_SLASH,
        };
        let mut e = Encoder::with_tag(t);
        e.pk(&self.sender).u64(self.nonce);
        match &self.call {
            Call::Register { stake } => {
                e.u128(*stake);
            }
            Call::RequestWithdraw => {}
            Call::BuyInsurance { allocations, coverage_value, duration } => {
                e.u64(allocations.len() as u64);
                for (pk, amount) in allocations {
                    e.pk(pk).u128(*amount);
                }
                e.u128(*coverage_value).u64(*duration);
            }
            Call::Slash { evidence } => evidence.encode_into(&mut e),
        }
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let t = d.u8()?;
        let sender = d.pk()?;
        let nonce = d.u64()?;
        let call = match t {
            tag::TX_REGISTER => Call::Register { stake: d.u128()? },
            tag::TX_WITHDRAW => Call::RequestWithdraw,
            tag::TX_BUY_INSURANCE => {
                let n = d.u64()?;
                if n > 1024 {
                    return Err(DecodeError::Invalid("allocation count"));
                }
                let mut allocations = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    allocations.push((d.pk()?, d.u128()?));
                }
                Call::BuyInsurance { allocations, coverage_value: d.u128()?, duration: d.u64()? }
            }
            tag::TX_SLASH => Call::Slash { evidence: SlashEvidence::decode_from(&mut d)? },
            other => return Err(DecodeError::UnknownTag(other)),
        };
        d.finish()?;
        Ok(ContractTx { sender, nonce, call })
    }

    pub fn id(&self) -> Digest {
        hash(&self.encode())
    }
}

/// Why a contract call did not take effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Revert {
    #[error("stake below the minimum")]
    BelowMinStake,
    #[error("provider already registered")]
    DuplicateProvider,
    #[error("provider is not active")]
    NotActive,
    #[error("insufficient attributable stake")]
    InsufficientAttributableStake,
    #[error("allocation names an inactive provider")]
    InactiveProvider,
    #[error("allocations do not cover the coverage value")]
    CoverageExceedsAllocations,
    #[error("allocation list is empty or repeats a provider")]
    InvalidAllocations,
    #[error("coverage duration is zero or above the maximum")]
    InvalidDuration,
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("slash rejected: {0}")]
    Slash(#[from] SlashRejection),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SlashRejection {
    #[error("signature does not verify")]
    SignatureInvalid,
    #[error("disputed block is not final yet")]
    BlockNotYetFinal,
    #[error("signed hash matches the finalized hash")]
    HashMatchesFinalized,
    #[error("provider already slashed")]
    AlreadySlashed,
    #[error("provider has exited")]
    ProviderExited,
    #[error("unknown provider")]
    UnknownProvider,
}

impl Revert {
    fn code(&self) -> u8 {
        match self {
            Revert::BelowMinStake => 1,
            Revert::DuplicateProvider => 2,
            Revert::NotActive => 3,
            Revert::InsufficientAttributableStake => 4,
            Revert::InactiveProvider => 5,
            Revert::CoverageExceedsAllocations => 6,
            Revert::InvalidAllocations => 7,
            Revert::InvalidDuration => 8,
            Revert::InsufficientFunds => 9,
            Revert::Slash(r) => 0x10 + *r as u8,
        }
    }

    fn from_code(c: u8) -> Result<Self, DecodeError> {
        use SlashRejection::*;
        Ok(match c {
            1 => Revert::BelowMinStake,
            2 => Revert::DuplicateProvider,
            3 => Revert::NotActive,
            4 => Revert::InsufficientAttributableStake,
            5 => Revert::InactiveProvider,
            6 => Revert::CoverageExceedsAllocations,
            7 => Revert::InvalidAllocations,
            8 => Revert::InvalidDuration,
            9 => Revert::InsufficientFunds,
            0x10 => Revert::Slash(SignatureInvalid),
            0x11 => Revert::Slash(BlockNotYetFinal),
            0x12 => Revert::Slash(HashMatchesFinalized),
            0x13 => Revert::Slash(AlreadySlashed),
            0x14 => Revert::Slash(ProviderExited),
            0x15 => Revert::Slash(UnknownProvider),
            _ => return Err(DecodeError::Invalid("revert code")),
        })
    }
}

/// Record of a successful slash (or of a late claim against an already
/// slashed provider, in which case `slashed_amount` is zero).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlashEvent {
    pub provider_pk: PublicKey,
    pub offending_signature: Signature,
    pub block_number: u64,
    pub signed_hash: Digest,
    pub slashed_amount: u128,
    pub insurance_id: Option<u64>,
    pub compensation: u128,
    pub bounty: u128,
    pub burned: u128,
    pub watcher: PublicKey,
    pub recorded_in_block: u64,
}

impl SlashEvent {
    pub fn encode(&self) -> Vec<u8> {
        Encoder::with_tag(tag::SLASH_EVENT)
            .pk(&self.provider_pk)
            .sig(&self.offending_signature)
            .u64(self.block_number)
            .digest(&self.signed_hash)
            .u128(self.slashed_amount)
            .opt_u64(self.insurance_id)
            .u128(self.compensation)
            .u128(self.bounty)
            .u128(self.burned)
            .pk(&self.watcher)
            .u64(self.recorded_in_block)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        match d.u8()? {
            tag::SLASH_EVENT => {}
            t => return Err(DecodeError::UnknownTag(t)),
        }
        let ev = SlashEvent {
            provider_pk: d.pk()?,
            offending_signature: d.sig()?,
            block_number: d.u64()?,
            signed_hash: d.digest()?,
            slashed_amount: d.u128()?,
            insurance_id: d.opt_u64()?,
            compensation: d.u128()?,
            bounty: d.u128()?,
            burned: d.u128()?,
            watcher: d.pk()?,
            recorded_in_block: d.u64()?,
        };
        d.finish()?;
        Ok(ev)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum Outcome {
    Registered { provider: PublicKey, stake: u128 },
    WithdrawRequested { provider: PublicKey, release_epoch: u64 },
    InsurancePurchased { id: u64, premium: u128 },
    Slashed(SlashEvent),
    Reverted(Revert),
}

/// Execution result of one contract transaction, recorded in the same block
/// right after the transaction it answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub tx_id: Digest,
    pub block_number: u64,
    pub outcome: Outcome,
}

impl Receipt {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::with_tag(tag::RECEIPT);
        e.digest(&self.tx_id).u64(self.block_number);
        match &self.outcome {
            Outcome::Registered { provider, stake } => {
                e.u8(0).pk(provider).u128(*stake);
            }
            Outcome::WithdrawRequested { provider, release_epoch } => {
                e.u8(1).pk(provider).u64(*release_epoch);
            }
            Outcome::InsurancePurchased { id, premium } => {
                e.u8(2).u64(*id).u128(*premium);
            }
            Outcome::Slashed(ev) => {
                e.u8(3).bytes(&ev.encode());
            }
            Outcome::Reverted(r) => {
                e.u8(4).u8(r.code());
            }
        }
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        match d.u8()? {
            tag::RECEIPT => {}
            t => return Err(DecodeError::UnknownTag(t)),
        }
        let tx_id = d.digest()?;
        let block_number = d.u64()?;
        let outcome = match d.u8()? {
            0 => Outcome::Registered { provider: d.pk()?, stake: d.u128()? },
            1 => Outcome::WithdrawRequested { provider: d.pk()?, release_epoch: d.u64()? },
            2 => Outcome::InsurancePurchased { id: d.u64()?, premium: d.u128()? },
            3 => Outcome::Slashed(SlashEvent::decode(d.bytes()?)?),
            4 => Outcome::Reverted(Revert::from_code(d.u8()?)?),
            _ => return Err(DecodeError::Invalid("outcome kind")),
        };
        d.finish()?;
        Ok(Receipt { tx_id, block_number, outcome })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{hash, keygen, sign};
    use proptest::prelude::*;

    #[test]
    fn response_payload_is_bit_exact() {
        let claim = ResponseClaim {
            block_number: 0x0102_0304_0506_0708,
            block_hash: Digest([0xAA; 32]),
            state_hash: Digest([0xBB; 32]),
            insurance_id: None,
        };
        let b = claim.signing_bytes();
        assert_eq!(b.len(), 73);
        assert_eq!(b[0], 0x01);
        assert_eq!(&b[1..9], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert!(b[9..41].iter().all(|&x| x == 0xAA));
        assert!(b[41..73].iter().all(|&x| x == 0xBB));

        let insured = ResponseClaim { insurance_id: Some(9), ..claim };
        let b = insured.signing_bytes();
        assert_eq!(b.len(), 81);
        assert_eq!(b[0], 0x02);
        assert_eq!(&b[73..], &[0, 0, 0, 0, 0, 0, 0, 9]);
        assert_eq!(ResponseClaim::decode(&b).unwrap(), insured);
    }

    #[test]
    fn slash_evidence_checks_signature() {
        let kp = keygen(5);
        let claim =
            ResponseClaim { block_number: 3, block_hash: hash(b"h"), state_hash: hash(b"s"), insurance_id: Some(1) };
        let sig = sign(&kp.secret_key, &claim.signing_bytes());
        let ev = SlashEvidence { provider: kp.public_key, claim, signature: sig };
        assert!(ev.signature_valid());
        let forged = SlashEvidence { claim: ResponseClaim { insurance_id: Some(2), ..claim }, ..ev };
        assert!(!forged.signature_valid());
    }

    fn arb_digest() -> impl Strategy<Value = Digest> {
        any::<[u8; 32]>().prop_map(Digest)
    }

    fn arb_call() -> impl Strategy<Value = Call> {
        prop_oneof![
            any::<u128>().prop_map(|stake| Call::Register { stake }),
            Just(Call::RequestWithdraw),
            (prop::collection::vec((any::<[u8; 32]>(), any::<u128>()), 0..4), any::<u128>(), any::<u64>()).prop_map(
                |(a, coverage_value, duration)| Call::BuyInsurance {
                    allocations: a.into_iter().map(|(k, v)| (PublicKey(k), v)).collect(),
                    coverage_value,
                    duration,
                }
            ),
            (any::<u64>(), arb_digest(), arb_digest(), any::<Option<u64>>(), any::<u64>()).prop_map(
                |(n, h, s, id, seed)| {
                    let kp = keygen(seed);
                    let claim = ResponseClaim { block_number: n, block_hash: h, state_hash: s, insurance_id: id };
                    let signature = sign(&kp.secret_key, &claim.signing_bytes());
                    Call::Slash { evidence: SlashEvidence { provider: kp.public_key, claim, signature } }
                }
            ),
        ]
    }

    proptest! {
        #[test]
        fn contract_tx_round_trips(call in arb_call(), nonce in any::<u64>(), sender in any::<[u8; 32]>()) {
            let tx = ContractTx { sender: PublicKey(sender), nonce, call };
            prop_assert_eq!(ContractTx::decode(&tx.encode()).unwrap(), tx);
        }
    }

    #[test]
    fn receipts_round_trip() {
        let kp = keygen(1);
        let ev = SlashEvent {
            provider_pk: kp.public_key,
            offending_signature: sign(&kp.secret_key, b"x"),
            block_number: 4,
            signed_hash: hash(b"bad"),
            slashed_amount: 32,
            insurance_id: Some(3),
            compensation: 10,
            bounty: 1,
            burned: 21,
            watcher: keygen(2).public_key,
            recorded_in_block: 40,
        };
        for outcome in [
            Outcome::Registered { provider: kp.public_key, stake: 32 },
            Outcome::WithdrawRequested { provider: kp.public_key, release_epoch: 3 },
            Outcome::InsurancePurchased { id: 7, premium: 99 },
            Outcome::Slashed(ev),
            Outcome::Reverted(Revert::Slash(SlashRejection::AlreadySlashed)),
            Outcome::Reverted(Revert::InsufficientAttributableStake),
        ] {
            let r = Receipt { tx_id: hash(b"tx"), block_number: 40, outcome };
            assert_eq!(Receipt::decode(&r.encode()).unwrap(), r);
        }
    }
}
