//! Hashing, signatures and Merkle trees.
//!
//! Every protocol message in the simulator is signed and every block commits to
//! its transactions through a Merkle root, so disputes can be resolved from the
//! bytes alone. The signature scheme sits behind [`SignatureScheme`]; the
//! default is Ed25519 keyed from a 64-bit seed so simulation runs replay
//! bit-for-bit.

mod merkle;

use std::fmt;

use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

pub use merkle::{merkle_prove, merkle_root, merkle_verify, MerkleError, MerkleProof, MerkleTree};

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Digest(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 32-byte hex digest"))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes: [u8; 32] = hex::decode(&s)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| serde::de::Error::custom("expected 32-byte hex key"))?;
        Ok(PublicKey(bytes))
    }
}

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// SHA-256 over a one-byte domain tag followed by each part in order.
pub fn hash_tagged(tag: u8, parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    h.update([tag]);
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Provider (or client) identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.short())
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; 32]);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..6]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub secret_key: SecretKey,
    pub public_key: PublicKey,
}

/// Pluggable accountable-signature primitive.
pub trait SignatureScheme {
    fn keygen(seed: u64) -> KeyPair;
    fn sign(sk: &SecretKey, message: &[u8]) -> Signature;
    fn verify(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool;
}

/// Ed25519 with secret keys derived by hashing the seed.
pub struct Ed25519;

impl SignatureScheme for Ed25519 {
    fn keygen(seed: u64) -> KeyPair {
        let secret = hash_tagged(0xA0, &[b"stakelight/keygen", &seed.to_be_bytes()]).0;
        let signing = SigningKey::from_bytes(&secret);
        KeyPair { secret_key: SecretKey(secret), public_key: PublicKey(signing.verifying_key().to_bytes()) }
    }

    fn sign(sk: &SecretKey, message: &[u8]) -> Signature {
        Signature(SigningKey::from_bytes(&sk.0).sign(message).to_bytes())
    }

    fn verify(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&pk.0) else {
            return false;
        };
        vk.verify(message, &ed25519_dalek::Signature::from_bytes(&sig.0)).is_ok()
    }
}

pub type DefaultScheme = Ed25519;

pub fn keygen(seed: u64) -> KeyPair {
    DefaultScheme::keygen(seed)
}

pub fn sign(sk: &SecretKey, message: &[u8]) -> Signature {
    DefaultScheme::sign(sk, message)
}

pub fn verify(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    DefaultScheme::verify(pk, message, sig)
}
