//! Single-sequence simulated PoS chain with depth-based deterministic finality.
//!
//! One block is produced per tick. A block at height `n` is final once the tip
//! is at least `finality_depth_epochs * slots_per_epoch` blocks above it; there
//! are no forks, so a final hash never changes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{tag, Encoder};
use crate::crypto::{hash, hash_tagged, Digest, MerkleProof, MerkleTree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("block {requested} is above the tip {tip}")]
    UnknownHeight { requested: u64, tip: u64 },
    #[error("block {number} is not final yet (tip {tip}, depth {depth})")]
    NotYetFinal { number: u64, tip: u64, depth: u64 },
    #[error("transaction {tx} is not in block {number}")]
    TxNotInBlock { number: u64, tx: Digest },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: Digest,
    pub payload: Vec<u8>,
    pub value: u128,
}

impl Transaction {
    pub fn new(payload: Vec<u8>, value: u128) -> Self {
        Transaction { id: hash(&payload), payload, value }
    }
}

/// The hashed part of a block. Light clients receive this alongside a
/// response so they can tie an inclusion proof to the signed block hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub number: u64,
    pub parent_hash: Digest,
    pub transactions_root: Digest,
}

impl BlockHeader {
    pub fn hash(&self) -> Digest {
        let bytes = Encoder::new().u64(self.number).digest(&self.parent_hash).digest(&self.transactions_root).finish();
        hash_tagged(tag::BLOCK_HEADER, &[&bytes])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub number: u64,
    pub parent_hash: Digest,
    pub transactions: Vec<Transaction>,
    pub transactions_root: Digest,
    pub hash: Digest,
}

impl Block {
    fn build(number: u64, parent_hash: Digest, transactions: Vec<Transaction>) -> Self {
        let transactions_root = transactions_root(&transactions);
        let header = BlockHeader { number, parent_hash, transactions_root };
        Block { number, parent_hash, transactions, transactions_root, hash: header.hash() }
    }

    pub fn header(&self) -> BlockHeader {
        BlockHeader { number: self.number, parent_hash: self.parent_hash, transactions_root: self.transactions_root }
    }

    pub fn position_of(&self, tx_id: &Digest) -> Option<usize> {
        self.transactions.iter().position(|t| t.id == *tx_id)
    }
}

pub fn transactions_root(txs: &[Transaction]) -> Digest {
    if txs.is_empty() {
        return MerkleTree::empty_root();
    }
    let ids: Vec<&[u8]> = txs.iter().map(|t| t.id.as_bytes().as_slice()).collect();
    MerkleTree::new(&ids).expect("non-empty").root()
}

#[derive(Debug, Clone)]
pub struct Chain {
    blocks: Vec<Block>,
    slots_per_epoch: u64,
    finality_depth_epochs: u64,
    tx_index: HashMap<Digest, (u64, usize)>,
}

impl Chain {
    /// Starts a chain holding only the empty genesis block.
    pub fn new(slots_per_epoch: u64, finality_depth_epochs: u64) -> Self {
        assert!(slots_per_epoch > 0 && finality_depth_epochs > 0);
        Chain {
            blocks: vec![Block::build(0, Digest::ZERO, Vec::new())],
            slots_per_epoch,
            finality_depth_epochs,
            tx_index: HashMap::new(),
        }
    }

    /// Finality depth in blocks.
    pub fn t_fin(&self) -> u64 {
        self.slots_per_epoch * self.finality_depth_epochs
    }

    pub fn tip_height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().unwrap()
    }

    pub fn block(&self, n: u64) -> Option<&Block> {
        self.blocks.get(n as usize)
    }

    pub fn append_block(&mut self, transactions: Vec<Transaction>) -> &Block {
        let number = self.tip_height() + 1;
        let block = Block::build(number, self.tip().hash, transactions);
        for (i, tx) in block.transactions.iter().enumerate() {
            self.tx_index.entry(tx.id).or_insert((number, i));
        }
        self.blocks.push(block);
        self.tip()
    }

    pub fn is_finalized(&self, n: u64) -> bool {
        n <= self.tip_height() && self.tip_height() - n >= self.t_fin()
    }

    /// Highest finalized height, if any block is final yet.
    pub fn finalized_height(&self) -> Option<u64> {
        self.tip_height().checked_sub(self.t_fin())
    }

    pub fn finalized_block_hash(&self, n: u64) -> Result<Digest, ChainError> {
        let tip = self.tip_height();
        if n > tip {
            return Err(ChainError::UnknownHeight { requested: n, tip });
        }
        if !self.is_finalized(n) {
            return Err(ChainError::NotYetFinal { number: n, tip, depth: self.t_fin() });
        }
        Ok(self.blocks[n as usize].hash)
    }

    pub fn inclusion_proof(&self, n: u64, tx_id: &Digest) -> Result<MerkleProof, ChainError> {
        let tip = self.tip_height();
        let block = self.block(n).ok_or(ChainError::UnknownHeight { requested: n, tip })?;
        let index = block.position_of(tx_id).ok_or(ChainError::TxNotInBlock { number: n, tx: *tx_id })?;
        let ids: Vec<&[u8]> = block.transactions.iter().map(|t| t.id.as_bytes().as_slice()).collect();
        Ok(MerkleTree::new(&ids).expect("non-empty").prove(index).expect("in range"))
    }

    /// Where a transaction landed, by id.
    pub fn locate(&self, tx_id: &Digest) -> Option<(u64, usize)> {
        self.tx_index.get(tx_id).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::merkle_verify;

    fn txs(tag: &str, n: usize) -> Vec<Transaction> {
        (0..n).map(|i| Transaction::new(format!("{tag}-{i}").into_bytes(), i as u128)).collect()
    }

    #[test]
    fn first_append_is_block_one() {
        let mut c = Chain::new(4, 2);
        let b = c.append_block(vec![]).clone();
        assert_eq!(b.number, 1);
        assert_eq!(b.parent_hash, c.block(0).unwrap().hash);
    }

    #[test]
    fn same_transactions_different_hash() {
        let mut c = Chain::new(4, 2);
        let h1 = c.append_block(txs("a", 2)).hash;
        let h2 = c.append_block(txs("a", 2)).hash;
        assert_ne!(h1, h2);
    }

    #[test]
    fn genesis_finalizes_after_t_fin_blocks() {
        let mut c = Chain::new(32, 2);
        let mut flipped_at = None;
        for i in 1..=70u64 {
            c.append_block(vec![]);
            if flipped_at.is_none() && c.is_finalized(0) {
                flipped_at = Some(i);
            }
        }
        assert_eq!(flipped_at, Some(64));
    }

    #[test]
    fn finalized_hash_rules() {
        let mut c = Chain::new(4, 2);
        for _ in 0..9 {
            c.append_block(vec![]);
        }
        assert_eq!(c.tip_height(), 9);
        assert!(matches!(c.finalized_block_hash(9), Err(ChainError::NotYetFinal { .. })));
        assert_eq!(c.finalized_block_hash(1), Ok(c.block(1).unwrap().hash));
        assert!(matches!(c.finalized_block_hash(14), Err(ChainError::UnknownHeight { .. })));
        assert!(matches!(c.finalized_block_hash(2), Err(ChainError::NotYetFinal { .. })));
    }

    #[test]
    fn single_tx_block_has_empty_proof() {
        let mut c = Chain::new(4, 2);
        let t = txs("solo", 1);
        c.append_block(t.clone());
        let p = c.inclusion_proof(1, &t[0].id).unwrap();
        assert!(p.siblings.is_empty());
        assert!(merkle_verify(&c.block(1).unwrap().transactions_root, t[0].id.as_bytes(), &p));
    }

    #[test]
    fn proof_binds_to_its_block() {
        let mut c = Chain::new(4, 2);
        let a = txs("a", 8);
        c.append_block(a.clone());
        c.append_block(txs("b", 8));
        let p = c.inclusion_proof(1, &a[3].id).unwrap();
        assert!(merkle_verify(&c.block(1).unwrap().transactions_root, a[3].id.as_bytes(), &p));
        assert!(!merkle_verify(&c.block(2).unwrap().transactions_root, a[3].id.as_bytes(), &p));
        assert!(matches!(c.inclusion_proof(2, &a[3].id), Err(ChainError::TxNotInBlock { .. })));
    }

    #[test]
    fn finality_is_monotone_and_every_tx_proves() {
        let mut c = Chain::new(4, 2);
        let mut seen: HashMap<u64, Digest> = HashMap::new();
        for n in 1..=40u64 {
            let block_txs = txs(&format!("b{n}"), (n % 17) as usize);
            c.append_block(block_txs.clone());
            let b = c.block(n).unwrap();
            for t in &block_txs {
                let p = c.inclusion_proof(n, &t.id).unwrap();
                assert!(merkle_verify(&b.transactions_root, t.id.as_bytes(), &p));
            }
            for h in 0..=c.tip_height() {
                if let Ok(d) = c.finalized_block_hash(h) {
                    assert_eq!(*seen.entry(h).or_insert(d), d);
                }
            }
        }
        assert_eq!(c.block(0).unwrap().transactions_root, MerkleTree::empty_root());
    }
}
