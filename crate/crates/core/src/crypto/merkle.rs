use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{hash_tagged, Digest};

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;
const ROOT_TAG: u8 = 0x02;
const PAD_TAG: u8 = 0x03;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("cannot build a Merkle tree over zero leaves")]
    EmptyLeaves,
    #[error("leaf index {index} out of range for {count} leaves")]
    IndexOutOfRange { index: usize, count: usize },
}

/// Authentication path for one leaf. The leaf count is carried along because
/// the root commits to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub leaf_count: u64,
    pub siblings: Vec<Digest>,
}

fn depth_for(count: usize) -> usize {
    count.next_power_of_two().trailing_zeros() as usize
}

fn leaf_hash(leaf: &[u8]) -> Digest {
    hash_tagged(LEAF_TAG, &[leaf])
}

fn node_hash(l: &Digest, r: &Digest) -> Digest {
    hash_tagged(NODE_TAG, &[l.as_bytes(), r.as_bytes()])
}

fn pad_hash() -> Digest {
    hash_tagged(PAD_TAG, &[])
}

fn commit(count: usize, top: &Digest) -> Digest {
    hash_tagged(ROOT_TAG, &[&(count as u64).to_be_bytes(), top.as_bytes()])
}

/// Binary Merkle tree padded to a power of two.
#[derive(Debug, Clone)]
pub struct MerkleTree {
    count: usize,
    // levels[0] are the (padded) leaf hashes, last level holds the top node
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn new<L: AsRef<[u8]>>(leaves: &[L]) -> Result<Self, MerkleError> {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyLeaves);
        }
        let width = leaves.len().next_power_of_two();
        let mut level: Vec<Digest> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
        level.resize(width, pad_hash());
        let mut levels = vec![level];
        while levels.last().map_or(0, Vec::len) > 1 {
            let next = levels.last().unwrap().chunks(2).map(|pair| node_hash(&pair[0], &pair[1])).collect();
            levels.push(next);
        }
        Ok(MerkleTree { count: leaves.len(), levels })
    }

    /// Root of a tree with no leaves; used for empty blocks.
    pub fn empty_root() -> Digest {
        commit(0, &pad_hash())
    }

    pub fn leaf_count(&self) -> usize {
        self.count
    }

    pub fn root(&self) -> Digest {
        commit(self.count, &self.levels.last().unwrap()[0])
    }

    pub fn prove(&self, index: usize) -> Result<MerkleProof, MerkleError> {
        if index >= self.count {
            return Err(MerkleError::IndexOutOfRange { index, count: self.count });
        }
        let mut siblings = Vec::with_capacity(self.levels.len() - 1);
        let mut i = index;
        for level in &self.levels[..self.levels.len() - 1] {
            siblings.push(level[i ^ 1]);
            i >>= 1;
        }
        Ok(MerkleProof { leaf_index: index as u64, leaf_count: self.count as u64, siblings })
    }
}

pub fn merkle_root<L: AsRef<[u8]>>(leaves: &[L]) -> Result<Digest, MerkleError> {
    Ok(MerkleTree::new(leaves)?.root())
}

pub fn merkle_prove<L: AsRef<[u8]>>(leaves: &[L], index: usize) -> Result<MerkleProof, MerkleError> {
    MerkleTree::new(leaves)?.prove(index)
}

pub fn merkle_verify(root: &Digest, leaf: &[u8], proof: &MerkleProof) -> bool {
    let count = proof.leaf_count as usize;
    if count == 0 || proof.leaf_index >= proof.leaf_count {
        return false;
    }
    if proof.siblings.len() != depth_for(count) {
        return false;
    }
    let mut acc = leaf_hash(leaf);
    let mut i = proof.leaf_index;
    for sib in &proof.siblings {
        acc = if i & 1 == 0 { node_hash(&acc, sib) } else { node_hash(sib, &acc) };
        i >>= 1;
    }
    commit(count, &acc) == *root
}
