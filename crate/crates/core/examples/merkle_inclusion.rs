//! Proves that a transaction sits in a block and checks the proof against
//! the block header, the way a light client checks a provider's answer.

use stakelight::chain::{Chain, Transaction};
use stakelight::crypto::merkle_verify;

fn main() {
    let mut chain = Chain::new(4, 2);
    let txs: Vec<Transaction> = (0..5).map(|i| Transaction::new(format!("transfer #{i}").into_bytes(), i)).collect();
    let target = txs[3].id;
    let n = chain.append_block(txs).number;
    for _ in 0..chain.t_fin() {
        chain.append_block(vec![]);
    }

    let block = chain.block(n).unwrap();
    let proof = chain.inclusion_proof(n, &target).unwrap();
    println!("block {n} hash {}", block.hash);
    println!("final: {}", chain.is_finalized(n));
    println!("proof: leaf {} of {}, {} siblings", proof.leaf_index, proof.leaf_count, proof.siblings.len());

    let header = block.header();
    assert_eq!(header.hash(), block.hash);
    let ok = merkle_verify(&header.transactions_root, target.as_bytes(), &proof);
    println!("inclusion of {} verifies: {ok}", target);
    let forged =
        merkle_verify(&header.transactions_root, Transaction::new(b"forged".to_vec(), 0).id.as_bytes(), &proof);
    println!("a different transaction verifies: {forged}");
}
