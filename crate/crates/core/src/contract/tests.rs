use super::*;
use crate::crypto::{hash, keygen, sign, KeyPair};
use crate::pricing::eth;
use proptest::prelude::*;

fn pk(seed: u64) -> PublicKey {
    keygen(seed).public_key
}

fn funded(config: ContractConfig, seeds: &[u64]) -> Contract {
    let mut c = Contract::new(config);
    for s in seeds {
        c.mint(pk(*s), eth(1_000));
    }
    c
}

fn chain_with(blocks: u64) -> Chain {
    let mut chain = Chain::new(4, 2);
    for _ in 0..blocks {
        chain.append_block(vec![]);
    }
    chain
}

fn lie(kp: &KeyPair, n: u64, id: Option<u64>) -> SlashEvidence {
    let claim =
        ResponseClaim { block_number: n, block_hash: hash(b"not the block"), state_hash: hash(b"s"), insurance_id: id };
    SlashEvidence { provider: kp.public_key, claim, signature: sign(&kp.secret_key, &claim.signing_bytes()) }
}

#[test]
fn register_boundaries() {
    let mut c = funded(ContractConfig::default(), &[1, 2]);
    c.register(pk(1), eth(32), 0).unwrap();
    assert_eq!(c.provider(&pk(1)).unwrap().status, ProviderStatus::Active);
    assert_eq!(c.register(pk(1), eth(32), 0), Err(Revert::DuplicateProvider));
    let min = c.config().min_stake;
    assert_eq!(c.register(pk(2), min - 1, 0), Err(Revert::BelowMinStake));
}

#[test]
fn re_registration_after_exit_is_a_new_record() {
    let mut c = funded(ContractConfig::default(), &[1]);
    c.register(pk(1), eth(32), 0).unwrap();
    let first = c.provider(&pk(1)).unwrap().record_id;
    c.request_withdraw(&pk(1), 0).unwrap();
    for b in 0..=c.config().last_block_of(1) {
        c.process_block_boundary(b);
    }
    assert_eq!(c.provider(&pk(1)).unwrap().status, ProviderStatus::Exited);
    c.register(pk(1), eth(32), 200).unwrap();
    assert_ne!(c.provider(&pk(1)).unwrap().record_id, first);
    assert_eq!(c.retired_records().len(), 1);
}

#[test]
fn withdraw_releases_at_end_of_next_epoch() {
    let cfg = ContractConfig::default();
    let bu = cfg.update_epoch_blocks;
    let mut c = funded(cfg, &[1]);
    c.register(pk(1), eth(32), 0).unwrap();
    let before = c.balance(&pk(1));
    assert_eq!(c.request_withdraw(&pk(1), bu + 3), Ok(2));
    assert_eq!(c.provider(&pk(1)).unwrap().status, ProviderStatus::Leaving);
    for b in 0..3 * bu - 1 {
        c.process_block_boundary(b);
        assert_eq!(c.provider(&pk(1)).unwrap().status, ProviderStatus::Leaving, "block {b}");
    }
    let fx = c.process_block_boundary(3 * bu - 1);
    assert_eq!(fx, vec![Effect::ProviderExited { provider: pk(1), released: eth(32) }]);
    assert_eq!(c.balance(&pk(1)), before + eth(32));
    assert_eq!(c.request_withdraw(&pk(9), 0), Err(Revert::NotActive));
}

#[test]
fn withdraw_is_deferred_past_policy_expiry() {
    let cfg = ContractConfig::default();
    let bu = cfg.update_epoch_blocks;
    let mut c = funded(cfg, &[1, 2]);
    c.register(pk(1), eth(32), 0).unwrap();
    // policy starting at block 10 running well into epoch 3
    let duration = 3 * bu + 5;
    c.buy_insurance(pk(2), &[(pk(1), eth(10))], eth(10), duration, 10).unwrap();
    c.request_withdraw(&pk(1), 20).unwrap();
    let expiry = 10 + duration + 1;
    let release_epoch = c.config().epoch_of(expiry) + 1;
    let release_block = c.config().last_block_of(release_epoch);
    for b in 0..release_block {
        c.process_block_boundary(b);
        assert_ne!(c.provider(&pk(1)).unwrap().status, ProviderStatus::Exited, "block {b}");
    }
    c.process_block_boundary(release_block);
    assert_eq!(c.provider(&pk(1)).unwrap().status, ProviderStatus::Exited);
}

#[test]
fn policy_expiry_releases_lock_after_last_covered_block() {
    let mut c = funded(ContractConfig::default(), &[1, 2]);
    c.register(pk(1), eth(32), 0).unwrap();
    assert!(c.process_block_boundary(3).is_empty());
    let (id, _) = c.buy_insurance(pk(2), &[(pk(1), eth(10))], eth(10), 5, 10).unwrap();
    assert_eq!(c.provider(&pk(1)).unwrap().locked, eth(10));
    for b in 10..16 {
        assert!(c.process_block_boundary(b).is_empty());
    }
    assert_eq!(c.process_block_boundary(16), vec![Effect::PolicyExpired { id }]);
    assert_eq!(c.provider(&pk(1)).unwrap().locked, 0);
    assert_eq!(c.policy(id).unwrap().state, PolicyState::Expired);
}

#[test]
fn expiry_and_release_in_the_same_block_exits() {
    let cfg = ContractConfig::default();
    let bu = cfg.update_epoch_blocks;
    // last covered block is 2*bu - 2, so it expires at the boundary of 2*bu - 1
    let mut c = funded(cfg, &[1, 2]);
    c.register(pk(1), eth(32), 0).unwrap();
    c.buy_insurance(pk(2), &[(pk(1), eth(10))], eth(10), 2 * bu - 2, 0).unwrap();
    c.request_withdraw(&pk(1), 0).unwrap();
    for b in 0..2 * bu - 1 {
        c.process_block_boundary(b);
    }
    let fx = c.process_block_boundary(2 * bu - 1);
    assert!(matches!(fx[0], Effect::PolicyExpired { .. }));
    assert!(matches!(fx[1], Effect::ProviderExited { .. }));
    assert_eq!(c.provider(&pk(1)).unwrap().status, ProviderStatus::Exited);
}

#[test]
fn buy_insurance_locks_and_reverts() {
    let mut c = funded(ContractConfig::default(), &[1, 2, 3]);
    c.register(pk(1), eth(32), 0).unwrap();
    let (_, premium) = c.buy_insurance(pk(2), &[(pk(1), eth(10))], eth(10), 1500, 0).unwrap();
    assert_eq!(premium, crate::pricing::premium(&c.config().pricing, 1500, eth(10)).unwrap());
    assert_eq!(c.provider(&pk(1)).unwrap().locked, eth(10));
    assert_eq!(c.buy_insurance(pk(2), &[(pk(1), eth(33))], eth(10), 10, 0), Err(Revert::InsufficientAttributableStake));
    assert_eq!(c.buy_insurance(pk(2), &[(pk(3), eth(1))], eth(1), 10, 0), Err(Revert::InactiveProvider));
    assert_eq!(c.buy_insurance(pk(2), &[(pk(1), eth(1))], eth(2), 10, 0), Err(Revert::CoverageExceedsAllocations));
    assert_eq!(c.buy_insurance(pk(2), &[], 0, 10, 0), Err(Revert::InvalidAllocations));
    assert_eq!(c.buy_insurance(pk(2), &[(pk(1), eth(1))], eth(1), 0, 0), Err(Revert::InvalidDuration));
}

#[test]
fn two_purchases_against_one_provider_only_one_fits() {
    let mut c = funded(ContractConfig::default(), &[1, 2, 3]);
    c.register(pk(1), eth(32), 0).unwrap();
    let a = c.buy_insurance(pk(2), &[(pk(1), eth(20))], eth(20), 100, 5);
    let b = c.buy_insurance(pk(3), &[(pk(1), eth(20))], eth(20), 100, 5);
    assert!(a.is_ok());
    assert_eq!(b, Err(Revert::InsufficientAttributableStake));
}

#[test]
fn gas_is_charged_on_revert() {
    let mut c = funded(ContractConfig::default(), &[2]);
    let before = c.balance(&pk(2));
    let _ = c.buy_insurance(pk(2), &[(pk(1), eth(1))], eth(1), 10, 0);
    assert_eq!(before - c.balance(&pk(2)), c.config().gas_cost());
    let mut broke = Contract::new(ContractConfig::default());
    assert_eq!(broke.buy_insurance(pk(4), &[(pk(1), 1)], 1, 10, 0), Err(Revert::InsufficientFunds));
    assert_eq!(broke.gas_collected(), 0);
}

#[test]
fn slash_rejections() {
    let kp = keygen(1);
    let mut c = funded(ContractConfig::default(), &[1]);
    c.register(kp.public_key, eth(32), 0).unwrap();
    let chain = chain_with(20);
    let watcher = pk(50);

    assert_eq!(c.slash(&lie(&keygen(7), 1, None), watcher, &chain, 20), Err(SlashRejection::UnknownProvider));
    let mut forged = lie(&kp, 1, None);
    forged.claim.state_hash = hash(b"other");
    assert_eq!(c.slash(&forged, watcher, &chain, 20), Err(SlashRejection::SignatureInvalid));
    assert_eq!(c.slash(&lie(&kp, 15, None), watcher, &chain, 20), Err(SlashRejection::BlockNotYetFinal));
    assert_eq!(c.slash(&lie(&kp, 90, None), watcher, &chain, 20), Err(SlashRejection::BlockNotYetFinal));

    let claim = ResponseClaim {
        block_number: 3,
        block_hash: chain.finalized_block_hash(3).unwrap(),
        state_hash: hash(b"s"),
        insurance_id: None,
    };
    let honest =
        SlashEvidence { provider: kp.public_key, claim, signature: sign(&kp.secret_key, &claim.signing_bytes()) };
    assert_eq!(c.slash(&honest, watcher, &chain, 20), Err(SlashRejection::HashMatchesFinalized));

    let ev = c.slash(&lie(&kp, 3, None), watcher, &chain, 20).unwrap();
    assert_eq!(ev.slashed_amount, eth(32));
    assert_eq!(c.slash(&lie(&kp, 4, None), watcher, &chain, 21), Err(SlashRejection::AlreadySlashed));
}

#[test]
fn insured_slash_pays_exactly_the_coverage() {
    let kp = keygen(1);
    let buyer = pk(2);
    let watcher = pk(3);
    let mut c = funded(ContractConfig::default(), &[1, 2]);
    c.register(kp.public_key, eth(32), 0).unwrap();
    let (id, _) = c.buy_insurance(buyer, &[(kp.public_key, eth(10))], eth(10), 1500, 5).unwrap();
    let chain = chain_with(30);
    let total = c.total_wei();
    let before = c.balance(&buyer);

    let ev = c.slash(&lie(&kp, 6, Some(id)), watcher, &chain, 30).unwrap();
    assert_eq!(c.balance(&buyer) - before, eth(10));
    assert_eq!(ev.compensation, eth(10));
    // bounty is 5% of the 22 ETH not owed to the policy
    assert_eq!(ev.bounty, eth(22) / 20);
    assert_eq!(ev.burned, eth(22) - eth(22) / 20);
    assert_eq!(c.policy(id).unwrap().state, PolicyState::Claimed);
    assert_eq!(c.total_wei(), total);
    c.check_no_overload().unwrap();
}

#[test]
fn second_policy_claims_from_escrow_after_slash() {
    let kp = keygen(1);
    let mut c = funded(ContractConfig::default(), &[1, 2, 3]);
    c.register(kp.public_key, eth(32), 0).unwrap();
    let (a, _) = c.buy_insurance(pk(2), &[(kp.public_key, eth(10))], eth(10), 1500, 5).unwrap();
    let (b, _) = c.buy_insurance(pk(3), &[(kp.public_key, eth(12))], eth(12), 1500, 5).unwrap();
    let chain = chain_with(30);
    let total = c.total_wei();
    let b_before = c.balance(&pk(3));

    c.slash(&lie(&kp, 6, Some(a)), pk(9), &chain, 30).unwrap();
    assert_eq!(c.escrowed(), eth(12));
    // a repeat claim for the already-paid policy finds no escrow
    assert_eq!(c.slash(&lie(&kp, 7, Some(a)), pk(9), &chain, 31), Err(SlashRejection::AlreadySlashed));
    let late = c.slash(&lie(&kp, 7, Some(b)), pk(9), &chain, 31).unwrap();
    assert_eq!(late.compensation, eth(12));
    assert_eq!(c.balance(&pk(3)) - b_before, eth(12));
    assert_eq!(c.escrowed(), 0);
    assert_eq!(c.total_wei(), total);
}

#[test]
fn unclaimed_escrow_is_burned_at_expiry() {
    let kp = keygen(1);
    let mut c = funded(ContractConfig::default(), &[1, 2]);
    c.register(kp.public_key, eth(32), 0).unwrap();
    let (id, _) = c.buy_insurance(pk(2), &[(kp.public_key, eth(10))], eth(10), 20, 0).unwrap();
    let chain = chain_with(15);
    c.slash(&lie(&kp, 2, None), pk(9), &chain, 15).unwrap();
    assert_eq!(c.escrowed(), eth(10));
    let fx = c.process_block_boundary(21);
    assert!(fx.contains(&Effect::EscrowBurned { id, provider: kp.public_key, amount: eth(10) }));
    assert_eq!(c.escrowed(), 0);
}

#[test]
fn claim_after_expiry_pays_nothing() {
    let kp = keygen(1);
    let mut c = funded(ContractConfig::default(), &[1, 2]);
    c.register(kp.public_key, eth(32), 0).unwrap();
    let (id, _) = c.buy_insurance(pk(2), &[(kp.public_key, eth(10))], eth(10), 5, 0).unwrap();
    for b in 0..=6 {
        c.process_block_boundary(b);
    }
    let chain = chain_with(20);
    let ev = c.slash(&lie(&kp, 2, Some(id)), pk(9), &chain, 20).unwrap();
    assert_eq!(ev.compensation, 0);
    assert_eq!(c.policy(id).unwrap().state, PolicyState::Expired);
}

#[test]
fn active_set_follows_two_epoch_delay() {
    let cfg = ContractConfig::default();
    let bu = cfg.update_epoch_blocks;
    let mut c = funded(cfg, &[1, 2, 3]);
    assert!(c.active_set(0, 0).unwrap().is_empty());
    c.register_genesis(pk(1), eth(32)).unwrap();
    c.register(pk(2), eth(40), bu + 1).unwrap();
    assert_eq!(c.live_providers().len(), 2);
    let keys = |c: &Contract, e: u64, now: u64| -> Vec<PublicKey> {
        c.active_set(e, now).unwrap().into_iter().map(|r| r.public_key).collect()
    };
    assert_eq!(keys(&c, 1, bu + 1), vec![pk(1)]);
    assert_eq!(keys(&c, 2, bu + 1), vec![pk(1)]);
    c.request_withdraw(&pk(1), 2 * bu).unwrap();
    assert_eq!(keys(&c, 3, 2 * bu).len(), 2);
    assert!(c.active_set(4, 2 * bu).is_err());
    assert_eq!(keys(&c, 4, 3 * bu), vec![pk(2)]);
}

#[test]
fn config_bound_is_enforced() {
    let cfg = ContractConfig { update_epoch_blocks: 79, ..ContractConfig::default() };
    assert_eq!(cfg.validate(8, 4), Err(ConfigError::UpdateEpochTooShort { update_epoch_blocks: 79, required: 80 }));
    let cfg = ContractConfig { update_epoch_blocks: 80, ..cfg };
    assert_eq!(cfg.validate(8, 4), Ok(()));
}

#[test]
fn identical_histories_encode_identically() {
    let run = || {
        let kp = keygen(1);
        let mut c = funded(ContractConfig::default(), &[1, 2]);
        c.register(kp.public_key, eth(32), 0).unwrap();
        c.buy_insurance(pk(2), &[(kp.public_key, eth(3))], eth(3), 40, 1).unwrap();
        let chain = chain_with(12);
        c.slash(&lie(&kp, 1, Some(1)), pk(9), &chain, 12).unwrap();
        c.process_block_boundary(50);
        c.canonical_bytes()
    };
    assert_eq!(run(), run());
}

#[derive(Debug, Clone)]
enum Op {
    Buy { buyer: u64, provider: u64, amount: u64, duration: u64 },
    Withdraw(u64),
    Slash { provider: u64, policy: u64 },
    Advance(u64),
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (10u64..13, 0u64..4, 1u64..40, 1u64..200)
            .prop_map(|(buyer, provider, amount, duration)| Op::Buy { buyer, provider, amount, duration }),
        1 => (0u64..4).prop_map(Op::Withdraw),
        1 => (0u64..4, 0u64..20).prop_map(|(provider, policy)| Op::Slash { provider, policy }),
        3 => (1u64..60).prop_map(Op::Advance),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn locks_and_wei_stay_consistent(ops in prop::collection::vec(arb_op(), 1..60)) {
        let cfg = ContractConfig { update_epoch_blocks: 80, ..ContractConfig::default() };
        let mut c = Contract::new(cfg);
        let keys: Vec<KeyPair> = (0..4).map(keygen).collect();
        for kp in &keys {
            c.mint(kp.public_key, eth(64));
            c.register_genesis(kp.public_key, eth(32)).unwrap();
        }
        for b in 10..13 {
            c.mint(pk(b), eth(100));
        }
        let total = c.total_wei();
        let mut chain = Chain::new(4, 2);
        let mut block = 0u64;
        for op in ops {
            match op {
                Op::Buy { buyer, provider, amount, duration } => {
                    let _ = c.buy_insurance(pk(buyer), &[(keys[provider as usize].public_key, eth(amount))], eth(amount), duration, block);
                }
                Op::Withdraw(p) => { let _ = c.request_withdraw(&keys[p as usize].public_key, block); }
                Op::Slash { provider, policy } => {
                    if block > 9 {
                        let _ = c.slash(&lie(&keys[provider as usize], block - 9, Some(policy)), pk(99), &chain, block);
                    }
                }
                Op::Advance(n) => {
                    for _ in 0..n {
                        c.process_block_boundary(block);
                        prop_assert!(c.check_no_overload().is_ok());
                        chain.append_block(vec![]);
                        block += 1;
                    }
                }
            }
            prop_assert!(c.check_no_overload().is_ok(), "{:?}", c.check_no_overload());
            prop_assert_eq!(c.total_wei(), total);
            for pol in c.policies() {
                prop_assert!(pol.paid_out <= pol.coverage_value);
            }
        }
    }
}
