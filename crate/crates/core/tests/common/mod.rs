//! Oracles shared by the integration tests. Nothing here calls into the
//! code under test to decide what the right answer is.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stakelight::chain::Chain;
use stakelight::contract::{Contract, ContractConfig, ProviderStatus, ResponseClaim, SlashEvidence, Wei};
use stakelight::crypto::{hash, keygen, sign, KeyPair, PublicKey};
use stakelight::harness::ScenarioConfig;

const ETH: Wei = 1_000_000_000_000_000_000;

#[derive(Debug, Default, Clone, Copy)]
pub struct ScheduleStats {
    pub blocks: u64,
    pub purchases: usize,
    pub reverted_purchases: usize,
    pub slashes: usize,
    pub claims_paid: usize,
    pub withdrawals: usize,
    pub registrations: usize,
    pub expiries: usize,
}

struct Accounts {
    providers: Vec<KeyPair>,
    buyers: Vec<PublicKey>,
    watcher: PublicKey,
}

impl Accounts {
    fn all(&self) -> impl Iterator<Item = PublicKey> + '_ {
        self.providers.iter().map(|k| k.public_key).chain(self.buyers.iter().copied()).chain([self.watcher])
    }
}

fn accounts() -> &'static Accounts {
    static ACCOUNTS: OnceLock<Accounts> = OnceLock::new();
    ACCOUNTS.get_or_init(|| Accounts {
        providers: (0..6).map(|i| keygen(1_000 + i)).collect(),
        buyers: (0..3).map(|i| keygen(2_000 + i).public_key).collect(),
        watcher: keygen(3_000).public_key,
    })
}

/// Random buys, expiries, slashes with and without claims, withdrawals and
/// registrations against one contract, one block at a time. After every
/// action and every block boundary, checks that no provider has more locked
/// than staked, that each lock matches the live allocations, that no wei
/// appears or disappears, and that every buyer's balance matches a ledger
/// kept here from the calls made.
pub fn run_contract_schedule(seed: u64) -> Result<ScheduleStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ContractConfig {
        update_epoch_blocks: 40,
        max_challenge_period: 16,
        max_coverage_duration: 120,
        ..ContractConfig::default()
    };
    let gas = config.pricing.gas_cost_wei();
    let mut contract = Contract::new(config);
    let acc = accounts();
    let mut buyer_ledger: BTreeMap<PublicKey, Wei> = BTreeMap::new();
    for kp in &acc.providers {
        contract.mint(kp.public_key, 100 * ETH);
    }
    for b in &acc.buyers {
        contract.mint(*b, 30 * ETH);
        buyer_ledger.insert(*b, 30 * ETH);
    }
    for kp in &acc.providers[..4] {
        contract.register_genesis(kp.public_key, rng.gen_range(1..=48) * ETH).map_err(|e| format!("genesis: {e:?}"))?;
    }
    let total = 6 * 100 * ETH + 3 * 30 * ETH;
    let mut chain = Chain::new(2, 2);
    let mut stats = ScheduleStats::default();
    let blocks = rng.gen_range(60..=160);

    for _ in 0..blocks {
        chain.append_block(vec![]);
        let block = chain.tip_height();
        for _ in 0..rng.gen_range(0..=3) {
            match rng.gen_range(0..100) {
                0..=49 => buy(&mut rng, &mut contract, acc, block, gas, &mut buyer_ledger, &mut stats),
                50..=59 => slash(&mut rng, &mut contract, &chain, acc, block, &mut buyer_ledger, &mut stats),
                60..=79 => {
                    let kp = &acc.providers[rng.gen_range(0..6)];
                    if contract.request_withdraw(&kp.public_key, block).is_ok() {
                        stats.withdrawals += 1;
                    }
                }
                _ => {
                    let kp = &acc.providers[rng.gen_range(0..6)];
                    if contract.register(kp.public_key, rng.gen_range(1..=40) * ETH, block).is_ok() {
                        stats.registrations += 1;
                    }
                }
            }
            check(&contract, acc, total, &buyer_ledger).map_err(|e| format!("seed {seed}, block {block}: {e}"))?;
        }
        let effects = contract.process_block_boundary(block);
        stats.expiries +=
            effects.iter().filter(|e| matches!(e, stakelight::contract::Effect::PolicyExpired { .. })).count();
        check(&contract, acc, total, &buyer_ledger).map_err(|e| format!("seed {seed}, boundary {block}: {e}"))?;
    }
    stats.blocks = blocks;
    Ok(stats)
}

fn buy(
    rng: &mut ChaCha8Rng,
    contract: &mut Contract,
    acc: &Accounts,
    block: u64,
    gas: Wei,
    ledger: &mut BTreeMap<PublicKey, Wei>,
    stats: &mut ScheduleStats,
) {
    let buyer = acc.buyers[rng.gen_range(0..acc.buyers.len())];
    let n = rng.gen_range(1..=3);
    let allocations: Vec<(PublicKey, Wei)> = (0..n)
        .map(|_| {
            let pk = acc.providers[rng.gen_range(0..6)].public_key;
            (pk, rng.gen_range(1..=20) * ETH + rng.gen_range(0..ETH))
        })
        .collect();
    let sum: Wei = allocations.iter().map(|a| a.1).sum();
    let coverage = match rng.gen_range(0..10) {
        0 => sum + 1,
        1..=3 => sum - rng.gen_range(0..ETH),
        _ => sum,
    };
    let duration = match rng.gen_range(0..20) {
        0 => 0,
        1 => 500,
        _ => rng.gen_range(1..=120),
    };
    let before = contract.balance(&buyer);
    match contract.buy_insurance(buyer, &allocations, coverage, duration, block) {
        Ok((_, premium)) => {
            *ledger.get_mut(&buyer).unwrap() -= gas + premium;
            stats.purchases += 1;
        }
        Err(_) => {
            if before >= gas {
                *ledger.get_mut(&buyer).unwrap() -= gas;
            }
            stats.reverted_purchases += 1;
        }
    }
}

fn slash(
    rng: &mut ChaCha8Rng,
    contract: &mut Contract,
    chain: &Chain,
    acc: &Accounts,
    block: u64,
    ledger: &mut BTreeMap<PublicKey, Wei>,
    stats: &mut ScheduleStats,
) {
    let kp = &acc.providers[rng.gen_range(0..6)];
    let policy_count = contract.policies().count() as u64;
    let insurance_id = match rng.gen_range(0..4) {
        0 => None,
        1 => Some(policy_count + 5),
        _ if policy_count > 0 => Some(rng.gen_range(1..=policy_count)),
        _ => None,
    };
    let claim = ResponseClaim {
        block_number: rng.gen_range(1..=block),
        block_hash: hash(&rng.gen::<[u8; 8]>()),
        state_hash: hash(b"state"),
        insurance_id,
    };
    let evidence =
        SlashEvidence { provider: kp.public_key, claim, signature: sign(&kp.secret_key, &claim.signing_bytes()) };
    if let Ok(ev) = contract.slash(&evidence, acc.watcher, chain, block) {
        if ev.slashed_amount > 0 {
            stats.slashes += 1;
        }
        if ev.compensation > 0 {
            let buyer = contract.policy(ev.insurance_id.unwrap()).unwrap().buyer;
            *ledger.get_mut(&buyer).unwrap() += ev.compensation;
            stats.claims_paid += 1;
        }
    }
}

fn check(contract: &Contract, acc: &Accounts, total: Wei, ledger: &BTreeMap<PublicKey, Wei>) -> Result<(), String> {
    let mut held = 0;
    for p in contract.providers() {
        if p.locked > p.stake {
            return Err(format!("locked {} > stake {}", p.locked, p.stake));
        }
        if !matches!(p.status, ProviderStatus::Active | ProviderStatus::Leaving) {
            continue;
        }
        held += p.stake;
        let live: Wei = contract
            .policies()
            .filter(|pol| pol.is_live())
            .flat_map(|pol| pol.allocations.iter())
            .filter(|a| a.provider == p.public_key && !a.released)
            .map(|a| a.amount)
            .sum();
        if live != p.locked {
            return Err(format!("locked {} but live allocations {}", p.locked, live));
        }
    }
    for pol in contract.policies() {
        if pol.paid_out > pol.coverage_value {
            return Err(format!("policy {} paid {} over coverage {}", pol.id, pol.paid_out, pol.coverage_value));
        }
    }
    let balances: Wei = acc.all().map(|pk| contract.balance(&pk)).sum();
    let rewards: Wei = acc.providers.iter().map(|k| contract.reward_pool(&k.public_key)).sum();
    let sum = held + balances + rewards + contract.escrowed() + contract.burned() + contract.gas_collected();
    if sum != total {
        return Err(format!("wei not conserved: {sum} != {total}"));
    }
    for (pk, want) in ledger {
        if contract.balance(pk) != *want {
            return Err(format!("buyer balance {} != ledger {want}", contract.balance(pk)));
        }
    }
    Ok(())
}

/// Indices of the providers in the registry's roster for `epoch`, worked out
/// from the scenario's schedule alone: a registration or withdrawal in epoch
/// `i` takes effect from epoch `i + 2`.
pub fn expected_roster(cfg: &ScenarioConfig, epoch: u64) -> BTreeSet<usize> {
    let b_u = cfg.update_epoch_blocks;
    let effective = |tick: u64| tick / b_u + 2 <= epoch;
    cfg.providers
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let first = p.join_tick.is_none_or(effective) && !p.withdraw_tick.is_some_and(effective);
            let second = p.rejoin_tick.is_some_and(effective);
            first || second
        })
        .map(|(i, _)| i)
        .collect()
}
