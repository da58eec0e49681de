use super::Strategy;
use super::*;
use crate::contract::ContractConfig;
use crate::crypto::keygen;
use crate::pricing::eth;
use proptest::prelude::*;

struct Fixture {
    chain: Chain,
    contract: Contract,
    client: KeyPair,
}

impl Fixture {
    fn new(providers: &[u64]) -> Self {
        let mut contract = Contract::new(ContractConfig::default());
        for s in providers {
            let pk = keygen(*s).public_key;
            contract.mint(pk, eth(32));
            contract.register_genesis(pk, eth(32)).unwrap();
        }
        Fixture { chain: Chain::new(4, 2), contract, client: keygen(1000) }
    }

    /// Appends one block holding `payloads` plus each contract tx and its receipt.
    fn block(&mut self, payloads: &[&str], txs: &[ContractTx]) -> u64 {
        let n = self.chain.tip_height() + 1;
        let mut body: Vec<Transaction> = payloads.iter().map(|p| Transaction::new(p.as_bytes().to_vec(), 0)).collect();
        for tx in txs {
            let outcome = self.contract.execute(tx, &self.chain, n);
            let receipt = Receipt { tx_id: tx.id(), block_number: n, outcome };
            body.push(Transaction::new(tx.encode(), 0));
            body.push(Transaction::new(receipt.encode(), 0));
        }
        self.chain.append_block(body);
        self.contract.process_block_boundary(n);
        n
    }

    fn empty_blocks(&mut self, k: u64) {
        for _ in 0..k {
            self.block(&[], &[]);
        }
    }

    fn query(&self, n: u64, payload: &str, id: Option<u64>) -> Query {
        Query::new(&self.client, n, hash(payload.as_bytes()), id)
    }
}

#[test]
fn honest_answers_only_final_blocks() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["a", "target", "b"], &[]);
    let mut p = ProviderNode::new(keygen(1), Strategy::Honest);
    let q = f.query(n, "target", None);
    assert!(p.respond(&q, &f.chain, &f.contract).response.is_none());
    f.empty_blocks(8);
    let r = p.respond(&q, &f.chain, &f.contract).response.unwrap();
    assert_eq!(r.claim.block_hash, f.chain.finalized_block_hash(n).unwrap());
    assert!(r.answers(n, &q.state_hash, None));
    assert_eq!(watcher_check(&r, &f.chain, &f.contract), Verdict::Ok);
}

#[test]
fn honest_is_silent_while_leaving() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["target"], &[]);
    f.empty_blocks(8);
    let mut p = ProviderNode::new(keygen(1), Strategy::Honest);
    let tx = p.next_tx(Call::RequestWithdraw);
    f.block(&[], &[tx]);
    assert!(p.respond(&f.query(n, "target", None), &f.chain, &f.contract).response.is_none());
}

#[test]
fn wrong_hash_fools_the_client_but_not_the_watcher() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["target"], &[]);
    f.empty_blocks(8);
    let mut p = ProviderNode::new(keygen(1), Strategy::WrongHash);
    let r = p.respond(&f.query(n, "target", Some(4)), &f.chain, &f.contract).response.unwrap();
    assert!(r.answers(n, &hash(b"target"), Some(4)));
    assert_ne!(r.claim.block_hash, f.chain.finalized_block_hash(n).unwrap());
    let Verdict::Dispute(ev) = watcher_check(&r, &f.chain, &f.contract) else { panic!("expected dispute") };
    let slashed = f.contract.slash(&ev, keygen(50).public_key, &f.chain, f.chain.tip_height() + 1).unwrap();
    assert_eq!(slashed.slashed_amount, eth(32));
}

#[test]
fn unfinalized_hash_fails_the_proof_and_is_disputed() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["target"], &[]);
    f.empty_blocks(8);
    let mut p = ProviderNode::new(keygen(1), Strategy::UnfinalizedHash);
    let r = p.respond(&f.query(n, "target", None), &f.chain, &f.contract).response.unwrap();
    assert!(!f.chain.is_finalized(r.header.number));
    assert!(r.signature_valid());
    assert!(!r.proof_valid());
    assert!(matches!(watcher_check(&r, &f.chain, &f.contract), Verdict::Dispute(_)));
}

#[test]
fn exit_scam_lies_and_withdraws_once() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["target"], &[]);
    f.empty_blocks(8);
    let mut p = ProviderNode::new(keygen(1), Strategy::ExitScam);
    let reply = p.respond(&f.query(n, "target", None), &f.chain, &f.contract);
    assert!(reply.response.is_some());
    assert_eq!(reply.tx.as_ref().unwrap().call, Call::RequestWithdraw);
    f.block(&[], &[reply.tx.unwrap()]);
    let again = p.respond(&f.query(n, "target", None), &f.chain, &f.contract);
    assert!(again.response.is_none() && again.tx.is_none());
}

#[test]
fn unresponsive_never_answers() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["target"], &[]);
    f.empty_blocks(8);
    let mut p = ProviderNode::new(keygen(1), Strategy::Unresponsive);
    let reply = p.respond(&f.query(n, "target", None), &f.chain, &f.contract);
    assert!(reply.response.is_none() && reply.tx.is_none());
}

#[test]
fn watcher_defers_claims_about_unfinal_or_future_blocks() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["target"], &[]);
    let mut p = ProviderNode::new(keygen(1), Strategy::WrongHash);
    for target in [n, n + 100] {
        let r = p.respond(&f.query(target, "target", None), &f.chain, &f.contract).response.unwrap();
        assert_eq!(watcher_check(&r, &f.chain, &f.contract), Verdict::Pending);
    }
}

#[test]
fn watcher_alerts_after_slash_finalizes() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["target"], &[]);
    f.empty_blocks(8);
    let mut p = ProviderNode::new(keygen(1), Strategy::WrongHash);
    let r = p.respond(&f.query(n, "target", None), &f.chain, &f.contract).response.unwrap();
    let mut w: Watcher<u8> = Watcher::new(keygen(60));
    let acts = w.on_forward(r.clone(), 7, &f.chain, &f.contract);
    let [WatcherAction::Submit(tx)] = acts.as_slice() else { panic!("{acts:?}") };
    let slash_block = f.block(&[], std::slice::from_ref(tx));
    // the same forward twice is audited once
    assert!(w.on_forward(r, 7, &f.chain, &f.contract).is_empty());

    let mut alerts = Vec::new();
    let mut ticks = 0;
    while alerts.is_empty() {
        alerts = w.on_tick(&f.chain, &f.contract);
        f.empty_blocks(1);
        ticks += 1;
    }
    assert_eq!(ticks, f.chain.t_fin() + 1);
    let [WatcherAction::Alert { to: 7, alert }] = alerts.as_slice() else { panic!() };
    assert_eq!(alert.kind, AlertKind::ProviderSlashed);
    assert_eq!(alert.slash_block, slash_block);
    assert_eq!(alert.verify().unwrap().provider_pk, keygen(1).public_key);
    assert_eq!(alert.header.hash(), f.chain.finalized_block_hash(slash_block).unwrap());
    assert!(w.is_idle());
}

#[test]
fn second_dispute_becomes_an_inactive_alert() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["t1", "t2"], &[]);
    f.empty_blocks(8);
    let mut p = ProviderNode::new(keygen(1), Strategy::WrongHash);
    let r1 = p.respond(&f.query(n, "t1", None), &f.chain, &f.contract).response.unwrap();
    let r2 = p.respond(&f.query(n, "t2", None), &f.chain, &f.contract).response.unwrap();
    let mut w1: Watcher<u8> = Watcher::new(keygen(60));
    let mut w2: Watcher<u8> = Watcher::new(keygen(61));
    let mut txs = Vec::new();
    for a in w1.on_forward(r1, 1, &f.chain, &f.contract).into_iter().chain(w2.on_forward(
        r2.clone(),
        2,
        &f.chain,
        &f.contract,
    )) {
        let WatcherAction::Submit(tx) = a else { panic!() };
        txs.push(tx);
    }
    f.block(&[], &txs);
    let mut second = None;
    for _ in 0..20 {
        for a in w2.on_tick(&f.chain, &f.contract) {
            second = Some(a);
        }
        w1.on_tick(&f.chain, &f.contract);
        f.empty_blocks(1);
    }
    let Some(WatcherAction::Alert { to: 2, alert }) = second else { panic!("{second:?}") };
    assert_eq!(alert.kind, AlertKind::ProviderInactive);
    assert!(alert.verify().is_some());

    // a later response from the slashed provider is flagged directly
    let Verdict::Dispute(_) = watcher_check(&r2, &f.chain, &f.contract) else { panic!() };
    let honest_claim = ResponseClaim {
        block_number: n,
        block_hash: f.chain.finalized_block_hash(n).unwrap(),
        state_hash: hash(b"t1"),
        insurance_id: None,
    };
    let block = f.chain.block(n).unwrap();
    let proof = f.chain.inclusion_proof(n, &hash(b"t1")).unwrap();
    let stale = SignedResponse::new(&keygen(1), honest_claim, block.header(), proof);
    assert!(matches!(watcher_check(&stale, &f.chain, &f.contract), Verdict::ProviderInactive(_)));
}

#[test]
fn forged_signatures_are_unattributable() {
    let mut f = Fixture::new(&[1]);
    let n = f.block(&["target"], &[]);
    f.empty_blocks(8);
    let mut p = ProviderNode::new(keygen(1), Strategy::WrongHash);
    let mut r = p.respond(&f.query(n, "target", None), &f.chain, &f.contract).response.unwrap();
    r.provider = keygen(2).public_key;
    assert_eq!(watcher_check(&r, &f.chain, &f.contract), Verdict::Unattributable);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn honest_responses_are_never_disputed(sizes in prop::collection::vec(1usize..6, 1..10), pick in any::<prop::sample::Index>()) {
        let mut f = Fixture::new(&[1]);
        let mut targets = Vec::new();
        for (b, k) in sizes.iter().enumerate() {
            let names: Vec<String> = (0..*k).map(|i| format!("{b}/{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let n = f.block(&refs, &[]);
            targets.extend(names.into_iter().map(|name| (n, name)));
        }
        f.empty_blocks(8);
        let (n, name) = pick.get(&targets).clone();
        let mut p = ProviderNode::new(keygen(1), Strategy::Honest);
        let r = p.respond(&f.query(n, &name, None), &f.chain, &f.contract).response.unwrap();
        prop_assert_eq!(watcher_check(&r, &f.chain, &f.contract), Verdict::Ok);
    }
}
