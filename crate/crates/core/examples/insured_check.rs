//! An insured check served by a lying provider: the client buys a policy,
//! confirms the purchase receipt, accepts the false answer at once, and is
//! paid the covered value when the watcher's slash lands.

use stakelight::harness::{run_scenario, ScenarioConfig};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/wrong_hash_ins.toml");
    let cfg = ScenarioConfig::load(path.as_ref()).unwrap();
    let out = run_scenario(&cfg).unwrap();
    for r in out.log.records().iter().filter(|r| r.actor == "client0" && !r.event.starts_with("recv")) {
        println!("tick {:>3} {:<22} {}", r.tick, r.event, &r.digest.to_hex()[..12]);
    }
    let c = &out.metrics.clients[0];
    let a = c.target_acceptances().next().unwrap();
    println!("accepted at tick {} (latency {}), correct: {}", a.accepted_at, a.latency, a.correct);
    println!("premium {} ETH, gas {} ETH, compensation {} ETH", c.premium_paid, c.gas_paid, c.compensation);
    println!("balance {} -> {} ETH", c.initial_balance, c.final_balance);
    println!("violations: {}", out.metrics.violations.len());
}
