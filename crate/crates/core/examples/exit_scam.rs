//! Exit-scam attempts at random points of the update epoch. The slash
//! always lands before the withdrawal could release the stake.

use stakelight::harness::run_scenario;
use stakelight::harness::sweep::exit_scam_scenario;

fn main() {
    for seed in 0..8 {
        let cfg = exit_scam_scenario(seed, 2);
        let b_u = cfg.update_epoch_blocks;
        let out = run_scenario(&cfg).unwrap();
        let m = &out.metrics;
        let withdraw = out
            .log
            .records()
            .iter()
            .find(|r| r.actor == "provider0" && r.event == "exec_withdraw_requested")
            .map(|r| r.tick)
            .expect("the adversary asks to withdraw");
        let slash = m.slashed.iter().find(|s| s.0 == 0).map(|s| s.1).expect("the adversary is slashed");
        println!(
            "seed {seed}: lie and withdrawal at block {withdraw} (epoch {}, release after block {}), slashed at {slash}, exited: {}",
            withdraw / b_u,
            (withdraw / b_u + 2) * b_u - 1,
            m.exits.iter().any(|e| e.0 == 0),
        );
    }
}
