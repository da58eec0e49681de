//! A client follows registry receipts to predict each epoch's provider set
//! and compares its count of heavy checks against one that bootstraps.

use stakelight::harness::run_scenario;
use stakelight::harness::sweep::churn_scenario;

fn main() {
    let tracking = churn_scenario(9, 16, 12);
    let mut naive = tracking.clone();
    naive.clients[0].config.track_roster = false;
    naive.clients[0].checks = (1..16)
        .map(|e| stakelight::harness::CheckSpec { at: e * 64 + 1, value: stakelight::pricing::Eth::whole(1) })
        .collect();

    let m = run_scenario(&tracking).unwrap().metrics;
    let c = &m.clients[0];
    println!(
        "tracking: {} epochs compared, {} mismatches, {} heavy checks, {} predictions, {} bytes kept",
        c.roster_comparisons, c.roster_mismatches, c.heavy_checks, c.roster_predictions, c.storage_bytes
    );
    let m = run_scenario(&naive).unwrap().metrics;
    println!("bootstrapping every epoch: {} heavy checks", m.clients[0].heavy_checks);
}
