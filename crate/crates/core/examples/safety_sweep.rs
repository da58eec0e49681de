//! Runs the adversarial safety sweep and a negative control without a
//! challenge period.
//!
//! `cargo run --example safety_sweep -- [seeds]`

use stakelight::actors::Strategy;
use stakelight::harness::sweep::{sweep, SweepSpace};
use stakelight::light_client::Protocol;

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let seeds: Vec<u64> = (1..=n).collect();
    let report = sweep(&SweepSpace::full(&seeds));
    println!(
        "{:<16} {:>5} {:>5} {:>4} {:>8} {:>6} {:>6} {:>10}",
        "strategy", "delta", "T_cp", "mode", "accepted", "false", "slash", "violations"
    );
    for r in &report.runs {
        println!(
            "{:<16} {:>5} {:>5} {:>4} {:>8} {:>6} {:>6} {:>10}",
            format!("{:?}", r.strategy),
            r.delta,
            r.challenge_period,
            format!("{:?}", r.protocol).to_lowercase(),
            r.target_acceptances,
            r.false_acceptances,
            r.slashes,
            r.violations.len()
        );
    }
    println!("{} runs, {} violations", report.runs.len(), report.violations());

    let control = SweepSpace {
        strategies: vec![Strategy::WrongHash],
        challenge_periods: Some(vec![0]),
        protocols: vec![Protocol::Eco],
        ..SweepSpace::full(&seeds)
    };
    let report = sweep(&control);
    println!("negative control (T_cp = 0): {} violations", report.violations());
    for v in report.runs.iter().flat_map(|r| &r.violations).take(3) {
        println!("  {:?} at tick {}: {}", v.kind, v.tick, v.detail);
    }
}
