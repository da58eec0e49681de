//! Simulates the economic and the insured protocol for 10, 32, 160 and
//! 320 ETH and prints costs, signature counts and latencies.

use stakelight::pricing::PricingParams;
use stakelight::report::{table3, write_table3_csv};

fn main() {
    let rows = table3(&PricingParams::default()).expect("table scenarios run");
    for r in &rows {
        println!(
            "{:>4} ETH: ${} premium + ${} gas = ${}, {} signature(s), economic latency {} ticks, insured latency {}",
            r.covered_value.to_string(),
            r.premium_usd,
            r.gas_usd,
            r.total_usd,
            r.signature_count,
            r.latency_ticks,
            r.ins_latency_ticks
        );
    }
    println!();
    write_table3_csv(&rows, std::io::stdout().lock()).unwrap();
}
