//! Quotes insurance premiums straight from the pricing engine.
//!
//! `cargo run --example price_quote -- [value_eth] [duration_blocks]`

use stakelight::pricing::{
    eth_ratio_to_wei, format_decimal, format_usd, min_coverage_duration, parse_decimal, total_cost_usd, unit_cost,
    wei_to_eth, CoverageInputs, PricingParams,
};

fn main() {
    let mut args = std::env::args().skip(1);
    let value = args.next().unwrap_or_else(|| "100".into());
    let duration: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1500);
    let params = PricingParams::default();
    let v_cov = eth_ratio_to_wei(&parse_decimal(&value).expect("decimal ETH amount")).unwrap();

    let c = unit_cost(&params).unwrap();
    println!("unit cost per wei per block: {}", c);
    let cost = total_cost_usd(&params, duration, v_cov).unwrap();
    println!("cover {value} ETH for {duration} blocks");
    println!("  premium {} ETH = {}", format_decimal(&wei_to_eth(cost.premium_wei), 6), format_usd(&cost.premium_usd));
    println!("  gas     {} ETH = {}", format_decimal(&wei_to_eth(cost.gas_wei), 6), format_usd(&cost.gas_usd));
    println!("  total   {}", format_usd(&cost.total_usd));

    // the shortest policy that still covers one insured check
    let window = min_coverage_duration(&CoverageInputs {
        t_fin: 64,
        challenge_periods: vec![69, 1500],
        delta_comm: 14,
        delta_comp: 1,
    });
    let cost = total_cost_usd(&params, window, v_cov).unwrap();
    println!(
        "minimum window with a 1500-block listening period: {window} blocks, total {}",
        format_usd(&cost.total_usd)
    );
}
