//! Cost tables and plot data, combining the pricing engine with simulated
//! signature counts and latencies.

use std::fmt;
use std::io::{self, Write};

use serde::{Serialize, Serializer};

use crate::actors::Strategy;
use crate::harness::{run_scenario, CheckSpec, ClientSpec, ProviderSpec, ScenarioConfig, ScenarioError};
use crate::light_client::{ClientConfig, Protocol};
use crate::pricing::{round_half_up, total_cost_usd, Eth, PricingError, PricingParams, Ratio};
use num_traits::ToPrimitive;

/// A USD amount in whole cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Usd(pub i64);

impl Usd {
    /// Rounds half up to the cent.
    pub fn from_ratio(r: &Ratio) -> Self {
        Usd(round_half_up(r, 2).to_i64().expect("amount fits in i64 cents"))
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl std::ops::Add for Usd {
    type Output = Usd;
    fn add(self, o: Usd) -> Usd {
        Usd(self.0 + o.0)
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{:02}", self.0.abs() / 100, self.0.abs() % 100)
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One row of the protocol cost comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub covered_value: Eth,
    pub provider_count: usize,
    /// Premium charged by the simulated contract.
    pub premium_wei: Eth,
    pub premium_usd: Usd,
    pub gas_usd: Usd,
    pub total_usd: Usd,
    /// Signatures verified by the economic client.
    pub signature_count: usize,
    /// Economic acceptance latency.
    pub latency_ticks: u64,
    /// Insured acceptance latency, counted from the last response.
    pub ins_latency_ticks: u64,
}

pub const TABLE3_VALUES: [u64; 4] = [10, 32, 160, 320];
pub const TABLE3_CHALLENGE_PERIOD: u64 = 1500;

/// Ten honest 32 ETH providers on a chain with 64-block finality; one
/// client checks a target of `value` ETH with the given protocol.
pub fn table3_scenario(value: u64, protocol: Protocol, pricing: &PricingParams) -> ScenarioConfig {
    let delta = 2;
    let t_fin = 64;
    let cp = TABLE3_CHALLENGE_PERIOD;
    let config = ClientConfig {
        protocol,
        challenge_period: cp,
        receipt_challenge_period: t_fin + 2 * delta + 1,
        coverage_duration: Some(cp),
        ..Default::default()
    };
    let mut client = ClientSpec::new(config, vec![CheckSpec { at: 5, value: Eth::whole(value) }]);
    client.balance = Eth::whole(10);
    ScenarioConfig {
        name: format!("table3-{value}-{protocol:?}").to_lowercase(),
        seed: 1,
        slots_per_epoch: 32,
        finality_depth_epochs: 2,
        update_epoch_blocks: cp + t_fin + 2 * delta + 30,
        max_challenge_period: cp,
        delta_ticks: delta,
        total_ticks: 5 + t_fin + 1 + cp + 4 * delta + 10,
        providers: (0..10).map(|_| ProviderSpec::genesis(Eth::whole(32), Strategy::Honest)).collect(),
        clients: vec![client],
        pricing: pricing.clone(),
        ..Default::default()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error("{0}")]
    Incomplete(String),
}

/// Builds one row: prices the policy and simulates both protocols.
pub fn table3_row(value: u64, pricing: &PricingParams) -> Result<ReportRow, ReportError> {
    let cost = total_cost_usd(pricing, TABLE3_CHALLENGE_PERIOD, Eth::whole(value).wei())?;
    let eco = run_scenario(&table3_scenario(value, Protocol::Eco, pricing))?.metrics;
    let ins = run_scenario(&table3_scenario(value, Protocol::Ins, pricing))?.metrics;
    let missing = |what: &str| ReportError::Incomplete(format!("{value} ETH: no {what} acceptance"));
    let eco_acc = eco.clients[0].target_acceptances().next().ok_or_else(|| missing("economic"))?.clone();
    let ins_acc = ins.clients[0].target_acceptances().next().ok_or_else(|| missing("insured"))?.clone();
    let premium_usd = Usd::from_ratio(&cost.premium_usd);
    let gas_usd = Usd::from_ratio(&cost.gas_usd);
    Ok(ReportRow {
        covered_value: Eth::whole(value),
        provider_count: eco_acc.signatures,
        premium_wei: ins.clients[0].premium_paid,
        premium_usd,
        gas_usd,
        total_usd: premium_usd + gas_usd,
        signature_count: eco_acc.signatures,
        latency_ticks: eco_acc.latency,
        ins_latency_ticks: ins_acc.latency,
    })
}

pub fn table3(pricing: &PricingParams) -> Result<Vec<ReportRow>, ReportError> {
    TABLE3_VALUES.iter().map(|&v| table3_row(v, pricing)).collect()
}

pub fn write_table3_csv<W: Write>(rows: &[ReportRow], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "covered_value_eth,provider_count,premium_wei,premium_usd,gas_usd,total_usd,signature_count,latency_ticks,ins_latency_ticks"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.covered_value,
            r.provider_count,
            r.premium_wei.wei(),
            r.premium_usd,
            r.gas_usd,
            r.total_usd,
            r.signature_count,
            r.latency_ticks,
            r.ins_latency_ticks
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Point {
    pub value: Eth,
    pub duration: u64,
    pub premium_usd: Usd,
    pub gas_usd: Usd,
    pub total_usd: Usd,
}

pub const FIG1_DURATIONS: [u64; 4] = [300, 1500, 7200, 50_400];

/// Default value grid: 1 to 320 ETH.
pub fn fig1_values() -> Vec<Eth> {
    [1, 5, 10, 20, 32, 50, 80, 100, 160, 200, 240, 280, 320].into_iter().map(Eth::whole).collect()
}

pub fn fig1(pricing: &PricingParams, durations: &[u64], values: &[Eth]) -> Result<Vec<Fig1Point>, PricingError> {
    let mut out = Vec::new();
    for &duration in durations {
        for &value in values {
            let cost = total_cost_usd(pricing, duration, value.wei())?;
            let premium_usd = Usd::from_ratio(&cost.premium_usd);
            let gas_usd = Usd::from_ratio(&cost.gas_usd);
            out.push(Fig1Point { value, duration, premium_usd, gas_usd, total_usd: premium_usd + gas_usd });
        }
    }
    Ok(out)
}

pub fn write_fig1_csv<W: Write>(points: &[Fig1Point], mut w: W) -> io::Result<()> {
    writeln!(w, "value_eth,duration_blocks,premium_usd,gas_usd,total_usd")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.value, p.duration, p.premium_usd, p.gas_usd, p.total_usd)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::ratio;

    #[test]
    fn usd_rounds_half_up_and_prints_cents() {
        assert_eq!(Usd::from_ratio(&ratio(7465, 1000)), Usd(747));
        assert_eq!(Usd::from_ratio(&ratio(7464, 1000)), Usd(746));
        assert_eq!(Usd(5).to_string(), "0.05");
        assert_eq!(Usd(-1234).to_string(), "-12.34");
    }

    #[test]
    fn fig1_grid_shape() {
        let pts = fig1(&PricingParams::default(), &[100, 200], &[Eth::whole(1), Eth::whole(2), Eth::whole(3)]).unwrap();
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|p| p.total_usd == p.premium_usd + p.gas_usd));
        // cost grows with value and with duration
        assert!(pts[0].total_usd <= pts[2].total_usd);
        assert!(pts[0].premium_usd <= pts[3].premium_usd);
    }

    #[test]
    fn table3_scenarios_validate() {
        for v in TABLE3_VALUES {
            for p in [Protocol::Eco, Protocol::Ins] {
                table3_scenario(v, p, &PricingParams::default()).validate().unwrap();
            }
        }
    }
}
