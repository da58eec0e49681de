//! Command-line front end: `run`, `price`, `table3` and `fig1`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::harness::{run_scenario, ScenarioConfig};
use crate::pricing::{
    eth_ratio_to_wei, format_decimal, parse_decimal, total_cost_usd, wei_to_eth, Eth, PricingParams, Ratio,
    BLOCKS_PER_YEAR, WEI_PER_GWEI,
};
use crate::report::{self, Usd};

#[derive(Debug, Parser)]
#[command(name = "stakelight", version, about = "Stake-backed light client simulator and insurance pricer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file and write metrics.json and events.jsonl.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Quote the premium, gas and total cost of one policy.
    Price(PriceArgs),
    /// Cost, signature and latency comparison for 10, 32, 160 and 320 ETH.
    Table3 {
        /// CSV output path; the table is printed either way.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        market: MarketArgs,
    },
    /// Total cost over a grid of values and coverage durations, as CSV.
    Fig1 {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Coverage durations in blocks.
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<u64>>,
        /// Covered values in ETH.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
        #[command(flatten)]
        market: MarketArgs,
    },
}

#[derive(Debug, clap::Args)]
pub struct PriceArgs {
    /// Covered value in ETH.
    #[arg(long)]
    pub value: String,
    /// Coverage duration in blocks.
    #[arg(long)]
    pub duration: u64,
    #[command(flatten)]
    pub market: MarketArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct MarketArgs {
    #[arg(long, default_value = "0.06")]
    pub apy: String,
    #[arg(long, default_value = "0.75")]
    pub utilization: String,
    #[arg(long, default_value = "3200")]
    pub eth_usd: String,
    #[arg(long, default_value = "9.377")]
    pub gas_gwei: String,
    #[arg(long, default_value_t = 200_000)]
    pub gas_units: u64,
    #[arg(long, default_value_t = BLOCKS_PER_YEAR)]
    pub blocks_per_year: u64,
}

impl MarketArgs {
    pub fn params(&self) -> Result<PricingParams, String> {
        let dec = |name: &str, s: &str| parse_decimal(s).map_err(|e| format!("--{name}: {e}"));
        let gwei = dec("gas-gwei", &self.gas_gwei)?;
        let gas_price = gwei * Ratio::from_integer(WEI_PER_GWEI.into());
        if !gas_price.is_integer() || gas_price < Ratio::from_integer(0.into()) {
            return Err("--gas-gwei must be a whole number of wei".into());
        }
        let gas_price_wei =
            num_traits::ToPrimitive::to_u64(&gas_price.to_integer()).ok_or("--gas-gwei is too large")?;
        let params = PricingParams {
            apy: dec("apy", &self.apy)?,
            blocks_per_year: self.blocks_per_year,
            utilization: dec("utilization", &self.utilization)?,
            eth_price_usd: dec("eth-usd", &self.eth_usd)?,
            gas_price_wei,
            gas_units: self.gas_units,
        };
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }
}

fn parse_eth(s: &str) -> Result<Eth, String> {
    let r = parse_decimal(s).map_err(|e| format!("bad ETH amount {s:?}: {e}"))?;
    eth_ratio_to_wei(&r).map(Eth).map_err(|e| e.to_string())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

/// Runs one command, writing human-readable output to `out`.
pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32, String> {
    match cmd {
        Command::Run { scenario, out: dir } => cmd_run(&scenario, &dir, out),
        Command::Price(args) => {
            let params = args.market.params()?;
            let value = parse_eth(&args.value)?;
            let cost = total_cost_usd(&params, args.duration, value.wei()).map_err(|e| e.to_string())?;
            let premium_usd = Usd::from_ratio(&cost.premium_usd);
            let gas_usd = Usd::from_ratio(&cost.gas_usd);
            let w = |e: std::io::Error| e.to_string();
            writeln!(out, "premium: {} ETH (${premium_usd})", format_decimal(&wei_to_eth(cost.premium_wei), 6))
                .map_err(w)?;
            writeln!(out, "gas:     ${gas_usd}").map_err(w)?;
            writeln!(out, "total:   ${}", premium_usd + gas_usd).map_err(w)?;
            Ok(0)
        }
        Command::Table3 { out: path, market } => {
            let params = market.params()?;
            let rows = report::table3(&params).map_err(|e| e.to_string())?;
            let w = |e: std::io::Error| e.to_string();
            writeln!(
                out,
                "{:>9} {:>9} {:>10} {:>8} {:>9} {:>5} {:>8} {:>8}",
                "value", "providers", "premium", "gas", "total", "sigs", "eco lat", "ins lat"
            )
            .map_err(w)?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>5} ETH {:>9} {:>10} {:>8} {:>9} {:>5} {:>8} {:>8}",
                    r.covered_value.to_string(),
                    r.provider_count,
                    format!("${}", r.premium_usd),
                    format!("${}", r.gas_usd),
                    format!("${}", r.total_usd),
                    r.signature_count,
                    r.latency_ticks,
                    r.ins_latency_ticks
                )
                .map_err(w)?;
            }
            if let Some(p) = path {
                let mut buf = Vec::new();
                report::write_table3_csv(&rows, &mut buf).map_err(w)?;
                write_file(&p, &buf)?;
            }
            Ok(0)
        }
        Command::Fig1 { out: path, durations, values, market } => {
            let params = market.params()?;
            let durations = durations.unwrap_or_else(|| report::FIG1_DURATIONS.to_vec());
            let values = match values {
                Some(v) => v.iter().map(|s| parse_eth(s)).collect::<Result<Vec<_>, _>>()?,
                None => report::fig1_values(),
            };
            let points = report::fig1(&params, &durations, &values).map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            report::write_fig1_csv(&points, &mut buf).map_err(|e| e.to_string())?;
            match path {
                Some(p) => {
                    write_file(&p, &buf)?;
                    writeln!(out, "wrote {} points to {}", points.len(), p.display()).map_err(|e| e.to_string())?;
                }
                None => out.write_all(&buf).map_err(|e| e.to_string())?,
            }
            Ok(0)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_run(scenario: &Path, dir: &Path, out: &mut dyn Write) -> Result<i32, String> {
    let cfg = match ScenarioConfig::load(scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", scenario.display());
            return Ok(2);
        }
    };
    let result = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let m = &result.metrics;
    let metrics = serde_json::to_vec_pretty(m).map_err(|e| e.to_string())?;
    write_file(&dir.join("metrics.json"), &metrics)?;
    write_file(&dir.join("events.jsonl"), &result.log.to_jsonl())?;

    let w = |e: std::io::Error| e.to_string();
    writeln!(out, "scenario {} (seed {}), {} ticks", m.scenario, m.seed, m.ticks).map_err(w)?;
    for (k, c) in m.clients.iter().enumerate() {
        let accepted = c.target_acceptances().count();
        writeln!(
            out,
            "client {k}: {accepted} accepted, {} restarts, {} heavy checks, premiums {} ETH, compensation {} ETH",
            c.restarts, c.heavy_checks, c.premium_paid, c.compensation
        )
        .map_err(w)?;
    }
    writeln!(out, "slashes: {}, exits: {}, burned: {} ETH", m.slashed.len(), m.exits.len(), m.burned).map_err(w)?;
    writeln!(out, "wrote {}", dir.display()).map_err(w)?;
    if m.violations.is_empty() {
        return Ok(0);
    }
    for v in &m.violations {
        eprintln!("invariant violated: {:?} at tick {}: {}", v.kind, v.tick, v.detail);
    }
    Ok(1)
}
