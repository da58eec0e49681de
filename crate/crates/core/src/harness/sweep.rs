//! Scenario generators: the adversarial safety sweep, registry churn for
//! roster tracking, and exit-scam timing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{run_scenario, CheckSpec, ClientSpec, Metrics, ProviderSpec, ScenarioConfig, Violation};
use crate::actors::Strategy;
use crate::light_client::{ClientConfig, Protocol};
use crate::pricing::Eth;

const SLOTS: u64 = 4;
const DEPTH: u64 = 2;
const SWEEP_TICKS: u64 = 400;
const CHECK_TICKS: [u64; 4] = [5, 90, 170, 250];

pub const SWEEP_DELTAS: [u64; 3] = [1, 2, 4];

/// Smallest challenge period that lets an alert about a response forwarded
/// at `t` arrive before `t + T_cp`.
pub fn min_safe_challenge_period(t_fin: u64, delta: u64) -> u64 {
    t_fin + 2 * delta + 1
}

/// Challenge periods swept for a given delay bound: the minimum safe one
/// and a generous one.
pub fn compliant_challenge_periods(delta: u64) -> Vec<u64> {
    let low = min_safe_challenge_period(SLOTS * DEPTH, delta);
    let mut out = vec![low];
    if low < 64 {
        out.push(64);
    }
    out
}

fn update_epoch_for(max_cp: u64, t_fin: u64, delta: u64) -> u64 {
    (max_cp + t_fin + 2 * delta).max(80)
}

/// One adversary at 40 ETH, which stake-greedy selection always picks
/// first, plus three honest providers at 32 ETH. One client verifies four
/// 10 ETH targets.
pub fn sweep_scenario(
    strategy: Strategy,
    delta: u64,
    challenge_period: u64,
    protocol: Protocol,
    seed: u64,
) -> ScenarioConfig {
    let t_fin = SLOTS * DEPTH;
    let safe = min_safe_challenge_period(t_fin, delta);
    let max_cp = challenge_period.max(safe);
    let mut providers = vec![ProviderSpec::genesis(Eth::whole(40), strategy)];
    providers.extend((0..3).map(|_| ProviderSpec::genesis(Eth::whole(32), Strategy::Honest)));
    let config = ClientConfig {
        protocol,
        challenge_period,
        receipt_challenge_period: safe,
        delta_comm: 6 * delta + 2,
        delta_comp: 1,
        ..Default::default()
    };
    let checks = CHECK_TICKS.iter().map(|&at| CheckSpec { at, value: Eth::whole(10) }).collect();
    ScenarioConfig {
        name: format!("sweep-{strategy:?}-d{delta}-cp{challenge_period}-{protocol:?}-s{seed}").to_lowercase(),
        seed,
        slots_per_epoch: SLOTS,
        finality_depth_epochs: DEPTH,
        update_epoch_blocks: update_epoch_for(max_cp, t_fin, delta),
        max_challenge_period: max_cp,
        delta_ticks: delta,
        total_ticks: SWEEP_TICKS,
        providers,
        clients: vec![ClientSpec::new(config, checks)],
        ..Default::default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub strategy: Strategy,
    pub delta: u64,
    pub challenge_period: u64,
    pub protocol: Protocol,
    pub seed: u64,
    pub target_acceptances: usize,
    pub false_acceptances: usize,
    pub slashes: usize,
    /// Sum of the values of false acceptances.
    pub false_value: Eth,
    pub compensation: Eth,
    pub premium_paid: Eth,
    pub gas_paid: Eth,
    pub initial_balance: Eth,
    pub final_balance: Eth,
    pub violations: Vec<Violation>,
}

impl SweepRun {
    fn from_metrics(cfg: &ScenarioConfig, strategy: Strategy, protocol: Protocol, m: &Metrics) -> Self {
        let c = &m.clients[0];
        SweepRun {
            strategy,
            delta: cfg.delta_ticks,
            challenge_period: cfg.clients[0].config.challenge_period,
            protocol,
            seed: cfg.seed,
            target_acceptances: c.target_acceptances().count(),
            false_acceptances: c.false_acceptances().count(),
            slashes: m.slashed.len(),
            false_value: Eth(c.false_acceptances().map(|a| a.value.wei()).sum()),
            compensation: c.compensation,
            premium_paid: c.premium_paid,
            gas_paid: c.gas_paid,
            initial_balance: c.initial_balance,
            final_balance: c.final_balance,
            violations: m.violations.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
}

impl SweepReport {
    pub fn violations(&self) -> usize {
        self.runs.iter().map(|r| r.violations.len()).sum()
    }
}

pub fn run_sweep_point(
    strategy: Strategy,
    delta: u64,
    challenge_period: u64,
    protocol: Protocol,
    seed: u64,
) -> SweepRun {
    let cfg = sweep_scenario(strategy, delta, challenge_period, protocol, seed);
    let out = run_scenario(&cfg).expect("generated scenarios are valid");
    SweepRun::from_metrics(&cfg, strategy, protocol, &out.metrics)
}

/// The cells of a sweep. `challenge_periods: None` means the compliant
/// periods of each delay bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpace {
    pub strategies: Vec<Strategy>,
    pub deltas: Vec<u64>,
    pub challenge_periods: Option<Vec<u64>>,
    pub protocols: Vec<Protocol>,
    pub seeds: Vec<u64>,
}

impl SweepSpace {
    /// Every strategy against both protocols, every delay bound in
    /// [`SWEEP_DELTAS`] and each compliant challenge period.
    pub fn full(seeds: &[u64]) -> Self {
        SweepSpace {
            strategies: Strategy::ALL.to_vec(),
            deltas: SWEEP_DELTAS.to_vec(),
            challenge_periods: None,
            protocols: vec![Protocol::Eco, Protocol::Ins],
            seeds: seeds.to_vec(),
        }
    }

    pub fn cells(&self) -> Vec<(Strategy, u64, u64, Protocol, u64)> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &delta in &self.deltas {
                let cps = self.challenge_periods.clone().unwrap_or_else(|| compliant_challenge_periods(delta));
                for cp in cps {
                    for &protocol in &self.protocols {
                        for &seed in &self.seeds {
                            out.push((strategy, delta, cp, protocol, seed));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs every cell, spread over the available cores. Cells share nothing,
/// and the report keeps cell order.
pub fn sweep(space: &SweepSpace) -> SweepReport {
    let cells = space.cells();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len().max(1));
    let chunk = cells.len().div_ceil(workers).max(1);
    let runs = std::thread::scope(|s| {
        let handles: Vec<_> = cells
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter().map(|&(st, d, cp, p, seed)| run_sweep_point(st, d, cp, p, seed)).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    SweepReport { runs }
}

/// Random registry churn watched by one roster-tracking client. Four genesis
/// providers stay put; `dynamic` more join, leave and sometimes rejoin.
pub fn churn_scenario(seed: u64, epochs: u64, dynamic: usize) -> ScenarioConfig {
    let delta = 2;
    let t_fin = SLOTS * DEPTH;
    let b_u = 64;
    let total_ticks = epochs * b_u;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4_u64.rotate_left(56));
    let mut providers: Vec<ProviderSpec> =
        (0..4).map(|_| ProviderSpec::genesis(Eth::whole(32), Strategy::Honest)).collect();
    for _ in 0..dynamic {
        let stake = Eth::whole(rng.gen_range(1..=40));
        let join = rng.gen_range(1..total_ticks * 3 / 4);
        let mut spec = ProviderSpec { join_tick: Some(join), ..ProviderSpec::genesis(stake, Strategy::Honest) };
        if rng.gen_bool(0.6) {
            let withdraw = join + rng.gen_range(1..=2 * b_u);
            if withdraw < total_ticks {
                spec.withdraw_tick = Some(withdraw);
                // stake comes back at the end of the epoch after the request
                let free = (withdraw / b_u + 2) * b_u;
                let rejoin = free + rng.gen_range(1..b_u);
                if rng.gen_bool(0.5) && rejoin < total_ticks {
                    spec.rejoin_tick = Some(rejoin);
                }
            }
        }
        providers.push(spec);
    }
    let config = ClientConfig {
        track_roster: true,
        challenge_period: min_safe_challenge_period(t_fin, delta),
        roster_challenge_period: min_safe_challenge_period(t_fin, delta),
        ..Default::default()
    };
    ScenarioConfig {
        name: format!("churn-s{seed}"),
        seed,
        slots_per_epoch: SLOTS,
        finality_depth_epochs: DEPTH,
        update_epoch_blocks: b_u,
        max_challenge_period: 32,
        delta_ticks: delta,
        total_ticks,
        providers,
        clients: vec![ClientSpec::new(config, Vec::new())],
        ..Default::default()
    }
}

/// An exit-scam provider that lies at a random point of an update epoch
/// (often its last block) and asks to withdraw in the same breath.
pub fn exit_scam_scenario(seed: u64, delta: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = sweep_scenario(Strategy::ExitScam, delta, 64, Protocol::Eco, seed);
    let b_u = cfg.update_epoch_blocks;
    let t_fin = cfg.t_fin();
    // the lie is signed when the query arrives, about `T_fin + 1 + delta`
    // after the target block
    let epoch = rng.gen_range(1..3u64);
    let lie = if rng.gen_bool(0.5) { (epoch + 1) * b_u - 1 } else { epoch * b_u + rng.gen_range(0..b_u) };
    let at = lie.saturating_sub(t_fin + 1 + delta).max(1);
    cfg.clients[0].checks = vec![CheckSpec { at, value: Eth::whole(10) }];
    cfg.total_ticks = (epoch + 4) * b_u;
    cfg.name = format!("exit-scam-d{delta}-s{seed}");
    cfg
}
