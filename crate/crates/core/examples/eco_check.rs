//! One economic check against honest providers, tick by tick: the client
//! queries enough stake, forwards the answer to the watcher, and accepts
//! once the challenge period passes without an alert.

use stakelight::actors::Strategy;
use stakelight::harness::{CheckSpec, ClientSpec, ProviderSpec, ScenarioConfig, Simulation};
use stakelight::light_client::ClientConfig;
use stakelight::pricing::Eth;

fn main() {
    let cfg = ScenarioConfig {
        name: "eco-check".into(),
        seed: 1,
        total_ticks: 60,
        providers: [32, 20, 8].map(|s| ProviderSpec::genesis(Eth::whole(s), Strategy::Honest)).to_vec(),
        clients: vec![ClientSpec::new(
            ClientConfig { challenge_period: 20, ..Default::default() },
            vec![CheckSpec { at: 4, value: Eth::whole(45) }],
        )],
        ..Default::default()
    };
    let mut sim = Simulation::new(cfg).unwrap();
    let mut last = None;
    while sim.tick() < 60 {
        sim.step();
        let phase = sim.client(0).phase(1);
        if phase != last {
            println!("tick {:>3}: {:?}", sim.tick(), phase);
            last = phase;
        }
    }
    let out = sim.finish();
    let a = out.metrics.clients[0].target_acceptances().next().expect("accepted");
    println!(
        "accepted block {} at tick {} after {} ticks of silence, {} signatures, correct: {}",
        a.block_number, a.accepted_at, a.latency, a.signatures, a.correct
    );
}
