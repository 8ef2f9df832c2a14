//! Draws a scenario, writes it as JSON and reads it back.
//!
//!     cargo run --example scenario_snapshot -- 7 /tmp/scenario.json

use v2x_offload::harness::SimConfig;
use v2x_offload::model::Role;
use v2x_offload::scenario::{generate, Scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let path = args.next().unwrap_or_else(|| "scenario.json".into());

    let config = SimConfig::defaults();
    let scenario = generate(&ScenarioConfig { seed, ..config.scenario.clone() })?;
    std::fs::write(&path, scenario.to_json()?)?;
    let back = Scenario::from_json(&std::fs::read_to_string(&path)?)?;
    assert_eq!(back, scenario);

    println!(
        "seed {seed}: {} vehicles ({} NVs, {} idle), {} RSUs, {} tasks -> {path}",
        scenario.vehicles.len(),
        scenario.with_role(Role::Nv).len(),
        scenario.with_role(Role::Iv).len(),
        scenario.rsus.len(),
        scenario.tasks.len()
    );
    Ok(())
}
