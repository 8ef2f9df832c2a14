//! Builds the NV/idle-vehicle candidate graph of a generated scenario and
//! prints the maximum matching. Tasks follow the vehicle-tier profile; the
//! full-size defaults are beyond what an idle vehicle can finish in time.
//!
//!     cargo run --example matching -- 3

use v2x_offload::harness::SimConfig;
use v2x_offload::matching::{build_candidates, max_match};
use v2x_offload::model::Role;
use v2x_offload::scenario::{generate, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let config = SimConfig::defaults();
    let scenario = generate(&ScenarioConfig { seed, ..config.vehicle_profile() })?;
    let params = scenario.channel(&config.channel);

    let nvs = scenario.with_role(Role::Nv);
    let ivs = scenario.with_role(Role::Iv);
    let graph = build_candidates(&nvs, &scenario.tasks, &ivs, &params)?;
    let m = max_match(&graph);

    println!("{} NVs, {} idle vehicles, {} candidate edges", nvs.len(), ivs.len(), graph.edge_count());
    for (nv, hv) in &m.pairs {
        let (a, b) = (scenario.vehicle(*nv).unwrap(), scenario.vehicle(*hv).unwrap());
        println!("NV {nv:>3} -> helper {hv:>3}  ({:.1} m apart)", a.position.distance(&b.position));
    }
    println!("unmatched, left to the RSU tier: {:?}", m.unmatched_nvs);
    Ok(())
}
