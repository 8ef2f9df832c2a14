//! Continuous against whole-subchannel bandwidth allocation for one RSU-tier
//! cohort at several subchannel widths.

use v2x_offload::harness::SimConfig;
use v2x_offload::model::Role;
use v2x_offload::scenario::{generate, ScenarioConfig};
use v2x_offload::tier2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SimConfig::defaults();
    let scenario = generate(&ScenarioConfig { seed: 2, ..config.scenario.clone() })?;
    let base = scenario.channel(&config.channel);
    let nvs: Vec<_> = scenario.with_role(Role::Nv).into_iter().take(3).collect();

    println!("{:>8} {:>16} {:>16} {:>10}", "B0 MHz", "continuous J", "integer J", "gap");
    for b0_mhz in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let params = base.clone().with_bandwidth(base.b_total, b0_mhz * 1e6)?;
        let instance = scenario.tier2_instance(&nvs, &params);
        match tier2::solve_both(&instance, &config.solver) {
            Ok(s) => {
                let (c, i) = (s.continuous.objective, s.integer.objective);
                println!("{b0_mhz:>8} {c:>16.6e} {i:>16.6e} {:>10.3e}", (i - c) / c);
            }
            Err(e) => println!("{b0_mhz:>8} {e}"),
        }
    }
    Ok(())
}
