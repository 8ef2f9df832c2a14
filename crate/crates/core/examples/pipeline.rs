//! Whole scenario through both tiers: matched pairs on the vehicle tier,
//! the rest on the RSU tier. Runs the full-size defaults, where every task
//! goes to the RSUs, and the lighter vehicle-tier profile.

use v2x_offload::harness::{solve_scenario, SimConfig};
use v2x_offload::scenario::{generate, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SimConfig::defaults();
    for (profile, base) in [("default", config.scenario.clone()), ("vehicle", config.vehicle_profile())] {
        println!("{profile} profile");
        for seed in 1..=4 {
            let scenario = generate(&ScenarioConfig { seed, ..base.clone() })?;
            let plan = solve_scenario(&scenario, &config)?;
            let rsu = plan.rsu_tier.as_ref().map_or(0, |s| s.integer.allocations.len());
            println!(
                "  seed {seed}: {}/{} tasks planned ({} by helpers, {rsu} by RSUs), {:.4e} J",
                plan.planned,
                plan.tasks,
                plan.vehicle_tier.iter().filter(|p| p.plan.is_some()).count(),
                plan.total_energy
            );
        }
    }
    Ok(())
}
