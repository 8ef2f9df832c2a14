//! Plans the unmatched NVs of a generated scenario on the RSU tier and
//! prints each NV's split, bandwidth and energy.
//!
//!     cargo run --release --example rsu_tier -- 4

use v2x_offload::harness::SimConfig;
use v2x_offload::matching::{build_candidates, max_match};
use v2x_offload::model::Role;
use v2x_offload::scenario::{generate, ScenarioConfig};
use v2x_offload::tier2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let config = SimConfig::defaults();
    let scenario = generate(&ScenarioConfig { seed, ..config.scenario.clone() })?;
    let params = scenario.channel(&config.channel);

    let nvs = scenario.with_role(Role::Nv);
    let ivs = scenario.with_role(Role::Iv);
    let m = max_match(&build_candidates(&nvs, &scenario.tasks, &ivs, &params)?);
    let rest: Vec<_> = nvs.into_iter().filter(|v| m.unmatched_nvs.contains(&v.id)).collect();
    if rest.is_empty() {
        println!("every NV found a helper; try another seed");
        return Ok(());
    }

    let instance = scenario.tier2_instance(&rest, &params);
    let solution = tier2::solve_both(&instance, &config.solver)?;
    let plan = &solution.integer;
    println!(
        "{} NVs over {} RSUs, {} outer iterations",
        rest.len(),
        instance.rsus.len(),
        solution.continuous.iterations
    );
    for a in &plan.allocations {
        println!(
            "NV {:>3}: split {:?}, {:>3} subchannels, upload {:.3e} s, {:.6e} J",
            a.nv,
            a.split.0,
            a.subchannels.unwrap_or(0),
            a.tau,
            a.energy.weighted_total
        );
    }
    for f in &plan.failures {
        println!("NV {:>3}: not served ({})", f.nv, f.reason);
    }
    println!("total {:.6e} J (continuous {:.6e} J)", plan.objective, solution.continuous.objective);
    Ok(())
}
