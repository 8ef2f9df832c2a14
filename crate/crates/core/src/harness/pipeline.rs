//! One scenario through both tiers.

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::constraints::ConstraintReport;
use crate::matching::{self, Matching};
use crate::model::{Role, VehicleId};
use crate::scenario::Scenario;
use crate::tier1::{self, Tier1Plan};
use crate::tier2::{self, Tier2Solution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub nv: VehicleId,
    pub hv: VehicleId,
    pub plan: Option<Tier1Plan>,
    pub error: Option<String>,
    pub validation: Option<ConstraintReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub seed: u64,
    pub matching: Matching,
    pub vehicle_tier: Vec<PairOutcome>,
    pub rsu_tier: Option<Tier2Solution>,
    pub rsu_tier_error: Option<String>,
    /// Validation of the subchannel-rounded RSU-tier plan.
    pub rsu_tier_validation: Option<ConstraintReport>,
    /// Weighted energy summed over every planned task, J.
    pub total_energy: f64,
    pub tasks: usize,
    pub planned: usize,
}

/// Matches NVs with idle vehicles, plans each pair, and plans the remaining
/// NVs on the RSU tier. Failures are recorded per pair or per NV.
pub fn solve_scenario(scenario: &Scenario, config: &SimConfig) -> Result<ScenarioPlan, matching::MatchingError> {
    let params = scenario.channel(&config.channel);
    let nvs = scenario.with_role(Role::Nv);
    let ivs = scenario.with_role(Role::Iv);
    let graph = matching::build_candidates(&nvs, &scenario.tasks, &ivs, &params)?;
    let m = matching::max_match(&graph);

    let mut total_energy = 0.0;
    let mut planned = 0;
    let mut vehicle_tier = Vec::with_capacity(m.pairs.len());
    for &(nv_id, hv_id) in &m.pairs {
        let nv = scenario.vehicle(nv_id).ok_or(matching::MatchingError::UnknownVehicle(nv_id))?;
        let hv = scenario.vehicle(hv_id).ok_or(matching::MatchingError::UnknownVehicle(hv_id))?;
        let task = &scenario.tasks[&nv_id];
        let outcome = match tier1::solve(nv, hv, task, &params) {
            Ok(plan) => {
                total_energy += plan.energy.weighted_total;
                planned += 1;
                PairOutcome {
                    nv: nv_id,
                    hv: hv_id,
                    validation: Some(tier1::validate(&plan, nv, hv, task)),
                    plan: Some(plan),
                    error: None,
                }
            }
            Err(e) => PairOutcome {
                nv: nv_id,
                hv: hv_id,
                plan: None,
                error: Some(e.to_string()),
                validation: None,
            },
        };
        vehicle_tier.push(outcome);
    }

    let rest: Vec<_> = m.unmatched_nvs.iter().filter_map(|id| scenario.vehicle(*id).cloned()).collect();
    let (mut rsu_tier, mut rsu_tier_error, mut rsu_tier_validation) = (None, None, None);
    if !rest.is_empty() {
        let inst = scenario.tier2_instance(&rest, &params);
        match tier2::solve_both(&inst, &config.solver) {
            Ok(solution) => {
                total_energy += solution.integer.objective;
                planned += solution.integer.allocations.len();
                rsu_tier_validation = Some(tier2::validate(&solution.integer, &inst));
                rsu_tier = Some(solution);
            }
            Err(e) => rsu_tier_error = Some(e.to_string()),
        }
    }
    Ok(ScenarioPlan {
        seed: scenario.seed,
        matching: m,
        vehicle_tier,
        rsu_tier,
        rsu_tier_error,
        rsu_tier_validation,
        total_energy,
        tasks: scenario.tasks.len(),
        planned,
    })
}
