//! Comparison policies for both tiers.
//!
//! Vehicle tier:
//! - `FOO`: full offload, optimized frequency and V2V delay.
//! - `FOM`: full offload, HV at maximum frequency.
//! - `POM`: NV runs the first half, both at maximum frequency.
//! - `BFM`: back-and-forth ownership at maximum frequency, with the NV's
//!   share of the workload as close as possible to its share of CPU capacity.
//!
//! Fixed-frequency policies spend the whole residual deadline on V2V
//! transfers, which is the cheapest choice once the frequencies are fixed.
//!
//! RSU tier: equal bandwidth per NV with either an equal or a uniformly
//! random split of subtasks over RSUs; upload delays and frequencies are
//! still optimized.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kkt;
use crate::model::{ChannelParams, SequentialTask, Vehicle, VehicleId};
use crate::numerics::{bisect_nonnegative, expand_upper_bracket, NumericsError};
use crate::tier1::{self, Executor, PairContext, Tier1Error, Tier1Plan, LAMBDA_CAP};
use crate::tier2::{self, enumerate_splits, equal_split, SplitVector, Tier2Error, Tier2Instance, Tier2Options, Tier2Plan};

/// RNG stream used for random split draws.
pub const RANDOM_SPLIT_STREAM: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyId {
    Foo,
    Pom,
    Fom,
    Bfm,
    T2EqualEqual,
    T2EqualRandom,
}

impl PolicyId {
    pub const ALL: [PolicyId; 6] = [
        PolicyId::Foo,
        PolicyId::Pom,
        PolicyId::Fom,
        PolicyId::Bfm,
        PolicyId::T2EqualEqual,
        PolicyId::T2EqualRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyId::Foo => "FOO",
            PolicyId::Pom => "POM",
            PolicyId::Fom => "FOM",
            PolicyId::Bfm => "BFM",
            PolicyId::T2EqualEqual => "T2_EQUAL_EQUAL",
            PolicyId::T2EqualRandom => "T2_EQUAL_RANDOM",
        }
    }

    pub fn is_tier1(self) -> bool {
        matches!(self, PolicyId::Foo | PolicyId::Pom | PolicyId::Fom | PolicyId::Bfm)
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyId {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyId::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| BaselineError::UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("{0} is not a policy for this tier")]
    WrongTier(PolicyId),
    #[error("{policy} cannot meet the deadline: compute alone takes {compute:.6e} s of {deadline:.6e} s")]
    Infeasible {
        policy: PolicyId,
        compute: f64,
        deadline: f64,
    },
    #[error(transparent)]
    Tier1(#[from] Tier1Error),
    #[error(transparent)]
    Tier2(#[from] Tier2Error),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// First subtask given to the HV under POM: the NV keeps `ceil(M/2)`,
/// except that a single subtask is offloaded.
pub fn pom_split(len: usize) -> usize {
    (len.div_ceil(2) + 1).min(len)
}

/// BFM ownership pattern: the NV's workload fraction closest to
/// `F_n / (F_n + F_h)`, with the HV running at least one subtask. Ties go
/// to fewer hand-overs, then to the lexicographically smaller pattern.
pub fn bfm_assignment(nv: &Vehicle, hv: &Vehicle, task: &SequentialTask) -> Vec<Executor> {
    let m_count = task.len();
    let total = task.total_workload();
    let target = nv.max_cpu / (nv.max_cpu + hv.max_cpu);
    let mut best: Option<(f64, usize, Vec<Executor>)> = None;
    for mask in 0u64..(1u64 << m_count) {
        // bit m set: subtask m+1 on the NV
        let pattern: Vec<Executor> = (0..m_count)
            .map(|m| if mask >> m & 1 == 1 { Executor::Nv } else { Executor::Hv })
            .collect();
        if pattern.iter().all(|&e| e == Executor::Nv) {
            continue;
        }
        let local: f64 = (0..m_count)
            .filter(|&m| pattern[m] == Executor::Nv)
            .map(|m| task.workload(m + 1))
            .sum();
        let gap = (local / total - target).abs();
        let segments = tier1::hand_overs(&pattern).len();
        let better = match &best {
            None => true,
            Some((g, s, p)) => (gap, segments, &pattern) < (*g, *s, p),
        };
        if better {
            best = Some((gap, segments, pattern));
        }
    }
    best.expect("at least one pattern offloads something").2
}

/// Fixed-frequency schedule: every subtask at its executor's maximum
/// frequency, the residual deadline shared among the transfers so that
/// their weighted transmit energy is minimal.
pub fn fixed_frequency_plan(
    policy: PolicyId,
    ctx: &PairContext<'_>,
    assignment: &[Executor],
) -> Result<Tier1Plan, BaselineError> {
    let task = ctx.task;
    let freqs: Vec<f64> = assignment.iter().map(|&w| ctx.executor(w).max_cpu).collect();
    let compute: f64 = (1..=task.len()).map(|m| task.workload(m) / freqs[m - 1]).sum();
    let residual = task.deadline - compute;
    if !(residual > 0.0) {
        return Err(BaselineError::Infeasible {
            policy,
            compute,
            deadline: task.deadline,
        });
    }
    let hand_overs = tier1::hand_overs(assignment);
    let sends: Vec<(f64, f64)> = hand_overs
        .iter()
        .map(|&(before, from)| (task.data_into(before), ctx.executor(from).weight))
        .collect();
    let taus = share_airtime(ctx, &sends, residual)?;
    Ok(ctx.evaluate(assignment, &taus, &freqs, None)?)
}

/// Splits `budget` seconds among transfers `(bits, sender weight)`
/// minimizing weighted energy; all of it is used.
fn share_airtime(ctx: &PairContext<'_>, sends: &[(f64, f64)], budget: f64) -> Result<Vec<f64>, BaselineError> {
    let moving: Vec<usize> = (0..sends.len()).filter(|&k| sends[k].0 > 0.0).collect();
    let mut taus = vec![0.0; sends.len()];
    match moving.len() {
        0 => return Ok(taus),
        1 => {
            taus[moving[0]] = budget;
            return Ok(taus);
        }
        _ => {}
    }
    let tau_at = |lambda: f64, k: usize| {
        let (bits, weight) = sends[k];
        kkt::link_resource(bits, ctx.bandwidth, ctx.gain, weight, ctx.noise, lambda)
    };
    let slack = |lambda: f64| -> f64 {
        let used: Result<f64, _> = moving.iter().map(|&k| tau_at(lambda, k)).sum();
        used.map_or(f64::NAN, |u| budget - u)
    };
    let bracket = expand_upper_bracket(slack, 0.0, LAMBDA_CAP)?;
    let lambda = bisect_nonnegative(slack, bracket.with_tolerance(1e-15), 1e-12 * budget)?;
    let mut used = 0.0;
    for &k in &moving {
        taus[k] = tau_at(lambda, k)?;
        used += taus[k];
    }
    // stretch onto the full budget; longer transfers never cost more
    for &k in &moving {
        taus[k] *= budget / used;
    }
    Ok(taus)
}

/// Runs a vehicle-tier baseline on one NV–HV pair.
pub fn run_tier1_baseline(
    policy: PolicyId,
    nv: &Vehicle,
    hv: &Vehicle,
    task: &SequentialTask,
    params: &ChannelParams,
) -> Result<Tier1Plan, BaselineError> {
    let ctx = PairContext::new(nv, hv, task, params)?;
    let m_count = task.len();
    match policy {
        PolicyId::Foo => Ok(tier1::solve_fixed_split(nv, hv, task, 1, params)?),
        PolicyId::Fom => fixed_frequency_plan(policy, &ctx, &tier1::split_assignment(m_count, 1)),
        PolicyId::Pom => fixed_frequency_plan(policy, &ctx, &tier1::split_assignment(m_count, pom_split(m_count))),
        PolicyId::Bfm => fixed_frequency_plan(policy, &ctx, &bfm_assignment(nv, hv, task)),
        other => Err(BaselineError::WrongTier(other)),
    }
}

/// One split vector per NV drawn uniformly from those that can meet the
/// deadline (from all of them if none can), in NV id order.
pub fn random_splits(instance: &Tier2Instance, seed: u64) -> BTreeMap<VehicleId, SplitVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RANDOM_SPLIT_STREAM);
    let r_count = instance.rsus.len();
    let mut nvs: Vec<&Vehicle> = instance.nvs.iter().collect();
    nvs.sort_by_key(|v| v.id);
    nvs.into_iter()
        .map(|nv| {
            let m = instance.task(nv.id).len();
            let all: Vec<SplitVector> = enumerate_splits(m, r_count).collect();
            let feasible: Vec<&SplitVector> = all.iter().filter(|s| tier2::split_feasible(instance, nv, s)).collect();
            let pool: Vec<&SplitVector> = if feasible.is_empty() { all.iter().collect() } else { feasible };
            (nv.id, pool[rng.random_range(0..pool.len())].clone())
        })
        .collect()
}

/// Equal bandwidth for every NV with the given splits; upload delays and
/// frequencies optimized.
pub fn equal_bandwidth_plan(
    instance: &Tier2Instance,
    splits: &BTreeMap<VehicleId, SplitVector>,
    options: &Tier2Options,
) -> Result<Tier2Plan, BaselineError> {
    let share = instance.params.b_total / instance.nvs.len() as f64;
    let bandwidth = vec![share; instance.nvs.len()];
    Ok(tier2::solve_with_bandwidth(instance, splits, &bandwidth, options)?)
}

/// Equal split vectors for every NV.
pub fn equal_splits(instance: &Tier2Instance) -> BTreeMap<VehicleId, SplitVector> {
    let r_count = instance.rsus.len();
    instance
        .nvs
        .iter()
        .map(|v| (v.id, equal_split(instance.task(v.id).len(), r_count)))
        .collect()
}

/// Runs an RSU-tier baseline. `seed` drives the random split draw and is
/// ignored by the equal-split policy.
pub fn run_tier2_baseline(
    policy: PolicyId,
    instance: &Tier2Instance,
    seed: u64,
    options: &Tier2Options,
) -> Result<Tier2Plan, BaselineError> {
    let splits = match policy {
        PolicyId::T2EqualEqual => equal_splits(instance),
        PolicyId::T2EqualRandom => random_splits(instance, seed),
        other => return Err(BaselineError::WrongTier(other)),
    };
    equal_bandwidth_plan(instance, &splits, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Position, Role, Subtask};

    fn vehicle(id: VehicleId, x: f64, cpu: f64) -> Vehicle {
        Vehicle {
            id,
            position: Position::new(x, 0.0),
            velocity: 25.0,
            max_cpu: cpu,
            kappa: 1.5e-23,
            weight: 1.0,
            role: if id == 1 { Role::Nv } else { Role::Hv },
        }
    }

    fn task(workloads: &[f64], deadline: f64) -> SequentialTask {
        SequentialTask {
            owner: 1,
            input_size: 2e6,
            subtasks: workloads
                .iter()
                .map(|&w| Subtask {
                    workload: w,
                    output_size: 1e6,
                })
                .collect(),
            deadline,
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyId::ALL {
            assert_eq!(p.name().parse::<PolicyId>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
        assert_eq!("fom".parse::<PolicyId>().unwrap(), PolicyId::Fom);
        assert!("OEM".parse::<PolicyId>().is_err());
    }

    #[test]
    fn fom_runs_everything_on_hv_at_max() {
        let (nv, hv) = (vehicle(1, 0.0, 2e9), vehicle(2, 30.0, 8e9));
        let t = task(&[1e8, 2e8], 0.2);
        let plan = run_tier1_baseline(PolicyId::Fom, &nv, &hv, &t, &ChannelParams::default()).unwrap();
        assert_eq!(plan.split, 1);
        assert_eq!(plan.freqs, vec![8e9, 8e9]);
        assert!((plan.total_delay - 0.2).abs() < 1e-12);
        assert!(tier1::validate(&plan, &nv, &hv, &t).all_passed());
    }

    #[test]
    fn pom_halves() {
        assert_eq!(pom_split(4), 3);
        assert_eq!(pom_split(5), 4);
        assert_eq!(pom_split(1), 1);
        let (nv, hv) = (vehicle(1, 0.0, 4e9), vehicle(2, 30.0, 8e9));
        let t = task(&[1e8; 4], 0.2);
        let plan = run_tier1_baseline(PolicyId::Pom, &nv, &hv, &t, &ChannelParams::default()).unwrap();
        assert_eq!(plan.assignment, vec![Executor::Nv, Executor::Nv, Executor::Hv, Executor::Hv]);
        assert_eq!(plan.freqs, vec![4e9, 4e9, 8e9, 8e9]);
    }

    #[test]
    fn bfm_matches_capacity_ratio() {
        let (nv, hv) = (vehicle(1, 0.0, 2e9), vehicle(2, 30.0, 6e9));
        // target NV share 1/4 of 8 units: subtask 3 alone (2 units)
        let t = task(&[3e8, 3e8, 2e8], 0.3);
        let pattern = bfm_assignment(&nv, &hv, &t);
        assert_eq!(pattern, vec![Executor::Hv, Executor::Hv, Executor::Nv]);
        let plan = run_tier1_baseline(PolicyId::Bfm, &nv, &hv, &t, &ChannelParams::default()).unwrap();
        assert_eq!(plan.transfers.len(), 2);
        assert_eq!(plan.transfers[1].from, Executor::Hv);
        assert!(plan.energy.hv_transmit > 0.0);
        let report = tier1::validate(&plan, &nv, &hv, &t);
        assert!(report.all_passed(), "{report}");
        assert!((plan.total_delay - 0.3).abs() < 1e-9);
    }

    #[test]
    fn airtime_split_equalizes_marginal_cost() {
        let (nv, hv) = (vehicle(1, 0.0, 2e9), vehicle(2, 30.0, 6e9));
        let t = task(&[3e8, 3e8, 2e8], 0.3);
        let plan = run_tier1_baseline(PolicyId::Bfm, &nv, &hv, &t, &ChannelParams::default()).unwrap();
        // moving a little airtime between the two transfers must not help
        let ctx = PairContext::new(&nv, &hv, &t, &ChannelParams::default()).unwrap();
        let taus: Vec<f64> = plan.transfers.iter().map(|x| x.tau).collect();
        let h = 1e-4 * taus[0].min(taus[1]);
        for d in [-h, h] {
            let moved = ctx.evaluate(&plan.assignment, &[taus[0] + d, taus[1] - d], &plan.freqs, None).unwrap();
            assert!(moved.energy.weighted_total >= plan.energy.weighted_total * (1.0 - 1e-9));
        }
    }

    #[test]
    fn infeasible_fixed_frequency() {
        let (nv, hv) = (vehicle(1, 0.0, 1e9), vehicle(2, 30.0, 1e9));
        let t = task(&[1e8, 1e8], 0.2);
        assert!(matches!(
            run_tier1_baseline(PolicyId::Fom, &nv, &hv, &t, &ChannelParams::default()),
            Err(BaselineError::Infeasible { .. })
        ));
    }

    #[test]
    fn proposed_beats_tier1_baselines() {
        let (nv, hv) = (vehicle(1, 0.0, 3e9), vehicle(2, 40.0, 9e9));
        let t = task(&[2e8, 1e8, 3e8, 1e8], 0.2);
        let params = ChannelParams::default();
        let best = tier1::solve(&nv, &hv, &t, &params).unwrap().energy.weighted_total;
        for p in [PolicyId::Foo, PolicyId::Fom, PolicyId::Pom, PolicyId::Bfm] {
            let plan = run_tier1_baseline(p, &nv, &hv, &t, &params).unwrap();
            assert!(best <= plan.energy.weighted_total * (1.0 + 1e-9), "{p}");
            assert!(tier1::validate(&plan, &nv, &hv, &t).all_passed(), "{p}");
        }
    }

    #[test]
    fn fixed_frequency_compute_ignores_deadline() {
        let (nv, hv) = (vehicle(1, 0.0, 3e9), vehicle(2, 40.0, 9e9));
        let params = ChannelParams::default();
        for p in [PolicyId::Fom, PolicyId::Pom, PolicyId::Bfm] {
            let a = run_tier1_baseline(p, &nv, &hv, &task(&[2e8, 1e8, 3e8], 0.2), &params).unwrap();
            let b = run_tier1_baseline(p, &nv, &hv, &task(&[2e8, 1e8, 3e8], 0.4), &params).unwrap();
            assert_eq!(a.energy.nv_compute, b.energy.nv_compute);
            assert_eq!(a.energy.hv_compute, b.energy.hv_compute);
            assert!(b.energy.nv_transmit + b.energy.hv_transmit < a.energy.nv_transmit + a.energy.hv_transmit);
        }
    }

    fn rsu_instance() -> Tier2Instance {
        let mut nvs = Vec::new();
        let mut tasks = BTreeMap::new();
        let mut traveled = BTreeMap::new();
        for i in 0..3u32 {
            let id = i + 1;
            nvs.push(Vehicle {
                role: Role::Nv,
                ..vehicle(id, 30.0 + 40.0 * i as f64, 2e9)
            });
            tasks.insert(
                id,
                SequentialTask {
                    owner: id,
                    ..task(&[4e8, 2e8, 5e8, 3e8], 0.2)
                },
            );
            traveled.insert(id, 30.0 + 40.0 * i as f64);
        }
        let rsus = (0..2)
            .map(|r| crate::model::Rsu {
                id: r + 1,
                position: Position::new(100.0 + 200.0 * r as f64, 0.0),
                height: 10.0,
                service_range: 200.0,
                max_cpu: 9e10,
                kappa: 1.5e-23,
                weight: 1.0,
            })
            .collect();
        Tier2Instance {
            nvs,
            tasks,
            rsus,
            traveled,
            params: ChannelParams::default(),
        }
    }

    #[test]
    fn equal_equal_halves_work_and_bandwidth() {
        let inst = rsu_instance();
        let plan = run_tier2_baseline(PolicyId::T2EqualEqual, &inst, 0, &Tier2Options::default()).unwrap();
        assert!(plan.failures.is_empty());
        for a in &plan.allocations {
            assert_eq!(a.split, SplitVector(vec![1, 3]));
            assert!((a.bandwidth - 100e6 / 3.0).abs() < 1e-6);
        }
        assert!(tier2::validate(&plan, &inst).failures().all(|c| c.name == "aggregate_cpu"));
    }

    #[test]
    fn random_splits_are_reproducible() {
        let inst = rsu_instance();
        assert_eq!(random_splits(&inst, 7), random_splits(&inst, 7));
        let draws: std::collections::BTreeSet<_> = (0..40).map(|s| random_splits(&inst, s)).collect();
        assert!(draws.len() > 1);
    }

    #[test]
    fn proposed_beats_tier2_baselines() {
        let inst = rsu_instance();
        let opts = Tier2Options::default();
        let proposed = tier2::solve(&inst, &opts).unwrap();
        for p in [PolicyId::T2EqualEqual, PolicyId::T2EqualRandom] {
            let base = run_tier2_baseline(p, &inst, 3, &opts).unwrap();
            if base.failures.is_empty() {
                assert!(proposed.objective <= base.objective, "{p}");
            }
        }
        assert!(matches!(
            run_tier2_baseline(PolicyId::Foo, &inst, 0, &opts),
            Err(BaselineError::WrongTier(PolicyId::Foo))
        ));
    }
}
