//! Independent numerical oracles.
//!
//! Nothing here uses Lambert W, multipliers or the closed-form solutions:
//! the oracles minimize the raw energy over time (and bandwidth) budgets by
//! pairwise golden-section exchange, which converges for convex separable
//! objectives under a single sum constraint.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;

use v2x_offload::model::{self, ChannelParams, Link, SequentialTask, Vehicle, VehicleId};
use v2x_offload::tier2::{SplitVector, Tier2Instance};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimizes `sum_i f_i(x_i)` subject to `sum_i x_i = total` and
/// `lower_i <= x_i <= upper_i` by repeated pairwise exchange.
pub fn minimize_separable(
    fs: &[&dyn Fn(f64) -> f64],
    lower: &[f64],
    upper: &[f64],
    total: f64,
    start: Vec<f64>,
) -> (f64, Vec<f64>) {
    let n = fs.len();
    let mut x = start;
    let value = |x: &[f64]| -> f64 { fs.iter().zip(x).map(|(f, &v)| f(v)).sum() };
    let mut current = value(&x);
    debug_assert!((x.iter().sum::<f64>() - total).abs() <= 1e-9 * total.abs().max(1.0));
    if n == 1 {
        return (current, x);
    }
    for _sweep in 0..400 {
        let before = current;
        for i in 0..n {
            for j in (i + 1)..n {
                let pair = x[i] + x[j];
                let lo = lower[i].max(pair - upper[j]);
                let hi = upper[i].min(pair - lower[j]);
                if !(hi > lo) {
                    continue;
                }
                let g = |a: f64| fs[i](a) + fs[j](pair - a);
                let (a, _) = golden_min(g, lo, hi, 1e-12);
                let old = fs[i](x[i]) + fs[j](x[j]);
                let new = fs[i](a) + fs[j](pair - a);
                if new < old {
                    x[i] = a;
                    x[j] = pair - a;
                }
            }
        }
        current = value(&x);
        if !(before - current > 1e-12 * current.abs()) {
            break;
        }
    }
    (current, x)
}

fn finite(v: Result<f64, model::ModelError>) -> f64 {
    v.unwrap_or(f64::INFINITY)
}

/// Minimum weighted energy of a vehicle-tier pair at a fixed split.
pub fn tier1_oracle(nv: &Vehicle, hv: &Vehicle, task: &SequentialTask, split: usize, params: &ChannelParams) -> f64 {
    let gain = model::v2v_gain(
        nv.position.distance(&hv.position),
        params.fading_for(Link::V2v { from: nv.id, to: hv.id }),
    )
    .unwrap();
    let bits = task.data_into(split);
    let deadline = task.deadline;

    let mut fs: Vec<Box<dyn Fn(f64) -> f64>> = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let (bw, n0, wn) = (params.b_v2v, params.noise_density, nv.weight);
    fs.push(Box::new(move |t: f64| wn * finite(model::transmit_energy(bits, t, bw, gain, n0))));
    lower.push(if bits == 0.0 { 0.0 } else { 1e-12 * deadline });
    upper.push(deadline);
    for m in 1..=task.len() {
        let dev = if m < split { nv } else { hv };
        let c = task.workload(m);
        let (w, k) = (dev.weight, dev.kappa);
        // energy as a function of the time spent on subtask m
        fs.push(Box::new(move |t: f64| w * k * c * (c / t) * (c / t)));
        lower.push(c / dev.max_cpu);
        upper.push(deadline);
    }
    let slack = deadline - lower.iter().skip(1).sum::<f64>();
    assert!(slack > 0.0);
    let mut start: Vec<f64> = lower.clone();
    let share = slack / fs.len() as f64;
    for s in start.iter_mut() {
        *s += share;
    }
    start[0] = lower[0] + slack - share * (fs.len() - 1) as f64;
    let refs: Vec<&dyn Fn(f64) -> f64> = fs.iter().map(|b| b.as_ref()).collect();
    minimize_separable(&refs, &lower, &upper, deadline, start).0
}

struct NvOracle {
    fixed_delay: f64,
    fixed_energy: f64,
    tau_cap: f64,
    bits: f64,
    gain: f64,
    weight: f64,
    /// (workload, weight, kappa, f_max) per subtask
    compute: Vec<(f64, f64, f64, f64)>,
    deadline: f64,
}

impl NvOracle {
    fn new(instance: &Tier2Instance, nv: &Vehicle, split: &SplitVector) -> Self {
        let task = &instance.tasks[&nv.id];
        let params = &instance.params;
        let rsu1 = &instance.rsus[0];
        let gain = model::v2i_gain(
            rsu1.distance_to(&nv.position),
            params.v2i_pathloss_exponent,
            params.fading_for(Link::V2i { from: nv.id }),
        )
        .unwrap();
        let m_count = task.len();
        let r_count = instance.rsus.len();
        let mut bounds = split.0.clone();
        bounds.push(m_count + 1);
        let mut compute = Vec::new();
        let mut fixed_delay = params.setup_delay;
        let mut fixed_energy = 0.0;
        for r in 0..r_count {
            let rsu = &instance.rsus[r];
            for m in bounds[r]..bounds[r + 1] {
                compute.push((task.workload(m), rsu.weight, rsu.kappa, rsu.max_cpu));
            }
            if r + 1 < r_count && bounds[r + 1] <= m_count {
                let bits = task.data_into(bounds[r + 1]);
                fixed_delay += params.wired_delay_per_bit * bits;
                fixed_energy += rsu.weight * params.wired_energy_per_bit * bits;
            }
        }
        let traveled = instance.traveled.get(&nv.id).copied().unwrap_or(0.0);
        let mobility = if nv.velocity > 0.0 {
            (rsu1.service_range - traveled) / nv.velocity - params.setup_delay
        } else {
            f64::INFINITY
        };
        let tau_cap = params.tau_cap(task.deadline).min(mobility);
        NvOracle {
            fixed_delay,
            fixed_energy,
            tau_cap,
            bits: task.input_size,
            gain,
            weight: nv.weight,
            compute,
            deadline: task.deadline,
        }
    }

    /// Minimum energy of this NV with `bandwidth` Hz, warm-started.
    fn solve(&self, bandwidth: f64, n0: f64, warm: &mut Option<Vec<f64>>) -> f64 {
        let budget = self.deadline - self.fixed_delay;
        let (bits, gain, w) = (self.bits, self.gain, self.weight);
        let mut fs: Vec<Box<dyn Fn(f64) -> f64 + '_>> = Vec::new();
        let mut lower = vec![1e-12 * budget];
        let mut upper = vec![self.tau_cap.min(budget)];
        fs.push(Box::new(move |t: f64| w * finite(model::transmit_energy(bits, t, bandwidth, gain, n0))));
        for &(c, wr, k, fmax) in &self.compute {
            fs.push(Box::new(move |t: f64| wr * k * c * (c / t) * (c / t)));
            lower.push(c / fmax);
            upper.push(budget);
        }
        let start = match warm.take() {
            Some(s) if s.len() == fs.len() => s,
            _ => {
                let slack = budget - lower.iter().sum::<f64>();
                assert!(slack > 0.0, "oracle instance infeasible");
                let mut s = lower.clone();
                let share = slack / fs.len() as f64;
                s[0] = (lower[0] + share).min(upper[0]);
                let rest = budget - s[0] - lower[1..].iter().sum::<f64>();
                let per = rest / (fs.len() - 1).max(1) as f64;
                for v in s.iter_mut().skip(1) {
                    *v += per;
                }
                s
            }
        };
        let refs: Vec<&dyn Fn(f64) -> f64> = fs.iter().map(|b| b.as_ref()).collect();
        let (value, x) = minimize_separable(&refs, &lower, &upper, budget, start);
        *warm = Some(x);
        value + self.fixed_energy
    }
}

/// Minimum of the RSU-tier objective for fixed splits with the full
/// bandwidth shared continuously among the NVs.
pub fn tier2_oracle(instance: &Tier2Instance, splits: &BTreeMap<VehicleId, SplitVector>) -> f64 {
    let nvs: Vec<NvOracle> = instance
        .nvs
        .iter()
        .map(|nv| NvOracle::new(instance, nv, &splits[&nv.id]))
        .collect();
    let n0 = instance.params.noise_density;
    let total = instance.params.b_total;
    let warm: Vec<std::cell::RefCell<Option<Vec<f64>>>> =
        nvs.iter().map(|_| std::cell::RefCell::new(None)).collect();
    let per_nv: Vec<Box<dyn Fn(f64) -> f64 + '_>> = nvs
        .iter()
        .zip(&warm)
        .map(|(o, cell)| {
            Box::new(move |b: f64| {
                let mut w = cell.borrow_mut();
                o.solve(b, n0, &mut w)
            }) as Box<dyn Fn(f64) -> f64>
        })
        .collect();
    let refs: Vec<&dyn Fn(f64) -> f64> = per_nv.iter().map(|b| b.as_ref()).collect();
    let n = nvs.len();
    let lower = vec![1e-9 * total; n];
    let upper = vec![total; n];
    let start = vec![total / n as f64; n];
    minimize_separable(&refs, &lower, &upper, total, start).0
}

pub mod gen {
    //! Seeded instance generators for the equivalence tests.

    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use v2x_offload::model::{ChannelParams, Position, Role, Rsu, SequentialTask, Subtask, Vehicle, VehicleId};
    use v2x_offload::tier2::{SplitVector, Tier2Instance};

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn vehicle<R: Rng>(rng: &mut R, id: VehicleId, position: Position, role: Role) -> Vehicle {
        Vehicle {
            id,
            position,
            velocity: rng.random_range(40.0..=120.0) / 3.6,
            max_cpu: rng.random_range(1e9..=10e9),
            kappa: rng.random_range(1e-23..=2e-23),
            weight: 1.0,
            role,
        }
    }

    pub fn task<R: Rng>(rng: &mut R, owner: VehicleId, subtasks: usize, deadline: f64) -> SequentialTask {
        SequentialTask {
            owner,
            input_size: rng.random_range(1e6..=20e6),
            subtasks: (0..subtasks)
                .map(|_| Subtask {
                    workload: rng.random_range(1e6..=1000e6),
                    output_size: rng.random_range(1e6..=20e6),
                })
                .collect(),
            deadline,
        }
    }

    /// Feasible, with a spectral efficiency over the leftover time low enough
    /// that `2^rate` stays far from f64 overflow.
    fn representable(nv: &Vehicle, hv: &Vehicle, task: &SequentialTask, split: usize) -> bool {
        if !v2x_offload::tier1::feasible(nv, hv, task, split) {
            return false;
        }
        let compute = task.workload_range(1, split) / nv.max_cpu + task.workload_range(split, task.len() + 1) / hv.max_cpu;
        let rate = task.data_into(split) / (ChannelParams::default().b_v2v * (task.deadline - compute));
        rate < 500.0
    }

    /// NV, HV and task with at least one split meeting the deadline at a
    /// representable energy.
    pub fn tier1_pair(seed: u64, max_subtasks: usize) -> (Vehicle, Vehicle, SequentialTask) {
        let mut rng = rng(seed);
        loop {
            let nv = vehicle(&mut rng, 1, Position::new(0.0, 1.875), Role::Nv);
            let dist: f64 = rng.random_range(5.0..=70.0);
            let lane = rng.random_range(0..3) as f64;
            let dy = lane * 3.75;
            let dx = (dist * dist - dy * dy).max(0.0).sqrt();
            let hv = vehicle(&mut rng, 2, Position::new(dx, 1.875 + dy), Role::Hv);
            let m = rng.random_range(1..=max_subtasks);
            let task = task(&mut rng, 1, m, 0.2);
            if (1..=m).any(|s| representable(&nv, &hv, &task, s)) {
                return (nv, hv, task);
            }
        }
    }

    pub fn rsus<R: Rng>(rng: &mut R, count: usize) -> Vec<Rsu> {
        (0..count)
            .map(|r| Rsu {
                id: r as u32 + 1,
                position: Position::new(100.0 + 200.0 * r as f64, 0.0),
                height: 10.0,
                service_range: 200.0,
                max_cpu: rng.random_range(60e9..=120e9),
                kappa: rng.random_range(1e-23..=2e-23),
                weight: 1.0,
            })
            .collect()
    }

    pub fn split<R: Rng>(rng: &mut R, subtasks: usize, rsus: usize) -> SplitVector {
        let mut v = vec![1];
        for _ in 1..rsus {
            let lo = *v.last().unwrap();
            v.push(rng.random_range(lo..=subtasks + 1));
        }
        SplitVector(v)
    }

    /// RSU-tier instance with `nvs` NVs and random feasible splits.
    pub fn tier2_instance(
        seed: u64,
        nvs: usize,
        max_subtasks: usize,
        rsu_count: usize,
    ) -> (Tier2Instance, BTreeMap<VehicleId, SplitVector>) {
        let mut rng = rng(seed);
        loop {
            let rsus = rsus(&mut rng, rsu_count);
            let mut vehicles = Vec::new();
            let mut tasks = BTreeMap::new();
            let mut traveled = BTreeMap::new();
            let mut splits = BTreeMap::new();
            for i in 0..nvs {
                let id = i as VehicleId + 1;
                let x = rng.random_range(0.0..=180.0);
                let lane = rng.random_range(0..3) as f64;
                let nv = vehicle(&mut rng, id, Position::new(x, 1.875 + 3.75 * lane), Role::Nv);
                let m = rng.random_range(1..=max_subtasks);
                tasks.insert(id, task(&mut rng, id, m, 0.2));
                splits.insert(id, split(&mut rng, m, rsu_count));
                traveled.insert(id, x);
                vehicles.push(nv);
            }
            let instance = Tier2Instance {
                nvs: vehicles,
                tasks,
                rsus,
                traveled,
                params: ChannelParams::default(),
            };
            let opts = v2x_offload::tier2::Tier2Options::default();
            if v2x_offload::tier2::solve_continuous(&instance, &splits, &opts).is_ok() {
                return (instance, splits);
            }
        }
    }
}

pub mod checks {
    //! Oracle comparisons shared by the module tests and the acceptance run.

    use std::collections::BTreeMap;

    use rand::Rng;
    use v2x_offload::matching::{max_match, CandidateGraph};
    use v2x_offload::model::{ChannelParams, VehicleId};
    use v2x_offload::tier1;
    use v2x_offload::tier2::{self, enumerate_splits, Tier2Options};

    use super::gen;

    #[derive(Debug)]
    pub struct Outcome {
        pub passed: bool,
        pub detail: String,
    }

    impl Outcome {
        fn from_failures(failures: Vec<String>, summary: String) -> Self {
            let passed = failures.is_empty();
            let detail = if passed {
                summary
            } else {
                format!("{summary}; {} failures, first: {}", failures.len(), failures[0])
            };
            Outcome { passed, detail }
        }
    }

    /// Closed-form vehicle-tier optimum against the numerical oracle.
    pub fn tier1_equivalence(instances: u64) -> Outcome {
        let params = ChannelParams::default();
        let mut failures = Vec::new();
        let mut worst: f64 = 0.0;
        for seed in 0..instances {
            let (nv, hv, task) = gen::tier1_pair(seed, 4);
            let plan = match tier1::solve(&nv, &hv, &task, &params) {
                Ok(p) => p,
                Err(e) => {
                    failures.push(format!("seed {seed}: {e}"));
                    continue;
                }
            };
            let oracle = (1..=task.len())
                .filter(|&s| tier1::feasible(&nv, &hv, &task, s))
                .map(|s| super::tier1_oracle(&nv, &hv, &task, s, &params))
                .fold(f64::INFINITY, f64::min);
            let rel = (plan.energy.weighted_total - oracle) / oracle;
            worst = worst.max(rel.abs());
            if rel.abs() > 5e-3 {
                failures.push(format!("seed {seed}: solver {:.6e} vs oracle {oracle:.6e}", plan.energy.weighted_total));
            }
            let report = tier1::validate(&plan, &nv, &hv, &task);
            if !report.all_passed() {
                failures.push(format!("seed {seed}: validator\n{report}"));
            }
            let tight = (task.deadline - plan.total_delay) / task.deadline;
            if !(0.0..=1e-6).contains(&tight) {
                failures.push(format!("seed {seed}: deadline slack {tight:.3e}"));
            }
        }
        Outcome::from_failures(failures, format!("{instances} instances, worst relative gap {worst:.2e}"))
    }

    fn brute_force(nvs: usize, ivs: usize, edges: &[(usize, usize)]) -> usize {
        fn go(nv: usize, nvs: usize, used: &mut Vec<bool>, adj: &[Vec<usize>]) -> usize {
            if nv == nvs {
                return 0;
            }
            let mut best = go(nv + 1, nvs, used, adj);
            for &iv in &adj[nv] {
                if !used[iv] {
                    used[iv] = true;
                    best = best.max(1 + go(nv + 1, nvs, used, adj));
                    used[iv] = false;
                }
            }
            best
        }
        let mut adj = vec![Vec::new(); nvs];
        for &(a, b) in edges {
            adj[a].push(b);
        }
        go(0, nvs, &mut vec![false; ivs], &adj)
    }

    /// Maximum matching cardinality against exhaustive search.
    pub fn matching_exactness(instances: u64) -> Outcome {
        let mut failures = Vec::new();
        for seed in 0..instances {
            let mut rng = gen::rng(1_000_000 + seed);
            let nvs = rng.random_range(0..=6);
            let ivs = rng.random_range(0..=6);
            let density: f64 = rng.random();
            let mut edges = Vec::new();
            for a in 0..nvs {
                for b in 0..ivs {
                    if rng.random::<f64>() < density {
                        edges.push((a, b));
                    }
                }
            }
            let graph = CandidateGraph::from_edges(
                (0..nvs as VehicleId).collect(),
                (100..100 + ivs as VehicleId).collect(),
                edges.iter().map(|&(a, b)| (a as VehicleId, 100 + b as VehicleId)),
            )
            .expect("valid graph");
            let matching = max_match(&graph);
            let expected = brute_force(nvs, ivs, &edges);
            let mut valid = matching.pairs.iter().all(|&(n, i)| graph.has_edge(n, i));
            let mut seen = std::collections::BTreeSet::new();
            valid &= matching.pairs.iter().all(|&(_, i)| seen.insert(i));
            if matching.size() != expected || !valid {
                failures.push(format!("seed {seed}: got {} expected {expected}", matching.size()));
            }
        }
        Outcome::from_failures(failures, format!("{instances} graphs"))
    }

    /// Alternating RSU-tier solver against the numerical oracle, plus the
    /// single-NV split search against brute force.
    pub fn tier2_equivalence(seeds: u64) -> Outcome {
        let opts = Tier2Options::default();
        let mut failures = Vec::new();
        let mut worst: f64 = 0.0;
        for seed in 0..seeds {
            let nvs = 1 + (seed % 3) as usize;
            let (instance, splits) = gen::tier2_instance(50_000 + seed, nvs, 4, 2);
            let plan = match tier2::solve_continuous(&instance, &splits, &opts) {
                Ok(p) => p,
                Err(e) => {
                    failures.push(format!("seed {seed}: {e}"));
                    continue;
                }
            };
            let oracle = super::tier2_oracle(&instance, &splits);
            let rel = (plan.objective - oracle) / oracle;
            worst = worst.max(rel.abs());
            if rel.abs() > 5e-3 {
                failures.push(format!("seed {seed}: solver {:.6e} vs oracle {oracle:.6e}", plan.objective));
            }
            let used: f64 = plan.allocations.iter().map(|a| a.bandwidth).sum();
            let b = instance.params.b_total;
            if (used - b).abs() > 1e-6 * b {
                failures.push(format!("seed {seed}: bandwidth sum {used:.9e} vs {b:.9e}"));
            }
            if plan.history.windows(2).any(|w| w[1] > w[0]) {
                failures.push(format!("seed {seed}: objective rose {:?}", plan.history));
            }
            // the cross-NV frequency sum is only reported in the default mode
            let report = tier2::validate(&plan, &instance);
            if report.failures().any(|c| c.name != "aggregate_cpu") {
                failures.push(format!("seed {seed}: validator\n{report}"));
            }

            // single NV: split search equals joint enumeration
            let single = tier2::Tier2Instance {
                nvs: vec![instance.nvs[0].clone()],
                ..instance.clone()
            };
            let id = single.nvs[0].id;
            let m = single.tasks[&id].len();
            let brute = enumerate_splits(m, single.rsus.len())
                .filter_map(|s| {
                    let one: BTreeMap<_, _> = [(id, s)].into_iter().collect();
                    tier2::solve_continuous(&single, &one, &opts).ok().map(|p| p.objective)
                })
                .fold(f64::INFINITY, f64::min);
            match tier2::solve_both(&single, &opts) {
                Ok(sol) => {
                    let got = sol.continuous.objective;
                    if (got - brute).abs() > 1e-12 * brute {
                        failures.push(format!("seed {seed}: single-NV search {got:.12e} vs brute force {brute:.12e}"));
                    }
                }
                Err(e) => failures.push(format!("seed {seed}: single-NV solve {e}")),
            }
        }
        Outcome::from_failures(failures, format!("{seeds} seeds, worst relative gap {worst:.2e}"))
    }
}
