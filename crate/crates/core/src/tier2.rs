//! RSU tier: NVs left unmatched upload their whole task to the first RSU,
//! and a chain of RSUs runs consecutive blocks of subtasks, forwarding
//! intermediate data over wired links.
//!
//! For fixed split vectors the continuous part (upload delays, bandwidth
//! shares, CPU frequencies) is solved by alternating two closed forms:
//!
//! 1. with bandwidth fixed, each NV's deadline multiplier is bisected so its
//!    deadline is tight, giving its upload delay and frequencies;
//! 2. with upload delays fixed, one bandwidth multiplier is bisected so the
//!    shares exhaust the total bandwidth.
//!
//! Split vectors are then improved per NV by enumeration, and the final
//! continuous bandwidths are rounded to whole subchannels.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintReport, DELAY_SLACK};
use crate::kkt;
use crate::model::{self, ChannelParams, Link, ModelError, Rsu, SequentialTask, Vehicle, VehicleId};
use crate::numerics::{bisect_nonnegative, expand_upper_bracket, NumericsError};
use crate::tier1::LAMBDA_CAP;

/// Relative residual accepted on the total-bandwidth equation.
pub const BANDWIDTH_RESIDUAL: f64 = 1e-12;

/// Relative deadline slack accepted by the per-NV multiplier search. It is
/// tight because the alternating loop compares objectives across iterations.
pub const DEADLINE_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Tier2Error {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("NV {nv} is infeasible ({constraint}): {detail}")]
    NvInfeasible {
        nv: VehicleId,
        constraint: &'static str,
        detail: String,
    },
    #[error("alternating optimization did not converge in {iterations} iterations (last change {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("{nvs} NVs cannot each get one of {subchannels} subchannels")]
    TooFewSubchannels { nvs: usize, subchannels: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// First subtask (1-based) handled by each RSU. The first entry is always 1;
/// entries are nondecreasing and at most `M + 1`. RSU `r` runs subtasks
/// `m[r]..m[r+1]`, the last RSU runs through `M`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SplitVector(pub Vec<usize>);

impl SplitVector {
    pub fn rsu_count(&self) -> usize {
        self.0.len()
    }

    pub fn is_valid(&self, subtasks: usize, rsus: usize) -> bool {
        self.0.len() == rsus
            && self.0.first() == Some(&1)
            && self.0.windows(2).all(|w| w[0] <= w[1])
            && self.0.iter().all(|&m| m >= 1 && m <= subtasks + 1)
    }

    /// Subtasks run by RSU `r` (0-based RSU index, 1-based subtasks).
    pub fn rsu_range(&self, r: usize, subtasks: usize) -> Range<usize> {
        let end = self.0.get(r + 1).copied().unwrap_or(subtasks + 1);
        self.0[r]..end
    }

    /// Forwards data but computes nothing.
    pub fn is_forwarding_only(&self, r: usize, subtasks: usize) -> bool {
        self.rsu_range(r, subtasks).is_empty() && self.0[r] <= subtasks
    }

    /// Reached after the task is complete: idle for this NV.
    pub fn is_idle(&self, r: usize, subtasks: usize) -> bool {
        self.0[r] == subtasks + 1
    }

    /// Bits RSU `r` forwards to RSU `r + 1`, if it forwards anything.
    pub fn forwarded_bits(&self, r: usize, task: &SequentialTask) -> Option<f64> {
        let next = *self.0.get(r + 1)?;
        (next <= task.len()).then(|| task.data_into(next))
    }
}

/// All split vectors for `subtasks` subtasks over `rsus` RSUs, in
/// lexicographic order. There are `C(M + R - 1, R - 1)` of them.
pub fn enumerate_splits(subtasks: usize, rsus: usize) -> SplitEnumerator {
    SplitEnumerator {
        subtasks,
        next: (rsus >= 1).then(|| vec![1; rsus]),
    }
}

#[derive(Debug, Clone)]
pub struct SplitEnumerator {
    subtasks: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for SplitEnumerator {
    type Item = SplitVector;

    fn next(&mut self) -> Option<SplitVector> {
        let current = self.next.take()?;
        let limit = self.subtasks + 1;
        let mut succ = current.clone();
        let mut pos = succ.len();
        while pos > 1 {
            pos -= 1;
            if succ[pos] < limit {
                succ[pos] += 1;
                let v = succ[pos];
                for later in succ.iter_mut().skip(pos + 1) {
                    *later = v;
                }
                self.next = Some(succ);
                break;
            }
        }
        Some(SplitVector(current))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier2Instance {
    pub nvs: Vec<Vehicle>,
    pub tasks: BTreeMap<VehicleId, SequentialTask>,
    /// Ordered along the driving direction; the first one receives uploads.
    pub rsus: Vec<Rsu>,
    /// Distance each NV has already covered inside the first RSU's range, m.
    pub traveled: BTreeMap<VehicleId, f64>,
    pub params: ChannelParams,
}

impl Tier2Instance {
    pub fn validate(&self) -> Result<(), Tier2Error> {
        if self.nvs.is_empty() {
            return Err(Tier2Error::Invalid("no NVs".into()));
        }
        if self.rsus.is_empty() {
            return Err(Tier2Error::Invalid("no RSUs".into()));
        }
        self.params.validate()?;
        for w in self.rsus.windows(2) {
            if w[1].position.x < w[0].position.x {
                return Err(Tier2Error::Invalid("RSUs must be ordered along +x".into()));
            }
        }
        for rsu in &self.rsus {
            rsu.validate()?;
        }
        let range = self.rsus[0].service_range;
        for nv in &self.nvs {
            nv.validate()?;
            if !(nv.weight > 0.0) {
                return Err(Tier2Error::Invalid(format!("NV {} needs a positive weight", nv.id)));
            }
            let task = self
                .tasks
                .get(&nv.id)
                .ok_or_else(|| Tier2Error::Invalid(format!("NV {} has no task", nv.id)))?;
            task.validate()?;
            if !(task.input_size > 0.0) {
                return Err(Tier2Error::Invalid(format!("NV {} uploads no data", nv.id)));
            }
            let s = self.traveled.get(&nv.id).copied().unwrap_or(0.0);
            if !(0.0..=range).contains(&s) {
                return Err(Tier2Error::Invalid(format!("NV {} traveled {s} m outside [0, {range}]", nv.id)));
            }
        }
        Ok(())
    }

    pub fn task(&self, nv: VehicleId) -> &SequentialTask {
        &self.tasks[&nv]
    }
}

/// How the per-RSU compute limit is applied across NVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateCpuMode {
    /// Each NV may use up to the RSU's full frequency; the aggregate is only
    /// reported.
    #[default]
    PerNvCap,
    /// Each NV is capped at `F_r / k`, `k` being the number of NVs that
    /// compute on RSU `r`.
    SharedCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tier2Options {
    /// Relative change below which the alternating loop stops.
    pub tolerance: f64,
    pub max_iters: usize,
    pub max_sweeps: usize,
    pub aggregate_cpu: AggregateCpuMode,
}

impl Default for Tier2Options {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 100,
            max_sweeps: 50,
            aggregate_cpu: AggregateCpuMode::PerNvCap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tier2Energy {
    pub nv_transmit: f64,
    pub wired: f64,
    pub rsu_compute: f64,
    pub weighted_total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RsuShare {
    pub compute_energy: f64,
    pub wired_energy: f64,
    /// Highest frequency this RSU uses for the NV, if it computes anything.
    pub peak_freq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NvAllocation {
    pub nv: VehicleId,
    pub split: SplitVector,
    /// Upload delay to the first RSU, s.
    pub tau: f64,
    /// Bandwidth in use, Hz.
    pub bandwidth: f64,
    /// Continuous optimum before rounding, Hz.
    pub continuous_bandwidth: f64,
    pub subchannels: Option<usize>,
    /// Frequency per subtask, Hz.
    pub freqs: Vec<f64>,
    pub lambda: f64,
    /// Upload delay sits at the configured cap.
    pub tau_max_active: bool,
    /// Upload delay is limited by the time left in the first RSU's range.
    pub mobility_active: bool,
    pub energy: Tier2Energy,
    pub per_rsu: Vec<RsuShare>,
    pub total_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NvFailure {
    pub nv: VehicleId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tier2Plan {
    pub allocations: Vec<NvAllocation>,
    /// Bandwidth multiplier of the last bandwidth step.
    pub xi: Option<f64>,
    pub objective: f64,
    /// Objective before subchannel rounding, when rounding was applied.
    pub continuous_objective: Option<f64>,
    pub iterations: usize,
    /// Objective after every outer iteration of the alternating loop.
    pub history: Vec<f64>,
    pub failures: Vec<NvFailure>,
    /// Last relative change when the alternating loop stopped at its
    /// iteration cap instead of converging.
    #[serde(default)]
    pub unconverged_residual: Option<f64>,
}

impl Tier2Plan {
    pub fn allocation(&self, nv: VehicleId) -> Option<&NvAllocation> {
        self.allocations.iter().find(|a| a.nv == nv)
    }

    pub fn splits(&self) -> BTreeMap<VehicleId, SplitVector> {
        self.allocations.iter().map(|a| (a.nv, a.split.clone())).collect()
    }

    fn recompute_objective(&mut self) {
        self.objective = self.allocations.iter().map(|a| a.energy.weighted_total).sum();
    }
}

/// Split-independent data of one NV.
#[derive(Debug, Clone)]
struct NvLink {
    id: VehicleId,
    weight: f64,
    gain: f64,
    bits: f64,
    deadline: f64,
    setup: f64,
    tau_max: f64,
    mobility: f64,
}

impl NvLink {
    fn new(instance: &Tier2Instance, nv: &Vehicle) -> Result<Self, Tier2Error> {
        let params = &instance.params;
        let task = instance.task(nv.id);
        let rsu1 = &instance.rsus[0];
        let gain = model::v2i_gain(
            rsu1.distance_to(&nv.position),
            params.v2i_pathloss_exponent,
            params.fading_for(Link::V2i { from: nv.id }),
        )?;
        let traveled = instance.traveled.get(&nv.id).copied().unwrap_or(0.0);
        let mobility = if nv.velocity > 0.0 {
            (rsu1.service_range - traveled) / nv.velocity - params.setup_delay
        } else {
            f64::INFINITY
        };
        Ok(Self {
            id: nv.id,
            weight: nv.weight,
            gain,
            bits: task.input_size,
            deadline: task.deadline,
            setup: params.setup_delay,
            tau_max: params.tau_cap(task.deadline),
            mobility,
        })
    }

    fn tau_cap(&self) -> f64 {
        self.tau_max.min(self.mobility)
    }
}

/// Delay and energy terms fixed by a split vector.
#[derive(Debug, Clone)]
struct SplitCosts {
    split: SplitVector,
    /// Setup plus wired forwarding delay, s.
    fixed_delay: f64,
    /// Unweighted wired energy charged to each RSU.
    wired: Vec<f64>,
    /// `(rsu index, workload)` per subtask, in order.
    work: Vec<(usize, f64)>,
}

impl SplitCosts {
    fn new(task: &SequentialTask, split: &SplitVector, params: &ChannelParams, setup: f64) -> Self {
        let r_count = split.rsu_count();
        let m_count = task.len();
        let mut fixed_delay = setup;
        let mut wired = vec![0.0; r_count];
        let mut work = Vec::with_capacity(m_count);
        #[allow(clippy::needless_range_loop)]
        for r in 0..r_count {
            for m in split.rsu_range(r, m_count) {
                work.push((r, task.workload(m)));
            }
            if let Some(bits) = split.forwarded_bits(r, task) {
                let (e, t) = model::wired_transfer(bits, params);
                wired[r] = e;
                fixed_delay += t;
            }
        }
        Self {
            split: split.clone(),
            fixed_delay,
            wired,
            work,
        }
    }

    fn min_delay(&self, caps: &[f64]) -> f64 {
        self.fixed_delay + self.work.iter().map(|&(r, c)| c / caps[r]).sum::<f64>()
    }

    fn uses_rsu(&self, r: usize) -> bool {
        self.work.iter().any(|&(q, _)| q == r)
    }
}

/// Everything one NV's closed-form solve needs.
struct NvContext<'a> {
    link: &'a NvLink,
    costs: &'a SplitCosts,
    rsus: &'a [Rsu],
    caps: &'a [f64],
    noise: f64,
}

impl NvContext<'_> {
    fn upload_delay(&self, bandwidth: f64, lambda: f64) -> Result<f64, NumericsError> {
        let tau = kkt::link_resource(self.link.bits, bandwidth, self.link.gain, self.link.weight, self.noise, lambda)?;
        Ok(tau.min(self.link.tau_cap()))
    }

    fn freq(&self, r: usize, lambda: f64) -> f64 {
        let rsu = &self.rsus[r];
        kkt::cpu_frequency(lambda, rsu.weight, rsu.kappa, self.caps[r])
    }

    fn delay(&self, bandwidth: f64, lambda: f64) -> f64 {
        let Ok(tau) = self.upload_delay(bandwidth, lambda) else {
            return f64::NAN;
        };
        let compute: f64 = self.costs.work.iter().map(|&(r, c)| c / self.freq(r, lambda)).sum();
        self.costs.fixed_delay + tau + compute
    }

    fn check(&self) -> Result<(), Tier2Error> {
        let link = self.link;
        if !(link.tau_cap() > 0.0) {
            return Err(Tier2Error::NvInfeasible {
                nv: link.id,
                constraint: "mobility",
                detail: format!("no time left to upload (cap {:.3e} s)", link.tau_cap()),
            });
        }
        let min_delay = self.costs.min_delay(self.caps);
        if !(min_delay < link.deadline) {
            return Err(Tier2Error::NvInfeasible {
                nv: link.id,
                constraint: "deadline",
                detail: format!("fastest delay {min_delay:.6e} s vs deadline {:.6e} s", link.deadline),
            });
        }
        Ok(())
    }

    /// Optimal upload delay and frequencies for a fixed bandwidth.
    fn solve(&self, bandwidth: f64) -> Result<NvAllocation, Tier2Error> {
        self.check()?;
        let deadline = self.link.deadline;
        let slack = |lambda: f64| deadline - self.delay(bandwidth, lambda);
        let bracket = expand_upper_bracket(slack, 0.0, LAMBDA_CAP)?;
        let lambda = bisect_nonnegative(slack, bracket.with_tolerance(1e-15), DEADLINE_RESIDUAL * deadline)?;
        let free_tau = kkt::link_resource(self.link.bits, bandwidth, self.link.gain, self.link.weight, self.noise, lambda)?;
        let tau = free_tau.min(self.link.tau_cap());
        let freqs: Vec<f64> = self.costs.work.iter().map(|&(r, _)| self.freq(r, lambda)).collect();
        let mut alloc = self.assemble(tau, bandwidth, freqs, lambda)?;
        alloc.tau_max_active = free_tau >= self.link.tau_max && self.link.tau_max <= self.link.mobility;
        alloc.mobility_active = free_tau >= self.link.mobility && self.link.mobility < self.link.tau_max;
        Ok(alloc)
    }

    fn assemble(&self, tau: f64, bandwidth: f64, freqs: Vec<f64>, lambda: f64) -> Result<NvAllocation, Tier2Error> {
        let transmit = model::transmit_energy(self.link.bits, tau, bandwidth, self.link.gain, self.noise)?;
        let mut per_rsu: Vec<RsuShare> = self
            .costs
            .wired
            .iter()
            .map(|&w| RsuShare {
                wired_energy: w,
                ..RsuShare::default()
            })
            .collect();
        let mut compute_delay = 0.0;
        for (&(r, c), &f) in self.costs.work.iter().zip(&freqs) {
            let rsu = &self.rsus[r];
            per_rsu[r].compute_energy += model::compute_energy(rsu.kappa, c, f)?;
            per_rsu[r].peak_freq = Some(per_rsu[r].peak_freq.map_or(f, |p: f64| p.max(f)));
            compute_delay += c / f;
        }
        let wired: f64 = per_rsu.iter().map(|s| s.wired_energy).sum();
        let rsu_compute: f64 = per_rsu.iter().map(|s| s.compute_energy).sum();
        let weighted_rsu: f64 = per_rsu
            .iter()
            .zip(self.rsus)
            .map(|(s, rsu)| rsu.weight * (s.wired_energy + s.compute_energy))
            .sum();
        Ok(NvAllocation {
            nv: self.link.id,
            split: self.costs.split.clone(),
            tau,
            bandwidth,
            continuous_bandwidth: bandwidth,
            subchannels: None,
            freqs,
            lambda,
            tau_max_active: false,
            mobility_active: false,
            energy: Tier2Energy {
                nv_transmit: transmit,
                wired,
                rsu_compute,
                weighted_total: self.link.weight * transmit + weighted_rsu,
            },
            per_rsu,
            total_delay: self.costs.fixed_delay + tau + compute_delay,
        })
    }

    /// Same schedule with a different bandwidth and unchanged delays.
    fn rebandwidth(&self, alloc: &NvAllocation, bandwidth: f64) -> Result<NvAllocation, Tier2Error> {
        let mut next = self.assemble(alloc.tau, bandwidth, alloc.freqs.clone(), alloc.lambda)?;
        next.tau_max_active = alloc.tau_max_active;
        next.mobility_active = alloc.mobility_active;
        Ok(next)
    }
}

/// Solver state shared by the public entry points.
struct Prepared<'a> {
    instance: &'a Tier2Instance,
    links: Vec<NvLink>,
}

impl<'a> Prepared<'a> {
    fn new(instance: &'a Tier2Instance) -> Result<Self, Tier2Error> {
        instance.validate()?;
        let links = instance
            .nvs
            .iter()
            .map(|nv| NvLink::new(instance, nv))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { instance, links })
    }

    fn costs(&self, idx: usize, split: &SplitVector) -> Result<SplitCosts, Tier2Error> {
        let nv = self.links[idx].id;
        let task = self.instance.task(nv);
        if !split.is_valid(task.len(), self.instance.rsus.len()) {
            return Err(Tier2Error::Invalid(format!("split {:?} is invalid for NV {nv}", split.0)));
        }
        Ok(SplitCosts::new(task, split, &self.instance.params, self.links[idx].setup))
    }

    /// Per-NV frequency caps per RSU.
    fn caps(&self, costs: &[SplitCosts], mode: AggregateCpuMode) -> Vec<f64> {
        let rsus = &self.instance.rsus;
        match mode {
            AggregateCpuMode::PerNvCap => rsus.iter().map(|r| r.max_cpu).collect(),
            AggregateCpuMode::SharedCap => rsus
                .iter()
                .enumerate()
                .map(|(r, rsu)| {
                    let users = costs.iter().filter(|c| c.uses_rsu(r)).count().max(1);
                    rsu.max_cpu / users as f64
                })
                .collect(),
        }
    }

    fn context<'b>(&'b self, idx: usize, costs: &'b SplitCosts, caps: &'b [f64]) -> NvContext<'b> {
        NvContext {
            link: &self.links[idx],
            costs,
            rsus: &self.instance.rsus,
            caps,
            noise: self.instance.params.noise_density,
        }
    }

    /// Bandwidth shares exhausting the total for fixed upload delays.
    fn share_bandwidth(&self, taus: &[f64]) -> Result<(Vec<f64>, f64), Tier2Error> {
        let total = self.instance.params.b_total;
        let noise = self.instance.params.noise_density;
        let demand = |xi: f64| -> f64 {
            self.links
                .iter()
                .zip(taus)
                .map(|(l, &tau)| kkt::link_resource(l.bits, tau, l.gain, l.weight, noise, xi).unwrap_or(f64::NAN))
                .sum()
        };
        let slack = |xi: f64| total - demand(xi);
        let bracket = expand_upper_bracket(slack, 0.0, LAMBDA_CAP)?;
        let xi = bisect_nonnegative(slack, bracket.with_tolerance(1e-15), BANDWIDTH_RESIDUAL * total)?;
        let mut shares: Vec<f64> = self
            .links
            .iter()
            .zip(taus)
            .map(|(l, &tau)| kkt::link_resource(l.bits, tau, l.gain, l.weight, noise, xi))
            .collect::<Result<_, _>>()?;
        let sum: f64 = shares.iter().sum();
        for s in shares.iter_mut() {
            *s *= total / sum;
        }
        Ok((shares, xi))
    }

    /// Alternating optimization for fixed splits.
    fn continuous(&self, costs: &[SplitCosts], options: &Tier2Options) -> Result<Tier2Plan, Tier2Error> {
        let plan = self.alternate(costs, options)?;
        match plan.unconverged_residual {
            Some(residual) => Err(Tier2Error::NoConvergence {
                iterations: plan.iterations,
                residual,
            }),
            None => Ok(plan),
        }
    }

    /// The alternating loop. At the iteration cap the last iterate is
    /// returned with `unconverged_residual` set; it is feasible and, the
    /// history being monotone, the best one seen.
    fn alternate(&self, costs: &[SplitCosts], options: &Tier2Options) -> Result<Tier2Plan, Tier2Error> {
        let n = self.links.len();
        let caps = self.caps(costs, options.aggregate_cpu);
        let contexts: Vec<NvContext<'_>> = (0..n).map(|i| self.context(i, &costs[i], &caps)).collect();
        for ctx in &contexts {
            ctx.check()?;
        }
        let total = self.instance.params.b_total;
        let mut bandwidth = vec![total / n as f64; n];
        let mut prev_taus: Option<Vec<f64>> = None;
        let mut history = Vec::new();
        let mut last_change = f64::INFINITY;
        let mut previous: Option<(Vec<NvAllocation>, f64)> = None;

        for iteration in 1..=options.max_iters.max(1) {
            let allocs = contexts
                .iter()
                .zip(&bandwidth)
                .map(|(ctx, &b)| ctx.solve(b))
                .collect::<Result<Vec<_>, _>>()?;
            let taus: Vec<f64> = allocs.iter().map(|a| a.tau).collect();
            if n == 1 {
                let mut plan = Tier2Plan {
                    allocations: allocs,
                    iterations: iteration,
                    ..Tier2Plan::default()
                };
                plan.recompute_objective();
                plan.history.push(plan.objective);
                return Ok(plan);
            }
            let (shares, multiplier) = self.share_bandwidth(&taus)?;
            let allocs = contexts
                .iter()
                .zip(&allocs)
                .zip(&shares)
                .map(|((ctx, a), &b)| ctx.rebandwidth(a, b))
                .collect::<Result<Vec<_>, _>>()?;
            let objective: f64 = allocs.iter().map(|a| a.energy.weighted_total).sum();
            // A step that fails to lower the objective is rounding noise at
            // the optimum; keep the previous iterate.
            if let (Some(&last), Some((prev_allocs, prev_xi))) = (history.last(), &previous) {
                if objective >= last {
                    let mut plan = Tier2Plan {
                        allocations: prev_allocs.clone(),
                        xi: Some(*prev_xi),
                        iterations: iteration - 1,
                        history,
                        ..Tier2Plan::default()
                    };
                    plan.recompute_objective();
                    return Ok(plan);
                }
            }
            history.push(objective);

            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            let mut change = bandwidth.iter().zip(&shares).map(|(a, b)| rel(*b, *a)).fold(0.0, f64::max);
            if let Some(prev) = &prev_taus {
                change = prev.iter().zip(&taus).map(|(a, b)| rel(*b, *a)).fold(change, f64::max);
            }
            last_change = change;
            previous = Some((allocs.clone(), multiplier));
            bandwidth = shares;
            prev_taus = Some(taus);
            if change < options.tolerance {
                let mut plan = Tier2Plan {
                    allocations: allocs,
                    xi: Some(multiplier),
                    iterations: iteration,
                    history,
                    ..Tier2Plan::default()
                };
                plan.recompute_objective();
                return Ok(plan);
            }
        }
        let (allocations, xi) = previous.expect("n > 1 ran at least one iteration");
        let mut plan = Tier2Plan {
            allocations,
            xi: Some(xi),
            iterations: options.max_iters.max(1),
            history,
            unconverged_residual: Some(last_change),
            ..Tier2Plan::default()
        };
        plan.recompute_objective();
        Ok(plan)
    }

    fn fixed_bandwidth(&self, costs: &[SplitCosts], bandwidth: &[f64], options: &Tier2Options) -> Result<Tier2Plan, Tier2Error> {
        let caps = self.caps(costs, options.aggregate_cpu);
        let mut allocations = Vec::with_capacity(self.links.len());
        let mut failures = Vec::new();
        for i in 0..self.links.len() {
            match self.context(i, &costs[i], &caps).solve(bandwidth[i]) {
                Ok(a) => allocations.push(a),
                // NVs are independent here, so a numerical failure such as
                // a rate overflow at tiny bandwidth only loses that NV
                Err(e) => failures.push(NvFailure {
                    nv: self.links[i].id,
                    reason: e.to_string(),
                }),
            }
        }
        let mut plan = Tier2Plan {
            allocations,
            failures,
            iterations: 1,
            ..Tier2Plan::default()
        };
        plan.recompute_objective();
        plan.history.push(plan.objective);
        Ok(plan)
    }

    fn discretize(&self, plan: &Tier2Plan, costs: &[SplitCosts], options: &Tier2Options) -> Result<Tier2Plan, Tier2Error> {
        let params = &self.instance.params;
        let count = params.num_subchannels;
        let n = plan.allocations.len();
        if n > count {
            return Err(Tier2Error::TooFewSubchannels { nvs: n, subchannels: count });
        }
        let caps = self.caps(costs, options.aggregate_cpu);
        let units: Vec<f64> = plan.allocations.iter().map(|a| a.bandwidth / params.b0).collect();
        let already_integral = units
            .iter()
            .all(|u| (u - u.round()).abs() <= 1e-9 * u.max(1.0) && u.round() >= 1.0);

        let mut lower: Vec<usize> = units.iter().map(|u| (u.floor() as usize).max(1)).collect();
        let mut upper: Vec<usize> = units.iter().zip(&lower).map(|(u, &l)| (u.ceil() as usize).max(l)).collect();
        if already_integral {
            lower = units.iter().map(|u| u.round() as usize).collect();
            upper = lower.clone();
        }
        // Forcing every share to at least one subchannel can overshoot; take
        // the excess from the shares with the largest fractional remainder.
        while lower.iter().sum::<usize>() > count {
            let (i, _) = lower
                .iter()
                .enumerate()
                .filter(|(_, &l)| l > 1)
                .max_by(|a, b| (units[a.0] - *a.1 as f64).total_cmp(&(units[b.0] - *b.1 as f64)).then(a.1.cmp(b.1)))
                .expect("n <= count leaves a reducible share");
            lower[i] -= 1;
            upper[i] = lower[i] + 1;
        }
        let needed = count - lower.iter().sum::<usize>();

        let cost_at = |i: usize, b: usize| -> (f64, Option<NvAllocation>) {
            let ctx = self.context(i, &costs[i], &caps);
            match ctx.solve(b as f64 * params.b0) {
                Ok(a) => (a.energy.weighted_total, Some(a)),
                Err(_) => (f64::INFINITY, None),
            }
        };
        let mut low_plans = Vec::with_capacity(n);
        let mut high_plans = Vec::with_capacity(n);
        for i in 0..n {
            low_plans.push(cost_at(i, lower[i]));
            high_plans.push(if upper[i] > lower[i] {
                cost_at(i, upper[i])
            } else {
                (f64::INFINITY, None)
            });
        }
        // The objective is a sum over NVs, so among the adjacent lattice
        // points on the hyperplane the best one rounds up exactly the
        // `needed` NVs that gain the most from it.
        let mut gains: Vec<(usize, f64)> = (0..n)
            .filter(|&i| upper[i] > lower[i])
            .map(|i| (i, low_plans[i].0 - high_plans[i].0))
            .collect();
        if gains.len() < needed {
            return Err(Tier2Error::Invalid("rounding cannot reach the subchannel total".into()));
        }
        gains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut round_up = vec![false; n];
        for &(i, _) in gains.iter().take(needed) {
            round_up[i] = true;
        }

        let mut allocations = Vec::with_capacity(n);
        for i in 0..n {
            let (b, chosen) = if round_up[i] {
                (upper[i], high_plans[i].1.clone())
            } else {
                (lower[i], low_plans[i].1.clone())
            };
            let mut alloc = chosen.ok_or_else(|| Tier2Error::NvInfeasible {
                nv: self.links[i].id,
                constraint: "subchannels",
                detail: format!("no feasible schedule with {b} subchannels"),
            })?;
            alloc.subchannels = Some(b);
            alloc.continuous_bandwidth = plan.allocations[i].bandwidth;
            allocations.push(alloc);
        }
        let mut out = Tier2Plan {
            allocations,
            xi: plan.xi,
            continuous_objective: Some(plan.objective),
            iterations: plan.iterations,
            history: plan.history.clone(),
            failures: plan.failures.clone(),
            objective: 0.0,
            unconverged_residual: plan.unconverged_residual,
        };
        out.recompute_objective();
        Ok(out)
    }
}

fn cost_table(prepared: &Prepared<'_>, splits: &BTreeMap<VehicleId, SplitVector>) -> Result<Vec<SplitCosts>, Tier2Error> {
    prepared
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let split = splits
                .get(&l.id)
                .ok_or_else(|| Tier2Error::Invalid(format!("no split for NV {}", l.id)))?;
            prepared.costs(i, split)
        })
        .collect()
}

/// Continuous optimum of upload delays, bandwidth shares and frequencies for
/// fixed split vectors.
pub fn solve_continuous(
    instance: &Tier2Instance,
    splits: &BTreeMap<VehicleId, SplitVector>,
    options: &Tier2Options,
) -> Result<Tier2Plan, Tier2Error> {
    let prepared = Prepared::new(instance)?;
    let costs = cost_table(&prepared, splits)?;
    prepared.continuous(&costs, options)
}

/// Optimal upload delays and frequencies when both splits and bandwidths
/// are given (bandwidths in NV order). NVs are independent here, so any
/// that cannot meet their constraints are listed in `failures` and the rest
/// are still planned.
pub fn solve_with_bandwidth(
    instance: &Tier2Instance,
    splits: &BTreeMap<VehicleId, SplitVector>,
    bandwidth: &[f64],
    options: &Tier2Options,
) -> Result<Tier2Plan, Tier2Error> {
    let prepared = Prepared::new(instance)?;
    if bandwidth.len() != prepared.links.len() || bandwidth.iter().any(|b| !(*b > 0.0)) {
        return Err(Tier2Error::Invalid("one positive bandwidth per NV is required".into()));
    }
    let costs = cost_table(&prepared, splits)?;
    prepared.fixed_bandwidth(&costs, bandwidth, options)
}

/// Rounds a continuous plan's bandwidths to whole subchannels, re-solving
/// each NV's delays and frequencies for its rounded bandwidth.
pub fn discretize_subchannels(
    plan: &Tier2Plan,
    instance: &Tier2Instance,
    options: &Tier2Options,
) -> Result<Tier2Plan, Tier2Error> {
    let prepared = Prepared::new(instance)?;
    let splits = plan.splits();
    if splits.len() != prepared.links.len() {
        return Err(Tier2Error::Invalid("plan and instance cover different NVs".into()));
    }
    let costs = cost_table(&prepared, &splits)?;
    let ordered = Tier2Plan {
        allocations: prepared
            .links
            .iter()
            .map(|l| plan.allocation(l.id).cloned().expect("checked above"))
            .collect(),
        ..plan.clone()
    };
    prepared.discretize(&ordered, &costs, options)
}

/// Whether `split` lets NV `nv` meet its deadline with every RSU at full
/// speed and some upload time left before it leaves the first RSU.
pub fn split_feasible(instance: &Tier2Instance, nv: &Vehicle, split: &SplitVector) -> bool {
    let task = instance.task(nv.id);
    if !split.is_valid(task.len(), instance.rsus.len()) {
        return false;
    }
    let Ok(link) = NvLink::new(instance, nv) else {
        return false;
    };
    let caps: Vec<f64> = instance.rsus.iter().map(|r| r.max_cpu).collect();
    let costs = SplitCosts::new(task, split, &instance.params, link.setup);
    link.tau_cap() > 0.0 && costs.min_delay(&caps) < link.deadline
}

/// Split vector that spreads the workload over RSUs in proportion to their
/// maximum frequencies.
pub fn balanced_split(task: &SequentialTask, rsus: &[Rsu]) -> SplitVector {
    let m_count = task.len();
    let total = task.total_workload();
    let capacity: f64 = rsus.iter().map(|r| r.max_cpu).sum();
    let mut prefix = vec![0.0; m_count + 1];
    for m in 1..=m_count {
        prefix[m] = prefix[m - 1] + task.workload(m);
    }
    let mut split = vec![1];
    let mut acc = 0.0;
    for rsu in &rsus[..rsus.len() - 1] {
        acc += rsu.max_cpu;
        let target = total * acc / capacity;
        let from = *split.last().unwrap();
        // next boundary b: RSUs so far run subtasks 1..b, i.e. prefix[b - 1]
        let best = (from..=m_count + 1)
            .min_by(|&a, &b| {
                (prefix[a - 1] - target)
                    .abs()
                    .total_cmp(&(prefix[b - 1] - target).abs())
            })
            .unwrap();
        split.push(best);
    }
    SplitVector(split)
}

/// Equal number of subtasks per RSU, earlier RSUs taking the remainder.
pub fn equal_split(subtasks: usize, rsus: usize) -> SplitVector {
    SplitVector((0..rsus).map(|r| 1 + (r * subtasks).div_ceil(rsus)).collect())
}

/// Continuous and rounded solutions of the full RSU-tier problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier2Solution {
    pub continuous: Tier2Plan,
    pub integer: Tier2Plan,
}

/// Full RSU-tier solve: block-coordinate search over split vectors and the
/// continuous allocation, followed by subchannel rounding.
///
/// An alternating loop that reaches its iteration cap does not abort the
/// search; the returned plans carry `unconverged_residual` instead.
pub fn solve_both(instance: &Tier2Instance, options: &Tier2Options) -> Result<Tier2Solution, Tier2Error> {
    instance.validate()?;
    let mut failures = Vec::new();
    let mut active = Vec::new();
    let r_count = instance.rsus.len();
    let caps: Vec<f64> = instance.rsus.iter().map(|r| r.max_cpu).collect();
    for nv in &instance.nvs {
        let link = NvLink::new(instance, nv)?;
        let task = instance.task(nv.id);
        let any = enumerate_splits(task.len(), r_count).any(|s| {
            let costs = SplitCosts::new(task, &s, &instance.params, link.setup);
            costs.min_delay(&caps) < link.deadline
        });
        if !any {
            failures.push(NvFailure {
                nv: nv.id,
                reason: "no split vector meets the deadline".into(),
            });
        } else if !(link.tau_cap() > 0.0) {
            failures.push(NvFailure {
                nv: nv.id,
                reason: "leaves the first RSU's range before uploading".into(),
            });
        } else {
            active.push(nv.clone());
        }
    }
    if active.is_empty() {
        let empty = Tier2Plan {
            failures,
            ..Tier2Plan::default()
        };
        return Ok(Tier2Solution {
            continuous: empty.clone(),
            integer: empty,
        });
    }
    let sub = Tier2Instance {
        nvs: active,
        ..instance.clone()
    };
    let prepared = Prepared::new(&sub)?;
    let n = prepared.links.len();

    let mut choices: Vec<Vec<SplitCosts>> = Vec::with_capacity(n);
    let mut current: Vec<usize> = Vec::with_capacity(n);
    for (i, link) in prepared.links.iter().enumerate() {
        let task = sub.task(link.id);
        let options_i: Vec<SplitCosts> = enumerate_splits(task.len(), r_count)
            .map(|s| SplitCosts::new(task, &s, &sub.params, link.setup))
            .filter(|c| c.min_delay(&caps) < link.deadline)
            .collect();
        let preferred = balanced_split(task, &sub.rsus);
        let start = options_i
            .iter()
            .position(|c| c.split == preferred)
            .unwrap_or_else(|| {
                (0..options_i.len())
                    .min_by(|&a, &b| options_i[a].min_delay(&caps).total_cmp(&options_i[b].min_delay(&caps)))
                    .unwrap()
            });
        debug_assert!(prepared.costs(i, &options_i[start].split).is_ok());
        choices.push(options_i);
        current.push(start);
    }

    let mut best: Option<Tier2Plan> = None;
    let mut best_costs: Vec<SplitCosts> = Vec::new();
    let mut total_iterations = 0;
    for _sweep in 0..options.max_sweeps.max(1) {
        let costs: Vec<SplitCosts> = current.iter().zip(&choices).map(|(&k, c)| c[k].clone()).collect();
        let plan = prepared.alternate(&costs, options)?;
        total_iterations += plan.iterations;
        let improved = best.as_ref().is_none_or(|b| plan.objective < b.objective);
        if improved {
            best = Some(plan.clone());
            best_costs = costs.clone();
        }
        let shared_caps = prepared.caps(&costs, options.aggregate_cpu);
        let mut changed = false;
        for i in 0..n {
            let bandwidth = plan.allocations[i].bandwidth;
            let current_cost = plan.allocations[i].energy.weighted_total;
            let mut best_k = current[i];
            let mut best_cost = current_cost;
            for (k, option) in choices[i].iter().enumerate() {
                if k == current[i] {
                    continue;
                }
                let Ok(alloc) = prepared.context(i, option, &shared_caps).solve(bandwidth) else {
                    continue;
                };
                let cost = alloc.energy.weighted_total;
                if cost < best_cost * (1.0 - 1e-12) {
                    best_cost = cost;
                    best_k = k;
                }
            }
            if best_k != current[i] {
                current[i] = best_k;
                changed = true;
            }
        }
        if !changed || !improved {
            break;
        }
    }
    let mut continuous = best.expect("at least one sweep ran");
    continuous.iterations = total_iterations;
    continuous.failures = failures.clone();
    let mut integer = prepared.discretize(&continuous, &best_costs, options)?;
    integer.failures = failures;
    Ok(Tier2Solution { continuous, integer })
}

/// Full RSU-tier solve returning the subchannel-rounded plan; its
/// `continuous_objective` records the value before rounding.
pub fn solve(instance: &Tier2Instance, options: &Tier2Options) -> Result<Tier2Plan, Tier2Error> {
    solve_both(instance, options).map(|s| s.integer)
}

/// Checks split ordering, deadlines, mobility, upload delay bounds,
/// bandwidth/subchannel budgets, per-RSU frequency caps (individually and in
/// aggregate) and that RSUs without work for an NV carry no cost for it.
pub fn validate(plan: &Tier2Plan, instance: &Tier2Instance) -> ConstraintReport {
    let mut report = ConstraintReport::default();
    let params = &instance.params;
    let r_count = instance.rsus.len();
    let rsu1 = &instance.rsus[0];
    let mut aggregate = vec![0.0; r_count];

    for alloc in &plan.allocations {
        let Some(nv) = instance.nvs.iter().find(|v| v.id == alloc.nv) else {
            report.push("unknown_nv", Some(alloc.nv), false, 0.0, "allocation for an NV outside the instance");
            continue;
        };
        let task = instance.task(nv.id);
        let m_count = task.len();
        let split_ok = alloc.split.is_valid(m_count, r_count);
        report.push(
            "split_order",
            Some(nv.id),
            split_ok,
            0.0,
            format!("1 = m_1 <= ... <= m_R <= {}: {:?}", m_count + 1, alloc.split.0),
        );
        if !split_ok || alloc.freqs.len() != m_count {
            continue;
        }

        let costs = SplitCosts::new(task, &alloc.split, params, params.setup_delay);
        let compute: f64 = costs.work.iter().zip(&alloc.freqs).map(|(&(_, c), f)| c / f).sum();
        report.at_most("deadline", Some(nv.id), costs.fixed_delay + alloc.tau + compute, task.deadline, DELAY_SLACK);

        let traveled = instance.traveled.get(&nv.id).copied().unwrap_or(0.0);
        if nv.velocity > 0.0 {
            let exit = (rsu1.service_range - traveled) / nv.velocity;
            report.at_most("mobility", Some(nv.id), params.setup_delay + alloc.tau, exit, DELAY_SLACK);
        }
        let tau_max = params.tau_cap(task.deadline);
        report.push(
            "upload_delay",
            Some(nv.id),
            alloc.tau > 0.0 && alloc.tau <= tau_max + DELAY_SLACK,
            tau_max - alloc.tau,
            format!("0 < {:.6e} <= {:.6e}", alloc.tau, tau_max),
        );

        for (&(r, _), &f) in costs.work.iter().zip(&alloc.freqs) {
            let cap = instance.rsus[r].max_cpu;
            report.push(
                "rsu_frequency",
                Some(instance.rsus[r].id),
                f > 0.0 && f <= cap * (1.0 + 1e-12),
                cap - f,
                format!("NV {}: {f:.6e} <= {cap:.6e}", nv.id),
            );
        }
        #[allow(clippy::needless_range_loop)]
        for r in 0..r_count {
            if let Some(share) = alloc.per_rsu.get(r) {
                if let Some(f) = share.peak_freq {
                    aggregate[r] += f;
                }
                let idle = alloc.split.is_idle(r, m_count);
                let forwarding = alloc.split.is_forwarding_only(r, m_count);
                if idle || forwarding {
                    let residual = if idle {
                        share.compute_energy + share.wired_energy
                    } else {
                        share.compute_energy
                    };
                    report.push(
                        "rsu_role_costs",
                        Some(instance.rsus[r].id),
                        residual == 0.0,
                        -residual,
                        format!(
                            "NV {}: {} RSU carries {residual:.3e} J",
                            nv.id,
                            if idle { "idle" } else { "forwarding-only" }
                        ),
                    );
                }
            }
        }
    }

    let all_integer = !plan.allocations.is_empty() && plan.allocations.iter().all(|a| a.subchannels.is_some());
    if all_integer {
        let used: usize = plan.allocations.iter().filter_map(|a| a.subchannels).sum();
        report.push(
            "subchannels",
            None,
            used <= params.num_subchannels && plan.allocations.iter().all(|a| a.subchannels >= Some(1)),
            params.num_subchannels as f64 - used as f64,
            format!("{used} <= {} with every b_n >= 1", params.num_subchannels),
        );
    } else {
        let used: f64 = plan.allocations.iter().map(|a| a.bandwidth).sum();
        report.push(
            "bandwidth",
            None,
            used <= params.b_total * (1.0 + 1e-6) && plan.allocations.iter().all(|a| a.bandwidth > 0.0),
            params.b_total - used,
            format!("{used:.6e} <= {:.6e} with every B_n > 0", params.b_total),
        );
    }
    for (r, rsu) in instance.rsus.iter().enumerate() {
        let excess = aggregate[r] - rsu.max_cpu;
        report.push(
            "aggregate_cpu",
            Some(rsu.id),
            excess <= rsu.max_cpu * 1e-12,
            -excess,
            format!("sum of NV frequencies {:.6e} vs {:.6e}", aggregate[r], rsu.max_cpu),
        );
    }
    report
}
