//! Vehicle tier: energy-optimal cooperation of one needing vehicle (NV) and
//! its helping vehicle (HV).
//!
//! For a fixed split index the problem is convex. The NV runs subtasks
//! `1..split`, ships the intermediate data over V2V, and the HV runs
//! `split..=M`. The optimal V2V delay and every CPU frequency are closed-form
//! functions of the deadline multiplier `lambda`
//! ([`kkt::link_resource`], [`kkt::cpu_frequency`]). Total delay is decreasing
//! in `lambda`, so bisection finds the multiplier that makes the deadline
//! tight. The split index itself is chosen by exhaustive search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintReport, DELAY_SLACK};
use crate::kkt;
use crate::model::{self, ChannelParams, Link, ModelError, SequentialTask, Vehicle, VehicleId};
use crate::numerics::{bisect_nonnegative, expand_upper_bracket, NumericsError};

/// Upper limit for the multiplier search. Multipliers scale with
/// `kappa * f^3` and the transmission term grows like `exp(d)`, so tight
/// deadlines push them far past everyday magnitudes.
pub const LAMBDA_CAP: f64 = 1e250;

/// Deadline tightness target, relative to the deadline.
pub const DEADLINE_RESIDUAL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Tier1Error {
    #[error("split {split} outside 1..={len}")]
    InvalidSplit { split: usize, len: usize },
    #[error("split {split} cannot meet the deadline: fastest delay {min_delay:.6e} s vs {deadline:.6e} s")]
    Infeasible { split: usize, min_delay: f64, deadline: f64 },
    #[error("no split of NV {0}'s task is feasible")]
    AllSplitsInfeasible(VehicleId),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Executor {
    Nv,
    Hv,
}

/// One V2V hand-over of intermediate data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    /// The subtask (1-based) whose input is sent.
    pub before_subtask: usize,
    pub from: Executor,
    pub bits: f64,
    pub tau: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tier1Energy {
    pub nv_transmit: f64,
    /// Only nonzero for back-and-forth schedules.
    pub hv_transmit: f64,
    pub nv_compute: f64,
    pub hv_compute: f64,
    pub weighted_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier1Plan {
    pub nv: VehicleId,
    pub hv: VehicleId,
    /// First subtask run on the HV.
    pub split: usize,
    /// Executor of every subtask, in order.
    pub assignment: Vec<Executor>,
    pub transfers: Vec<Transfer>,
    /// Total V2V airtime, s.
    pub tau_v2v: f64,
    /// CPU frequency per subtask, Hz.
    pub freqs: Vec<f64>,
    /// Deadline multiplier; `None` for fixed-frequency schedules.
    pub lambda: Option<f64>,
    /// Whether each subtask runs at its executor's maximum frequency.
    pub cpu_capped: Vec<bool>,
    pub energy: Tier1Energy,
    pub total_delay: f64,
}

impl Tier1Plan {
    pub fn compute_delay(&self, task: &SequentialTask) -> f64 {
        task.subtasks
            .iter()
            .zip(&self.freqs)
            .map(|(s, f)| s.workload / f)
            .sum()
    }
}

/// Precomputed link and device data for one NV–HV pair.
#[derive(Debug, Clone, Copy)]
pub struct PairContext<'a> {
    pub nv: &'a Vehicle,
    pub hv: &'a Vehicle,
    pub task: &'a SequentialTask,
    /// Linear V2V gain including fading.
    pub gain: f64,
    pub bandwidth: f64,
    pub noise: f64,
}

impl<'a> PairContext<'a> {
    pub fn new(
        nv: &'a Vehicle,
        hv: &'a Vehicle,
        task: &'a SequentialTask,
        params: &ChannelParams,
    ) -> Result<Self, Tier1Error> {
        task.validate()?;
        nv.validate()?;
        hv.validate()?;
        if !(nv.weight > 0.0) {
            return Err(Tier1Error::Invalid(format!("NV {} needs a positive weight", nv.id)));
        }
        let dist = nv.position.distance(&hv.position);
        let fading = params.fading_for(Link::V2v { from: nv.id, to: hv.id });
        let gain = model::v2v_gain(dist, fading)?;
        Ok(Self {
            nv,
            hv,
            task,
            gain,
            bandwidth: params.b_v2v,
            noise: params.noise_density,
        })
    }

    pub fn executor(&self, which: Executor) -> &'a Vehicle {
        match which {
            Executor::Nv => self.nv,
            Executor::Hv => self.hv,
        }
    }

    fn check_split(&self, split: usize) -> Result<(), Tier1Error> {
        if split == 0 || split > self.task.len() {
            return Err(Tier1Error::InvalidSplit { split, len: self.task.len() });
        }
        Ok(())
    }

    /// Delay with every subtask at full speed and instantaneous transfer.
    pub fn min_delay(&self, split: usize) -> f64 {
        let local = self.task.workload_range(1, split) / self.nv.max_cpu;
        let remote = self.task.workload_range(split, self.task.len() + 1) / self.hv.max_cpu;
        local + remote
    }

    fn owner(&self, split: usize, m: usize) -> &'a Vehicle {
        if m < split {
            self.nv
        } else {
            self.hv
        }
    }

    fn tau_at(&self, split: usize, lambda: f64) -> Result<f64, NumericsError> {
        kkt::link_resource(
            self.task.data_into(split),
            self.bandwidth,
            self.gain,
            self.nv.weight,
            self.noise,
            lambda,
        )
    }

    fn freq_at(&self, split: usize, m: usize, lambda: f64) -> f64 {
        let dev = self.owner(split, m);
        kkt::cpu_frequency(lambda, dev.weight, dev.kappa, dev.max_cpu)
    }

    fn delay_at(&self, split: usize, lambda: f64) -> f64 {
        let tau = match self.tau_at(split, lambda) {
            Ok(t) => t,
            Err(_) => return f64::NAN,
        };
        let compute: f64 = (1..=self.task.len())
            .map(|m| self.task.workload(m) / self.freq_at(split, m, lambda))
            .sum();
        tau + compute
    }

    /// Energy and delay of an arbitrary schedule with given transfer delays
    /// and frequencies.
    pub fn evaluate(
        &self,
        assignment: &[Executor],
        transfer_taus: &[f64],
        freqs: &[f64],
        lambda: Option<f64>,
    ) -> Result<Tier1Plan, Tier1Error> {
        let m_count = self.task.len();
        if assignment.len() != m_count || freqs.len() != m_count {
            return Err(Tier1Error::Invalid("schedule length does not match the task".into()));
        }
        let hand_overs = hand_overs(assignment);
        if hand_overs.len() != transfer_taus.len() {
            return Err(Tier1Error::Invalid("one delay is needed per hand-over".into()));
        }
        let mut energy = Tier1Energy::default();
        let mut transfers = Vec::with_capacity(hand_overs.len());
        for (&(before, from), &tau) in hand_overs.iter().zip(transfer_taus) {
            let bits = self.task.data_into(before);
            let e = if bits == 0.0 {
                0.0
            } else {
                model::transmit_energy(bits, tau, self.bandwidth, self.gain, self.noise)?
            };
            match from {
                Executor::Nv => energy.nv_transmit += e,
                Executor::Hv => energy.hv_transmit += e,
            }
            transfers.push(Transfer { before_subtask: before, from, bits, tau, energy: e });
        }
        let mut compute_delay = 0.0;
        let mut cpu_capped = Vec::with_capacity(m_count);
        for (m, (&who, &f)) in assignment.iter().zip(freqs).enumerate() {
            let dev = self.executor(who);
            let c = self.task.workload(m + 1);
            compute_delay += model::compute_delay(c, f)?;
            let e = model::compute_energy(dev.kappa, c, f)?;
            match who {
                Executor::Nv => energy.nv_compute += e,
                Executor::Hv => energy.hv_compute += e,
            }
            cpu_capped.push(f >= dev.max_cpu * (1.0 - 1e-12));
        }
        energy.weighted_total = self.nv.weight * (energy.nv_transmit + energy.nv_compute)
            + self.hv.weight * (energy.hv_transmit + energy.hv_compute);
        let tau_v2v: f64 = transfer_taus.iter().sum();
        Ok(Tier1Plan {
            nv: self.nv.id,
            hv: self.hv.id,
            split: assignment.iter().position(|e| *e == Executor::Hv).map_or(m_count + 1, |p| p + 1),
            assignment: assignment.to_vec(),
            transfers,
            tau_v2v,
            freqs: freqs.to_vec(),
            lambda,
            cpu_capped,
            energy,
            total_delay: tau_v2v + compute_delay,
        })
    }
}

/// `(subtask, sender)` for every point where the executor changes; the first
/// subtask counts as a hand-over from the NV when the HV runs it.
pub fn hand_overs(assignment: &[Executor]) -> Vec<(usize, Executor)> {
    let mut out = Vec::new();
    let mut holder = Executor::Nv;
    for (i, &who) in assignment.iter().enumerate() {
        if who != holder {
            out.push((i + 1, holder));
            holder = who;
        }
    }
    out
}

/// Executors for a single-split schedule.
pub fn split_assignment(len: usize, split: usize) -> Vec<Executor> {
    (1..=len)
        .map(|m| if m < split { Executor::Nv } else { Executor::Hv })
        .collect()
}

/// Whether `split` can meet the deadline at all: full-speed compute must
/// finish strictly before the deadline, leaving some time to transmit.
pub fn feasible(nv: &Vehicle, hv: &Vehicle, task: &SequentialTask, split: usize) -> bool {
    if split == 0 || split > task.len() {
        return false;
    }
    let local = task.workload_range(1, split) / nv.max_cpu;
    let remote = task.workload_range(split, task.len() + 1) / hv.max_cpu;
    local + remote < task.deadline
}

/// Optimal V2V delay and frequencies for a fixed split, with the deadline
/// met with equality.
pub fn solve_fixed_split(
    nv: &Vehicle,
    hv: &Vehicle,
    task: &SequentialTask,
    split: usize,
    params: &ChannelParams,
) -> Result<Tier1Plan, Tier1Error> {
    let ctx = PairContext::new(nv, hv, task, params)?;
    solve_split_in(&ctx, split)
}

pub(crate) fn solve_split_in(ctx: &PairContext<'_>, split: usize) -> Result<Tier1Plan, Tier1Error> {
    ctx.check_split(split)?;
    let deadline = ctx.task.deadline;
    if !feasible(ctx.nv, ctx.hv, ctx.task, split) {
        return Err(Tier1Error::Infeasible {
            split,
            min_delay: ctx.min_delay(split),
            deadline,
        });
    }
    let slack = |lambda: f64| deadline - ctx.delay_at(split, lambda);
    let bracket = expand_upper_bracket(slack, 0.0, LAMBDA_CAP)?;
    let lambda = bisect_nonnegative(
        slack,
        bracket.with_tolerance(1e-15),
        DEADLINE_RESIDUAL * deadline,
    )?;

    let tau = ctx.tau_at(split, lambda)?;
    let freqs: Vec<f64> = (1..=ctx.task.len())
        .map(|m| ctx.freq_at(split, m, lambda))
        .collect();
    let assignment = split_assignment(ctx.task.len(), split);
    ctx.evaluate(&assignment, &[tau], &freqs, Some(lambda))
}

/// Best plan over all split indices; ties go to the smaller split.
pub fn solve(
    nv: &Vehicle,
    hv: &Vehicle,
    task: &SequentialTask,
    params: &ChannelParams,
) -> Result<Tier1Plan, Tier1Error> {
    let ctx = PairContext::new(nv, hv, task, params)?;
    let mut best: Option<Tier1Plan> = None;
    for split in 1..=task.len() {
        let Ok(plan) = solve_split_in(&ctx, split) else {
            continue;
        };
        if best
            .as_ref()
            .is_none_or(|b| plan.energy.weighted_total < b.energy.weighted_total)
        {
            best = Some(plan);
        }
    }
    best.ok_or(Tier1Error::AllSplitsInfeasible(nv.id))
}

/// Every feasible split's optimal plan, in split order.
pub fn solve_all_splits(
    nv: &Vehicle,
    hv: &Vehicle,
    task: &SequentialTask,
    params: &ChannelParams,
) -> Result<Vec<Result<Tier1Plan, Tier1Error>>, Tier1Error> {
    let ctx = PairContext::new(nv, hv, task, params)?;
    Ok((1..=task.len()).map(|s| solve_split_in(&ctx, s)).collect())
}

/// Checks split range, deadline, nonnegative V2V delay and per-device
/// frequency caps for any vehicle-tier plan.
pub fn validate(plan: &Tier1Plan, nv: &Vehicle, hv: &Vehicle, task: &SequentialTask) -> ConstraintReport {
    let mut report = ConstraintReport::default();
    let m_count = task.len();
    let single_split = plan.assignment == split_assignment(m_count, plan.split);
    if single_split {
        report.push(
            "split_range",
            Some(nv.id),
            plan.split >= 1 && plan.split <= m_count,
            0.0,
            format!("1 <= {} <= {m_count}", plan.split),
        );
    } else {
        report.push(
            "split_range",
            Some(nv.id),
            plan.assignment.len() == m_count,
            0.0,
            "multi-hand-over schedule",
        );
    }

    let compute: f64 = task
        .subtasks
        .iter()
        .zip(&plan.freqs)
        .map(|(s, f)| s.workload / f)
        .sum();
    let airtime: f64 = plan.transfers.iter().map(|t| t.tau).sum();
    report.at_most("deadline", Some(nv.id), compute + airtime, task.deadline, DELAY_SLACK);

    let min_tau = plan.transfers.iter().map(|t| t.tau).fold(f64::INFINITY, f64::min);
    let tau_ok = plan.transfers.iter().all(|t| t.tau >= 0.0 && (t.tau > 0.0 || t.bits == 0.0));
    report.push(
        "v2v_delay_nonnegative",
        Some(nv.id),
        tau_ok,
        if min_tau.is_finite() { min_tau } else { 0.0 },
        "tau >= 0 (positive whenever data moves)",
    );

    for (m, (who, f)) in plan.assignment.iter().zip(&plan.freqs).enumerate() {
        let (name, dev) = match who {
            Executor::Nv => ("nv_frequency", nv),
            Executor::Hv => ("hv_frequency", hv),
        };
        let ok = *f > 0.0 && *f <= dev.max_cpu * (1.0 + 1e-12);
        report.push(
            name,
            Some(dev.id),
            ok,
            dev.max_cpu - f,
            format!("0 < f_{} = {f:.6e} <= {:.6e}", m + 1, dev.max_cpu),
        );
    }
    report
}
