//! Per-seed protocols of the figure experiments and the custom pipeline.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SimConfig;
use super::{ExperimentId, HarnessError, Method, ResultRow, SweepSpec, CUSTOM_PARAMS};
use crate::baselines::{self, PolicyId};
use crate::matching;
use crate::model::{ChannelParams, Link, LinkFading, Position, Role, SequentialTask, Vehicle, VehicleId};
use crate::scenario::{self, Scenario, ScenarioConfig};
use crate::tier1::{self, Tier1Plan};
use crate::tier2::{self, Tier2Instance, Tier2Plan};

/// NVs per replicated cohort in the NV-count sweep.
pub(crate) const FIG7_COHORT: usize = 2;
/// Id offset between copies of a replicated cohort.
const CLONE_ID_STRIDE: VehicleId = 1000;
/// Stream family of the random split draws in the subtask-count sweep.
const FIG4_STREAM_BASE: u64 = 1 << 40;

pub(crate) fn check_spec(spec: &SweepSpec) -> Result<(), HarnessError> {
    use Method::*;
    let bad = |m: String| Err(HarnessError::Spec(format!("{}: {m}", spec.experiment)));
    let tier1_method = |m: Method| matches!(m, Proposed) || matches!(m, Baseline(p) if p.is_tier1());
    let tier2_method = |m: Method| {
        matches!(m, Proposed | ProposedContinuous) || matches!(m, Baseline(p) if !p.is_tier1())
    };
    let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0);
    let whole = |v: &[f64]| v.iter().all(|x| *x >= 1.0 && x.fract() == 0.0);
    let (param, aux, methods_ok): (&str, Option<&str>, bool) = match spec.experiment {
        ExperimentId::Fig3 => ("deadline_s", None, spec.methods.iter().all(|m| tier1_method(*m))),
        ExperimentId::Fig4 => (
            "subtasks",
            None,
            spec.methods.iter().all(|m| matches!(m, Proposed | EqualSplit | RandomSplit)),
        ),
        ExperimentId::Fig5 => ("b_v2v_mhz", Some("distance_m"), spec.methods.iter().all(|m| tier1_method(*m))),
        ExperimentId::Fig6 => ("nv_cpu_ghz", Some("nv_kappa"), spec.methods.iter().all(|m| tier1_method(*m))),
        ExperimentId::Fig7 => ("nvs", None, spec.methods.iter().all(|m| tier2_method(*m))),
        ExperimentId::Fig8 => ("b_total_mhz", Some("deadline_s"), spec.methods.iter().all(|m| tier2_method(*m))),
        ExperimentId::Fig9 => ("b0_mhz", None, spec.methods.iter().all(|m| tier2_method(*m))),
        ExperimentId::Custom => {
            if !CUSTOM_PARAMS.contains(&spec.param.as_str()) {
                return bad(format!("cannot sweep '{}'; choose one of {CUSTOM_PARAMS:?}", spec.param));
            }
            if let Some(a) = &spec.aux_param {
                if !CUSTOM_PARAMS.contains(&a.as_str()) || *a == spec.param {
                    return bad(format!("cannot cross with '{a}'"));
                }
            }
            if spec.methods.iter().any(|m| matches!(m, EqualSplit | RandomSplit)) {
                return bad("EQUAL_SPLIT and RANDOM_SPLIT only apply to fig4".into());
            }
            if !positive(&spec.values) || !positive(&spec.aux_values) {
                return bad("values must be positive".into());
            }
            return Ok(());
        }
    };
    if spec.param != param {
        return bad(format!("swept parameter must be '{param}'"));
    }
    match (&spec.aux_param, aux) {
        (None, _) => {}
        (Some(a), Some(expected)) if a == expected => {}
        (Some(a), _) => return bad(format!("cannot cross with '{a}'")),
    }
    if !methods_ok {
        return bad("method does not apply to this experiment".into());
    }
    if !positive(&spec.values) || !positive(&spec.aux_values) {
        return bad("values must be positive".into());
    }
    match spec.experiment {
        ExperimentId::Fig4 if !whole(&spec.values) => bad("subtask counts must be whole numbers".into()),
        ExperimentId::Fig7 if !whole(&spec.values) || spec.values.iter().any(|v| !(*v as usize).is_multiple_of(FIG7_COHORT)) => {
            bad(format!("NV counts must be multiples of {FIG7_COHORT}"))
        }
        _ => Ok(()),
    }
}

pub(crate) fn run_seed(spec: &SweepSpec, config: &SimConfig, seed: u64) -> Vec<ResultRow> {
    let ctx = Ctx { spec, config, seed };
    match spec.experiment {
        ExperimentId::Fig3 => ctx.fig3(),
        ExperimentId::Fig4 => ctx.fig4(),
        ExperimentId::Fig5 => ctx.fig5(),
        ExperimentId::Fig6 => ctx.fig6(),
        ExperimentId::Fig7 => ctx.fig7(),
        ExperimentId::Fig8 => ctx.fig8(),
        ExperimentId::Fig9 => ctx.fig9(),
        ExperimentId::Custom => ctx.custom(),
    }
}

/// Outcome of planning one task.
#[derive(Debug, Clone, Copy)]
struct Cell {
    energy: f64,
    delay: f64,
}

impl From<&Tier1Plan> for Cell {
    fn from(p: &Tier1Plan) -> Self {
        Cell {
            energy: p.energy.weighted_total,
            delay: p.total_delay,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    energy: f64,
    delay: f64,
    considered: usize,
    served: usize,
    infeasible: usize,
    iterations: usize,
}

impl Stats {
    fn add(&mut self, cell: Option<Cell>) {
        match cell {
            Some(c) => {
                self.energy += c.energy;
                self.delay += c.delay;
                self.served += 1;
            }
            None => self.infeasible += 1,
        }
    }

    fn add_plan(&mut self, plan: &Tier2Plan) {
        for a in &plan.allocations {
            self.add(Some(Cell {
                energy: a.energy.weighted_total,
                delay: a.total_delay,
            }));
        }
        self.infeasible += plan.failures.len();
        self.iterations += plan.iterations;
    }

    fn mean(&self, total: f64) -> f64 {
        if self.served == 0 {
            f64::NAN
        } else {
            total / self.served as f64
        }
    }
}

#[derive(Debug, Clone)]
struct Pair {
    nv: Vehicle,
    hv: Vehicle,
    task: SequentialTask,
}

/// One (value, aux) point of a sweep.
#[derive(Debug, Clone, Copy)]
struct Point {
    value: f64,
    aux: Option<f64>,
    /// Default over used bandwidth.
    norm: f64,
}

struct Ctx<'a> {
    spec: &'a SweepSpec,
    config: &'a SimConfig,
    seed: u64,
}

impl Ctx<'_> {
    fn points(&self, norm: impl Fn(f64, Option<f64>) -> f64) -> Vec<Point> {
        let mut out = Vec::new();
        for &value in &self.spec.values {
            for aux in self.spec.aux_or_none() {
                out.push(Point {
                    value,
                    aux,
                    norm: norm(value, aux),
                });
            }
        }
        out
    }

    fn row(&self, method: Method, point: Point, stats: Stats) -> ResultRow {
        let raw = stats.mean(stats.energy);
        ResultRow {
            experiment: self.spec.experiment,
            seed: self.seed,
            policy: method,
            param: self.spec.param.clone(),
            value: point.value,
            aux_param: self.spec.aux_param.clone(),
            aux_value: point.aux,
            aec: raw * point.norm,
            raw_energy_j: raw,
            mean_delay_s: stats.mean(stats.delay),
            matched: stats.considered,
            served: stats.served,
            infeasible: stats.infeasible,
            iterations: stats.iterations,
        }
    }

    fn scenario(&self, profile: &ScenarioConfig) -> Option<Scenario> {
        let cfg = ScenarioConfig {
            seed: self.seed,
            ..profile.clone()
        };
        scenario::generate(&cfg).ok()
    }

    /// Evaluates every method on every pair at every point, then averages
    /// over the pairs that every method could plan at every point.
    fn tier1_sweep(&self, pairs: &[Pair], points: &[Point], eval: impl Fn(usize, Method, &Pair) -> Option<Cell>) -> Vec<ResultRow> {
        let methods = &self.spec.methods;
        let cells: Vec<Vec<Vec<Option<Cell>>>> = (0..points.len())
            .map(|i| methods.iter().map(|&m| pairs.iter().map(|p| eval(i, m, p)).collect()).collect())
            .collect();
        let support: Vec<bool> = (0..pairs.len())
            .map(|p| cells.iter().all(|per_method| per_method.iter().all(|c| c[p].is_some())))
            .collect();
        let mut rows = Vec::new();
        for (i, &point) in points.iter().enumerate() {
            for (j, &method) in methods.iter().enumerate() {
                let mut stats = Stats {
                    considered: pairs.len(),
                    ..Stats::default()
                };
                for (p, cell) in cells[i][j].iter().enumerate() {
                    match cell {
                        None => stats.infeasible += 1,
                        Some(c) if support[p] => stats.add(Some(*c)),
                        Some(_) => {}
                    }
                }
                rows.push(self.row(method, point, stats));
            }
        }
        rows
    }

    fn fig3(&self) -> Vec<ResultRow> {
        let profile = self.config.vehicle_profile();
        let tightest = self.spec.values.iter().copied().fold(f64::INFINITY, f64::min);
        let (pairs, params) = self.vehicle_pairs(&profile, tightest);
        let points = self.points(|_, _| 1.0);
        self.tier1_sweep(&pairs, &points, |i, method, pair| {
            let task = SequentialTask {
                deadline: points[i].value,
                ..pair.task.clone()
            };
            tier1_cell(method, &pair.nv, &pair.hv, &task, &params)
        })
    }

    fn fig4(&self) -> Vec<ResultRow> {
        let base = self.config.experiments.fig4_base_subtasks;
        let mut profile = self.config.vehicle_profile();
        profile.task.subtasks = base;
        let (pairs, params) = self.vehicle_pairs(&profile, profile.task.deadline);
        let points = self.points(|_, _| 1.0);
        let draws = self.config.experiments.random_draws;
        self.tier1_sweep(&pairs, &points, |i, method, pair| {
            let count = points[i].value as usize;
            if !count.is_multiple_of(base) {
                return None;
            }
            let task = scenario::resplit(&pair.task, count / base);
            match method {
                Method::Proposed => tier1::solve(&pair.nv, &pair.hv, &task, &params).ok().map(|p| Cell::from(&p)),
                Method::EqualSplit => {
                    tier1::solve_fixed_split(&pair.nv, &pair.hv, &task, baselines::pom_split(task.len()), &params)
                        .ok()
                        .map(|p| Cell::from(&p))
                }
                Method::RandomSplit => {
                    let plans: Vec<Cell> = tier1::solve_all_splits(&pair.nv, &pair.hv, &task, &params)
                        .ok()?
                        .iter()
                        .filter_map(|r| r.as_ref().ok().map(Cell::from))
                        .collect();
                    if plans.is_empty() {
                        return None;
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                    rng.set_stream(FIG4_STREAM_BASE + ((pair.nv.id as u64) << 16) + i as u64);
                    let mut sum = Cell { energy: 0.0, delay: 0.0 };
                    for _ in 0..draws {
                        let c = plans[rng.random_range(0..plans.len())];
                        sum.energy += c.energy;
                        sum.delay += c.delay;
                    }
                    Some(Cell {
                        energy: sum.energy / draws as f64,
                        delay: sum.delay / draws as f64,
                    })
                }
                _ => None,
            }
        })
    }

    fn fig5(&self) -> Vec<ResultRow> {
        let profile = self.config.vehicle_profile();
        let (pairs, params) = self.vehicle_pairs(&profile, profile.task.deadline);
        let default_b = self.config.channel.b_v2v;
        let points = self.points(|b, _| default_b / (b * 1e6));
        self.tier1_sweep(&pairs, &points, |i, method, pair| {
            let point = points[i];
            let mut hv = pair.hv.clone();
            if let Some(d) = point.aux {
                hv.position = Position::new(pair.nv.position.x + d, pair.nv.position.y);
            }
            let p = ChannelParams {
                b_v2v: point.value * 1e6,
                ..params.clone()
            };
            tier1_cell(method, &pair.nv, &hv, &pair.task, &p)
        })
    }

    fn fig6(&self) -> Vec<ResultRow> {
        let profile = self.config.vehicle_profile();
        let (pairs, params) = self.vehicle_pairs(&profile, profile.task.deadline);
        let points = self.points(|_, _| 1.0);
        self.tier1_sweep(&pairs, &points, |i, method, pair| {
            let point = points[i];
            let nv = Vehicle {
                max_cpu: point.value * 1e9,
                kappa: point.aux.unwrap_or(pair.nv.kappa),
                ..pair.nv.clone()
            };
            let hv = Vehicle {
                max_cpu: 10e9,
                ..pair.hv.clone()
            };
            tier1_cell(method, &nv, &hv, &pair.task, &params)
        })
    }

    /// Matched pairs of a scenario, with tasks at `deadline` for matching.
    fn vehicle_pairs(&self, profile: &ScenarioConfig, deadline: f64) -> (Vec<Pair>, ChannelParams) {
        let Some(sc) = self.scenario(profile) else {
            return (Vec::new(), self.config.channel.clone());
        };
        let params = sc.channel(&self.config.channel);
        let tasks = with_deadline(&sc.tasks, deadline);
        let Ok(m) = match_scenario(&sc, &tasks, &params) else {
            return (Vec::new(), params);
        };
        let pairs = m
            .pairs
            .iter()
            .map(|&(nv, hv)| Pair {
                nv: sc.vehicle(nv).cloned().expect("matched NV exists"),
                hv: sc.vehicle(hv).cloned().expect("matched helper exists"),
                task: sc.tasks[&nv].clone(),
            })
            .collect();
        (pairs, params)
    }

    /// Up to `limit` unmatched NVs, in id order, whose equal split meets
    /// `deadline`.
    fn rsu_cohort(&self, sc: &Scenario, params: &ChannelParams, deadline: f64, limit: usize) -> Vec<Vehicle> {
        let Ok(m) = match_scenario(sc, &sc.tasks, params) else {
            return Vec::new();
        };
        let tasks = with_deadline(&sc.tasks, deadline);
        let probe = Scenario {
            tasks,
            ..sc.clone()
        };
        m.unmatched_nvs
            .iter()
            .filter_map(|id| sc.vehicle(*id).cloned())
            .filter(|nv| {
                let inst = probe.tier2_instance(std::slice::from_ref(nv), params);
                let split = tier2::equal_split(inst.task(nv.id).len(), inst.rsus.len());
                tier2::split_feasible(&inst, nv, &split)
            })
            .take(limit)
            .collect()
    }

    /// Runs one RSU-tier method on an instance. `random` supplies the split
    /// vectors of the random baseline.
    fn tier2_stats(
        &self,
        method: Method,
        inst: &Tier2Instance,
        solution: &Option<tier2::Tier2Solution>,
        random: impl Fn() -> BTreeMap<VehicleId, tier2::SplitVector>,
    ) -> Stats {
        let mut stats = Stats {
            considered: inst.nvs.len(),
            ..Stats::default()
        };
        let plan = match method {
            Method::Proposed => solution.as_ref().map(|s| s.integer.clone()),
            Method::ProposedContinuous => solution.as_ref().map(|s| s.continuous.clone()),
            Method::Baseline(PolicyId::T2EqualEqual) => {
                baselines::run_tier2_baseline(PolicyId::T2EqualEqual, inst, self.seed, &self.config.solver).ok()
            }
            Method::Baseline(PolicyId::T2EqualRandom) => {
                baselines::equal_bandwidth_plan(inst, &random(), &self.config.solver).ok()
            }
            _ => None,
        };
        match plan {
            Some(p) => stats.add_plan(&p),
            None => stats.infeasible = inst.nvs.len(),
        }
        stats
    }

    fn tier2_rows(&self, point: Point, inst: &Tier2Instance, random: impl Fn() -> BTreeMap<VehicleId, tier2::SplitVector>) -> Vec<ResultRow> {
        let needs_solution = self
            .spec
            .methods
            .iter()
            .any(|m| matches!(m, Method::Proposed | Method::ProposedContinuous));
        let solution = if needs_solution && !inst.nvs.is_empty() {
            tier2::solve_both(inst, &self.config.solver).ok()
        } else {
            None
        };
        self.spec
            .methods
            .iter()
            .map(|&m| self.row(m, point, self.tier2_stats(m, inst, &solution, &random)))
            .collect()
    }

    fn empty_rows(&self, points: &[Point], considered: usize) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for &point in points {
            for &m in &self.spec.methods {
                let stats = Stats {
                    considered,
                    infeasible: considered,
                    ..Stats::default()
                };
                rows.push(self.row(m, point, stats));
            }
        }
        rows
    }

    fn fig7(&self) -> Vec<ResultRow> {
        let points = self.points(|_, _| 1.0);
        let Some(sc) = self.scenario(&self.config.scenario) else {
            return self.empty_rows(&points, 0);
        };
        let params = sc.channel(&self.config.channel);
        let cohort = self.rsu_cohort(&sc, &params, sc_deadline(&self.config.scenario), FIG7_COHORT);
        if cohort.len() < FIG7_COHORT {
            return self.empty_rows(&points, cohort.len());
        }
        let base = sc.tier2_instance(&cohort, &params);
        let base_random = baselines::random_splits(&base, self.seed);
        points
            .iter()
            .flat_map(|&point| {
                let copies = point.value as usize / FIG7_COHORT;
                let inst = replicate(&base, copies);
                let random = || replicate_splits(&base_random, copies);
                self.tier2_rows(point, &inst, random)
            })
            .collect()
    }

    fn fig8(&self) -> Vec<ResultRow> {
        let default_b = self.config.channel.b_total;
        let points = self.points(|b, _| default_b / (b * 1e6));
        let Some(sc) = self.scenario(&self.config.scenario) else {
            return self.empty_rows(&points, 0);
        };
        let params = sc.channel(&self.config.channel);
        let tightest = self
            .spec
            .aux_values
            .iter()
            .copied()
            .fold(sc_deadline(&self.config.scenario), f64::min);
        let cohort = self.rsu_cohort(&sc, &params, tightest, self.config.rsu_tier.max_nvs);
        let mut rows = Vec::new();
        for &point in &points {
            let deadline = point.aux.unwrap_or(sc_deadline(&self.config.scenario));
            let p = params.clone().with_bandwidth(point.value * 1e6, params.b0);
            let Ok(p) = p else {
                rows.extend(self.empty_rows(&[point], cohort.len()));
                continue;
            };
            let timed = Scenario {
                tasks: with_deadline(&sc.tasks, deadline),
                ..sc.clone()
            };
            let mut inst = timed.tier2_instance(&cohort, &params);
            inst.params = p;
            let random = || baselines::random_splits(&inst, self.seed);
            rows.extend(self.tier2_rows(point, &inst, random));
        }
        rows
    }

    fn fig9(&self) -> Vec<ResultRow> {
        let points = self.points(|_, _| 1.0);
        let Some(sc) = self.scenario(&self.config.scenario) else {
            return self.empty_rows(&points, 0);
        };
        let params = sc.channel(&self.config.channel);
        let cohort = self.rsu_cohort(&sc, &params, sc_deadline(&self.config.scenario), self.config.rsu_tier.max_nvs);
        let mut rows = Vec::new();
        for &point in &points {
            let Ok(p) = params.clone().with_bandwidth(params.b_total, point.value * 1e6) else {
                rows.extend(self.empty_rows(&[point], cohort.len()));
                continue;
            };
            let inst = sc.tier2_instance(&cohort, &p);
            let random = || baselines::random_splits(&inst, self.seed);
            rows.extend(self.tier2_rows(point, &inst, random));
        }
        rows
    }

    /// Whole pipeline: matching, the vehicle tier on matched pairs and the
    /// RSU tier on the rest. Each NV counts once, whichever tier serves it.
    fn custom(&self) -> Vec<ResultRow> {
        let points = self.points(|_, _| 1.0);
        points
            .iter()
            .flat_map(|&point| {
                let Ok(cfg) = apply(self.config, &self.spec.param, point.value)
                    .and_then(|c| match (&self.spec.aux_param, point.aux) {
                        (Some(p), Some(v)) => apply(&c, p, v),
                        _ => Ok(c),
                    })
                else {
                    return self.empty_rows(&[point], 0);
                };
                self.custom_point(point, &cfg)
            })
            .collect()
    }

    fn custom_point(&self, point: Point, cfg: &SimConfig) -> Vec<ResultRow> {
        let Some(sc) = self.scenario(&cfg.scenario) else {
            return self.empty_rows(&[point], 0);
        };
        let params = sc.channel(&cfg.channel);
        let nv_count = sc.tasks.len();
        let Ok(m) = match_scenario(&sc, &sc.tasks, &params) else {
            return self.empty_rows(&[point], nv_count);
        };
        let rest: Vec<Vehicle> = m.unmatched_nvs.iter().filter_map(|id| sc.vehicle(*id).cloned()).collect();
        let inst = sc.tier2_instance(&rest, &params);
        let solution = if rest.is_empty() {
            None
        } else {
            tier2::solve_both(&inst, &cfg.solver).ok()
        };
        self.spec
            .methods
            .iter()
            .map(|&method| {
                let mut stats = Stats::default();
                for &(nv, hv) in &m.pairs {
                    let (Some(nv), Some(hv)) = (sc.vehicle(nv), sc.vehicle(hv)) else {
                        continue;
                    };
                    let vehicle_method = match method {
                        Method::Baseline(p) if p.is_tier1() => method,
                        _ => Method::Proposed,
                    };
                    stats.add(tier1_cell(vehicle_method, nv, hv, &sc.tasks[&nv.id], &params));
                }
                if !rest.is_empty() {
                    let rsu_method = match method {
                        Method::Baseline(p) if p.is_tier1() => Method::Proposed,
                        _ => method,
                    };
                    let t2 = self.tier2_stats(rsu_method, &inst, &solution, || baselines::random_splits(&inst, self.seed));
                    stats.energy += t2.energy;
                    stats.delay += t2.delay;
                    stats.served += t2.served;
                    stats.infeasible += t2.infeasible;
                    stats.iterations += t2.iterations;
                }
                stats.considered = nv_count;
                self.row(method, point, stats)
            })
            .collect()
    }
}

fn sc_deadline(profile: &ScenarioConfig) -> f64 {
    profile.task.deadline
}

fn tier1_cell(method: Method, nv: &Vehicle, hv: &Vehicle, task: &SequentialTask, params: &ChannelParams) -> Option<Cell> {
    let plan = match method {
        Method::Proposed | Method::ProposedContinuous => tier1::solve(nv, hv, task, params).ok(),
        Method::Baseline(p) if p.is_tier1() => baselines::run_tier1_baseline(p, nv, hv, task, params).ok(),
        _ => None,
    };
    plan.as_ref().map(Cell::from)
}

fn with_deadline(tasks: &BTreeMap<VehicleId, SequentialTask>, deadline: f64) -> BTreeMap<VehicleId, SequentialTask> {
    tasks
        .iter()
        .map(|(id, t)| {
            (
                *id,
                SequentialTask {
                    deadline,
                    ..t.clone()
                },
            )
        })
        .collect()
}

fn match_scenario(
    sc: &Scenario,
    tasks: &BTreeMap<VehicleId, SequentialTask>,
    params: &ChannelParams,
) -> Result<matching::Matching, matching::MatchingError> {
    let nvs = sc.with_role(Role::Nv);
    let ivs = sc.with_role(Role::Iv);
    let graph = matching::build_candidates(&nvs, tasks, &ivs, params)?;
    Ok(matching::max_match(&graph))
}

/// `copies` copies of every NV of `base`; copy `c` of NV `id` gets id
/// `id + c * 1000` and the same position, task and link fading.
fn replicate(base: &Tier2Instance, copies: usize) -> Tier2Instance {
    let mut inst = Tier2Instance {
        nvs: Vec::new(),
        tasks: BTreeMap::new(),
        traveled: BTreeMap::new(),
        ..base.clone()
    };
    for c in 0..copies as VehicleId {
        for nv in &base.nvs {
            let id = nv.id + c * CLONE_ID_STRIDE;
            inst.nvs.push(Vehicle { id, ..nv.clone() });
            inst.tasks.insert(
                id,
                SequentialTask {
                    owner: id,
                    ..base.tasks[&nv.id].clone()
                },
            );
            inst.traveled.insert(id, base.traveled[&nv.id]);
            if c > 0 {
                let gain = base.params.fading_for(Link::V2i { from: nv.id });
                if gain != 1.0 {
                    inst.params.fading.push(LinkFading {
                        link: Link::V2i { from: id },
                        gain,
                    });
                }
            }
        }
    }
    inst
}

fn replicate_splits(
    base: &BTreeMap<VehicleId, tier2::SplitVector>,
    copies: usize,
) -> BTreeMap<VehicleId, tier2::SplitVector> {
    (0..copies as VehicleId)
        .flat_map(|c| base.iter().map(move |(id, s)| (id + c * CLONE_ID_STRIDE, s.clone())))
        .collect()
}

/// Config with one custom-sweep parameter overridden.
fn apply(config: &SimConfig, param: &str, value: f64) -> Result<SimConfig, HarnessError> {
    let mut c = config.clone();
    let bad = |e: String| HarnessError::Spec(format!("{param} = {value}: {e}"));
    match param {
        "deadline_s" => c.scenario.task.deadline = value,
        "b_v2v_mhz" => c.channel.b_v2v = value * 1e6,
        "b_total_mhz" => {
            c.channel = c
                .channel
                .clone()
                .with_bandwidth(value * 1e6, c.channel.b0)
                .map_err(|e| bad(e.to_string()))?
        }
        "b0_mhz" => {
            c.channel = c
                .channel
                .clone()
                .with_bandwidth(c.channel.b_total, value * 1e6)
                .map_err(|e| bad(e.to_string()))?
        }
        "vehicle_density_per_m" => c.scenario.vehicle_density = value,
        "nv_fraction" => c.scenario.nv_fraction = value,
        "subtasks" => c.scenario.task.subtasks = value as usize,
        "road_length_m" => c.scenario.road_length = value,
        other => return Err(HarnessError::Spec(format!("unknown parameter '{other}'"))),
    }
    c.scenario.validate().map_err(|e| bad(e.to_string()))?;
    Ok(c)
}
