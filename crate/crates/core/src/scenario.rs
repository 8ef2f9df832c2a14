//! Seeded road scenarios: vehicles on a multi-lane road, a chain of RSUs
//! and one sequential task per NV.
//!
//! Every entity type draws from its own ChaCha8 stream of the same seed, so
//! changing, say, the task model leaves vehicle placement untouched.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::within_v2v_range;
use crate::model::{ChannelParams, Link, LinkFading, Position, Role, Rsu, SequentialTask, Subtask, Vehicle, VehicleId};
use crate::tier2::Tier2Instance;

pub const STREAM_PLACEMENT: u64 = 1;
pub const STREAM_VEHICLES: u64 = 2;
pub const STREAM_ROLES: u64 = 3;
pub const STREAM_TASKS: u64 = 4;
pub const STREAM_RSUS: u64 = 5;
pub const STREAM_FADING: u64 = 7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Invalid(String),
    #[error("scenario snapshot: {0}")]
    Snapshot(String),
}

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::new(self.min * factor, self.max * factor)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }

    fn check(&self, what: &str) -> Result<(), ScenarioError> {
        if self.min > 0.0 && self.min <= self.max && self.max.is_finite() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(format!("{what} range [{}, {}] must be positive and ordered", self.min, self.max)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub subtasks: usize,
    /// Input and intermediate data sizes, bits.
    pub data: Span,
    /// Workload per subtask, cycles.
    pub workload: Span,
    pub deadline: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            subtasks: 8,
            data: Span::new(1e6, 20e6),
            workload: Span::new(1e6, 1000e6),
            deadline: 0.2,
        }
    }
}

/// Scenario parameters in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub lanes: usize,
    pub lane_width: f64,
    /// Vehicles are placed on `[0, road_length]`, m.
    pub road_length: f64,
    /// Poisson intensity per lane, vehicles/m.
    pub vehicle_density: f64,
    /// Speed, m/s.
    pub speed: Span,
    /// Probability that a vehicle has a task.
    pub nv_fraction: f64,
    pub vehicle_cpu: Span,
    pub vehicle_kappa: Span,
    pub vehicle_weight: f64,
    pub rsu_count: usize,
    /// Length of the road segment each RSU serves, m.
    pub rsu_spacing: f64,
    pub rsu_height: f64,
    pub rsu_cpu: Span,
    pub rsu_kappa: Span,
    pub rsu_weight: f64,
    pub task: TaskConfig,
    /// Draw unit-mean exponential fading per link instead of 1.0.
    pub random_fading: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            lanes: 3,
            lane_width: 3.75,
            road_length: 200.0,
            vehicle_density: 0.02,
            speed: Span::new(40.0 / 3.6, 120.0 / 3.6),
            nv_fraction: 0.5,
            vehicle_cpu: Span::new(1e9, 10e9),
            vehicle_kappa: Span::new(1e-23, 2e-23),
            vehicle_weight: 1.0,
            rsu_count: 2,
            rsu_spacing: 200.0,
            rsu_height: 10.0,
            rsu_cpu: Span::new(60e9, 120e9),
            rsu_kappa: Span::new(1e-23, 2e-23),
            rsu_weight: 1.0,
            task: TaskConfig::default(),
            random_fading: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.lanes == 0 {
            return bad("at least one lane is required".into());
        }
        for (what, v) in [
            ("lane_width", self.lane_width),
            ("road_length", self.road_length),
            ("rsu_spacing", self.rsu_spacing),
            ("deadline", self.task.deadline),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{what} must be positive, got {v}"));
            }
        }
        for (what, v) in [
            ("vehicle_density", self.vehicle_density),
            ("rsu_height", self.rsu_height),
            ("vehicle_weight", self.vehicle_weight),
            ("rsu_weight", self.rsu_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{what} must be nonnegative, got {v}"));
            }
        }
        if !(self.vehicle_weight > 0.0) {
            return bad("vehicle_weight must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.nv_fraction) {
            return bad(format!("nv_fraction {} outside [0, 1]", self.nv_fraction));
        }
        if self.rsu_count == 0 {
            return bad("at least one RSU is required".into());
        }
        if self.task.subtasks == 0 {
            return bad("tasks need at least one subtask".into());
        }
        self.speed.check("speed")?;
        self.vehicle_cpu.check("vehicle_cpu")?;
        self.vehicle_kappa.check("vehicle_kappa")?;
        self.rsu_cpu.check("rsu_cpu")?;
        self.rsu_kappa.check("rsu_kappa")?;
        self.task.data.check("data")?;
        self.task.workload.check("workload")?;
        Ok(())
    }

    /// Center line of lane `k` (0-based).
    pub fn lane_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.lane_width
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// A generated road snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Sorted by position along the road; ids follow that order from 1.
    pub vehicles: Vec<Vehicle>,
    pub tasks: BTreeMap<VehicleId, SequentialTask>,
    pub rsus: Vec<Rsu>,
    /// Per-link fading; empty unless random fading was requested.
    pub fading: Vec<LinkFading>,
}

impl Scenario {
    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn with_role(&self, role: Role) -> Vec<Vehicle> {
        self.vehicles.iter().filter(|v| v.role == role).cloned().collect()
    }

    /// Channel parameters with this scenario's fading applied.
    pub fn channel(&self, base: &ChannelParams) -> ChannelParams {
        let mut params = base.clone();
        for f in &self.fading {
            params.set_fading(f.link, f.gain);
        }
        params
    }

    /// Distance an NV has covered inside the first RSU's segment.
    pub fn traveled(&self, nv: &Vehicle) -> f64 {
        let start = self.rsus.first().map_or(0.0, |r| r.position.x - r.service_range / 2.0);
        (nv.position.x - start).clamp(0.0, self.rsus.first().map_or(0.0, |r| r.service_range))
    }

    /// RSU-tier instance for the given NVs.
    pub fn tier2_instance(&self, nvs: &[Vehicle], params: &ChannelParams) -> Tier2Instance {
        Tier2Instance {
            nvs: nvs.to_vec(),
            tasks: nvs.iter().map(|v| (v.id, self.tasks[&v.id].clone())).collect(),
            rsus: self.rsus.clone(),
            traveled: nvs.iter().map(|v| (v.id, self.traveled(v))).collect(),
            params: self.channel(params),
        }
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        serde_json::to_string_pretty(self).map_err(|e| ScenarioError::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Snapshot(e.to_string()))
    }
}

pub fn sample_task<R: Rng>(rng: &mut R, owner: VehicleId, config: &TaskConfig) -> SequentialTask {
    SequentialTask {
        owner,
        input_size: config.data.sample(rng),
        subtasks: (0..config.subtasks)
            .map(|_| Subtask {
                workload: config.workload.sample(rng),
                output_size: config.data.sample(rng),
            })
            .collect(),
        deadline: config.deadline,
    }
}

/// Draws a scenario. Vehicle count is Poisson with mean
/// `density * road_length * lanes`; each vehicle picks a lane uniformly and
/// a uniform position along the road.
pub fn generate(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    config.validate()?;

    let mut placement = config.rng(STREAM_PLACEMENT);
    let mean = config.vehicle_density * config.road_length * config.lanes as f64;
    let count = if mean > 0.0 {
        let poisson = Poisson::new(mean).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        poisson.sample(&mut placement) as usize
    } else {
        0
    };
    let mut spots: Vec<Position> = (0..count)
        .map(|_| {
            let lane = placement.random_range(0..config.lanes);
            let x = placement.random_range(0.0..=config.road_length);
            Position::new(x, config.lane_center(lane))
        })
        .collect();
    spots.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

    let mut attrs = config.rng(STREAM_VEHICLES);
    let mut roles = config.rng(STREAM_ROLES);
    let mut vehicles: Vec<Vehicle> = spots
        .into_iter()
        .enumerate()
        .map(|(i, position)| Vehicle {
            id: i as VehicleId + 1,
            position,
            velocity: config.speed.sample(&mut attrs),
            max_cpu: config.vehicle_cpu.sample(&mut attrs),
            kappa: config.vehicle_kappa.sample(&mut attrs),
            weight: config.vehicle_weight,
            role: if roles.random_bool(config.nv_fraction) { Role::Nv } else { Role::Iv },
        })
        .collect();
    vehicles.shrink_to_fit();

    let mut task_rng = config.rng(STREAM_TASKS);
    let tasks: BTreeMap<VehicleId, SequentialTask> = vehicles
        .iter()
        .filter(|v| v.role == Role::Nv)
        .map(|v| (v.id, sample_task(&mut task_rng, v.id, &config.task)))
        .collect();

    let mut rsu_rng = config.rng(STREAM_RSUS);
    let rsus: Vec<Rsu> = (0..config.rsu_count)
        .map(|r| Rsu {
            id: r as u32 + 1,
            position: Position::new((r as f64 + 0.5) * config.rsu_spacing, 0.0),
            height: config.rsu_height,
            service_range: config.rsu_spacing,
            max_cpu: config.rsu_cpu.sample(&mut rsu_rng),
            kappa: config.rsu_kappa.sample(&mut rsu_rng),
            weight: config.rsu_weight,
        })
        .collect();

    let mut fading = Vec::new();
    if config.random_fading {
        let mut rng = config.rng(STREAM_FADING);
        let d_max = ChannelParams::default().d_v2v_max;
        for nv in vehicles.iter().filter(|v| v.role == Role::Nv) {
            let gain: f64 = Exp1.sample(&mut rng);
            fading.push(LinkFading {
                link: Link::V2i { from: nv.id },
                gain,
            });
            for iv in vehicles.iter().filter(|v| v.role == Role::Iv) {
                if within_v2v_range(nv, iv, d_max).unwrap_or(false) {
                    let gain: f64 = Exp1.sample(&mut rng);
                    fading.push(LinkFading {
                        link: Link::V2v { from: nv.id, to: iv.id },
                        gain,
                    });
                }
            }
        }
    }

    Ok(Scenario {
        seed: config.seed,
        vehicles,
        tasks,
        rsus,
        fading,
    })
}

/// Splits every subtask into `pieces` equal parts. Total workload, the
/// task input and the data crossing every original subtask boundary are
/// unchanged, so the coarse split points remain available; data between
/// pieces of one subtask is interpolated linearly between the parent's
/// input and output.
pub fn resplit(task: &SequentialTask, pieces: usize) -> SequentialTask {
    assert!(pieces >= 1, "at least one piece per subtask");
    let k = pieces as f64;
    let mut subtasks = Vec::with_capacity(task.len() * pieces);
    for (m, parent) in task.subtasks.iter().enumerate() {
        let input = task.data_into(m + 1);
        for p in 1..=pieces {
            let output = if p == pieces {
                parent.output_size
            } else {
                input + (parent.output_size - input) * p as f64 / k
            };
            subtasks.push(Subtask {
                workload: parent.workload / k,
                output_size: output,
            });
        }
    }
    SequentialTask {
        owner: task.owner,
        input_size: task.input_size,
        subtasks,
        deadline: task.deadline,
    }
}
