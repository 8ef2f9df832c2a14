//! Declarative simulation config.
//!
//! The file uses human units (MHz, Mb, GHz, km/h, ms, dBW/Hz); [`Config`]
//! mirrors it one-to-one and [`Config::resolve`] converts to SI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{db_to_linear, ChannelParams};
use crate::scenario::{ScenarioConfig, Span, TaskConfig};
use crate::tier2::{AggregateCpuMode, Tier2Options};

/// The shipped `defaults` profile.
pub const DEFAULTS_TOML: &str = include_str!("../../configs/defaults.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub lanes: usize,
    pub lane_width_m: f64,
    pub road_length_m: f64,
    pub vehicle_density_per_m: f64,
    pub speed_kmh: [f64; 2],
    pub nv_fraction: f64,
    pub vehicle_cpu_ghz: [f64; 2],
    pub vehicle_kappa: [f64; 2],
    pub vehicle_weight: f64,
    pub rsu_count: usize,
    pub rsu_spacing_m: f64,
    pub rsu_height_m: f64,
    pub rsu_cpu_ghz: [f64; 2],
    pub rsu_kappa: [f64; 2],
    pub rsu_weight: f64,
    pub random_fading: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            lanes: 3,
            lane_width_m: 3.75,
            road_length_m: 200.0,
            vehicle_density_per_m: 0.02,
            speed_kmh: [40.0, 120.0],
            nv_fraction: 0.5,
            vehicle_cpu_ghz: [1.0, 10.0],
            vehicle_kappa: [1e-23, 2e-23],
            vehicle_weight: 1.0,
            rsu_count: 2,
            rsu_spacing_m: 200.0,
            rsu_height_m: 10.0,
            rsu_cpu_ghz: [60.0, 120.0],
            rsu_kappa: [1e-23, 2e-23],
            rsu_weight: 1.0,
            random_fading: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub subtasks: usize,
    pub data_mb: [f64; 2],
    pub workload_mcycles: [f64; 2],
    pub deadline_ms: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            subtasks: 8,
            data_mb: [1.0, 20.0],
            workload_mcycles: [1.0, 1000.0],
            deadline_ms: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub b_v2v_mhz: f64,
    pub b_total_mhz: f64,
    pub b0_mhz: f64,
    pub noise_dbw_per_hz: f64,
    pub v2i_pathloss_exponent: f64,
    pub wired_energy_j_per_bit: f64,
    pub wired_delay_ms_per_bit: f64,
    pub d_v2v_max_m: f64,
    pub setup_delay_ms: f64,
    pub tau_max_ms: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            b_v2v_mhz: 10.0,
            b_total_mhz: 100.0,
            b0_mhz: 1.0,
            noise_dbw_per_hz: -140.0,
            v2i_pathloss_exponent: 3.0,
            wired_energy_j_per_bit: 1e-5,
            wired_delay_ms_per_bit: 1e-5,
            d_v2v_max_m: 70.0,
            setup_delay_ms: 0.1,
            tau_max_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_iters: usize,
    pub max_sweeps: usize,
    pub aggregate_cpu: AggregateCpuMode,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = Tier2Options::default();
        Self {
            tolerance: o.tolerance,
            max_iters: o.max_iters,
            max_sweeps: o.max_sweeps,
            aggregate_cpu: o.aggregate_cpu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleTierSection {
    pub workload_scale: f64,
    pub data_scale: f64,
}

impl Default for VehicleTierSection {
    fn default() -> Self {
        Self {
            workload_scale: 0.1,
            data_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsuTierSection {
    pub max_nvs: usize,
}

impl Default for RsuTierSection {
    fn default() -> Self {
        Self { max_nvs: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsSection {
    /// Seeds `1..=seeds` unless a sweep lists its own.
    pub seeds: u64,
    pub random_draws: usize,
    pub fig4_base_subtasks: usize,
}

impl Default for ExperimentsSection {
    fn default() -> Self {
        Self {
            seeds: 20,
            random_draws: 100,
            fig4_base_subtasks: 8,
        }
    }
}

/// Parsed config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub task: TaskSection,
    pub channel: ChannelSection,
    pub solver: SolverSection,
    pub vehicle_tier: VehicleTierSection,
    pub rsu_tier: RsuTierSection,
    pub experiments: ExperimentsSection,
}

/// Config in SI units, ready for the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub channel: ChannelParams,
    pub solver: Tier2Options,
    pub vehicle_tier: VehicleTierSection,
    pub rsu_tier: RsuTierSection,
    pub experiments: ExperimentsSection,
}

fn span(v: [f64; 2], unit: f64) -> Span {
    Span::new(v[0] * unit, v[1] * unit)
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn defaults() -> Self {
        Self::from_toml(DEFAULTS_TOML).expect("shipped defaults parse")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Converts to SI and validates every section.
    pub fn resolve(&self) -> Result<SimConfig, HarnessError> {
        let s = &self.scenario;
        let t = &self.task;
        let c = &self.channel;
        let scenario = ScenarioConfig {
            seed: 1,
            lanes: s.lanes,
            lane_width: s.lane_width_m,
            road_length: s.road_length_m,
            vehicle_density: s.vehicle_density_per_m,
            speed: span(s.speed_kmh, 1.0 / 3.6),
            nv_fraction: s.nv_fraction,
            vehicle_cpu: span(s.vehicle_cpu_ghz, 1e9),
            vehicle_kappa: span(s.vehicle_kappa, 1.0),
            vehicle_weight: s.vehicle_weight,
            rsu_count: s.rsu_count,
            rsu_spacing: s.rsu_spacing_m,
            rsu_height: s.rsu_height_m,
            rsu_cpu: span(s.rsu_cpu_ghz, 1e9),
            rsu_kappa: span(s.rsu_kappa, 1.0),
            rsu_weight: s.rsu_weight,
            task: TaskConfig {
                subtasks: t.subtasks,
                data: span(t.data_mb, 1e6),
                workload: span(t.workload_mcycles, 1e6),
                deadline: t.deadline_ms * 1e-3,
            },
            random_fading: s.random_fading,
        };
        scenario.validate().map_err(|e| HarnessError::Config(e.to_string()))?;

        let channel = ChannelParams {
            b_v2v: c.b_v2v_mhz * 1e6,
            noise_density: db_to_linear(c.noise_dbw_per_hz),
            v2i_pathloss_exponent: c.v2i_pathloss_exponent,
            wired_energy_per_bit: c.wired_energy_j_per_bit,
            wired_delay_per_bit: c.wired_delay_ms_per_bit * 1e-3,
            d_v2v_max: c.d_v2v_max_m,
            setup_delay: c.setup_delay_ms * 1e-3,
            tau_max: c.tau_max_ms.map(|v| v * 1e-3),
            ..ChannelParams::default()
        }
        .with_bandwidth(c.b_total_mhz * 1e6, c.b0_mhz * 1e6)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
        channel.validate().map_err(|e| HarnessError::Config(e.to_string()))?;

        let o = &self.solver;
        if !(o.tolerance > 0.0) || o.max_iters == 0 || o.max_sweeps == 0 {
            return Err(HarnessError::Config("solver tolerance and iteration caps must be positive".into()));
        }
        let v = self.vehicle_tier;
        if !(v.workload_scale > 0.0 && v.data_scale > 0.0) {
            return Err(HarnessError::Config("vehicle_tier scales must be positive".into()));
        }
        if self.rsu_tier.max_nvs == 0 {
            return Err(HarnessError::Config("rsu_tier.max_nvs must be at least 1".into()));
        }
        let e = self.experiments;
        if e.seeds == 0 || e.random_draws == 0 || e.fig4_base_subtasks == 0 {
            return Err(HarnessError::Config("experiment counts must be positive".into()));
        }
        Ok(SimConfig {
            scenario,
            channel,
            solver: Tier2Options {
                tolerance: o.tolerance,
                max_iters: o.max_iters,
                max_sweeps: o.max_sweeps,
                aggregate_cpu: o.aggregate_cpu,
            },
            vehicle_tier: v,
            rsu_tier: self.rsu_tier,
            experiments: e,
        })
    }
}

impl SimConfig {
    pub fn defaults() -> Self {
        Config::defaults().resolve().expect("shipped defaults are valid")
    }

    /// Scenario profile for vehicle-tier experiments.
    pub fn vehicle_profile(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        s.task.workload = s.task.workload.scaled(self.vehicle_tier.workload_scale);
        s.task.data = s.task.data.scaled(self.vehicle_tier.data_scale);
        s
    }

    pub fn default_seeds(&self) -> Vec<u64> {
        (1..=self.experiments.seeds).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_profile_matches_code_defaults() {
        assert_eq!(Config::defaults(), Config::default());
        let sim = SimConfig::defaults();
        assert_eq!(sim.channel, ChannelParams::default());
        assert_eq!(sim.scenario, ScenarioConfig::default());
        assert_eq!(sim.solver, Tier2Options::default());
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = Config::from_toml("[channel]\nb_total_mhz = 200.0\nb0_mhz = 2.0\n").unwrap();
        let sim = cfg.resolve().unwrap();
        assert_eq!(sim.channel.b_total, 200e6);
        assert_eq!(sim.channel.num_subchannels, 100);
        assert_eq!(sim.scenario.task.deadline, 0.2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[channel]\nbandwidth = 3\n").is_err());
        assert!(Config::from_toml("[nope]\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let cfg = Config::from_toml("[channel]\nb0_mhz = 3.0\n").unwrap();
        assert!(cfg.resolve().is_err());
        let cfg = Config::from_toml("[scenario]\nnv_fraction = 1.5\n").unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::default();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
