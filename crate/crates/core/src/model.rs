//! Vehicles, RSUs, sequential tasks and the link/CPU energy models.
//!
//! All quantities are SI: bits, Hz, seconds, joules, meters and W/Hz.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest exponent `bits / (tau * bandwidth)` accepted by [`transmit_energy`].
pub const MAX_RATE_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what} must be nonnegative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("transmission exponent {0} overflows (limit {MAX_RATE_EXPONENT})")]
    Overflow(f64),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("invalid device {id}: {reason}")]
    InvalidDevice { id: u32, reason: String },
}

fn positive(what: &'static str, value: f64) -> Result<f64, ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonPositive { what, value })
    }
}

fn nonnegative(what: &'static str, value: f64) -> Result<f64, ModelError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::Negative { what, value })
    }
}

pub type VehicleId = u32;
pub type RsuId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Needs help to finish its task on time.
    Nv,
    /// Has spare compute and no task.
    Iv,
    /// An idle vehicle selected to help a needing vehicle.
    Hv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub position: Position,
    /// Speed along +x, m/s.
    pub velocity: f64,
    /// Maximum CPU frequency, Hz.
    pub max_cpu: f64,
    /// Effective switched capacitance; power is `kappa * f^3`.
    pub kappa: f64,
    pub weight: f64,
    pub role: Role,
}

impl Vehicle {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidDevice {
            id: self.id,
            reason: reason.to_string(),
        };
        if !(self.max_cpu > 0.0) {
            return Err(bad("max_cpu must be positive"));
        }
        if !(self.kappa > 0.0) {
            return Err(bad("kappa must be positive"));
        }
        if !(self.weight >= 0.0) {
            return Err(bad("weight must be nonnegative"));
        }
        if !(self.velocity >= 0.0) {
            return Err(bad("velocity must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    /// CPU cycles.
    pub workload: f64,
    /// Bits handed to the next subtask.
    pub output_size: f64,
}

/// A chain of subtasks; subtask `m` can start only once `m - 1` has produced
/// its output.
///
/// Subtasks are indexed from 1 in the public API, matching split indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialTask {
    pub owner: VehicleId,
    /// Bits consumed by the first subtask.
    pub input_size: f64,
    pub subtasks: Vec<Subtask>,
    /// Seconds.
    pub deadline: f64,
}

impl SequentialTask {
    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    /// Workload of subtask `m` (1-based).
    pub fn workload(&self, m: usize) -> f64 {
        self.subtasks[m - 1].workload
    }

    /// Bits that must be present before subtask `m` (1-based) can run: the
    /// task input for `m = 1`, otherwise the output of subtask `m - 1`.
    pub fn data_into(&self, m: usize) -> f64 {
        if m <= 1 {
            self.input_size
        } else {
            self.subtasks[m - 2].output_size
        }
    }

    pub fn total_workload(&self) -> f64 {
        self.subtasks.iter().map(|s| s.workload).sum()
    }

    /// Workload of subtasks `from..to` (1-based, `to` exclusive).
    pub fn workload_range(&self, from: usize, to: usize) -> f64 {
        (from..to).map(|m| self.workload(m)).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.subtasks.is_empty() {
            return Err(ModelError::InvalidTask("task has no subtasks".into()));
        }
        if !(self.deadline > 0.0) {
            return Err(ModelError::InvalidTask(format!("deadline {} must be positive", self.deadline)));
        }
        if !(self.input_size >= 0.0) {
            return Err(ModelError::InvalidTask("input size must be nonnegative".into()));
        }
        for (i, s) in self.subtasks.iter().enumerate() {
            if !(s.workload > 0.0) {
                return Err(ModelError::InvalidTask(format!("subtask {} has nonpositive workload", i + 1)));
            }
            if !(s.output_size >= 0.0) {
                return Err(ModelError::InvalidTask(format!("subtask {} has negative output size", i + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rsu {
    pub id: RsuId,
    pub position: Position,
    /// Antenna height, m.
    pub height: f64,
    /// Length of the covered road segment, m.
    pub service_range: f64,
    pub max_cpu: f64,
    pub kappa: f64,
    pub weight: f64,
}

impl Rsu {
    /// Straight-line distance from a vehicle at road level to the antenna.
    pub fn distance_to(&self, p: &Position) -> f64 {
        let planar = self.position.distance(p);
        planar.hypot(self.height)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidDevice {
            id: self.id,
            reason: reason.to_string(),
        };
        if !(self.max_cpu > 0.0) {
            return Err(bad("max_cpu must be positive"));
        }
        if !(self.kappa > 0.0) {
            return Err(bad("kappa must be positive"));
        }
        if !(self.service_range > 0.0) {
            return Err(bad("service_range must be positive"));
        }
        if !(self.height >= 0.0) {
            return Err(bad("height must be nonnegative"));
        }
        if !(self.weight >= 0.0) {
            return Err(bad("weight must be nonnegative"));
        }
        Ok(())
    }
}

/// A wireless link whose small-scale fading can be set individually.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    V2v { from: VehicleId, to: VehicleId },
    V2i { from: VehicleId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkFading {
    pub link: Link,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// V2V bandwidth per pair, Hz.
    pub b_v2v: f64,
    /// Total V2I bandwidth of the first RSU, Hz.
    pub b_total: f64,
    /// Subchannel width, Hz.
    pub b0: f64,
    pub num_subchannels: usize,
    /// Noise power spectral density, W/Hz.
    pub noise_density: f64,
    pub v2i_pathloss_exponent: f64,
    /// Per-link fading overrides; links not listed use 1.0.
    #[serde(default)]
    pub fading: Vec<LinkFading>,
    /// Wired energy per bit between neighbouring RSUs, J/bit.
    pub wired_energy_per_bit: f64,
    /// Wired delay per bit, s/bit.
    pub wired_delay_per_bit: f64,
    /// Maximum V2V range, m.
    pub d_v2v_max: f64,
    /// Communication setup delay before a V2I upload, s.
    pub setup_delay: f64,
    /// Cap on the V2I upload delay; `None` means the task deadline.
    #[serde(default)]
    pub tau_max: Option<f64>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            b_v2v: 10e6,
            b_total: 100e6,
            b0: 1e6,
            num_subchannels: 100,
            noise_density: db_to_linear(-140.0),
            v2i_pathloss_exponent: 3.0,
            fading: Vec::new(),
            wired_energy_per_bit: 1e-5,
            wired_delay_per_bit: 1e-8,
            d_v2v_max: 70.0,
            setup_delay: 1e-4,
            tau_max: None,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ChannelParams {
    /// Sets the total bandwidth and subchannel width together, deriving the
    /// subchannel count. Fails unless the width divides the total.
    pub fn with_bandwidth(mut self, b_total: f64, b0: f64) -> Result<Self, ModelError> {
        positive("total bandwidth", b_total)?;
        positive("subchannel width", b0)?;
        let count = (b_total / b0).round();
        if count < 1.0 || ((count * b0 - b_total) / b_total).abs() > 1e-9 {
            return Err(ModelError::InvalidParams(format!(
                "subchannel width {b0} does not divide total bandwidth {b_total}"
            )));
        }
        self.b_total = b_total;
        self.b0 = b0;
        self.num_subchannels = count as usize;
        Ok(self)
    }

    pub fn fading_for(&self, link: Link) -> f64 {
        self.fading
            .iter()
            .find(|f| f.link == link)
            .map(|f| f.gain)
            .unwrap_or(1.0)
    }

    pub fn set_fading(&mut self, link: Link, gain: f64) {
        match self.fading.iter_mut().find(|f| f.link == link) {
            Some(entry) => entry.gain = gain,
            None => self.fading.push(LinkFading { link, gain }),
        }
    }

    pub fn tau_cap(&self, deadline: f64) -> f64 {
        self.tau_max.unwrap_or(deadline)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("b_v2v", self.b_v2v)?;
        positive("b_total", self.b_total)?;
        positive("b0", self.b0)?;
        positive("noise_density", self.noise_density)?;
        positive("v2i_pathloss_exponent", self.v2i_pathloss_exponent)?;
        positive("wired_energy_per_bit", self.wired_energy_per_bit)?;
        positive("wired_delay_per_bit", self.wired_delay_per_bit)?;
        positive("d_v2v_max", self.d_v2v_max)?;
        nonnegative("setup_delay", self.setup_delay)?;
        if let Some(t) = self.tau_max {
            positive("tau_max", t)?;
        }
        if self.num_subchannels == 0 {
            return Err(ModelError::InvalidParams("num_subchannels must be positive".into()));
        }
        let implied = self.b0 * self.num_subchannels as f64;
        if ((implied - self.b_total) / self.b_total).abs() > 1e-9 {
            return Err(ModelError::InvalidParams(format!(
                "b0 * num_subchannels = {implied} differs from b_total = {}",
                self.b_total
            )));
        }
        for f in &self.fading {
            positive("fading gain", f.gain)?;
        }
        Ok(())
    }
}

/// V2V path loss in dB: `63.3 + 17.7 log10(d)`.
pub fn v2v_pathloss_db(dist: f64) -> Result<f64, ModelError> {
    positive("V2V distance", dist)?;
    Ok(63.3 + 17.7 * dist.log10())
}

/// Linear V2V channel gain including the fading factor.
pub fn v2v_gain(dist: f64, fading: f64) -> Result<f64, ModelError> {
    let loss = v2v_pathloss_db(dist)?;
    Ok(10f64.powf(-loss / 10.0) * fading)
}

/// Linear V2I channel gain `d^-delta * fading`.
pub fn v2i_gain(dist: f64, delta: f64, fading: f64) -> Result<f64, ModelError> {
    positive("V2I distance", dist)?;
    Ok(dist.powf(-delta) * fading)
}

/// Energy to push `bits` over a link of `bandwidth` Hz in `tau` seconds at
/// the Shannon rate: `(bw * n0 * tau / gain) * (exp(bits / (tau * bw)) - 1)`.
pub fn transmit_energy(bits: f64, tau: f64, bandwidth: f64, gain: f64, noise: f64) -> Result<f64, ModelError> {
    nonnegative("bits", bits)?;
    if bits == 0.0 {
        return Ok(0.0);
    }
    positive("transmission delay", tau)?;
    positive("bandwidth", bandwidth)?;
    positive("channel gain", gain)?;
    positive("noise density", noise)?;
    let exponent = bits / (tau * bandwidth);
    if exponent > MAX_RATE_EXPONENT {
        return Err(ModelError::Overflow(exponent));
    }
    Ok(bandwidth * noise * tau / gain * exponent.exp_m1())
}

/// Wired hop cost `(E0 * bits, tau0 * bits)`.
pub fn wired_transfer(bits: f64, params: &ChannelParams) -> (f64, f64) {
    (params.wired_energy_per_bit * bits, params.wired_delay_per_bit * bits)
}

pub fn compute_delay(workload: f64, freq: f64) -> Result<f64, ModelError> {
    positive("CPU frequency", freq)?;
    Ok(workload / freq)
}

/// `kappa * C * f^2`.
pub fn compute_energy(kappa: f64, workload: f64, freq: f64) -> Result<f64, ModelError> {
    positive("CPU frequency", freq)?;
    Ok(kappa * workload * freq * freq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn v2v_pathloss_values() {
        assert!(close(v2v_pathloss_db(10.0).unwrap(), 81.0, 1e-12));
        assert!(close(v2v_pathloss_db(1.0).unwrap(), 63.3, 1e-12));
        assert!(close(v2v_pathloss_db(100.0).unwrap(), 98.7, 1e-12));
        assert!(close(v2v_gain(10.0, 1.0).unwrap(), 7.943e-9, 1e-3));
        assert!(v2v_gain(0.0, 1.0).is_err());
        assert!(v2v_gain(-3.0, 1.0).is_err());
    }

    #[test]
    fn v2i_gain_values() {
        assert_eq!(v2i_gain(1.0, 3.0, 1.0).unwrap(), 1.0);
        assert!(close(v2i_gain(10.0, 3.0, 1.0).unwrap(), 1e-3, 1e-12));
        assert!(close(v2i_gain(50.0, 3.0, 1.0).unwrap(), 8e-6, 1e-12));
        assert!(v2i_gain(0.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn rsu_distance_uses_height() {
        let rsu = Rsu {
            id: 1,
            position: Position::new(0.0, 0.0),
            height: 4.0,
            service_range: 200.0,
            max_cpu: 1e11,
            kappa: 1e-23,
            weight: 1.0,
        };
        assert!(close(rsu.distance_to(&Position::new(3.0, 0.0)), 5.0, 1e-12));
    }

    #[test]
    fn transmit_energy_values() {
        let e = transmit_energy(1e6, 0.05, 1e7, 7.943e-9, 1e-14).unwrap();
        let expected = 5e-9 / 7.943e-9 * (2f64.exp() - 1.0);
        assert!(close(e, expected, 1e-12));
        assert!(close(e, 4.022, 1e-3));
        assert_eq!(transmit_energy(0.0, 0.05, 1e7, 1.0, 1e-14).unwrap(), 0.0);
        let e = transmit_energy(1e6, 0.1, 1e7, 1.0, 1e-14).unwrap();
        assert!(close(e, 1e-8 * (1f64.exp() - 1.0), 1e-12));
        assert!(close(e, 1.7183e-8, 1e-4));
    }

    #[test]
    fn transmit_energy_errors() {
        assert!(transmit_energy(1e6, 0.0, 1e7, 1.0, 1e-14).is_err());
        assert!(transmit_energy(1e6, 0.1, 0.0, 1.0, 1e-14).is_err());
        assert!(transmit_energy(1e6, 0.1, 1e7, 0.0, 1e-14).is_err());
        assert!(transmit_energy(-1.0, 0.1, 1e7, 1.0, 1e-14).is_err());
        assert!(matches!(
            transmit_energy(1e9, 1e-3, 1e6, 1.0, 1e-14),
            Err(ModelError::Overflow(_))
        ));
    }

    #[test]
    fn wired_costs() {
        let p = ChannelParams::default();
        let (e, t) = wired_transfer(1e7, &p);
        assert!(close(e, 100.0, 1e-12));
        assert!(close(t, 0.1, 1e-12));
        assert_eq!(wired_transfer(0.0, &p), (0.0, 0.0));
        assert_eq!(wired_transfer(1.0, &p), (1e-5, 1e-8));
    }

    #[test]
    fn compute_costs() {
        assert_eq!(compute_delay(1e9, 1e9).unwrap(), 1.0);
        assert!(close(compute_energy(1e-23, 1e8, 1e9).unwrap(), 1e3, 1e-12));
        assert_eq!(compute_delay(0.0, 1e9).unwrap(), 0.0);
        assert_eq!(compute_energy(1e-23, 0.0, 1e9).unwrap(), 0.0);
        assert!(compute_delay(1.0, 0.0).is_err());
        assert!(compute_energy(1e-23, 1.0, -1.0).is_err());
    }

    #[test]
    fn default_params_are_consistent() {
        let p = ChannelParams::default();
        p.validate().unwrap();
        assert!(close(p.noise_density, 1e-14, 1e-12));
        let p = p.with_bandwidth(100e6, 5e6).unwrap();
        assert_eq!(p.num_subchannels, 20);
        assert!(ChannelParams::default().with_bandwidth(100e6, 3e6).is_err());
    }

    #[test]
    fn task_indexing() {
        let task = SequentialTask {
            owner: 1,
            input_size: 5.0,
            subtasks: vec![
                Subtask { workload: 1.0, output_size: 6.0 },
                Subtask { workload: 2.0, output_size: 7.0 },
            ],
            deadline: 0.2,
        };
        assert_eq!(task.data_into(1), 5.0);
        assert_eq!(task.data_into(2), 6.0);
        assert_eq!(task.total_workload(), 3.0);
        assert_eq!(task.workload_range(2, 3), 2.0);
        task.validate().unwrap();
        let mut bad = task.clone();
        bad.subtasks.clear();
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn energy_decreasing_in_tau(bits in 1e3f64..2e7, tau in 1e-3f64..0.5, bw in 1e5f64..1e8) {
                let t2 = tau * 1.01;
                if let (Ok(a), Ok(b)) = (
                    transmit_energy(bits, tau, bw, 1e-9, 1e-14),
                    transmit_energy(bits, t2, bw, 1e-9, 1e-14),
                ) {
                    prop_assert!(b < a);
                }
            }

            #[test]
            fn energy_decreasing_in_bandwidth(bits in 1e3f64..2e7, tau in 1e-3f64..0.5, bw in 1e5f64..1e8) {
                if let (Ok(a), Ok(b)) = (
                    transmit_energy(bits, tau, bw, 1e-9, 1e-14),
                    transmit_energy(bits, tau, bw * 1.01, 1e-9, 1e-14),
                ) {
                    prop_assert!(b < a);
                }
            }

            #[test]
            fn energy_is_power_times_delay(kappa in 1e-24f64..1e-22, c in 1e6f64..1e10, f in 1e8f64..1e11) {
                let e = compute_energy(kappa, c, f).unwrap();
                let t = compute_delay(c, f).unwrap();
                let p = kappa * f.powi(3);
                prop_assert!((e - p * t).abs() <= 1e-12 * e);
            }
        }
    }
}
