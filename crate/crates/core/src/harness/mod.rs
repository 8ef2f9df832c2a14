//! Experiment sweeps, config and tabular output.
//!
//! A [`SweepSpec`] names an experiment, the swept parameter and its values,
//! the methods to compare and the seeds. [`run`] evaluates every seed on a
//! rayon pool and returns rows in a canonical order, so the CSV written by
//! [`write_csv`] depends only on the config and the spec.

pub mod config;
mod experiments;
pub mod pipeline;
pub mod report;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Config, SimConfig};
pub use pipeline::{solve_scenario, ScenarioPlan};
pub use report::{report, Report, Summary, Verdict};

use crate::baselines::PolicyId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(String),
}

impl HarnessError {
    /// Stable short code for machine-readable error output.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Config(_) => "invalid_config",
            Self::Spec(_) => "invalid_sweep",
            Self::Io(_) => "io",
            Self::Csv(_) => "csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Custom,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        Self::Fig3,
        Self::Fig4,
        Self::Fig5,
        Self::Fig6,
        Self::Fig7,
        Self::Fig8,
        Self::Fig9,
        Self::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Fig7 => "fig7",
            Self::Fig8 => "fig8",
            Self::Fig9 => "fig9",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Spec(format!("unknown experiment '{s}'")))
    }
}

/// Something whose energy a sweep reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Optimal splits and resources; subchannel-rounded on the RSU tier.
    Proposed,
    /// RSU tier before subchannel rounding.
    ProposedContinuous,
    /// Vehicle tier: NV keeps the first half of the subtasks, resources
    /// optimized.
    EqualSplit,
    /// Vehicle tier: uniformly random feasible split, resources optimized,
    /// averaged over the configured number of draws.
    RandomSplit,
    Baseline(PolicyId),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "PROPOSED",
            Self::ProposedContinuous => "PROPOSED_CONTINUOUS",
            Self::EqualSplit => "EQUAL_SPLIT",
            Self::RandomSplit => "RANDOM_SPLIT",
            Self::Baseline(p) => p.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        match upper.as_str() {
            "PROPOSED" => Ok(Self::Proposed),
            "PROPOSED_CONTINUOUS" => Ok(Self::ProposedContinuous),
            "EQUAL_SPLIT" => Ok(Self::EqualSplit),
            "RANDOM_SPLIT" => Ok(Self::RandomSplit),
            _ => PolicyId::from_str(s)
                .map(Self::Baseline)
                .map_err(|_| HarnessError::Spec(format!("unknown method '{s}'"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One sweep: a swept parameter, an optional second parameter crossed with
/// it, methods and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub experiment: ExperimentId,
    pub param: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub aux_param: Option<String>,
    #[serde(default)]
    pub aux_values: Vec<f64>,
    pub methods: Vec<Method>,
    /// May be left out of spec files; the CLI then fills in the seeds.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Parameters a custom sweep may vary.
pub const CUSTOM_PARAMS: [&str; 8] = [
    "deadline_s",
    "b_v2v_mhz",
    "b_total_mhz",
    "b0_mhz",
    "vehicle_density_per_m",
    "nv_fraction",
    "subtasks",
    "road_length_m",
];

/// Swept parameter and values, optional aux sweep, and methods.
type Protocol = (&'static str, Vec<f64>, Option<(&'static str, Vec<f64>)>, Vec<Method>);

impl SweepSpec {
    /// The standard protocol of a figure experiment. For `custom` this is a
    /// deadline sweep over the whole pipeline.
    pub fn figure(experiment: ExperimentId, seeds: Vec<u64>) -> Self {
        use Method::*;
        use PolicyId::*;
        let (param, values, aux, methods): Protocol = match experiment {
            ExperimentId::Fig3 => (
                "deadline_s",
                vec![0.1, 0.15, 0.2, 0.3, 0.4],
                None,
                vec![Proposed, Baseline(Foo), Baseline(Fom), Baseline(Pom), Baseline(Bfm)],
            ),
            ExperimentId::Fig4 => ("subtasks", vec![8.0, 16.0, 24.0, 32.0], None, vec![Proposed, EqualSplit, RandomSplit]),
            ExperimentId::Fig5 => (
                "b_v2v_mhz",
                vec![0.5, 1.0, 5.0, 10.0, 100.0],
                Some(("distance_m", vec![10.0, 30.0, 50.0, 70.0])),
                vec![Proposed],
            ),
            ExperimentId::Fig6 => (
                "nv_cpu_ghz",
                vec![4.0, 5.0, 6.0, 7.0],
                Some(("nv_kappa", vec![1e-23, 1.5e-23, 2e-23])),
                vec![Proposed],
            ),
            ExperimentId::Fig7 => (
                "nvs",
                vec![2.0, 4.0, 6.0, 8.0],
                None,
                vec![Proposed, ProposedContinuous, Baseline(T2EqualEqual), Baseline(T2EqualRandom)],
            ),
            ExperimentId::Fig8 => (
                "b_total_mhz",
                vec![20.0, 50.0, 100.0, 200.0],
                Some(("deadline_s", vec![0.2, 0.3, 0.4])),
                vec![Proposed, ProposedContinuous, Baseline(T2EqualEqual), Baseline(T2EqualRandom)],
            ),
            ExperimentId::Fig9 => ("b0_mhz", vec![1.0, 2.0, 5.0], None, vec![Proposed, ProposedContinuous]),
            ExperimentId::Custom => (
                "deadline_s",
                vec![0.1, 0.2, 0.4],
                None,
                vec![Proposed, Baseline(Foo), Baseline(Fom), Baseline(T2EqualEqual)],
            ),
        };
        let (aux_param, aux_values) = match aux {
            Some((p, v)) => (Some(p.to_string()), v),
            None => (None, Vec::new()),
        };
        Self {
            experiment,
            param: param.to_string(),
            values,
            aux_param,
            aux_values,
            methods,
            seeds,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.values.is_empty() {
            return bad("no swept values".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if self.values.iter().chain(&self.aux_values).any(|v| !v.is_finite()) {
            return bad("swept values must be finite".into());
        }
        if self.aux_param.is_some() != !self.aux_values.is_empty() {
            return bad("aux_param and aux_values go together".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("duplicate seeds".into());
        }
        experiments::check_spec(self)
    }

    /// Aux values, or a single placeholder when there is no aux parameter.
    pub(crate) fn aux_or_none(&self) -> Vec<Option<f64>> {
        if self.aux_values.is_empty() {
            vec![None]
        } else {
            self.aux_values.iter().copied().map(Some).collect()
        }
    }
}

/// One (seed, value, aux value, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub policy: Method,
    pub param: String,
    pub value: f64,
    pub aux_param: Option<String>,
    pub aux_value: Option<f64>,
    /// Mean energy per served task scaled by default over used bandwidth, J.
    pub aec: f64,
    /// Mean energy per served task, J.
    pub raw_energy_j: f64,
    pub mean_delay_s: f64,
    /// Tasks considered: matched pairs on the vehicle tier, NVs on the RSU
    /// tier, all NVs for custom sweeps.
    pub matched: usize,
    /// Tasks in the averaged set.
    pub served: usize,
    /// Tasks this method could not plan.
    pub infeasible: usize,
    /// Solver iterations summed over the cell.
    pub iterations: usize,
}

pub const CSV_HEADER: [&str; 14] = [
    "experiment",
    "seed",
    "policy",
    "param",
    "value",
    "aux_param",
    "aux_value",
    "aec",
    "raw_energy_j",
    "mean_delay_s",
    "matched",
    "served",
    "infeasible",
    "iterations",
];

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.12e}")
    }
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.experiment.to_string(),
            self.seed.to_string(),
            self.policy.to_string(),
            self.param.clone(),
            format!("{}", self.value),
            self.aux_param.clone().unwrap_or_default(),
            self.aux_value.map(|v| format!("{v}")).unwrap_or_default(),
            fmt_float(self.aec),
            fmt_float(self.raw_energy_j),
            fmt_float(self.mean_delay_s),
            self.matched.to_string(),
            self.served.to_string(),
            self.infeasible.to_string(),
            self.iterations.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self, HarnessError> {
        let bad = |what: &str| HarnessError::Csv(format!("bad {what} in row {:?}", rec.position().map(|p| p.line())));
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(CSV_HEADER[i]));
        let float = |i: usize| -> Result<f64, HarnessError> {
            let s = field(i)?;
            if s == "nan" {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| bad(CSV_HEADER[i]))
            }
        };
        let count = |i: usize| -> Result<usize, HarnessError> { field(i)?.parse().map_err(|_| bad(CSV_HEADER[i])) };
        if rec.len() != CSV_HEADER.len() {
            return Err(bad("field count"));
        }
        let aux_param = Some(field(5)?.to_string()).filter(|s| !s.is_empty());
        let aux_value = if field(6)?.is_empty() { None } else { Some(float(6)?) };
        Ok(Self {
            experiment: field(0)?.parse()?,
            seed: field(1)?.parse().map_err(|_| bad("seed"))?,
            policy: field(2)?.parse()?,
            param: field(3)?.to_string(),
            value: float(4)?,
            aux_param,
            aux_value,
            aec: float(7)?,
            raw_energy_j: float(8)?,
            mean_delay_s: float(9)?,
            matched: count(10)?,
            served: count(11)?,
            infeasible: count(12)?,
            iterations: count(13)?,
        })
    }
}

/// Runs a sweep. Cells that cannot be planned show up as infeasible counts
/// or NaN energies; only an invalid spec or config is an error.
pub fn run(spec: &SweepSpec, config: &SimConfig) -> Result<Vec<ResultRow>, HarnessError> {
    spec.validate()?;
    let per_seed: Vec<Vec<ResultRow>> = spec
        .seeds
        .par_iter()
        .map(|&seed| experiments::run_seed(spec, config, seed))
        .collect();
    let mut rows: Vec<ResultRow> = per_seed.into_iter().flatten().collect();
    canonical_order(spec, &mut rows);
    Ok(rows)
}

/// Sorts rows by seed, value, aux value and method in spec order.
fn canonical_order(spec: &SweepSpec, rows: &mut [ResultRow]) {
    let position = |list: &[f64], v: f64| list.iter().position(|x| *x == v).unwrap_or(usize::MAX);
    let method_pos = |m: Method| spec.methods.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| {
        (
            r.seed,
            position(&spec.values, r.value),
            r.aux_value.map_or(0, |a| position(&spec.aux_values, a)),
            method_pos(r.policy),
        )
    });
}

/// Writes rows as CSV with the documented header and LF line endings.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER).map_err(|e| HarnessError::Csv(e.to_string()))?;
    for row in rows {
        w.write_record(row.record()).map_err(|e| HarnessError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

pub fn to_csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn write_csv_file(rows: &[ResultRow], path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    }
    let file = std::fs::File::create(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    write_csv(rows, std::io::BufWriter::new(file))
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let header = r.headers().map_err(|e| HarnessError::Csv(e.to_string()))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(HarnessError::Csv("unexpected header".into()));
    }
    r.records()
        .map(|rec| ResultRow::from_record(&rec.map_err(|e| HarnessError::Csv(e.to_string()))?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let mut spec = SweepSpec::figure(ExperimentId::Fig3, vec![1]);
        assert!(spec.validate().is_ok());
        spec.methods.clear();
        assert!(spec.validate().is_err());
        let mut spec = SweepSpec::figure(ExperimentId::Fig3, vec![]);
        assert!(spec.validate().is_err());
        spec.seeds = vec![1, 1];
        assert!(spec.validate().is_err());
        let mut spec = SweepSpec::figure(ExperimentId::Fig5, vec![1]);
        spec.aux_values.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn names_round_trip() {
        for e in ExperimentId::ALL {
            assert_eq!(e.name().parse::<ExperimentId>().unwrap(), e);
        }
        for m in [Method::Proposed, Method::RandomSplit, Method::Baseline(PolicyId::Bfm)] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("fig10".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let row = ResultRow {
            experiment: ExperimentId::Fig5,
            seed: 3,
            policy: Method::Proposed,
            param: "b_v2v_mhz".into(),
            value: 0.5,
            aux_param: Some("distance_m".into()),
            aux_value: Some(10.0),
            aec: 1.25,
            raw_energy_j: 0.0625,
            mean_delay_s: f64::NAN,
            matched: 4,
            served: 3,
            infeasible: 1,
            iterations: 0,
        };
        let text = to_csv_string(std::slice::from_ref(&row));
        assert!(!text.contains('\r'));
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].aec, row.aec);
        assert!(back[0].mean_delay_s.is_nan());
        assert_eq!(back[0].aux_value, Some(10.0));
    }
}
