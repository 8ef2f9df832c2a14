//! Summaries and trend verdicts over sweep rows.
//!
//! Trend checks compare raw per-task energies of the same seed, so the
//! bandwidth normalization never decides a verdict. Two energies closer
//! than [`REL_TOL`] count as equal for the non-strict checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentId, HarnessError, Method, ResultRow};
use crate::baselines::PolicyId;

/// Relative slack of non-strict comparisons.
pub const REL_TOL: f64 = 1e-9;
/// Largest accepted relative gap between rounded and continuous RSU-tier
/// objectives.
pub const SUBCHANNEL_GAP_LIMIT: f64 = 0.05;

/// Mean and standard error of the AEC of one (policy, value, aux) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentId,
    pub policy: Method,
    pub param: String,
    pub value: f64,
    pub aux_param: Option<String>,
    pub aux_value: Option<f64>,
    pub mean: f64,
    /// Sample standard deviation over seeds divided by the square root of
    /// the seed count; zero for a single seed.
    pub stderr: f64,
    /// Seeds with a finite AEC at this point.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub experiment: ExperimentId,
    pub name: String,
    /// Soft verdicts are informational and never fail a run.
    pub hard: bool,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match (self.passed, self.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-FAIL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub summaries: Vec<Summary>,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// All hard verdicts passed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed || !v.hard)
    }

    /// Plain-text table followed by one line per verdict.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<20} {:<14} {:>10} {:>12} {:>14} {:>12} {:>5}",
            "exp", "policy", "param", "value", "aux", "aec_mean", "aec_stderr", "n"
        );
        for s in &self.summaries {
            let aux = match (&s.aux_param, s.aux_value) {
                (Some(p), Some(v)) => format!("{p}={v}"),
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "{:<8} {:<20} {:<14} {:>10} {:>12} {:>14.6e} {:>12.4e} {:>5}",
                s.experiment.name(),
                s.policy.name(),
                s.param,
                s.value,
                aux,
                s.mean,
                s.stderr,
                s.seeds
            );
        }
        out.push('\n');
        for v in &self.verdicts {
            let _ = writeln!(out, "[{}] {} {}: {}", v.label(), v.experiment, v.name, v.detail);
        }
        out
    }

    /// Writes `<experiment>_summary.csv` per experiment into `dir`.
    pub fn write_data_files(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        let mut by_exp: BTreeMap<ExperimentId, Vec<&Summary>> = BTreeMap::new();
        for s in &self.summaries {
            by_exp.entry(s.experiment).or_default().push(s);
        }
        let mut written = Vec::new();
        for (exp, list) in by_exp {
            let path = dir.join(format!("{}_summary.csv", exp.name()));
            let file = std::fs::File::create(&path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(file);
            let csv_err = |e: csv::Error| HarnessError::Csv(e.to_string());
            w.write_record(["policy", "param", "value", "aux_param", "aux_value", "aec_mean", "aec_stderr", "seeds"])
                .map_err(csv_err)?;
            for s in list {
                w.write_record([
                    s.policy.name().to_string(),
                    s.param.clone(),
                    format!("{}", s.value),
                    s.aux_param.clone().unwrap_or_default(),
                    s.aux_value.map(|v| format!("{v}")).unwrap_or_default(),
                    format!("{:.12e}", s.mean),
                    format!("{:.12e}", s.stderr),
                    s.seeds.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Summaries and verdicts for every experiment present in `rows`.
pub fn report(rows: &[ResultRow]) -> Report {
    Report {
        summaries: summarize(rows),
        verdicts: verdicts(rows),
    }
}

type PointKey = (ExperimentId, String, u64, Option<u64>);

pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    // first-seen order of (experiment, policy, value, aux) keeps the table
    // in sweep order
    let mut order: Vec<(PointKey, &ResultRow)> = Vec::new();
    let mut values: BTreeMap<PointKey, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.experiment,
            r.policy.name().to_string(),
            r.value.to_bits(),
            r.aux_value.map(f64::to_bits),
        );
        let list = values.entry(key.clone()).or_insert_with(|| {
            order.push((key.clone(), r));
            Vec::new()
        });
        if r.aec.is_finite() {
            list.push(r.aec);
        }
    }
    let mut out: Vec<Summary> = order
        .into_iter()
        .map(|(key, r)| {
            let v = &values[&key];
            let (mean, stderr) = mean_stderr(v);
            Summary {
                experiment: r.experiment,
                policy: r.policy,
                param: r.param.clone(),
                value: r.value,
                aux_param: r.aux_param.clone(),
                aux_value: r.aux_value,
                mean,
                stderr,
                seeds: v.len(),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.experiment, a.policy.name())
            .cmp(&(b.experiment, b.policy.name()))
            .then(a.aux_value.unwrap_or(0.0).total_cmp(&b.aux_value.unwrap_or(0.0)))
            .then(a.value.total_cmp(&b.value))
    });
    out
}

/// Mean and standard error; NaN mean for no samples.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-seed lookup of raw energies.
struct Table<'a> {
    rows: Vec<&'a ResultRow>,
}

impl<'a> Table<'a> {
    fn new(rows: &'a [ResultRow], exp: ExperimentId) -> Self {
        Self {
            rows: rows.iter().filter(|r| r.experiment == exp).collect(),
        }
    }

    fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn has(&self, method: Method) -> bool {
        self.rows.iter().any(|r| r.policy == method)
    }

    fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    fn values(&self) -> Vec<f64> {
        sorted_unique(self.rows.iter().map(|r| r.value))
    }

    fn auxes(&self) -> Vec<Option<f64>> {
        let mut a: Vec<Option<f64>> = sorted_unique(self.rows.iter().filter_map(|r| r.aux_value))
            .into_iter()
            .map(Some)
            .collect();
        if a.is_empty() {
            a.push(None);
        }
        a
    }

    fn get(&self, seed: u64, method: Method, value: f64, aux: Option<f64>) -> Option<&'a ResultRow> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.policy == method && r.value == value && r.aux_value == aux)
            .copied()
    }

    /// Raw energy of a cell in which every considered task was planned.
    fn complete(&self, seed: u64, method: Method, value: f64, aux: Option<f64>) -> Option<f64> {
        self.get(seed, method, value, aux)
            .filter(|r| r.infeasible == 0 && r.raw_energy_j.is_finite())
            .map(|r| r.raw_energy_j)
    }
}

fn sorted_unique(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = it.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn le(a: f64, b: f64) -> bool {
    a <= b + REL_TOL * b.abs().max(a.abs())
}

/// Accumulates one verdict's checks.
struct Check {
    checked: usize,
    failures: Vec<String>,
    skipped: usize,
}

impl Check {
    fn new() -> Self {
        Self {
            checked: 0,
            failures: Vec::new(),
            skipped: 0,
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, exp: ExperimentId, name: &str, hard: bool) -> Verdict {
        let passed = self.checked > 0 && self.failures.is_empty();
        let mut detail = format!("{} checks, {} violations", self.checked, self.failures.len());
        if self.skipped > 0 {
            let _ = write!(detail, ", {} incomplete cells skipped", self.skipped);
        }
        if self.checked == 0 {
            detail.push_str(", nothing to compare");
        }
        if let Some(first) = self.failures.first() {
            let _ = write!(detail, "; first: {first}");
        }
        Verdict {
            experiment: exp,
            name: name.to_string(),
            hard,
            passed,
            detail,
        }
    }
}

/// Walks every per-seed curve of `method` along the swept value and checks
/// consecutive pairs with `ok(previous, next)`.
fn along_value(t: &Table<'_>, method: Method, check: &mut Check, ok: impl Fn(f64, f64) -> bool) {
    let values = t.values();
    for seed in t.seeds() {
        for aux in t.auxes() {
            let curve: Vec<(f64, Option<f64>)> = values.iter().map(|&v| (v, t.complete(seed, method, v, aux))).collect();
            for w in curve.windows(2) {
                match (w[0].1, w[1].1) {
                    (Some(a), Some(b)) => check.record(ok(a, b), || {
                        format!("seed {seed} {method} {} -> {} aux {aux:?}: {a:.6e} -> {b:.6e}", w[0].0, w[1].0)
                    }),
                    _ => check.skipped += 1,
                }
            }
        }
    }
}

/// Same as [`along_value`] but along the aux parameter at fixed value.
fn along_aux(t: &Table<'_>, method: Method, check: &mut Check, ok: impl Fn(f64, f64) -> bool) {
    let auxes = t.auxes();
    for seed in t.seeds() {
        for v in t.values() {
            let curve: Vec<(Option<f64>, Option<f64>)> = auxes.iter().map(|&a| (a, t.complete(seed, method, v, a))).collect();
            for w in curve.windows(2) {
                match (w[0].1, w[1].1) {
                    (Some(a), Some(b)) => check.record(ok(a, b), || {
                        format!("seed {seed} {method} value {v} aux {:?} -> {:?}: {a:.6e} -> {b:.6e}", w[0].0, w[1].0)
                    }),
                    _ => check.skipped += 1,
                }
            }
        }
    }
}

/// Checks `ok(lhs, rhs)` at every (seed, value, aux) point where both
/// methods have complete cells.
fn pointwise(t: &Table<'_>, lhs: Method, rhs: Method, check: &mut Check, ok: impl Fn(f64, f64) -> bool) {
    for seed in t.seeds() {
        for v in t.values() {
            for aux in t.auxes() {
                match (t.complete(seed, lhs, v, aux), t.complete(seed, rhs, v, aux)) {
                    (Some(a), Some(b)) => check.record(ok(a, b), || {
                        format!("seed {seed} value {v} aux {aux:?}: {lhs} {a:.6e} vs {rhs} {b:.6e}")
                    }),
                    _ => {
                        if t.get(seed, lhs, v, aux).is_some() && t.get(seed, rhs, v, aux).is_some() {
                            check.skipped += 1;
                        }
                    }
                }
            }
        }
    }
}

fn monotone_all(t: &Table<'_>, exp: ExperimentId, name: &str, hard: bool, ok: impl Fn(f64, f64) -> bool + Copy) -> Verdict {
    let mut c = Check::new();
    let mut methods: Vec<Method> = t.rows.iter().map(|r| r.policy).collect();
    methods.dedup();
    methods.sort_by_key(|m| m.name());
    methods.dedup();
    for m in methods {
        along_value(t, m, &mut c, ok);
    }
    c.finish(exp, name, hard)
}

fn proposed_below(t: &Table<'_>, exp: ExperimentId, others: &[Method], strict: bool, name: &str) -> Verdict {
    let mut c = Check::new();
    for &o in others.iter().filter(|o| t.has(**o)) {
        if strict {
            pointwise(t, Method::Proposed, o, &mut c, |a, b| a < b);
        } else {
            pointwise(t, Method::Proposed, o, &mut c, le);
        }
    }
    c.finish(exp, name, true)
}

pub fn verdicts(rows: &[ResultRow]) -> Vec<Verdict> {
    use ExperimentId::*;
    let mut out = Vec::new();
    let non_increasing = |a: f64, b: f64| le(b, a);
    let non_decreasing = |a: f64, b: f64| le(a, b);
    let strictly_decreasing = |a: f64, b: f64| b < a;
    let fixed = [PolicyId::Fom, PolicyId::Pom, PolicyId::Bfm].map(Method::Baseline);
    let t2 = [PolicyId::T2EqualEqual, PolicyId::T2EqualRandom].map(Method::Baseline);

    let t = Table::new(rows, Fig3);
    if !t.is_empty() {
        out.push(proposed_below(&t, Fig3, &[Method::Baseline(PolicyId::Foo)], false, "proposed <= FOO"));
        out.push(proposed_below(&t, Fig3, &fixed, true, "proposed < FOM, POM, BFM"));
        let mut c = Check::new();
        along_value(&t, Method::Proposed, &mut c, non_increasing);
        out.push(c.finish(Fig3, "proposed non-increasing in deadline", true));
        let mut c = Check::new();
        for o in fixed.iter().filter(|o| t.has(**o)) {
            pointwise(&t, Method::Baseline(PolicyId::Foo), *o, &mut c, le);
        }
        out.push(c.finish(Fig3, "FOO <= fixed-frequency baselines", false));
    }

    let t = Table::new(rows, Fig4);
    if !t.is_empty() {
        let mut c = Check::new();
        pointwise(&t, Method::Proposed, Method::EqualSplit, &mut c, le);
        pointwise(&t, Method::EqualSplit, Method::RandomSplit, &mut c, le);
        out.push(c.finish(Fig4, "optimal <= equal <= random split", true));
        let mut c = Check::new();
        along_value(&t, Method::Proposed, &mut c, non_increasing);
        out.push(c.finish(Fig4, "finer division lowers optimal AEC", false));
    }

    let t = Table::new(rows, Fig5);
    if !t.is_empty() {
        let mut c = Check::new();
        along_value(&t, Method::Proposed, &mut c, strictly_decreasing);
        out.push(c.finish(Fig5, "AEC decreasing in B_V2V", true));
        let mut c = Check::new();
        along_aux(&t, Method::Proposed, &mut c, non_decreasing);
        out.push(c.finish(Fig5, "AEC non-decreasing in NV-HV distance", true));
    }

    let t = Table::new(rows, Fig6);
    if !t.is_empty() {
        let mut c = Check::new();
        along_value(&t, Method::Proposed, &mut c, non_increasing);
        out.push(c.finish(Fig6, "AEC non-increasing in NV frequency", false));
        let mut c = Check::new();
        along_aux(&t, Method::Proposed, &mut c, non_decreasing);
        out.push(c.finish(Fig6, "AEC non-decreasing in NV kappa", false));
    }

    let t = Table::new(rows, Fig7);
    if !t.is_empty() {
        out.push(monotone_all(&t, Fig7, "AEC non-decreasing in N'", true, non_decreasing));
        out.push(proposed_below(&t, Fig7, &t2, false, "proposed <= RSU-tier baselines"));
        let mut c = Check::new();
        pointwise(&t, Method::ProposedContinuous, Method::Proposed, &mut c, le);
        out.push(c.finish(Fig7, "continuous <= integer", true));
    }

    let t = Table::new(rows, Fig8);
    if !t.is_empty() {
        out.push(monotone_all(&t, Fig8, "AEC non-increasing in B", true, non_increasing));
        out.push(proposed_below(&t, Fig8, &t2, false, "proposed <= RSU-tier baselines"));
        let mut c = Check::new();
        along_aux(&t, Method::Proposed, &mut c, non_increasing);
        out.push(c.finish(Fig8, "AEC non-increasing in deadline", false));
    }

    let t = Table::new(rows, Fig9);
    if !t.is_empty() {
        let mut bound = Check::new();
        let mut within = Check::new();
        let mut trend = Check::new();
        let values = t.values();
        for seed in t.seeds() {
            let gaps: Vec<Option<f64>> = values
                .iter()
                .map(|&v| {
                    let int = t.complete(seed, Method::Proposed, v, None)?;
                    let cont = t.complete(seed, Method::ProposedContinuous, v, None)?;
                    bound.record(le(cont, int), || format!("seed {seed} b0 {v}: integer {int:.6e} < continuous {cont:.6e}"));
                    let gap = (int - cont) / cont;
                    within.record(gap <= SUBCHANNEL_GAP_LIMIT, || format!("seed {seed} b0 {v}: gap {gap:.4}"));
                    Some(gap)
                })
                .collect();
            for (i, w) in gaps.windows(2).enumerate() {
                match (w[0], w[1]) {
                    (Some(a), Some(b)) => trend.record(b >= a - REL_TOL, || {
                        format!("seed {seed} b0 {} -> {}: gap {a:.3e} -> {b:.3e}", values[i], values[i + 1])
                    }),
                    _ => trend.skipped += 1,
                }
            }
        }
        out.push(bound.finish(Fig9, "integer >= continuous", true));
        out.push(within.finish(Fig9, "integer within 5% of continuous", true));
        out.push(trend.finish(Fig9, "gap non-decreasing in B0", true));
    }

    let t = Table::new(rows, Custom);
    if !t.is_empty() {
        let others: Vec<Method> = PolicyId::ALL.into_iter().map(Method::Baseline).collect();
        let mut v = proposed_below(&t, Custom, &others, false, "proposed <= baselines");
        v.hard = false;
        out.push(v);
    }
    out
}
