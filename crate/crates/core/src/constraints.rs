//! Pass/fail records produced by the plan validators.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Slack allowed on delay constraints, s.
pub const DELAY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    /// Constraint label, e.g. `"deadline"`.
    pub name: String,
    /// Vehicle or RSU the check refers to, if any.
    pub subject: Option<u32>,
    pub passed: bool,
    /// Signed slack: nonnegative when satisfied.
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ConstraintReport {
    pub fn push(&mut self, name: &str, subject: Option<u32>, passed: bool, residual: f64, detail: impl Into<String>) {
        self.checks.push(ConstraintCheck {
            name: name.to_string(),
            subject,
            passed,
            residual,
            detail: detail.into(),
        });
    }

    /// Records `value <= limit + slack`.
    pub fn at_most(&mut self, name: &str, subject: Option<u32>, value: f64, limit: f64, slack: f64) {
        let residual = limit - value;
        self.push(
            name,
            subject,
            residual >= -slack,
            residual,
            format!("{value:.6e} <= {limit:.6e}"),
        );
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed(&self, name: &str) -> bool {
        self.checks.iter().any(|c| c.name == name && !c.passed)
    }

    pub fn extend(&mut self, other: ConstraintReport) {
        self.checks.extend(other.checks);
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let subject = c.subject.map(|s| format!("[{s}]")).unwrap_or_default();
            writeln!(
                f,
                "{} {}{}: {} (residual {:.3e})",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                subject,
                c.detail,
                c.residual
            )?;
        }
        Ok(())
    }
}
