//! Scalar special functions and one-dimensional root finding.
//!
//! Both tier solvers reduce their multiplier searches to monotone scalar
//! problems, so everything here works on `f64 -> f64` closures.

use std::f64::consts::E;

use thiserror::Error;

/// Distance below the branch point `-1/e` that is still clamped to `W0 = -1`.
pub const BRANCH_SLACK: f64 = 1e-12;

/// Relative step tolerance for the Halley iteration in [`lambert_w0`].
pub const LAMBERT_TOLERANCE: f64 = 1e-12;

/// Default absolute tolerance of [`bisect_root`].
pub const DEFAULT_BISECTION_TOLERANCE: f64 = 1e-9;

/// Default iteration budget of [`bisect_root`].
pub const DEFAULT_MAX_ITERS: usize = 200;

/// Largest upper end [`expand_upper_bracket`] will probe by default.
pub const DEFAULT_BRACKET_CAP: f64 = 1e30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("argument {0} is outside the principal Lambert W domain [-1/e, inf)")]
    Domain(f64),
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("bisection did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("no sign change found before the bracket cap {0}")]
    BracketOverflow(f64),
    #[error("invalid bracket [{lo}, {hi}] with tolerance {tolerance}")]
    InvalidBracket { lo: f64, hi: f64, tolerance: f64 },
}

/// Principal branch of the Lambert W function: the `w >= -1` solving `w e^w = x`.
///
/// The starting point is `ln(1 + x)` for `x >= 0` and the branch-point series
/// in `p = sqrt(2 (e x + 1))` for negative `x`; Halley's method polishes it.
/// For `x > e` the iteration runs on `w + ln w = ln x`, which never overflows.
pub fn lambert_w0(x: f64) -> Result<f64, NumericsError> {
    if x.is_nan() {
        return Err(NumericsError::Domain(x));
    }
    let branch = -1.0 / E;
    if x < branch {
        if x >= branch - BRANCH_SLACK {
            return Ok(-1.0);
        }
        return Err(NumericsError::Domain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    if x < 0.0 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        let series = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
            - 43.0 / 540.0 * p.powi(4);
        if p < 1e-3 {
            return Ok(series);
        }
        // near zero the plain Taylor start is better than the branch series
        let mut w = if x > -0.25 { x - x * x } else { series };
        for _ in 0..64 {
            let ew = w.exp();
            let f = w * ew - x;
            let wp1 = w + 1.0;
            let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
            let step = f / denom;
            let next = (w - step).max(-1.0);
            let done = (next - w).abs() <= LAMBERT_TOLERANCE * (1.0 + next.abs());
            w = next;
            if done {
                break;
            }
        }
        return Ok(w);
    }

    if x <= E {
        let mut w = x.ln_1p();
        for _ in 0..64 {
            let ew = w.exp();
            let f = w * ew - x;
            let wp1 = w + 1.0;
            let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
            let next = w - f / denom;
            let done = (next - w).abs() <= LAMBERT_TOLERANCE * next.abs().max(1e-300);
            w = next;
            if done {
                break;
            }
        }
        return Ok(w);
    }

    // g(w) = w + ln w - ln x, g' = 1 + 1/w, g'' = -1/w^2
    let ln_x = x.ln();
    let mut w = ln_x - ln_x.ln().max(0.0);
    if w < 1.0 {
        w = 1.0;
    }
    for _ in 0..64 {
        let g = w + w.ln() - ln_x;
        let g1 = 1.0 + 1.0 / w;
        let g2 = -1.0 / (w * w);
        let next = w - 2.0 * g * g1 / (2.0 * g1 * g1 - g * g2);
        let done = (next - w).abs() <= LAMBERT_TOLERANCE * next;
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

/// Bracket for a scalar monotone root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketedRoot {
    pub lo: f64,
    pub hi: f64,
    /// Absolute width at which the search stops.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl BracketedRoot {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            tolerance: DEFAULT_BISECTION_TOLERANCE,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    fn check(&self) -> Result<(), NumericsError> {
        if !(self.lo < self.hi) || !(self.tolerance > 0.0) || self.max_iters == 0 {
            return Err(NumericsError::InvalidBracket {
                lo: self.lo,
                hi: self.hi,
                tolerance: self.tolerance,
            });
        }
        Ok(())
    }
}

fn opposite_or_root(f_lo: f64, f_hi: f64) -> bool {
    f_lo == 0.0 || f_hi == 0.0 || (f_lo < 0.0) != (f_hi < 0.0)
}

/// Bisection on a monotone function. Returns the midpoint of the final
/// interval, or an endpoint/midpoint where `f` is exactly zero.
pub fn bisect_root<F>(mut f: F, bracket: BracketedRoot) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    bracket.check()?;
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo.is_nan() || f_hi.is_nan() || !opposite_or_root(f_lo, f_hi) {
        return Err(NumericsError::NoSignChange { lo, hi, f_lo, f_hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    let lo_negative = f_lo < 0.0;
    for _ in 0..bracket.max_iters {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= bracket.tolerance || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= bracket.tolerance {
        return Ok(0.5 * (lo + hi));
    }
    Err(NumericsError::NoConvergence(bracket.max_iters))
}

/// Bisection for an increasing `f` that returns a point on the nonnegative
/// side: the returned `x` satisfies `0 <= f(x) <= residual`, or is the upper
/// end of an interval narrower than the bracket tolerance.
///
/// Solvers use this to pick a multiplier that meets a constraint exactly
/// rather than straddling it.
pub fn bisect_nonnegative<F>(
    mut f: F,
    bracket: BracketedRoot,
    residual: f64,
) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    bracket.check()?;
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo.is_nan() || f_hi.is_nan() || f_hi < 0.0 || f_lo > 0.0 {
        return Err(NumericsError::NoSignChange { lo, hi, f_lo, f_hi });
    }
    if f_hi <= residual {
        return Ok(hi);
    }
    for _ in 0..bracket.max_iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= bracket.tolerance * hi.abs().max(f64::MIN_POSITIVE) {
            return Ok(hi);
        }
        let fm = f(mid);
        if fm.is_nan() {
            return Err(NumericsError::NoSignChange { lo, hi: mid, f_lo, f_hi: fm });
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            if fm <= residual {
                return Ok(hi);
            }
        }
    }
    Err(NumericsError::NoConvergence(bracket.max_iters))
}

/// Grows an upper end by doubling from `max(lo, 1)` until `f(hi) >= 0`.
///
/// `f` must be increasing with `f(lo) < 0`. The returned bracket keeps the
/// last probe that was still negative as its lower end.
pub fn expand_upper_bracket<F>(mut f: F, lo: f64, cap: f64) -> Result<BracketedRoot, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    let f_lo = f(lo);
    if !(f_lo < 0.0) {
        return Err(NumericsError::NoSignChange { lo, hi: lo, f_lo, f_hi: f_lo });
    }
    let mut last_negative = lo;
    let mut hi = lo.max(1.0);
    if hi == lo {
        hi *= 2.0;
    }
    while hi <= cap {
        let fh = f(hi);
        if fh >= 0.0 {
            return Ok(BracketedRoot::new(last_negative, hi));
        }
        last_negative = hi;
        hi *= 2.0;
    }
    Err(NumericsError::BracketOverflow(cap))
}
