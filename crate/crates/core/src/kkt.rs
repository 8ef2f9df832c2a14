//! Stationarity solutions shared by both tiers.
//!
//! Transmission energy over a link depends on the delay/bandwidth product,
//! so the optimal delay for a fixed bandwidth and the optimal bandwidth for
//! a fixed delay have the same Lambert-W form. [`link_resource`] returns
//! whichever of the two is not held fixed.

use std::f64::consts::E;

use crate::numerics::{lambert_w0, NumericsError};

/// Optimal delay (given bandwidth) or bandwidth (given delay) for sending
/// `bits` when the multiplier on that resource is `multiplier`:
///
/// `bits / (fixed * (W0((gain * multiplier / (weight * noise * fixed) - 1) / e) + 1))`
///
/// Returns 0 for zero bits and `inf` for a zero multiplier.
pub fn link_resource(
    bits: f64,
    fixed: f64,
    gain: f64,
    weight: f64,
    noise: f64,
    multiplier: f64,
) -> Result<f64, NumericsError> {
    if bits == 0.0 {
        return Ok(0.0);
    }
    let ratio = gain * multiplier / (weight * noise * fixed);
    if ratio.is_infinite() {
        return Ok(0.0);
    }
    let spectral = lambert_w0((ratio - 1.0) / E)? + 1.0;
    if spectral <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(bits / (fixed * spectral))
}

/// Optimal CPU frequency for multiplier `lambda`: `min((lambda / (2 w kappa))^(1/3), f_max)`.
pub fn cpu_frequency(lambda: f64, weight: f64, kappa: f64, f_max: f64) -> f64 {
    let interior = (lambda / (2.0 * weight * kappa)).cbrt();
    if interior.is_nan() {
        return f_max;
    }
    interior.min(f_max)
}

/// Unconstrained (interior) frequency for `lambda`, before the device cap.
pub fn interior_frequency(lambda: f64, weight: f64, kappa: f64) -> f64 {
    (lambda / (2.0 * weight * kappa)).cbrt()
}

/// Multiplier at which a device starts running at its cap.
pub fn saturation_multiplier(weight: f64, kappa: f64, f_max: f64) -> f64 {
    2.0 * weight * kappa * f_max.powi(3)
}
