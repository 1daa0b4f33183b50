//! Factory intensity calibration and the linear range models fitted on
//! ground returns.
//!
//! The sensor reports `i = P_R + f_s·|f_o − (1 − R/R_max)|²`; the simulation
//! works on the raw power `P_R` and re-applies the correction afterwards.

use serde::{Deserialize, Serialize};

use crate::sensor::LaserCalibration;
use crate::{Error, Result};

/// `|f_o − (1 − R/R_max)|²`
pub fn correction_term(range: f64, laser: &LaserCalibration, max_range: f64) -> f64 {
    let d = laser.focal_offset() - (1.0 - range / max_range);
    d * d
}

/// Raw received power from a calibrated intensity. Not clamped: callers
/// decide what to do with negative results.
pub fn invert_calibration(intensity: f64, range: f64, laser: &LaserCalibration, max_range: f64) -> f64 {
    intensity - laser.focal_slope * correction_term(range, laser, max_range)
}

/// Calibrated intensity from raw power; inverse of [`invert_calibration`].
pub fn apply_calibration(power: f64, range: f64, laser: &LaserCalibration, max_range: f64) -> f64 {
    power + laser.focal_slope * correction_term(range, laser, max_range)
}

/// Write-back form used by the snowfall pipeline, where the correction is
/// scaled by the laser's maximum intensity.
pub fn apply_calibration_scaled(power: f64, range: f64, laser: &LaserCalibration, max_range: f64) -> f64 {
    power + laser.max_intensity * laser.focal_slope * correction_term(range, laser, max_range)
}

/// A straight line over range, clamped at zero when evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRangeModel {
    /// Intensity per meter.
    pub slope: f64,
    pub intercept: f64,
    /// Range interval the model was fitted on, meters.
    pub valid_range: (f64, f64),
}

impl LinearRangeModel {
    pub fn new(slope: f64, intercept: f64, valid_range: (f64, f64)) -> Self {
        Self {
            slope,
            intercept,
            valid_range,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(0.0, value, (0.0, f64::INFINITY))
    }

    pub fn eval(&self, range: f64) -> f64 {
        (self.slope * range + self.intercept).max(0.0)
    }
}

/// One ground return used to fit the range models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundSample {
    pub range: f64,
    pub intensity: f64,
    /// Angle between the beam and the ground normal, radians.
    pub incidence: f64,
}

pub const MIN_GROUND_SAMPLES: usize = 50;
pub const MIN_GROUND_SPAN: f64 = 20.0;
pub const POWER_QUANTILE: f64 = 0.95;
pub const NOISE_QUANTILE: f64 = 0.05;
const QUANTILE_ITERATIONS: usize = 20;

/// Fits the transmitted-power proxy and the noise floor from ground returns.
///
/// Intensities are normalized by `cos(incidence)`; the power model is the
/// upper (0.95) quantile line over range and the noise floor the lower
/// (0.05) quantile line.
pub fn estimate_power_and_noise(samples: &[GroundSample]) -> Result<(LinearRangeModel, LinearRangeModel)> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| s.incidence.cos() > 0.0)
        .map(|s| (s.range, s.intensity / s.incidence.cos()))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .unzip();
    if xs.len() < MIN_GROUND_SAMPLES {
        return Err(Error::Estimation(format!(
            "{} usable ground samples, need at least {MIN_GROUND_SAMPLES}",
            xs.len()
        )));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < MIN_GROUND_SPAN {
        return Err(Error::Estimation(format!(
            "ground samples span {:.2} m, need at least {MIN_GROUND_SPAN} m",
            hi - lo
        )));
    }
    let (ps, pi) = quantile_line(&xs, &ys, POWER_QUANTILE, QUANTILE_ITERATIONS)?;
    let (ns, ni) = quantile_line(&xs, &ys, NOISE_QUANTILE, QUANTILE_ITERATIONS)?;
    let power = LinearRangeModel::new(ps, pi, (lo, hi));
    let noise = LinearRangeModel::new(ns, ni, (lo, hi));
    // Both are lines, so checking the endpoints covers the whole interval.
    let slack = 1e-9 * ys.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    if power.eval(lo) + slack < noise.eval(lo) || power.eval(hi) + slack < noise.eval(hi) {
        return Err(Error::Estimation(
            "power model falls below the noise floor inside the fitted range".into(),
        ));
    }
    Ok((power, noise))
}

/// Linear quantile regression by iteratively reweighted least squares on the
/// check loss. Returns `(slope, intercept)`.
fn quantile_line(xs: &[f64], ys: &[f64], q: f64, iterations: usize) -> Result<(f64, f64)> {
    let mut weights = vec![1.0; xs.len()];
    let mut line = weighted_line(xs, ys, &weights)?;
    let spread = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1.0);
    let floor = 1e-9 * spread;
    for _ in 0..iterations {
        for ((w, x), y) in weights.iter_mut().zip(xs).zip(ys) {
            let r = y - (line.0 * x + line.1);
            let side = if r >= 0.0 { q } else { 1.0 - q };
            *w = side / r.abs().max(floor);
        }
        line = weighted_line(xs, ys, &weights)?;
    }
    Ok(line)
}

fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<(f64, f64)> {
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    if !(sxx > 0.0) || !sw.is_finite() {
        return Err(Error::Estimation("degenerate range span".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
