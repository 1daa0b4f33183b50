//! Sensor constants and per-laser factory calibration.
//!
//! Calibration files are TOML documents whose first key is the format tag:
//!
//! ```toml
//! format = "snowsim-calibration/1"
//!
//! [sensor]
//! pulse_width_s = 1.0e-8     # half-power pulse width
//! max_range_m = 120.0
//! divergence_rad = 0.003
//! overlap_start_m = 0.5      # transmitter/receiver overlap begins
//! overlap_full_m = 2.0       # overlap complete
//!
//! [[laser]]
//! elevation_rad = -0.4346
//! focal_slope = 1.35
//! focal_distance = 1500.0
//! max_intensity = 255.0
//! ```
//!
//! Every key of `[sensor]` is optional and falls back to the defaults of
//! [`SensorCalibration::default`]. Lasers are indexed by their order in the
//! file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CALIBRATION_FORMAT: &str = "snowsim-calibration/1";

/// Factory constants of one laser.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserCalibration {
    /// Elevation of the laser above the horizontal plane, radians.
    #[serde(rename = "elevation_rad")]
    pub elevation: f64,
    pub focal_slope: f64,
    pub focal_distance: f64,
    pub max_intensity: f64,
}

impl LaserCalibration {
    pub fn new(elevation: f64, focal_slope: f64, focal_distance: f64, max_intensity: f64) -> Self {
        Self {
            elevation,
            focal_slope,
            focal_distance,
            max_intensity,
        }
    }

    /// `((1 - f_d) / 13100)^2`
    pub fn focal_offset(&self) -> f64 {
        let f = (1.0 - self.focal_distance) / 13100.0;
        f * f
    }
}

/// Global sensor constants plus the per-laser table.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorCalibration {
    /// Half-power pulse width, seconds.
    pub pulse_width: f64,
    /// Maximum range, meters.
    pub max_range: f64,
    /// Full beam divergence, radians.
    pub divergence: f64,
    /// Range where transmitter/receiver overlap starts, meters.
    pub overlap_start: f64,
    /// Range where transmitter/receiver overlap is complete, meters.
    pub overlap_full: f64,
    pub lasers: Vec<LaserCalibration>,
}

impl Default for SensorCalibration {
    /// No lasers; the overlap bounds are assumed values, the remaining
    /// constants are those of the HDL-64 class sensor being modeled.
    fn default() -> Self {
        Self {
            pulse_width: 10e-9,
            max_range: 120.0,
            divergence: 0.003,
            overlap_start: 0.5,
            overlap_full: 2.0,
            lasers: Vec::new(),
        }
    }
}

impl SensorCalibration {
    pub fn with_lasers(lasers: Vec<LaserCalibration>) -> Self {
        Self {
            lasers,
            ..Self::default()
        }
    }

    pub fn n_lasers(&self) -> usize {
        self.lasers.len()
    }

    pub fn laser(&self, layer: u32) -> Result<&LaserCalibration> {
        self.lasers.get(layer as usize).ok_or_else(|| {
            Error::Config(format!(
                "layer {layer} missing from calibration ({} lasers)",
                self.lasers.len()
            ))
        })
    }

    pub fn elevation_angles(&self) -> Vec<f64> {
        self.lasers.iter().map(|l| l.elevation).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Calibration(msg));
        if !(self.pulse_width > 0.0 && self.pulse_width.is_finite()) {
            return bad(format!("pulse width must be positive, got {}", self.pulse_width));
        }
        if !(self.divergence > 0.0 && self.divergence.is_finite()) {
            return bad(format!("divergence must be positive, got {}", self.divergence));
        }
        if !(0.0 <= self.overlap_start
            && self.overlap_start < self.overlap_full
            && self.overlap_full <= self.max_range)
        {
            return bad(format!(
                "need 0 <= R_1 < R_2 <= R_max, got R_1={} R_2={} R_max={}",
                self.overlap_start, self.overlap_full, self.max_range
            ));
        }
        for (k, l) in self.lasers.iter().enumerate() {
            if !(l.max_intensity > 0.0 && l.max_intensity.is_finite()) {
                return bad(format!("laser {k}: max_intensity must be positive"));
            }
            if !l.focal_offset().is_finite() || !l.focal_slope.is_finite() || !l.elevation.is_finite() {
                return bad(format!("laser {k}: non-finite constants"));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: CalibrationFile =
            toml::from_str(text).map_err(|e| Error::Calibration(e.to_string()))?;
        if file.format != CALIBRATION_FORMAT {
            return Err(Error::Calibration(format!(
                "unsupported format tag {:?}, expected {CALIBRATION_FORMAT:?}",
                file.format
            )));
        }
        let d = SensorCalibration::default();
        let s = file.sensor;
        let calib = SensorCalibration {
            pulse_width: s.pulse_width_s.unwrap_or(d.pulse_width),
            max_range: s.max_range_m.unwrap_or(d.max_range),
            divergence: s.divergence_rad.unwrap_or(d.divergence),
            overlap_start: s.overlap_start_m.unwrap_or(d.overlap_start),
            overlap_full: s.overlap_full_m.unwrap_or(d.overlap_full),
            lasers: file.laser,
        };
        calib.validate()?;
        Ok(calib)
    }

    pub fn to_toml(&self) -> String {
        let file = CalibrationFile {
            format: CALIBRATION_FORMAT.to_string(),
            sensor: SensorSection {
                pulse_width_s: Some(self.pulse_width),
                max_range_m: Some(self.max_range),
                divergence_rad: Some(self.divergence),
                overlap_start_m: Some(self.overlap_start),
                overlap_full_m: Some(self.overlap_full),
            },
            laser: self.lasers.clone(),
        };
        toml::to_string(&file).expect("calibration serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    format: String,
    #[serde(default)]
    sensor: SensorSection,
    #[serde(default)]
    laser: Vec<LaserCalibration>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorSection {
    pulse_width_s: Option<f64>,
    max_range_m: Option<f64>,
    divergence_rad: Option<f64>,
    overlap_start_m: Option<f64>,
    overlap_full_m: Option<f64>,
}
