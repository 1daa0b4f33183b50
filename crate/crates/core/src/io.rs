//! Point-cloud sweeps on disk and laser-layer assignment.
//!
//! Sweeps use the KITTI velodyne layout: a headerless stream of
//! little-endian `f32` records.
//!
//! ```text
//! ┌───────┬───────┬───────┬───────┐            ┌───────┬───────┬───────┬───────┬───────────┐
//! │ x:f32 │ y:f32 │ z:f32 │ i:f32 │    or      │ x:f32 │ y:f32 │ z:f32 │ i:f32 │ layer:u32 │
//! └───────┴───────┴───────┴───────┘            └───────┴───────┴───────┴───────┴───────────┘
//!        SweepFormat::Xyzi (16 B)                      SweepFormat::XyziLayer (20 B)
//! ```
//!
//! In the 20-byte variant a layer value of `u32::MAX` means "not assigned".

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::sensor::SensorCalibration;
use crate::{Error, Result};

const NO_LAYER: u32 = u32::MAX;

/// One LiDAR return in the sensor frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    /// Calibrated intensity.
    pub intensity: f32,
    /// Laser index, if known.
    pub layer: Option<u32>,
}

impl LidarPoint {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self {
            x,
            y,
            z,
            intensity,
            layer: None,
        }
    }

    pub fn with_layer(mut self, layer: u32) -> Self {
        self.layer = Some(layer);
        self
    }

    /// Euclidean distance to the sensor origin.
    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }

    /// Distance to the sensor origin projected on the horizontal plane.
    pub fn planar_range(&self) -> f64 {
        (self.x as f64).hypot(self.y as f64)
    }

    /// Elevation angle of the return above the horizontal plane, radians.
    pub fn elevation(&self) -> f64 {
        (self.z as f64).atan2(self.planar_range())
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    fn defect(&self) -> Option<&'static str> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Some("non-finite coordinate");
        }
        if !self.intensity.is_finite() {
            return Some("non-finite intensity");
        }
        if self.intensity < 0.0 {
            return Some("negative intensity");
        }
        if self.range() <= 0.0 {
            return Some("zero range");
        }
        None
    }
}

/// An ordered set of returns from one sweep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>) -> Self {
        Self {
            points,
            frame_id: String::new(),
        }
    }

    pub fn with_frame_id(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = frame_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the per-point invariants, reporting the first offending record.
    pub fn validate(&self) -> Result<()> {
        for (index, p) in self.points.iter().enumerate() {
            if let Some(reason) = p.defect() {
                return Err(Error::InvalidPoint { index, reason });
            }
        }
        Ok(())
    }

    /// Number of points per layer; unassigned points are not counted.
    pub fn layer_sizes(&self, n_layers: usize) -> Vec<usize> {
        let mut sizes = vec![0; n_layers];
        for layer in self.points.iter().filter_map(|p| p.layer) {
            if let Some(n) = sizes.get_mut(layer as usize) {
                *n += 1;
            }
        }
        sizes
    }
}

/// On-disk record layout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SweepFormat {
    /// x, y, z, intensity (KITTI-compatible).
    #[default]
    Xyzi,
    /// x, y, z, intensity, layer.
    XyziLayer,
}

impl SweepFormat {
    pub const fn record_size(self) -> usize {
        match self {
            SweepFormat::Xyzi => 16,
            SweepFormat::XyziLayer => 20,
        }
    }
}

/// Decodes a sweep payload. Every record must describe a valid point.
pub fn decode_sweep(bytes: &[u8], format: SweepFormat) -> Result<Vec<LidarPoint>> {
    let size = format.record_size();
    if !bytes.len().is_multiple_of(size) {
        return Err(Error::Format(format!(
            "payload of {} bytes is not a multiple of the {size}-byte record size",
            bytes.len()
        )));
    }
    let f32_at = |rec: &[u8], k: usize| {
        f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4-byte slice"))
    };
    bytes
        .chunks_exact(size)
        .enumerate()
        .map(|(index, rec)| {
            let mut p = LidarPoint::new(f32_at(rec, 0), f32_at(rec, 1), f32_at(rec, 2), f32_at(rec, 3));
            if format == SweepFormat::XyziLayer {
                let layer = u32::from_le_bytes(rec[16..20].try_into().expect("4-byte slice"));
                p.layer = (layer != NO_LAYER).then_some(layer);
            }
            match p.defect() {
                Some(reason) => Err(Error::InvalidPoint { index, reason }),
                None => Ok(p),
            }
        })
        .collect()
}

/// Encodes points in the given layout; the exact inverse of [`decode_sweep`].
pub fn encode_sweep(points: &[LidarPoint], format: SweepFormat) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * format.record_size());
    for p in points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if format == SweepFormat::XyziLayer {
            out.extend_from_slice(&p.layer.unwrap_or(NO_LAYER).to_le_bytes());
        }
    }
    out
}

/// Reads a sweep file. The frame id is the file stem.
pub fn read_sweep(path: impl AsRef<Path>, format: SweepFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frame_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(PointCloud {
        points: decode_sweep(&bytes, format)?,
        frame_id,
    })
}

/// Writes a sweep atomically: readers never observe a partial file.
pub fn write_sweep(pc: &PointCloud, path: impl AsRef<Path>, format: SweepFormat) -> Result<()> {
    write_atomic(path, &encode_sweep(&pc.points, format))
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Fills in missing layer indices from the elevation angle of each point.
///
/// A point is assigned to the laser whose elevation is nearest; a point
/// exactly midway between two lasers goes to the lower laser index. Points
/// that already carry a layer keep it.
pub fn assign_layers(pc: &PointCloud, calib: &SensorCalibration) -> PointCloud {
    let mut by_elevation: Vec<(f64, u32)> = calib
        .lasers
        .iter()
        .enumerate()
        .map(|(k, l)| (l.elevation, k as u32))
        .collect();
    by_elevation.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let points = pc
        .points
        .iter()
        .map(|p| {
            if p.layer.is_some() || by_elevation.is_empty() {
                return *p;
            }
            p.with_layer(nearest_laser(&by_elevation, p.elevation()))
        })
        .collect();
    PointCloud {
        points,
        frame_id: pc.frame_id.clone(),
    }
}

fn nearest_laser(sorted: &[(f64, u32)], elevation: f64) -> u32 {
    let upper = sorted.partition_point(|(e, _)| *e < elevation);
    let mut best: Option<(f64, u32)> = None;
    // Neighbours on both sides, including every laser sharing those elevations.
    let mut lo = upper.saturating_sub(1);
    while lo > 0 && sorted[lo - 1].0 == sorted[lo].0 {
        lo -= 1;
    }
    let mut hi = (upper + 1).min(sorted.len());
    while hi < sorted.len() && sorted[hi].0 == sorted[hi - 1].0 {
        hi += 1;
    }
    for &(e, k) in &sorted[lo..hi] {
        let d = (e - elevation).abs();
        best = match best {
            Some((bd, bk)) if bd < d || (bd == d && bk < k) => Some((bd, bk)),
            _ => Some((d, k)),
        };
    }
    best.expect("non-empty laser table").1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{LaserCalibration, SensorCalibration};

    fn calib(elevations: &[f64]) -> SensorCalibration {
        SensorCalibration::with_lasers(
            elevations
                .iter()
                .map(|&e| LaserCalibration::new(e, 0.0, 0.0, 255.0))
                .collect(),
        )
    }

    #[test]
    fn zero_record_is_rejected() {
        let bytes = [0u8; 16];
        match decode_sweep(&bytes, SweepFormat::Xyzi) {
            Err(Error::InvalidPoint { index: 0, reason }) => assert_eq!(reason, "zero range"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_reports_record_index() {
        let pts = [
            LidarPoint::new(1.0, 0.0, 0.0, 0.1),
            LidarPoint::new(2.0, 0.0, 0.0, 0.1),
            LidarPoint::new(f32::NAN, 0.0, 0.0, 0.1),
        ];
        let bytes = encode_sweep(&pts, SweepFormat::Xyzi);
        assert!(matches!(
            decode_sweep(&bytes, SweepFormat::Xyzi),
            Err(Error::InvalidPoint { index: 2, .. })
        ));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        assert!(matches!(
            decode_sweep(&[0u8; 17], SweepFormat::Xyzi),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn empty_and_single() {
        assert!(encode_sweep(&[], SweepFormat::Xyzi).is_empty());
        let p = LidarPoint::new(3.0, -4.0, 0.5, 0.25);
        let bytes = encode_sweep(&[p], SweepFormat::Xyzi);
        assert_eq!(bytes.len(), 16);
        assert_eq!(decode_sweep(&bytes, SweepFormat::Xyzi).unwrap(), vec![p]);
    }

    #[test]
    fn layer_field_round_trips() {
        let pts = vec![
            LidarPoint::new(3.0, -4.0, 0.5, 0.25).with_layer(7),
            LidarPoint::new(1.0, 1.0, 1.0, 0.0),
        ];
        let bytes = encode_sweep(&pts, SweepFormat::XyziLayer);
        assert_eq!(decode_sweep(&bytes, SweepFormat::XyziLayer).unwrap(), pts);
    }

    #[test]
    fn point_on_laser_elevation() {
        let c = calib(&[-0.2, -0.1, 0.0, 0.1]);
        let e: f64 = -0.1;
        let p = LidarPoint::new(10.0 * e.cos() as f32, 0.0, 10.0 * e.sin() as f32, 0.5);
        let out = assign_layers(&PointCloud::new(vec![p]), &c);
        assert_eq!(out.points[0].layer, Some(1));
    }

    #[test]
    fn midway_tie_goes_to_lower_index() {
        // 45 degrees is exactly between 0 and pi/2.
        let c = calib(&[0.0, std::f64::consts::FRAC_PI_2]);
        let out = assign_layers(&PointCloud::new(vec![LidarPoint::new(1.0, 0.0, 1.0, 0.0)]), &c);
        assert_eq!(out.points[0].layer, Some(0));
    }

    #[test]
    fn existing_layers_are_preserved() {
        let c = calib(&[-0.1, 0.0, 0.1]);
        let p = LidarPoint::new(10.0, 0.0, 0.0, 0.5).with_layer(2);
        let out = assign_layers(&PointCloud::new(vec![p]), &c);
        assert_eq!(out.points[0].layer, Some(2));
    }
}
