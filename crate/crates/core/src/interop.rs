//! Array-in/array-out entry points for host-language bindings.
//!
//! Configuration is a flat list of string key–value pairs using the CLI flag
//! names without the leading dashes:
//!
//! | key                   | value                        | default              |
//! |-----------------------|------------------------------|----------------------|
//! | `mode`                | `snow`, `wet`, `snow+wet`    | `snow`               |
//! | `rates`               | comma-separated mm/h         | `0,0.5,1,1.5,2,2.5`  |
//! | `rate`                | one fixed rate, mm/h         |                      |
//! | `dw-mean`             | mm                           | `0.4`                |
//! | `dw-range`            | `lo,hi` in mm                | `0.1,1.2`            |
//! | `dw`                  | one fixed water depth, mm    |                      |
//! | `seed`                | u64                          | `0`                  |
//! | `frame-index`         | u64                          | `0`                  |
//! | `snow-reflectivity`   | `ρ_s`                        | `0.9`                |
//! | `target-reflectivity` | `ρ_0`                        | `1e-6/π`             |
//! | `peak-step`           | meters                       | `c τ_H / 100`        |
//! | `density-scale`       | particle density multiplier  | `1`                  |
//! | `tread-depth`         | mm                           | `1.2`                |
//! | `ground-band`         | meters                       | `0.5`                |
//!
//! A call with `seed = s` and `frame-index = k` returns what the batch
//! runner writes for frame `k` of a run with master seed `s`, when that
//! frame is selected.

use std::collections::BTreeMap;

use crate::batch::{augment_frame, AugmentConfig, FrameOutput};
use crate::dror::{classify_snowfall, dror_mask, DrorConfig, SnowfallClass, SplitConfig};
use crate::io::{LidarPoint, PointCloud};
use crate::pipeline::AugmentationStats;
use crate::sensor::SensorCalibration;
use crate::{Error, Result};

/// Named counters of one augmented frame.
pub type Stats = BTreeMap<String, f64>;

/// Parsed flat configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCall {
    pub augment: AugmentConfig,
    pub frame_index: u64,
}

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| value(key, s)).collect()
}

fn pair(key: &str, v: &str) -> Result<(f64, f64)> {
    match list(key, v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config(format!("{key} expects two comma-separated numbers, got {v:?}"))),
    }
}

pub fn parse_flat_config<K, V>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<FrameCall>
where
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut cfg = AugmentConfig::default();
    let mut frame_index = 0;
    for (k, v) in pairs {
        let (k, v) = (k.as_ref(), v.as_ref());
        match k {
            "mode" => cfg.mode = v.trim().parse()?,
            "rates" => cfg.rates = list(k, v)?,
            "rate" => cfg.rates = vec![value(k, v)?],
            "dw-mean" => cfg.water_depth_mean = value(k, v)?,
            "dw-range" => cfg.water_depth_range = pair(k, v)?,
            "dw" => {
                let d = value(k, v)?;
                cfg.water_depth_range = (d, d);
            }
            "seed" => cfg.seed = value(k, v)?,
            "frame-index" => frame_index = value(k, v)?,
            "snow-reflectivity" => cfg.snow.snow_reflectivity = value(k, v)?,
            "target-reflectivity" => cfg.snow.target_reflectivity = value(k, v)?,
            "peak-step" => cfg.snow.peak_step = Some(value(k, v)?),
            "density-scale" => cfg.snow.sampling.density_scale = value(k, v)?,
            "tread-depth" => cfg.wet.tread_depth = value(k, v)?,
            "ground-band" => cfg.ground_band = value(k, v)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
    }
    cfg.validate()?;
    Ok(FrameCall {
        augment: cfg,
        frame_index,
    })
}

fn to_cloud(points: &[[f32; 4]]) -> PointCloud {
    PointCloud::new(points.iter().map(|&[x, y, z, i]| LidarPoint::new(x, y, z, i)).collect())
}

fn to_rows(pc: &PointCloud) -> Vec<[f32; 4]> {
    pc.points.iter().map(|p| [p.x, p.y, p.z, p.intensity]).collect()
}

fn flat_rows(data: &[f32]) -> Result<Vec<[f32; 4]>> {
    if !data.len().is_multiple_of(4) {
        return Err(Error::Config(format!(
            "expected an N×4 array, got {} values",
            data.len()
        )));
    }
    Ok(data.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect())
}

fn put_stats(out: &mut Stats, prefix: &str, s: &AugmentationStats) {
    for (k, v) in [
        ("unchanged", s.unchanged),
        ("attenuated", s.attenuated),
        ("scattered", s.scattered),
        ("dropped", s.dropped),
        ("clamped_power", s.clamped_power),
        ("clamped_intensity", s.clamped_intensity),
        ("ground_points", s.ground_points),
        ("clamped_reflectivity", s.clamped_reflectivity),
    ] {
        out.insert(format!("{prefix}.{k}"), v as f64);
    }
    out.insert(
        format!("{prefix}.particles"),
        s.particles_per_layer.iter().sum::<usize>() as f64,
    );
}

/// Flattened statistics of a frame.
pub fn stats_map(out: &FrameOutput) -> Stats {
    let mut m = BTreeMap::new();
    m.insert("points".into(), out.cloud.len() as f64);
    if let Some(rate) = out.rate {
        m.insert("rate".into(), rate);
    }
    if let Some(s) = &out.snow {
        put_stats(&mut m, "snow", s);
    }
    if let Some(w) = &out.wet {
        m.insert("wet.water_depth".into(), w.water_depth);
        m.insert("wet.plane_fallback".into(), w.plane_fallback as u8 as f64);
        m.insert("wet.model_fallback".into(), w.model_fallback as u8 as f64);
        put_stats(&mut m, "wet", &w.stats);
    }
    m
}

/// Augments `points` (rows of `x, y, z, intensity`).
pub fn augment_points<K, V>(
    points: &[[f32; 4]],
    calib: &SensorCalibration,
    config: impl IntoIterator<Item = (K, V)>,
) -> Result<(Vec<[f32; 4]>, Stats)>
where
    K: AsRef<str>,
    V: AsRef<str>,
{
    let call = parse_flat_config(config)?;
    let out = augment_frame(&to_cloud(points), calib, &call.augment, call.frame_index)?;
    Ok((to_rows(&out.cloud), stats_map(&out)))
}

/// [`augment_points`] on a flat row-major buffer of length `4 N`.
pub fn augment_flat<K, V>(
    data: &[f32],
    calib: &SensorCalibration,
    config: impl IntoIterator<Item = (K, V)>,
) -> Result<(Vec<f32>, Stats)>
where
    K: AsRef<str>,
    V: AsRef<str>,
{
    let (rows, stats) = augment_points(&flat_rows(data)?, calib, config)?;
    Ok((rows.into_iter().flatten().collect(), stats))
}

/// Keep mask of the outlier filter.
pub fn dror_points(points: &[[f32; 4]], cfg: &DrorConfig) -> Result<Vec<bool>> {
    dror_mask(&to_cloud(points), cfg)
}

pub fn classify_points(points: &[[f32; 4]], cfg: &DrorConfig, split: &SplitConfig) -> Result<(SnowfallClass, usize)> {
    classify_snowfall(&to_cloud(points), cfg, split)
}
