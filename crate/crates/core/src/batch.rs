//! Directory-level augmentation runs.
//!
//! Frames are the `*.bin` files of the input directory in name order. Every
//! `⌈1/p_aug⌉`-th frame is augmented, the others are copied byte for byte.
//! Each augmented frame draws its snowfall rate and water depth from a
//! generator seeded by the master seed and the frame index, so a run is a
//! pure function of its inputs and configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{estimate_power_and_noise, LinearRangeModel};
use crate::dror::{classify_snowfall, DrorConfig, SnowfallClass, SplitConfig};
use crate::io::{assign_layers, read_sweep, write_atomic, write_sweep, PointCloud, SweepFormat};
use crate::pipeline::{augment_snow, beam_profile, AugmentationStats, PipelineConfig};
use crate::sensor::SensorCalibration;
use crate::wet::{augment_wet, fit_ground_plane, ground_samples, sample_water_depth, GroundPlane, RansacConfig, WetParams};
use crate::{derive_seed, Error, Result};

pub const DEFAULT_RATES: [f64; 6] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "snow")]
    Snow,
    #[serde(rename = "wet")]
    Wet,
    /// Snowfall first, then wet ground.
    #[serde(rename = "snow+wet")]
    SnowWet,
}

impl Mode {
    pub fn snow(self) -> bool {
        matches!(self, Mode::Snow | Mode::SnowWet)
    }

    pub fn wet(self) -> bool {
        matches!(self, Mode::Wet | Mode::SnowWet)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Snow => "snow",
            Mode::Wet => "wet",
            Mode::SnowWet => "snow+wet",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snow" => Ok(Mode::Snow),
            "wet" => Ok(Mode::Wet),
            "snow+wet" => Ok(Mode::SnowWet),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}, expected snow, wet or snow+wet"
            ))),
        }
    }
}

/// Everything that decides how a single frame is augmented.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub mode: Mode,
    /// Snowfall rates drawn from uniformly, mm/h.
    pub rates: Vec<f64>,
    /// Mean of the water-depth exponential, mm.
    pub water_depth_mean: f64,
    /// Truncation interval of the water depth, mm.
    pub water_depth_range: (f64, f64),
    pub seed: u64,
    /// Snowfall constants; `rate` and `seed` are set per frame.
    pub snow: PipelineConfig,
    /// Film constants; `water_depth` is set per frame.
    pub wet: WetParams,
    /// Plane fit settings; `seed` is set per frame.
    pub ransac: RansacConfig,
    pub ground_band: f64,
    /// Used when no plane can be fitted.
    pub fallback_plane: GroundPlane,
    pub format: SweepFormat,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Snow,
            rates: DEFAULT_RATES.to_vec(),
            water_depth_mean: 0.4,
            water_depth_range: (0.1, 1.2),
            seed: 0,
            snow: PipelineConfig::default(),
            wet: WetParams::default(),
            ransac: RansacConfig::default(),
            ground_band: GroundPlane::DEFAULT_BAND,
            fallback_plane: GroundPlane::new([0.0, 0.0, 1.0], -1.73),
            format: SweepFormat::Xyzi,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::Config("snowfall rate grid is empty".into()));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("snowfall rates must be >= 0, got {r}")));
        }
        let (lo, hi) = self.water_depth_range;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("water depth range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]")));
        }
        if !(self.water_depth_mean > 0.0 && self.water_depth_mean.is_finite()) {
            return Err(Error::Config(format!(
                "water depth mean must be positive, got {}",
                self.water_depth_mean
            )));
        }
        if !(self.ground_band > 0.0) {
            return Err(Error::Config(format!("ground band must be positive, got {}", self.ground_band)));
        }
        let mut snow = self.snow.clone();
        snow.rate = self.rates.iter().copied().fold(0.0, f64::max);
        snow.validate()?;
        self.wet.validate()
    }

    /// Random choices for frame `index`.
    pub fn draw(&self, index: u64) -> FrameDraw {
        let frame_seed = derive_seed(self.seed, index);
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
        let rate = self.rates[rng.random_range(0..self.rates.len())];
        let (lo, hi) = self.water_depth_range;
        let water_depth = sample_water_depth(&mut rng, self.water_depth_mean, lo, hi);
        FrameDraw {
            rate,
            water_depth,
            snow_seed: derive_seed(frame_seed, 1),
            ransac_seed: derive_seed(frame_seed, 2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameDraw {
    pub rate: f64,
    pub water_depth: f64,
    pub snow_seed: u64,
    pub ransac_seed: u64,
}

/// Wet-ground details of one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WetReport {
    pub water_depth: f64,
    pub plane_normal: [f64; 3],
    pub plane_intercept: f64,
    pub plane_fallback: bool,
    pub power_model: LinearRangeModel,
    pub noise_model: LinearRangeModel,
    pub model_fallback: bool,
    pub stats: AugmentationStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutput {
    pub cloud: PointCloud,
    pub rate: Option<f64>,
    pub snow: Option<AugmentationStats>,
    pub wet: Option<WetReport>,
}

/// Augments one frame as the batch runner would if it selected frame
/// `index`.
pub fn augment_frame(pc: &PointCloud, calib: &SensorCalibration, cfg: &AugmentConfig, index: u64) -> Result<FrameOutput> {
    cfg.validate()?;
    let draw = cfg.draw(index);
    let mut out = FrameOutput {
        cloud: pc.clone(),
        rate: None,
        snow: None,
        wet: None,
    };
    if cfg.mode.snow() {
        let layered = assign_layers(pc, calib);
        let snow_cfg = PipelineConfig {
            rate: draw.rate,
            seed: draw.snow_seed,
            ..cfg.snow.clone()
        };
        let result = augment_snow(&layered, calib, &snow_cfg)?;
        // Layer ids were only needed by the simulation; keep the input's.
        out.cloud = result.cloud;
        if pc.points.iter().all(|p| p.layer.is_none()) {
            out.cloud.points.iter_mut().for_each(|p| p.layer = None);
        }
        out.rate = Some(draw.rate);
        out.snow = Some(result.stats);
    }
    if cfg.mode.wet() {
        out.wet = Some(apply_wet(pc, &mut out.cloud, calib, cfg, &draw)?);
    }
    Ok(out)
}

/// Fits the plane and range models on the dry input, then wets `cloud`.
fn apply_wet(
    dry: &PointCloud,
    cloud: &mut PointCloud,
    calib: &SensorCalibration,
    cfg: &AugmentConfig,
    draw: &FrameDraw,
) -> Result<WetReport> {
    let ransac = RansacConfig {
        seed: draw.ransac_seed,
        ..cfg.ransac
    };
    let (mut plane, plane_fallback) = match fit_ground_plane(dry, &ransac) {
        Ok(p) => (p, false),
        Err(Error::Estimation(_)) => (cfg.fallback_plane, true),
        Err(e) => return Err(e),
    };
    plane.band = cfg.ground_band;
    let samples = ground_samples(dry, &plane);
    let (power, noise, model_fallback) = match estimate_power_and_noise(&samples) {
        Ok((p, n)) => (p, n, false),
        Err(Error::Estimation(_)) => {
            let (p, n) = fallback_models(&samples, calib);
            (p, n, true)
        }
        Err(e) => return Err(e),
    };
    let params = WetParams {
        water_depth: draw.water_depth,
        ..cfg.wet
    };
    let result = augment_wet(cloud, &plane, &params, &power, &noise)?;
    *cloud = result.cloud;
    Ok(WetReport {
        water_depth: draw.water_depth,
        plane_normal: plane.normal,
        plane_intercept: plane.intercept,
        plane_fallback,
        power_model: power,
        noise_model: noise,
        model_fallback,
        stats: result.stats,
    })
}

/// Constant models when the ground is too sparse to fit: the brightest
/// normalized ground return (or the largest laser maximum) as power, and a
/// zero noise floor.
fn fallback_models(
    samples: &[crate::calibration::GroundSample],
    calib: &SensorCalibration,
) -> (LinearRangeModel, LinearRangeModel) {
    let brightest = samples
        .iter()
        .filter(|s| s.incidence.cos() > 0.0)
        .map(|s| s.intensity / s.incidence.cos())
        .fold(0.0, f64::max);
    let power = if brightest > 0.0 {
        brightest
    } else {
        calib.lasers.iter().map(|l| l.max_intensity).fold(1.0, f64::max)
    };
    (LinearRangeModel::constant(power), LinearRangeModel::constant(0.0))
}

/// Directory run settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub augment: AugmentConfig,
    pub input: PathBuf,
    pub output: PathBuf,
    /// Required whenever snowfall is simulated.
    pub calibration: Option<PathBuf>,
    /// Augmentation probability; realized as a fixed stride.
    pub p_aug: f64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            augment: AugmentConfig::default(),
            input: input.into(),
            output: output.into(),
            calibration: None,
            p_aug: 0.1,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_aug) {
            return Err(Error::Config(format!("p_aug must lie in [0, 1], got {}", self.p_aug)));
        }
        if self.augment.mode.snow() && self.calibration.is_none() {
            return Err(Error::Config("snowfall simulation needs a calibration file".into()));
        }
        if !self.input.is_dir() {
            return Err(Error::Config(format!("input {} is not a directory", self.input.display())));
        }
        self.augment.validate()
    }
}

/// Stride between augmented frames, `None` when nothing is augmented.
pub fn selection_stride(p_aug: f64) -> Option<u64> {
    (p_aug > 0.0).then(|| (1.0 / p_aug - 1e-9).ceil().max(1.0) as u64)
}

pub fn is_selected(index: u64, p_aug: f64) -> bool {
    selection_stride(p_aug).is_some_and(|s| (index + 1).is_multiple_of(s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    Copied,
    Augmented,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: String,
    pub index: u64,
    pub status: FrameStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub input_points: usize,
    pub output_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snow: Option<AugmentationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wet: Option<WetReport>,
    pub runtime_ms: f64,
}

/// Totals over a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub frames: usize,
    pub augmented: usize,
    pub copied: usize,
    pub failed: usize,
    pub input_points: usize,
    pub output_points: usize,
    pub snow_scattered: usize,
    pub snow_attenuated: usize,
    pub snow_dropped: usize,
    pub wet_attenuated: usize,
    pub wet_dropped: usize,
    pub runtime_ms: f64,
}

impl Aggregate {
    pub fn from_reports(reports: &[FrameReport]) -> Self {
        let mut a = Aggregate {
            frames: reports.len(),
            ..Aggregate::default()
        };
        for r in reports {
            match r.status {
                FrameStatus::Copied => a.copied += 1,
                FrameStatus::Augmented => a.augmented += 1,
                FrameStatus::Failed => a.failed += 1,
            }
            a.input_points += r.input_points;
            a.output_points += r.output_points;
            if let Some(s) = &r.snow {
                a.snow_scattered += s.scattered;
                a.snow_attenuated += s.attenuated;
                a.snow_dropped += s.dropped;
            }
            if let Some(w) = &r.wet {
                a.wet_attenuated += w.stats.attenuated;
                a.wet_dropped += w.stats.dropped;
            }
            a.runtime_ms += r.runtime_ms;
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchSummary {
    pub reports: Vec<FrameReport>,
    pub aggregate: Aggregate,
}

impl BatchSummary {
    /// One JSON object per frame, then `{"aggregate": {...}}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&serde_json::to_string(r).expect("report serializes"));
            out.push('\n');
        }
        let agg = serde_json::json!({ "aggregate": self.aggregate });
        out.push_str(&agg.to_string());
        out.push('\n');
        out
    }
}

/// Sweep files of `dir` in name order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "bin") {
            frames.push(path);
        }
    }
    frames.sort();
    Ok(frames)
}

/// Runs a whole directory. Configuration problems are returned as errors
/// before any frame is touched; per-frame failures are recorded in the
/// summary and the run continues.
pub fn run_batch(cfg: &RunConfig) -> Result<BatchSummary> {
    cfg.validate()?;
    let calib = match &cfg.calibration {
        Some(path) => SensorCalibration::load(path)?,
        None => SensorCalibration::default(),
    };
    let frames = list_frames(&cfg.input)?;
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let reports: Vec<FrameReport> = pool.install(|| {
        frames
            .par_iter()
            .enumerate()
            .map(|(k, path)| process_frame(cfg, &calib, k as u64, path))
            .collect()
    });
    let aggregate = Aggregate::from_reports(&reports);
    Ok(BatchSummary { reports, aggregate })
}

fn process_frame(cfg: &RunConfig, calib: &SensorCalibration, index: u64, path: &Path) -> FrameReport {
    let start = Instant::now();
    let frame = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let dest = cfg.output.join(path.file_name().expect("listed files have names"));
    let mut report = FrameReport {
        frame,
        index,
        status: FrameStatus::Copied,
        error: None,
        input_points: 0,
        output_points: 0,
        rate: None,
        snow: None,
        wet: None,
        runtime_ms: 0.0,
    };
    let record_size = cfg.augment.format.record_size();
    let result = if is_selected(index, cfg.p_aug) {
        report.status = FrameStatus::Augmented;
        read_sweep(path, cfg.augment.format).and_then(|pc| {
            report.input_points = pc.len();
            let out = augment_frame(&pc, calib, &cfg.augment, index)?;
            write_sweep(&out.cloud, &dest, cfg.augment.format)?;
            report.output_points = out.cloud.len();
            report.rate = out.rate;
            report.snow = out.snow;
            report.wet = out.wet;
            Ok(())
        })
    } else {
        fs::read(path).map_err(|e| Error::io(path, e)).and_then(|bytes| {
            report.input_points = bytes.len() / record_size;
            report.output_points = report.input_points;
            write_atomic(&dest, &bytes)
        })
    };
    if let Err(e) = result {
        report.status = FrameStatus::Failed;
        report.error = Some(e.to_string());
    }
    report.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    report
}

/// CSV `range_m,power` of the echo profile of point `index` of `pc`, on the
/// peak-search grid.
pub fn dump_profile(pc: &PointCloud, calib: &SensorCalibration, cfg: &PipelineConfig, index: usize) -> Result<String> {
    let layered = assign_layers(pc, calib);
    let profile = beam_profile(&layered, calib, cfg, index)?;
    let mut csv = String::from("range_m,power\n");
    for (r, p) in profile.sample(cfg.peak_step_for(calib)) {
        let _ = writeln!(csv, "{r},{p}");
    }
    Ok(csv)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub frame: String,
    pub class: SnowfallClass,
    pub count: usize,
}

/// Snowfall class of every frame of `dir`.
pub fn classify_dir(dir: &Path, format: SweepFormat, dror: &DrorConfig, split: &SplitConfig) -> Result<Vec<SplitRow>> {
    list_frames(dir)?
        .par_iter()
        .map(|path| {
            let pc = read_sweep(path, format)?;
            let (class, count) = classify_snowfall(&pc, dror, split)?;
            Ok(SplitRow {
                frame: pc.frame_id,
                class,
                count,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_rule() {
        assert_eq!(selection_stride(0.0), None);
        assert_eq!(selection_stride(0.1), Some(10));
        assert_eq!(selection_stride(1.0), Some(1));
        assert_eq!(selection_stride(0.3), Some(4));
        let picked: Vec<u64> = (0..30).filter(|&k| is_selected(k, 0.1)).collect();
        assert_eq!(picked, vec![9, 19, 29]);
    }

    #[test]
    fn mode_strings() {
        for m in [Mode::Snow, Mode::Wet, Mode::SnowWet] {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("rain".parse::<Mode>().is_err());
    }

    #[test]
    fn draws_are_deterministic_and_in_range() {
        let cfg = AugmentConfig::default();
        for k in 0..200 {
            let d = cfg.draw(k);
            assert_eq!(d, cfg.draw(k));
            assert!(DEFAULT_RATES.contains(&d.rate));
            assert!((0.1..=1.2).contains(&d.water_depth));
        }
        assert_ne!(cfg.draw(0).snow_seed, cfg.draw(1).snow_seed);
    }

    #[test]
    fn bad_config_rejected() {
        let mut cfg = AugmentConfig {
            rates: vec![],
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.rates = vec![1.0, -0.5];
        assert!(cfg.validate().is_err());
        cfg = AugmentConfig::default();
        cfg.water_depth_range = (1.0, 0.5);
        assert!(cfg.validate().is_err());
    }
}
