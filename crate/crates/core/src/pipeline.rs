//! Snowfall simulation over a whole sweep.
//!
//! Per layer a particle field is sampled; every point of the layer casts a
//! beam through it. Beams that meet no particle are left untouched. For the
//! others the target and particle echoes are superposed and the strongest
//! peak becomes the new return:
//!
//! - target: `P_R` from the inverted calibration, `C_A P_0 = P_R R_0² / ρ_0`
//! - particle: `P_R = ρ_s i_max`, `C_A P_0 = P_R / ρ_0`
//!
//! The target reflectivity `ρ_0` cancels out of the target lobe but sets how
//! loud particles are relative to it; it is the main free parameter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_calibration_scaled, invert_calibration};
use crate::echo::{echo_amplitude, EchoProfile, EchoTerm, SPEED_OF_LIGHT};
use crate::io::{LidarPoint, PointCloud};
use crate::occlusion::{BeamHit, BeamIndex, HitKind};
use crate::sensor::{LaserCalibration, SensorCalibration};
use crate::snow::{sample_field_with, ParticleField, SnowSamplingConfig, MAX_SNOWFALL_RATE};
use crate::{derive_seed, Error, Result};

pub const DEFAULT_SNOW_REFLECTIVITY: f64 = 0.9;
pub const DEFAULT_TARGET_REFLECTIVITY: f64 = 1e-6 / std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Snowfall rate, mm/h.
    pub rate: f64,
    /// `ρ_s`
    pub snow_reflectivity: f64,
    /// `ρ_0` used for amplitude recovery.
    pub target_reflectivity: f64,
    pub seed: u64,
    /// Peak-search grid step in meters; `None` means `c τ_H / 100`.
    pub peak_step: Option<f64>,
    pub sampling: SnowSamplingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rate: 0.0,
            snow_reflectivity: DEFAULT_SNOW_REFLECTIVITY,
            target_reflectivity: DEFAULT_TARGET_REFLECTIVITY,
            seed: 0,
            peak_step: None,
            sampling: SnowSamplingConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_rate(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_SNOWFALL_RATE).contains(&self.rate) {
            return Err(Error::Config(format!(
                "snowfall rate must lie in [0, {MAX_SNOWFALL_RATE}] mm/h, got {}",
                self.rate
            )));
        }
        if !(self.snow_reflectivity > 0.0 && self.snow_reflectivity <= 1.0) {
            return Err(Error::Config(format!(
                "snow reflectivity must lie in (0, 1], got {}",
                self.snow_reflectivity
            )));
        }
        if !(self.target_reflectivity > 0.0 && self.target_reflectivity.is_finite()) {
            return Err(Error::Config(format!(
                "target reflectivity must be positive, got {}",
                self.target_reflectivity
            )));
        }
        if let Some(step) = self.peak_step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Config(format!("peak step must be positive, got {step}")));
            }
        }
        Ok(())
    }

    pub fn peak_step_for(&self, calib: &SensorCalibration) -> f64 {
        self.peak_step
            .unwrap_or(SPEED_OF_LIGHT * calib.pulse_width / 100.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLabel {
    Unchanged,
    /// Still the original target, with lower intensity.
    Attenuated,
    /// Moved onto a snow particle.
    Scattered,
    /// No echo left; removed from the output.
    Dropped,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationStats {
    pub unchanged: usize,
    pub attenuated: usize,
    pub scattered: usize,
    pub dropped: usize,
    /// Points whose inverted power was not positive; passed through.
    pub clamped_power: usize,
    /// Written intensities clipped to `[0, i_max]`.
    pub clamped_intensity: usize,
    /// Ground points seen by the wet-ground pass.
    pub ground_points: usize,
    /// Recovered reflectivities clipped into the series' domain.
    pub clamped_reflectivity: usize,
    /// Particles sampled per layer; zero for layers without points.
    pub particles_per_layer: Vec<usize>,
}

impl AugmentationStats {
    pub fn record(&mut self, label: PointLabel) {
        match label {
            PointLabel::Unchanged => self.unchanged += 1,
            PointLabel::Attenuated => self.attenuated += 1,
            PointLabel::Scattered => self.scattered += 1,
            PointLabel::Dropped => self.dropped += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.unchanged + self.attenuated + self.scattered + self.dropped
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationResult {
    /// Output sweep; dropped points are absent.
    pub cloud: PointCloud,
    /// One label per input point, in input order.
    pub labels: Vec<PointLabel>,
    pub stats: AugmentationStats,
}

impl AugmentationResult {
    pub fn identity(pc: &PointCloud, n_layers: usize) -> Self {
        Self {
            cloud: pc.clone(),
            labels: vec![PointLabel::Unchanged; pc.len()],
            stats: AugmentationStats {
                unchanged: pc.len(),
                particles_per_layer: vec![0; n_layers],
                ..AugmentationStats::default()
            },
        }
    }
}

/// Runs the snowfall simulation on a sweep whose points carry layer ids.
pub fn augment_snow(pc: &PointCloud, calib: &SensorCalibration, cfg: &PipelineConfig) -> Result<AugmentationResult> {
    check_inputs(pc, calib, cfg)?;
    if cfg.rate == 0.0 {
        return Ok(AugmentationResult::identity(pc, calib.n_lasers()));
    }
    let used = used_layers(pc, calib.n_lasers());
    let fields = used
        .par_iter()
        .enumerate()
        .map(|(layer, &in_use)| {
            let seed = derive_seed(cfg.seed, layer as u64);
            if in_use {
                sample_field_with(calib.max_range, cfg.rate, seed, &cfg.sampling)
            } else {
                Ok(ParticleField::empty(cfg.rate, seed))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    augment_snow_with_fields(pc, calib, cfg, &fields)
}

/// Snowfall simulation with caller-supplied particle fields, one per laser.
/// `cfg.rate` and `cfg.seed` are not used.
pub fn augment_snow_with_fields(
    pc: &PointCloud,
    calib: &SensorCalibration,
    cfg: &PipelineConfig,
    fields: &[ParticleField],
) -> Result<AugmentationResult> {
    check_inputs(pc, calib, cfg)?;
    if fields.len() != calib.n_lasers() {
        return Err(Error::Config(format!(
            "{} particle fields for {} lasers",
            fields.len(),
            calib.n_lasers()
        )));
    }
    let step = cfg.peak_step_for(calib);
    let mut by_layer: Vec<Vec<usize>> = vec![Vec::new(); calib.n_lasers()];
    for (k, p) in pc.points.iter().enumerate() {
        by_layer[p.layer.expect("checked") as usize].push(k);
    }

    let per_layer: Vec<Vec<(usize, Outcome)>> = by_layer
        .par_iter()
        .enumerate()
        .map(|(layer, members)| {
            if members.is_empty() {
                return Vec::new();
            }
            let ctx = BeamContext {
                calib,
                laser: &calib.lasers[layer],
                cfg,
                step,
            };
            let index = BeamIndex::new(&fields[layer], calib.divergence);
            members
                .par_iter()
                .map(|&k| (k, ctx.simulate(&index, &pc.points[k])))
                .collect()
        })
        .collect();

    let mut outcomes: Vec<Option<Outcome>> = vec![None; pc.len()];
    for (k, outcome) in per_layer.into_iter().flatten() {
        outcomes[k] = Some(outcome);
    }
    let mut stats = AugmentationStats {
        particles_per_layer: fields.iter().map(ParticleField::len).collect(),
        ..AugmentationStats::default()
    };
    let mut points = Vec::with_capacity(pc.len());
    let mut labels = Vec::with_capacity(pc.len());
    for outcome in outcomes.into_iter().map(|o| o.expect("every point has a layer")) {
        stats.record(outcome.label);
        stats.clamped_power += outcome.power_clamped as usize;
        stats.clamped_intensity += outcome.intensity_clamped as usize;
        labels.push(outcome.label);
        points.extend(outcome.point);
    }
    Ok(AugmentationResult {
        cloud: PointCloud {
            points,
            frame_id: pc.frame_id.clone(),
        },
        labels,
        stats,
    })
}

/// Echo profile of point `index` as the simulation sees it: the layer's
/// field is sampled exactly as in [`augment_snow`]. Zero-amplitude terms are
/// kept so an undisturbed beam still shows its target lobe.
pub fn beam_profile(
    pc: &PointCloud,
    calib: &SensorCalibration,
    cfg: &PipelineConfig,
    index: usize,
) -> Result<EchoProfile> {
    check_inputs(pc, calib, cfg)?;
    let p = pc
        .points
        .get(index)
        .ok_or_else(|| Error::Lookup(format!("beam {index} out of range ({} points)", pc.len())))?;
    let layer = p.layer.expect("checked");
    let seed = derive_seed(cfg.seed, layer as u64);
    let field = sample_field_with(calib.max_range, cfg.rate, seed, &cfg.sampling)?;
    let ctx = BeamContext {
        calib,
        laser: calib.laser(layer)?,
        cfg,
        step: cfg.peak_step_for(calib),
    };
    let index = BeamIndex::new(&field, calib.divergence);
    let hits = index.particles_in_beam(p.x as f64, p.y as f64, p.range());
    let power = invert_calibration(p.intensity as f64, p.range(), ctx.laser, calib.max_range).max(0.0);
    Ok(ctx.profile(&hits, p.range(), power))
}

fn check_inputs(pc: &PointCloud, calib: &SensorCalibration, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    calib.validate()?;
    pc.validate()?;
    for (k, p) in pc.points.iter().enumerate() {
        let layer = p
            .layer
            .ok_or_else(|| Error::Config(format!("point {k} has no layer id")))?;
        calib.laser(layer)?;
    }
    Ok(())
}

fn used_layers(pc: &PointCloud, n_layers: usize) -> Vec<bool> {
    let mut used = vec![false; n_layers];
    for p in &pc.points {
        if let Some(l) = p.layer {
            used[l as usize] = true;
        }
    }
    used
}

#[derive(Clone, Copy, Debug)]
struct Outcome {
    point: Option<LidarPoint>,
    label: PointLabel,
    power_clamped: bool,
    intensity_clamped: bool,
}

impl Outcome {
    fn unchanged(p: &LidarPoint) -> Self {
        Self {
            point: Some(*p),
            label: PointLabel::Unchanged,
            power_clamped: false,
            intensity_clamped: false,
        }
    }

    fn dropped() -> Self {
        Self {
            point: None,
            label: PointLabel::Dropped,
            power_clamped: false,
            intensity_clamped: false,
        }
    }
}

struct BeamContext<'a> {
    calib: &'a SensorCalibration,
    laser: &'a LaserCalibration,
    cfg: &'a PipelineConfig,
    step: f64,
}

impl BeamContext<'_> {
    fn profile(&self, hits: &[BeamHit], target_range: f64, target_power: f64) -> EchoProfile {
        let c = self.calib;
        let rho_0 = self.cfg.target_reflectivity;
        let rho_s = self.cfg.snow_reflectivity;
        let mut profile = EchoProfile::new();
        for h in hits {
            let (ca_p0, rho) = match h.kind {
                HitKind::Target => (target_power * target_range * target_range / rho_0, rho_0),
                HitKind::Particle(_) => (rho_s * self.laser.max_intensity / rho_0, rho_s),
            };
            let amplitude = echo_amplitude(
                ca_p0,
                rho,
                h.theta,
                c.divergence,
                h.range,
                c.overlap_start,
                c.overlap_full,
            );
            profile.push(EchoTerm::new(amplitude, h.range, c.pulse_width));
        }
        profile
    }

    fn simulate(&self, beams: &BeamIndex, p: &LidarPoint) -> Outcome {
        let r0 = p.range();
        let hits = beams.particles_in_beam(p.x as f64, p.y as f64, r0);
        if hits.len() <= 1 {
            return Outcome::unchanged(p);
        }
        let max_range = self.calib.max_range;
        let power = invert_calibration(p.intensity as f64, r0, self.laser, max_range);
        if !(power > 0.0) {
            return Outcome {
                power_clamped: true,
                ..Outcome::unchanged(p)
            };
        }
        let mut profile = self.profile(&hits, r0, power);
        profile.terms.retain(|t| t.amplitude > 0.0);
        let Ok(peak) = profile.max_peak(self.step) else {
            return Outcome::dropped();
        };
        if !(peak.power > 0.0 && peak.range > 0.0) {
            return Outcome::dropped();
        }
        let r_star = peak.range;
        let raw = apply_calibration_scaled(peak.power, r_star, self.laser, max_range);
        let intensity = raw.clamp(0.0, self.laser.max_intensity);
        let scale = r_star / r0;
        let moved = LidarPoint {
            x: (p.x as f64 * scale) as f32,
            y: (p.y as f64 * scale) as f32,
            z: (p.z as f64 * scale) as f32,
            intensity: intensity as f32,
            layer: p.layer,
        };
        let half_width = 0.5 * SPEED_OF_LIGHT * self.calib.pulse_width;
        let label = if (r_star - r0).abs() > half_width {
            PointLabel::Scattered
        } else if moved.intensity < p.intensity {
            PointLabel::Attenuated
        } else {
            PointLabel::Unchanged
        };
        Outcome {
            point: Some(moved),
            label,
            power_clamped: false,
            intensity_clamped: raw != intensity,
        }
    }
}
