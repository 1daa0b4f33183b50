//! Wet-ground simulation.
//!
//! A water film of depth `d_w` over the road changes the ground reflectance.
//! Light entering the film bounces between the road and the water surface;
//! summing the rays that make it back out gives, per polarization,
//!
//! ```text
//! T_total = T_air ρ_0 T_water / (1 − ρ_0 R_water)
//! ```
//!
//! The wet reflectivity blends the dry one with `T_total / cos α` by how far
//! the film fills the tread, `γ = clamp(d_w / d_p, 0, 1)`. Ground returns
//! that sink below the noise floor are dropped.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calibration::{GroundSample, LinearRangeModel};
use crate::io::{LidarPoint, PointCloud};
use crate::pipeline::{AugmentationResult, AugmentationStats, PointLabel};
use crate::{Error, Result};

pub const N_AIR: f64 = 1.0;
pub const N_WATER: f64 = 1.33;
/// Upper bound for the recovered reflectivity fed to the series.
pub const MAX_SERIES_REFLECTIVITY: f64 = 0.999;

/// Ground plane `p·w = h` with the band `|p·w − h| < band` counted as ground.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundPlane {
    /// Unit normal pointing up.
    pub normal: [f64; 3],
    /// Meters.
    pub intercept: f64,
    /// Half-width of the ground band, meters.
    pub band: f64,
}

impl GroundPlane {
    pub const DEFAULT_BAND: f64 = 0.5;

    pub fn new(normal: [f64; 3], intercept: f64) -> Self {
        Self {
            normal,
            intercept,
            band: Self::DEFAULT_BAND,
        }
    }

    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        dot(p, self.normal) - self.intercept
    }

    pub fn is_ground(&self, p: &LidarPoint) -> bool {
        self.signed_distance(p.position()).abs() < self.band
    }

    /// Angle between the ray to `p` and the plane normal.
    pub fn incidence(&self, p: &LidarPoint) -> f64 {
        let r = p.range();
        (dot(p.position(), self.normal).abs() / r).min(1.0).acos()
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier distance, meters.
    pub inlier_tolerance: f64,
    /// Only points with `z` below this value are candidates, meters.
    pub candidate_max_z: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_tolerance: 0.05,
            candidate_max_z: -1.0,
            seed: 0,
        }
    }
}

/// Three-point RANSAC followed by a least-squares refit on the inliers.
pub fn fit_ground_plane(pc: &PointCloud, cfg: &RansacConfig) -> Result<GroundPlane> {
    let pts: Vec<Vector3<f64>> = pc
        .points
        .iter()
        .filter(|p| (p.z as f64) < cfg.candidate_max_z)
        .map(|p| Vector3::from(p.position()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Estimation(format!(
            "{} ground candidates, need at least 3",
            pts.len()
        )));
    }
    let scale = pts.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..cfg.iterations {
        let a = rng.random_range(0..pts.len());
        let b = rng.random_range(0..pts.len());
        let c = rng.random_range(0..pts.len());
        if a == b || b == c || a == c {
            continue;
        }
        let n = (pts[b] - pts[a]).cross(&(pts[c] - pts[a]));
        let norm = n.norm();
        if norm <= 1e-9 * scale * scale {
            continue;
        }
        let n = n / norm;
        let h = n.dot(&pts[a]);
        let count = pts
            .iter()
            .filter(|p| (n.dot(p) - h).abs() < cfg.inlier_tolerance)
            .count();
        if best.is_none_or(|(k, _, _)| count > k) {
            best = Some((count, n, h));
        }
    }
    let Some((_, n, h)) = best else {
        return Err(Error::Estimation("ground candidates are degenerate (collinear)".into()));
    };
    let inliers: Vec<&Vector3<f64>> = pts
        .iter()
        .filter(|p| (n.dot(p) - h).abs() < cfg.inlier_tolerance)
        .collect();
    let centroid = inliers.iter().fold(Vector3::zeros(), |s, p| s + *p) / inliers.len() as f64;
    let cov = inliers.iter().fold(Matrix3::zeros(), |s, p| {
        let d = *p - centroid;
        s + d * d.transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut w: Vector3<f64> = eig.eigenvectors.column(k).into_owned().normalize();
    if w.z < 0.0 {
        w = -w;
    }
    Ok(GroundPlane::new([w.x, w.y, w.z], w.dot(&centroid)))
}

/// Refraction angle; errors on total internal reflection.
pub fn snell(alpha_in: f64, n_in: f64, n_out: f64) -> Result<f64> {
    let s = n_in / n_out * alpha_in.sin();
    if s > 1.0 {
        return Err(Error::TotalInternalReflection(s));
    }
    Ok(s.asin())
}

/// Power reflection and transmission coefficients of a planar interface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fresnel {
    pub r_perp: f64,
    pub r_par: f64,
    pub t_perp: f64,
    pub t_par: f64,
}

pub fn fresnel_power(alpha_in: f64, n_in: f64, n_out: f64) -> Fresnel {
    let Ok(alpha_out) = snell(alpha_in, n_in, n_out) else {
        return Fresnel {
            r_perp: 1.0,
            r_par: 1.0,
            t_perp: 0.0,
            t_par: 0.0,
        };
    };
    let (ci, co) = (alpha_in.cos(), alpha_out.cos());
    let r_perp = (n_in * ci - n_out * co) / (n_in * ci + n_out * co);
    let r_par = (n_out * ci - n_in * co) / (n_out * ci + n_in * co);
    let t_perp = 2.0 * n_in * ci / (n_in * ci + n_out * co);
    let t_par = 2.0 * n_in * ci / (n_out * ci + n_in * co);
    // Flux ratio of transmitted to incident beam; zero at grazing incidence.
    let flux = if ci > 0.0 { n_out * co / (n_in * ci) } else { 0.0 };
    Fresnel {
        r_perp: r_perp * r_perp,
        r_par: r_par * r_par,
        t_perp: flux * t_perp * t_perp,
        t_par: flux * t_par * t_par,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WetParams {
    /// Water depth `d_w`, mm.
    pub water_depth: f64,
    /// Tread depth `d_p`, mm.
    pub tread_depth: f64,
    pub n_air: f64,
    pub n_water: f64,
}

impl Default for WetParams {
    fn default() -> Self {
        Self {
            water_depth: 0.0,
            tread_depth: 1.2,
            n_air: N_AIR,
            n_water: N_WATER,
        }
    }
}

impl WetParams {
    pub fn with_depth(water_depth: f64) -> Self {
        Self {
            water_depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.water_depth >= 0.0 && self.water_depth.is_finite()) {
            return Err(Error::Config(format!("water depth must be >= 0, got {}", self.water_depth)));
        }
        if !(self.tread_depth > 0.0 && self.tread_depth.is_finite()) {
            return Err(Error::Config(format!("tread depth must be > 0, got {}", self.tread_depth)));
        }
        if !(self.n_air > 0.0 && self.n_water > 0.0) {
            return Err(Error::Config("refractive indices must be positive".into()));
        }
        Ok(())
    }
}

/// `γ = clamp(d_w / d_p, 0, 1)`
pub fn blend_weight(water_depth: f64, tread_depth: f64) -> f64 {
    (water_depth / tread_depth).clamp(0.0, 1.0)
}

/// Effective reflectance of the wet surface, the larger of the two
/// polarizations.
pub fn t_total(alpha_in: f64, rho_0: f64, params: &WetParams) -> Result<f64> {
    if !(0.0..1.0).contains(&rho_0) {
        return Err(Error::Domain(format!("reflectivity must lie in [0, 1), got {rho_0}")));
    }
    let alpha_out = snell(alpha_in, params.n_air, params.n_water)?;
    let into = fresnel_power(alpha_in, params.n_air, params.n_water);
    let back = fresnel_power(alpha_out, params.n_water, params.n_air);
    let mut best = 0.0f64;
    for (t_air, t_water, r_water) in [
        (into.t_perp, back.t_perp, back.r_perp),
        (into.t_par, back.t_par, back.r_par),
    ] {
        let q = rho_0 * r_water;
        if q >= 1.0 {
            return Err(Error::Divergence(q));
        }
        best = best.max(t_air * rho_0 * t_water / (1.0 - q));
    }
    Ok(best)
}

/// Water depth drawn from an exponential of mean `mean` truncated to
/// `[lo, hi]`, all in mm.
pub fn sample_water_depth(rng: &mut impl Rng, mean: f64, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    let mass = -(-(hi - lo) / mean).exp_m1();
    (lo - mean * (-u * mass).ln_1p()).clamp(lo, hi)
}

/// Ground returns as samples for [`estimate_power_and_noise`].
///
/// [`estimate_power_and_noise`]: crate::calibration::estimate_power_and_noise
pub fn ground_samples(pc: &PointCloud, plane: &GroundPlane) -> Vec<GroundSample> {
    pc.points
        .iter()
        .filter(|p| plane.is_ground(p))
        .map(|p| GroundSample {
            range: p.range(),
            intensity: p.intensity as f64,
            incidence: plane.incidence(p),
        })
        .collect()
}

#[derive(Clone, Copy)]
struct WetOutcome {
    point: Option<LidarPoint>,
    label: PointLabel,
    ground: bool,
    clamped: bool,
}

/// Wets the ground of one sweep. Points off the ground band are untouched;
/// positions never change.
///
/// A ground point is dropped when wetting takes its intensity from above
/// the noise floor to at or below it. Returns the sensor recorded while dry
/// are kept even if the fitted floor lies above them.
pub fn augment_wet(
    pc: &PointCloud,
    plane: &GroundPlane,
    params: &WetParams,
    power: &LinearRangeModel,
    noise: &LinearRangeModel,
) -> Result<AugmentationResult> {
    params.validate()?;
    pc.validate()?;
    let gamma = blend_weight(params.water_depth, params.tread_depth);
    let outcomes = pc
        .points
        .par_iter()
        .map(|p| wet_point(p, plane, params, gamma, power, noise))
        .collect::<Result<Vec<_>>>()?;

    let mut stats = AugmentationStats::default();
    let mut points = Vec::with_capacity(pc.len());
    let mut labels = Vec::with_capacity(pc.len());
    for o in outcomes {
        stats.record(o.label);
        stats.ground_points += o.ground as usize;
        stats.clamped_reflectivity += o.clamped as usize;
        labels.push(o.label);
        points.extend(o.point);
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

fn wet_point(
    p: &LidarPoint,
    plane: &GroundPlane,
    params: &WetParams,
    gamma: f64,
    power: &LinearRangeModel,
    noise: &LinearRangeModel,
) -> Result<WetOutcome> {
    let unchanged = WetOutcome {
        point: Some(*p),
        label: PointLabel::Unchanged,
        ground: false,
        clamped: false,
    };
    if !plane.is_ground(p) {
        return Ok(unchanged);
    }
    let ground = WetOutcome {
        ground: true,
        ..unchanged
    };
    let r0 = p.range();
    let alpha = plane.incidence(p);
    let cos_a = alpha.cos();
    let p_t = power.eval(r0);
    if gamma == 0.0 || !(cos_a > 0.0 && p_t > 0.0) {
        return Ok(ground);
    }
    let i = p.intensity as f64;
    let rho_0 = i / (cos_a * p_t);
    let rho_series = rho_0.clamp(0.0, MAX_SERIES_REFLECTIVITY);
    let t = t_total(alpha, rho_series, params)?;
    let rho_w = (1.0 - gamma) * rho_0 + gamma * t / cos_a;
    let wet = (rho_w * cos_a * p_t).max(0.0);
    let floor = noise.eval(r0);
    let clamped = rho_series != rho_0;
    if wet <= floor && i > floor {
        return Ok(WetOutcome {
            point: None,
            label: PointLabel::Dropped,
            ground: true,
            clamped,
        });
    }
    let moved = LidarPoint {
        intensity: wet as f32,
        ..*p
    };
    Ok(WetOutcome {
        point: Some(moved),
        label: if moved.intensity < p.intensity {
            PointLabel::Attenuated
        } else {
            PointLabel::Unchanged
        },
        ground: true,
        clamped,
    })
}
