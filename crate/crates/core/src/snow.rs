//! Snow particle fields for one scan layer.
//!
//! Particle diameters follow the Gunn–Marshall exponential size
//! distribution `N(D) = N0·exp(−Λ·D)` with `N0 = 3800·r^−0.87 m⁻³mm⁻¹`
//! and `Λ = 2.55·r^−0.48 mm⁻¹` for a snowfall rate `r` in mm/h. The 3D
//! number density is turned into an areal density by treating the layer
//! plane as a slab as thick as the mean particle diameter.
//!
//! Centers are drawn uniformly on the disc of radius `R_max` around the
//! sensor and rejected while they overlap an already placed particle.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_SNOWFALL_RATE: f64 = 10.0;

/// Exponential particle size distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeDistribution {
    /// `N0`, particles per m³ per mm of diameter.
    pub intercept: f64,
    /// `Λ`, per mm.
    pub slope: f64,
}

impl SizeDistribution {
    pub const EMPTY: SizeDistribution = SizeDistribution {
        intercept: 0.0,
        slope: f64::INFINITY,
    };

    pub fn is_empty(&self) -> bool {
        self.intercept == 0.0
    }

    /// `N(D)` for a diameter in mm.
    pub fn density(&self, diameter_mm: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.intercept * (-self.slope * diameter_mm).exp()
    }

    /// `∫₀^∞ N(D) dD = N0/Λ`, particles per m³.
    pub fn total_density(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.intercept / self.slope
    }

    /// Number density of particles with diameter in `[lo, hi]` mm.
    pub fn truncated_density(&self, lo: f64, hi: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.intercept / self.slope * ((-self.slope * lo).exp() - (-self.slope * hi).exp())
    }

    /// Mean diameter in mm of the distribution restricted to `[lo, hi]`.
    pub fn truncated_mean(&self, lo: f64, hi: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let width = hi - lo;
        lo + 1.0 / self.slope - width / (self.slope * width).exp_m1()
    }

    /// CDF of the distribution restricted to `[lo, hi]`.
    pub fn truncated_cdf(&self, d: f64, lo: f64, hi: f64) -> f64 {
        if d <= lo {
            return 0.0;
        }
        if d >= hi {
            return 1.0;
        }
        (-self.slope * (d - lo)).exp_m1() / (-self.slope * (hi - lo)).exp_m1()
    }

    /// Inverse of [`truncated_cdf`](Self::truncated_cdf) for `u ∈ [0, 1)`.
    pub fn truncated_quantile(&self, u: f64, lo: f64, hi: f64) -> f64 {
        let d = lo - (u * (-self.slope * (hi - lo)).exp_m1()).ln_1p() / self.slope;
        d.clamp(lo, hi)
    }
}

/// Tunable constants of the particle sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnowSamplingConfig {
    pub n0_coefficient: f64,
    pub n0_exponent: f64,
    pub slope_coefficient: f64,
    pub slope_exponent: f64,
    pub min_diameter_mm: f64,
    pub max_diameter_mm: f64,
    /// Multiplier on the areal particle density.
    pub density_scale: f64,
    /// Placement attempts per particle before giving up.
    pub max_attempts: u32,
}

impl Default for SnowSamplingConfig {
    fn default() -> Self {
        Self {
            n0_coefficient: 3800.0,
            n0_exponent: -0.87,
            slope_coefficient: 2.55,
            slope_exponent: -0.48,
            min_diameter_mm: 0.1,
            max_diameter_mm: 10.0,
            density_scale: 1.0,
            max_attempts: 1000,
        }
    }
}

impl SnowSamplingConfig {
    pub fn size_distribution(&self, rate: f64) -> Result<SizeDistribution> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::Domain(format!("snowfall rate must be >= 0, got {rate}")));
        }
        if rate == 0.0 {
            return Ok(SizeDistribution::EMPTY);
        }
        Ok(SizeDistribution {
            intercept: self.n0_coefficient * rate.powf(self.n0_exponent),
            slope: self.slope_coefficient * rate.powf(self.slope_exponent),
        })
    }

    /// Particles per m² of the layer plane.
    pub fn areal_density(&self, rate: f64) -> Result<f64> {
        let dist = self.size_distribution(rate)?;
        let (lo, hi) = (self.min_diameter_mm, self.max_diameter_mm);
        let mean_m = dist.truncated_mean(lo, hi) * 1e-3;
        Ok(dist.truncated_density(lo, hi) * mean_m * self.density_scale)
    }

    pub fn expected_count(&self, max_range: f64, rate: f64) -> Result<f64> {
        Ok(PI * max_range * max_range * self.areal_density(rate)?)
    }
}

/// Size distribution for a snowfall rate in mm/h with the default constants.
pub fn size_distribution(rate: f64) -> Result<SizeDistribution> {
    SnowSamplingConfig::default().size_distribution(rate)
}

/// A spherical snow particle cut by the layer plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnowParticle {
    pub cx: f64,
    pub cy: f64,
    pub diameter_mm: f64,
}

impl SnowParticle {
    pub fn radius_m(&self) -> f64 {
        self.diameter_mm * 0.5e-3
    }

    /// Distance of the center from the sensor, meters.
    pub fn range(&self) -> f64 {
        self.cx.hypot(self.cy)
    }

    pub fn bearing(&self) -> f64 {
        self.cy.atan2(self.cx)
    }
}

/// Non-overlapping particles around the sensor for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleField {
    pub particles: Vec<SnowParticle>,
    pub rate: f64,
    pub seed: u64,
}

impl ParticleField {
    pub fn empty(rate: f64, seed: u64) -> Self {
        Self {
            particles: Vec::new(),
            rate,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// `cx,cy,d_mm` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cx,cy,d_mm\n");
        for p in &self.particles {
            let _ = writeln!(out, "{},{},{}", p.cx, p.cy, p.diameter_mm);
        }
        out
    }
}

/// Samples a field with the default sampler constants.
pub fn sample_field(max_range: f64, rate: f64, seed: u64) -> Result<ParticleField> {
    sample_field_with(max_range, rate, seed, &SnowSamplingConfig::default())
}

pub fn sample_field_with(
    max_range: f64,
    rate: f64,
    seed: u64,
    cfg: &SnowSamplingConfig,
) -> Result<ParticleField> {
    if !(0.0..=MAX_SNOWFALL_RATE).contains(&rate) {
        return Err(Error::Domain(format!(
            "snowfall rate must lie in [0, {MAX_SNOWFALL_RATE}] mm/h, got {rate}"
        )));
    }
    if !(max_range > 0.0 && max_range.is_finite()) {
        return Err(Error::Domain(format!("max range must be positive, got {max_range}")));
    }
    let count = cfg.expected_count(max_range, rate)?.round() as usize;
    sample_particles(max_range, rate, seed, count, cfg)
}

/// Places exactly `count` particles; the count-free core of
/// [`sample_field_with`].
pub fn sample_particles(
    max_range: f64,
    rate: f64,
    seed: u64,
    count: usize,
    cfg: &SnowSamplingConfig,
) -> Result<ParticleField> {
    let dist = cfg.size_distribution(rate)?;
    if count == 0 || dist.is_empty() {
        return Ok(ParticleField::empty(rate, seed));
    }
    let (lo, hi) = (cfg.min_diameter_mm, cfg.max_diameter_mm);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = ExclusionGrid::new(hi * 1e-3, count);
    let mut particles = Vec::with_capacity(count);

    for _ in 0..count {
        let diameter_mm = dist.truncated_quantile(rng.random::<f64>(), lo, hi);
        let mut placed = None;
        for _ in 0..cfg.max_attempts {
            let r = max_range * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let candidate = SnowParticle {
                cx: r * phi.cos(),
                cy: r * phi.sin(),
                diameter_mm,
            };
            if grid.is_free(&candidate, &particles) {
                placed = Some(candidate);
                break;
            }
        }
        let p = placed.ok_or_else(|| {
            Error::Sampling(format!(
                "could not place particle {} of {count} within {} attempts",
                particles.len(),
                cfg.max_attempts
            ))
        })?;
        grid.insert(&p, particles.len() as u32);
        particles.push(p);
    }
    Ok(ParticleField {
        particles,
        rate,
        seed,
    })
}

/// Uniform hash grid with cells as wide as the largest particle, so any
/// overlapping pair sits in adjacent cells.
struct ExclusionGrid {
    cell: f64,
    cells: FxHashMap<(i64, i64), Vec<u32>>,
}

impl ExclusionGrid {
    fn new(cell: f64, capacity: usize) -> Self {
        let mut cells = FxHashMap::default();
        cells.reserve(capacity);
        Self { cell, cells }
    }

    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64)
    }

    fn is_free(&self, p: &SnowParticle, placed: &[SnowParticle]) -> bool {
        let (kx, ky) = self.key(p.cx, p.cy);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(ids) = self.cells.get(&(kx + dx, ky + dy)) else {
                    continue;
                };
                for &id in ids {
                    let q = &placed[id as usize];
                    let min_dist = (p.diameter_mm + q.diameter_mm) * 0.5e-3;
                    let (ex, ey) = (p.cx - q.cx, p.cy - q.cy);
                    if ex * ex + ey * ey < min_dist * min_dist {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, p: &SnowParticle, id: u32) {
        let key = self.key(p.cx, p.cy);
        self.cells.entry(key).or_default().push(id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_empty() {
        let d = size_distribution(0.0).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.total_density(), 0.0);
        assert!(sample_field(120.0, 0.0, 1).unwrap().is_empty());
    }

    #[test]
    fn unit_rate_constants() {
        let d = size_distribution(1.0).unwrap();
        assert_eq!(d.intercept, 3800.0);
        assert_eq!(d.slope, 2.55);
    }

    #[test]
    fn negative_rate_rejected() {
        assert!(matches!(size_distribution(-0.1), Err(Error::Domain(_))));
        assert!(matches!(sample_field(120.0, 10.5, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn total_density_matches_quadrature() {
        // Composite Simpson on [0, 60/Λ]; the tail beyond is below e^-60.
        for rate in [0.3, 1.0, 2.5, 7.0] {
            let d = size_distribution(rate).unwrap();
            let b = 60.0 / d.slope;
            let n = 200_000;
            let h = b / n as f64;
            let mut s = d.density(0.0) + d.density(b);
            for k in 1..n {
                s += d.density(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = s * h / 3.0;
            let exact = d.total_density();
            assert!(((integral - exact) / exact).abs() < 1e-9, "rate {rate}: {integral} vs {exact}");
        }
    }

    #[test]
    fn truncated_mean_matches_quadrature() {
        let d = size_distribution(2.5).unwrap();
        let (lo, hi) = (0.1, 10.0);
        let n = 100_000;
        let h = (hi - lo) / n as f64;
        let (mut m0, mut m1) = (0.0, 0.0);
        for k in 0..n {
            let x = lo + (k as f64 + 0.5) * h;
            m0 += d.density(x) * h;
            m1 += x * d.density(x) * h;
        }
        assert!((m0 / d.truncated_density(lo, hi) - 1.0).abs() < 1e-6);
        assert!((m1 / m0 - d.truncated_mean(lo, hi)).abs() < 1e-6);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = size_distribution(1.5).unwrap();
        for u in [0.0, 0.1, 0.5, 0.9, 0.999] {
            let x = d.truncated_quantile(u, 0.1, 10.0);
            assert!((d.truncated_cdf(x, 0.1, 10.0) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_count_non_decreasing_in_rate() {
        let cfg = SnowSamplingConfig::default();
        let mut prev = 0.0;
        for k in 0..=1000 {
            let rate = k as f64 * 0.01;
            let n = cfg.expected_count(120.0, rate).unwrap();
            assert!(n >= prev, "rate {rate}: {n} < {prev}");
            prev = n;
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_field(30.0, 2.0, 42).unwrap();
        let b = sample_field(30.0, 2.0, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_field(30.0, 2.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn exclusion_with_crowded_field() {
        // Large particles in a tiny disc force plenty of rejections.
        let cfg = SnowSamplingConfig { min_diameter_mm: 5.0, ..Default::default() };
        let f = sample_particles(0.2, 2.5, 7, 150, &cfg).unwrap();
        let ps = &f.particles;
        for j in 0..ps.len() {
            for k in j + 1..ps.len() {
                let d = (ps[j].cx - ps[k].cx).hypot(ps[j].cy - ps[k].cy);
                assert!(d >= (ps[j].diameter_mm + ps[k].diameter_mm) * 0.5e-3);
            }
        }
    }

    #[test]
    fn impossible_packing_reports_error() {
        let cfg = SnowSamplingConfig { min_diameter_mm: 9.0, max_attempts: 50, ..Default::default() };
        assert!(matches!(
            sample_particles(0.01, 2.5, 1, 100, &cfg),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn csv_dump_has_one_row_per_particle() {
        let f = sample_field(10.0, 2.5, 3).unwrap();
        assert_eq!(f.to_csv().lines().count(), f.len() + 1);
    }
}
