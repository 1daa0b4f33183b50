//! Which particles a beam meets and how much of its opening angle each one
//! intercepts.
//!
//! A beam is a 2D wedge with apex at the sensor, axis toward the target and
//! full opening angle `Θ`. A particle disc of radius `r` whose center lies at
//! range `R_c` and bearing `b` covers the directions `b ± asin(r/R_c)`.
//! Walking front to back, each particle keeps the part of its directions
//! (clipped to the wedge) not already claimed by nearer particles; whatever
//! is left reaches the target, so `θ_0 + Σθ_j = Θ`.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use crate::snow::{ParticleField, SnowParticle};

/// What a beam hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitKind {
    Target,
    /// Index into the particle field.
    Particle(usize),
}

/// Which reflectivity scales a hit's echo.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reflector {
    /// `ρ_0`
    Target,
    /// `ρ_s`
    Snow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamHit {
    pub kind: HitKind,
    /// Range of the reflector, meters.
    pub range: f64,
    /// Visible angular extent, radians.
    pub theta: f64,
    /// Angular extent relative to the beam axis before clipping. `None` for
    /// the target and for particles that contain the sensor.
    pub span: Option<(f64, f64)>,
}

impl BeamHit {
    pub fn target(range: f64) -> Self {
        Self {
            kind: HitKind::Target,
            range,
            theta: 0.0,
            span: None,
        }
    }

    pub fn is_target(&self) -> bool {
        self.kind == HitKind::Target
    }

    pub fn reflector(&self) -> Reflector {
        match self.kind {
            HitKind::Target => Reflector::Target,
            HitKind::Particle(_) => Reflector::Snow,
        }
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Particle geometry seen from the sensor: range, bearing and angular
/// half-width (`None` when the disc contains the sensor).
fn particle_geometry(p: &SnowParticle) -> (f64, f64, Option<f64>) {
    let range = p.range();
    let r = p.radius_m();
    let half_width = (range > r).then(|| (r / range).min(1.0).asin());
    (range, p.bearing(), half_width)
}

fn particle_hit(
    index: usize,
    range: f64,
    bearing: f64,
    half_width: Option<f64>,
    axis: f64,
    target_range: f64,
    divergence: f64,
) -> Option<BeamHit> {
    if !(range < target_range) {
        return None;
    }
    let span = match half_width {
        None => None,
        Some(hw) => {
            let offset = wrap_angle(bearing - axis);
            if offset.abs() >= hw + 0.5 * divergence {
                return None;
            }
            Some((offset - hw, offset + hw))
        }
    };
    Some(BeamHit {
        kind: HitKind::Particle(index),
        range,
        theta: 0.0,
        span,
    })
}

fn by_range(a: &BeamHit, b: &BeamHit) -> Ordering {
    let key = |h: &BeamHit| match h.kind {
        HitKind::Particle(i) => (0u8, i),
        HitKind::Target => (1u8, 0),
    };
    a.range.total_cmp(&b.range).then_with(|| key(a).cmp(&key(b)))
}

/// Sorts hits, appends the target and assigns visible angles.
fn finish(mut hits: Vec<BeamHit>, target_range: f64, divergence: f64) -> Vec<BeamHit> {
    hits.push(BeamHit::target(target_range));
    hits.sort_by(by_range);
    occlusion_angles(&mut hits, divergence);
    hits
}

/// Hits of the beam toward `(x, y)` with the target at `target_range`,
/// sorted by range with visible angles assigned. Scans every particle.
pub fn particles_in_beam(
    field: &ParticleField,
    x: f64,
    y: f64,
    target_range: f64,
    divergence: f64,
) -> Vec<BeamHit> {
    let axis = y.atan2(x);
    let hits = field
        .particles
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (range, bearing, hw) = particle_geometry(p);
            particle_hit(i, range, bearing, hw, axis, target_range, divergence)
        })
        .collect();
    finish(hits, target_range, divergence)
}

/// Assigns `theta` to every hit. Hits must be sorted by range with the
/// target last among equal ranges; hits behind the target get zero.
pub fn occlusion_angles(hits: &mut [BeamHit], divergence: f64) {
    let half = 0.5 * divergence;
    let mut claimed = ClaimedArcs::default();
    let mut visible = 0.0;
    let mut behind_target = false;
    for hit in hits.iter_mut() {
        hit.theta = match hit.kind {
            HitKind::Target => {
                behind_target = true;
                continue;
            }
            HitKind::Particle(_) if behind_target => 0.0,
            HitKind::Particle(_) => {
                let (lo, hi) = hit.span.unwrap_or((-half, half));
                claimed.claim(lo.max(-half), hi.min(half))
            }
        };
        visible += hit.theta;
    }
    let remaining = (divergence - visible).max(0.0);
    let mut target_seen = false;
    for hit in hits.iter_mut().filter(|h| h.is_target()) {
        // Only the first target entry receives the remainder.
        hit.theta = if target_seen { 0.0 } else { remaining };
        target_seen = true;
    }
}

/// Disjoint sorted arcs already intercepted by nearer particles.
#[derive(Default)]
struct ClaimedArcs {
    arcs: Vec<(f64, f64)>,
}

impl ClaimedArcs {
    /// Claims `[lo, hi]` and returns the measure that was still free.
    fn claim(&mut self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let mut covered = 0.0;
        let (mut merged_lo, mut merged_hi) = (lo, hi);
        self.arcs.retain(|&(a, b)| {
            if b < lo || a > hi {
                return true;
            }
            covered += b.min(hi) - a.max(lo);
            merged_lo = merged_lo.min(a);
            merged_hi = merged_hi.max(b);
            false
        });
        let at = self.arcs.partition_point(|&(a, _)| a < merged_lo);
        self.arcs.insert(at, (merged_lo, merged_hi));
        ((hi - lo) - covered).max(0.0)
    }
}

/// Angular bin index over a particle field for fast beam queries.
///
/// Each particle is registered in every bin its angular extent touches;
/// particles containing the sensor are kept aside and tested on every query.
pub struct BeamIndex<'a> {
    field: &'a ParticleField,
    divergence: f64,
    bin_width: f64,
    geometry: Vec<(f64, f64, Option<f64>)>,
    bins: Vec<Vec<u32>>,
    everywhere: Vec<u32>,
}

const MAX_BINS: usize = 1 << 16;

impl<'a> BeamIndex<'a> {
    pub fn new(field: &'a ParticleField, divergence: f64) -> Self {
        let n_bins = ((TAU / divergence).ceil() as usize).clamp(1, MAX_BINS);
        let bin_width = TAU / n_bins as f64;
        let mut index = Self {
            field,
            divergence,
            bin_width,
            geometry: field.particles.iter().map(particle_geometry).collect(),
            bins: vec![Vec::new(); n_bins],
            everywhere: Vec::new(),
        };
        for i in 0..index.geometry.len() {
            let (_, bearing, hw) = index.geometry[i];
            match hw {
                Some(hw) => {
                    let (first, count) = index.bin_span(bearing - hw, bearing + hw);
                    for k in 0..count {
                        index.bins[(first + k) % n_bins].push(i as u32);
                    }
                }
                None => index.everywhere.push(i as u32),
            }
        }
        index
    }

    pub fn field(&self) -> &ParticleField {
        self.field
    }

    /// First bin and number of bins covering the arc `[lo, hi]`.
    fn bin_span(&self, lo: f64, hi: f64) -> (usize, usize) {
        let n = self.bins.len();
        let first = ((lo + PI) / self.bin_width).floor() as i64;
        let last = ((hi + PI) / self.bin_width).floor() as i64;
        let count = ((last - first + 1) as usize).min(n);
        (first.rem_euclid(n as i64) as usize, count)
    }

    /// Same result as [`particles_in_beam`] on the indexed field.
    pub fn particles_in_beam(&self, x: f64, y: f64, target_range: f64) -> Vec<BeamHit> {
        let axis = y.atan2(x);
        let half = 0.5 * self.divergence;
        let (first, count) = self.bin_span(axis - half, axis + half);
        let n = self.bins.len();
        let mut candidates: Vec<u32> = self.everywhere.clone();
        for k in 0..count {
            candidates.extend_from_slice(&self.bins[(first + k) % n]);
        }
        candidates.sort_unstable();
        candidates.dedup();
        let hits = candidates
            .into_iter()
            .filter_map(|i| {
                let (range, bearing, hw) = self.geometry[i as usize];
                particle_hit(i as usize, range, bearing, hw, axis, target_range, self.divergence)
            })
            .collect();
        finish(hits, target_range, self.divergence)
    }
}
