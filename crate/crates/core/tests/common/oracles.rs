//! Reference computations written independently of the library: direct
//! sums, brute force and textbook formulas.

use std::f64::consts::PI;

use rand::Rng;
use snowsim::io::LidarPoint;
use snowsim::snow::ParticleField;

pub const C: f64 = 299_792_458.0;

/// Received power of one point reflector by direct discretization of the
/// convolution `P_R(R) = C_A ∫ P_T(t) H(R − ct/2) dt`. The reflector's
/// impulse response is a box of width `dt` in time and height `1/dt`.
#[allow(clippy::too_many_arguments)]
pub fn convolution_echo(
    ca_p0: f64,
    rho: f64,
    theta: f64,
    divergence: f64,
    r_j: f64,
    overlap: (f64, f64),
    tau_h: f64,
    r: f64,
    dt: f64,
) -> f64 {
    let (r1, r2) = overlap;
    let xi = if r_j <= r1 {
        0.0
    } else if r_j >= r2 {
        1.0
    } else {
        (r_j - r1) / (r2 - r1)
    };
    let weight = rho * theta / divergence * xi / (r_j * r_j);
    let steps = (2.0 * tau_h / dt).round() as usize;
    let mut sum = 0.0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let s = (PI * t / (2.0 * tau_h)).sin();
        let pulse = ca_p0 * s * s;
        let lag = (r - C * t / 2.0 - r_j) * 2.0 / C;
        if lag.abs() < dt / 2.0 {
            sum += pulse * weight / dt * dt;
        }
    }
    sum
}

/// Particles whose disc meets the wedge toward `(x, y)` and whose center
/// is nearer than `r0`, found by point–ray distances.
pub fn wedge_members(field: &ParticleField, x: f64, y: f64, r0: f64, divergence: f64) -> Vec<usize> {
    let axis = y.atan2(x);
    let edges = [axis - divergence / 2.0, axis + divergence / 2.0];
    field
        .particles
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let rc = p.cx.hypot(p.cy);
            let r = p.diameter_mm * 0.5e-3;
            if rc >= r0 {
                return false;
            }
            if rc <= r {
                return true;
            }
            let mut off = p.cy.atan2(p.cx) - axis;
            off = (off + PI).rem_euclid(2.0 * PI) - PI;
            if off.abs() <= divergence / 2.0 {
                return true;
            }
            // Distance from the center to the nearer boundary ray.
            edges.iter().any(|&e| {
                let (dx, dy) = (e.cos(), e.sin());
                let along = p.cx * dx + p.cy * dy;
                let dist = if along <= 0.0 { rc } else { (p.cx * dy - p.cy * dx).abs() };
                dist < r
            })
        })
        .map(|(i, _)| i)
        .collect()
}

/// Fraction of `rays` random rays of the wedge first stopped by each
/// particle nearer than `r0`; the last entry is the fraction reaching the
/// target.
pub fn monte_carlo_fractions(
    field: &ParticleField,
    x: f64,
    y: f64,
    r0: f64,
    divergence: f64,
    rays: usize,
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    let axis = y.atan2(x);
    let mut counts = vec![0usize; field.particles.len()];
    let mut target = 0usize;
    for _ in 0..rays {
        let phi = axis + (rng.random::<f64>() - 0.5) * divergence;
        let (dx, dy) = (phi.cos(), phi.sin());
        let mut first: Option<(f64, usize)> = None;
        for (j, p) in field.particles.iter().enumerate() {
            let r = p.diameter_mm * 0.5e-3;
            if p.cx.hypot(p.cy) >= r0 {
                continue;
            }
            let b = p.cx * dx + p.cy * dy;
            let c = p.cx * p.cx + p.cy * p.cy - r * r;
            let disc = b * b - c;
            if disc < 0.0 {
                continue;
            }
            let t = if c <= 0.0 { 0.0 } else { b - disc.sqrt() };
            if t < 0.0 {
                continue;
            }
            if first.is_none_or(|(ft, _)| t < ft) {
                first = Some((t, j));
            }
        }
        match first {
            Some((_, j)) => counts[j] += 1,
            None => target += 1,
        }
    }
    let n = rays as f64;
    (counts.iter().map(|&k| k as f64 / n).collect(), target as f64 / n)
}

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// `K_α/√n` for α = 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// O(n²) outlier filter: keep iff at least `k_min` other points lie within
/// `max(r_min, β α r_p)`.
pub fn dror_brute_force(points: &[LidarPoint], alpha: f64, beta: f64, k_min: usize, r_min: f64) -> Vec<bool> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let rp = (p.x as f64).hypot(p.y as f64);
            let sr = r_min.max(beta * rp * alpha);
            let n = points
                .iter()
                .enumerate()
                .filter(|&(j, q)| {
                    let (dx, dy, dz) = (
                        p.x as f64 - q.x as f64,
                        p.y as f64 - q.y as f64,
                        p.z as f64 - q.z as f64,
                    );
                    j != i && dx * dx + dy * dy + dz * dz <= sr * sr
                })
                .count();
            n >= k_min
        })
        .collect()
}

/// Fresnel power coefficients in the sine/tangent form, valid for
/// `0 < α_in < π/2` below the critical angle: `(R_perp, R_par, T_perp, T_par)`.
pub fn fresnel_textbook(alpha_in: f64, n_in: f64, n_out: f64) -> (f64, f64, f64, f64) {
    let at = (n_in / n_out * alpha_in.sin()).asin();
    let (s, d) = (alpha_in + at, alpha_in - at);
    let rs = -d.sin() / s.sin();
    let rp = d.tan() / s.tan();
    let ts = 2.0 * at.sin() * alpha_in.cos() / s.sin();
    let tp = 2.0 * at.sin() * alpha_in.cos() / (s.sin() * d.cos());
    let flux = n_out * at.cos() / (n_in * alpha_in.cos());
    (rs * rs, rp * rp, flux * ts * ts, flux * tp * tp)
}

/// Partial sum `Σ_{k<terms} T_air ρ T_water (ρ R_water)^k`, maximized over
/// polarization, with textbook Fresnel coefficients.
pub fn t_total_series(alpha_in: f64, rho: f64, n_air: f64, n_water: f64, terms: usize) -> f64 {
    let at = (n_air / n_water * alpha_in.sin()).asin();
    let (_, _, ta_s, ta_p) = fresnel_textbook(alpha_in, n_air, n_water);
    let (rw_s, rw_p, tw_s, tw_p) = fresnel_textbook(at, n_water, n_air);
    let series = |ta: f64, tw: f64, rw: f64| {
        let mut sum = 0.0;
        let mut q = 1.0;
        for _ in 0..terms {
            sum += ta * rho * tw * q;
            q *= rho * rw;
        }
        sum
    };
    series(ta_s, tw_s, rw_s).max(series(ta_p, tw_p, rw_p))
}

/// Internal water→air power reflectance at the refraction angle of
/// `alpha_in`, larger polarization.
pub fn water_reflectance(alpha_in: f64, n_air: f64, n_water: f64) -> f64 {
    let at = (n_air / n_water * alpha_in.sin()).asin();
    let (rs, rp, _, _) = fresnel_textbook(at, n_water, n_air);
    rs.max(rp)
}
