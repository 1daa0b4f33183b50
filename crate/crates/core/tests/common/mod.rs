//! Synthetic sensors and scenes shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowsim::io::{LidarPoint, PointCloud};
use snowsim::sensor::{LaserCalibration, SensorCalibration};
use snowsim::snow::{ParticleField, SnowParticle};
use snowsim::wet::GroundPlane;

pub const SENSOR_HEIGHT: f64 = 1.73;

/// 64 lasers spread from +2° to −24.9°, intensities in [0, 1].
pub fn hdl64_calibration() -> SensorCalibration {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let lasers = (0..64)
        .map(|k| {
            let elevation = (2.0 - 26.9 * k as f64 / 63.0).to_radians();
            LaserCalibration::new(
                elevation,
                rng.random_range(0.02..0.1),
                rng.random_range(500.0..2500.0),
                1.0,
            )
        })
        .collect();
    SensorCalibration::with_lasers(lasers)
}

/// A sweep of `n` returns: lasers pointing down see flat ground at
/// `-SENSOR_HEIGHT`, the others see walls between 8 and 60 m. Points carry
/// their laser index.
pub fn synthetic_frame(seed: u64, n: usize, calib: &SensorCalibration) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_l = calib.n_lasers();
    let per_laser = n.div_ceil(n_l);
    let mut points = Vec::with_capacity(n);
    'outer: for (l, laser) in calib.lasers.iter().enumerate() {
        let wall = rng.random_range(8.0..60.0);
        for k in 0..per_laser {
            if points.len() == n {
                break 'outer;
            }
            let az = std::f64::consts::TAU * (k as f64 + rng.random::<f64>() * 0.5) / per_laser as f64;
            let e = laser.elevation;
            let ground = if e < 0.0 { SENSOR_HEIGHT / (-e).tan() } else { f64::INFINITY };
            let planar = if ground < wall { ground } else { wall * rng.random_range(0.9..1.1) };
            let z = planar * e.tan();
            let intensity = if ground < wall {
                rng.random_range(0.25..0.45) * (-e).sin().max(0.05)
            } else {
                rng.random_range(0.1..0.9)
            };
            points.push(
                LidarPoint::new(
                    (planar * az.cos()) as f32,
                    (planar * az.sin()) as f32,
                    z as f32,
                    intensity as f32,
                )
                .with_layer(l as u32),
            );
        }
    }
    PointCloud::new(points)
}

/// Four downward lasers with a 40 m range, for fast multi-frame runs.
pub fn small_sensor() -> SensorCalibration {
    let lasers = (0..4)
        .map(|k| LaserCalibration::new((-2.0 - 3.0 * k as f64).to_radians(), 0.05, 1200.0, 1.0))
        .collect();
    SensorCalibration {
        max_range: 40.0,
        ..SensorCalibration::with_lasers(lasers)
    }
}

/// Clusters plus sparse clutter so the outlier filter keeps and removes points.
pub fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
    let centers: Vec<[f32; 3]> = (0..20)
        .map(|_| [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-2.0..2.0)])
        .collect();
    let pts = (0..n)
        .map(|_| {
            if rng.random_bool(0.7) {
                let c = centers[rng.random_range(0..centers.len())];
                let s = rng.random_range(0.02..0.5);
                LidarPoint::new(
                    c[0] + rng.random_range(-s..s),
                    c[1] + rng.random_range(-s..s),
                    c[2] + rng.random_range(-s..s),
                    0.3,
                )
            } else {
                LidarPoint::new(
                    rng.random_range(-40.0..40.0),
                    rng.random_range(-40.0..40.0),
                    rng.random_range(-3.0..3.0),
                    0.1,
                )
            }
        })
        .collect();
    PointCloud::new(pts)
}

/// A dense wall outside the split box plus `clutter` isolated points inside
/// it, each farther than the search radius from any other.
pub fn split_scene(clutter: usize) -> PointCloud {
    let mut pts = Vec::new();
    for i in 0..60 {
        for j in 0..20 {
            pts.push(LidarPoint::new(20.0, -3.0 + 0.1 * i as f32, -1.0 + 0.1 * j as f32, 0.5));
        }
    }
    // Lattice spacing of at least 0.12 m; the search radius here is 0.04 m.
    let mut k = 0;
    'fill: for ix in 0..8 {
        for iy in 0..5 {
            for iz in 0..5 {
                if k == clutter {
                    break 'fill;
                }
                pts.push(LidarPoint::new(
                    0.5 + 0.12 * ix as f32,
                    -0.9 + 0.45 * iy as f32,
                    -0.9 + 0.45 * iz as f32,
                    0.1,
                ));
                k += 1;
            }
        }
    }
    assert_eq!(k, clutter);
    PointCloud::new(pts)
}

/// Level ground `SENSOR_HEIGHT` below the sensor.
pub fn flat() -> GroundPlane {
    GroundPlane::new([0.0, 0.0, 1.0], -SENSOR_HEIGHT)
}

/// Lambertian return `ρ cos α P` from the flat ground at planar range `planar`.
pub fn ground_point(planar: f64, rho: f64, power: f64) -> LidarPoint {
    let range = planar.hypot(SENSOR_HEIGHT);
    let cos_a = SENSOR_HEIGHT / range;
    LidarPoint::new(planar as f32, 0.0, -SENSOR_HEIGHT as f32, (rho * cos_a * power) as f32)
}

/// Ground returns out to grazing incidence plus points above the ground band.
pub fn wet_scene(seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    for _ in 0..3000 {
        let planar = rng.random_range(3.0..250.0);
        let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let g = ground_point(planar, rng.random_range(0.02..0.9), 1.0);
        pts.push(LidarPoint::new((planar * az.cos()) as f32, (planar * az.sin()) as f32, g.z, g.intensity));
    }
    for _ in 0..1000 {
        pts.push(LidarPoint::new(
            rng.random_range(-40.0..40.0),
            rng.random_range(-40.0..40.0),
            rng.random_range(0.0..3.0),
            rng.random_range(0.0..1.0),
        ));
    }
    PointCloud::new(pts)
}

/// `n` non-overlapping particles crowding the wedge toward `axis`.
pub fn beam_scene(rng: &mut impl Rng, axis: f64, r0: f64, n: usize, divergence: f64) -> ParticleField {
    let mut particles: Vec<SnowParticle> = Vec::new();
    while particles.len() < n {
        let r = rng.random_range(1.0..r0);
        let b = axis + rng.random_range(-1.0..1.0) * divergence;
        let d_mm = rng.random_range(0.005..0.05) * divergence * r * 1e3;
        let p = SnowParticle {
            cx: r * b.cos(),
            cy: r * b.sin(),
            diameter_mm: d_mm,
        };
        let free = particles.iter().all(|q| {
            (p.cx - q.cx).hypot(p.cy - q.cy) >= (p.diameter_mm + q.diameter_mm) * 0.5e-3
        });
        if free {
            particles.push(p);
        }
    }
    ParticleField {
        particles,
        rate: 1.0,
        seed: 0,
    }
}

pub mod oracles;
