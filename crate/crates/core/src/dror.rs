//! Dynamic-radius outlier removal and the snowfall-intensity split built on
//! it.
//!
//! A point survives when at least `k_min` other points lie within
//! `max(r_min, β · r_p · α)` of it, where `r_p` is its horizontal range.

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::io::{LidarPoint, PointCloud};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrorConfig {
    /// Horizontal angular resolution, radians.
    pub alpha: f64,
    /// Radius multiplier.
    pub beta: f64,
    /// Minimum neighbor count.
    pub k_min: usize,
    /// Minimum search radius, meters.
    pub r_min: f64,
}

impl Default for DrorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.00349,
            beta: 3.0,
            k_min: 3,
            r_min: 0.04,
        }
    }
}

impl DrorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.r_min > 0.0 && self.k_min > 0) {
            return Err(Error::Config(format!("DROR parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn search_radius(&self, p: &LidarPoint) -> f64 {
        self.r_min.max(self.beta * p.planar_range() * self.alpha)
    }
}

/// Splits `pc` into `(kept, removed)`, both in input order.
pub fn dror_filter(pc: &PointCloud, cfg: &DrorConfig) -> Result<(PointCloud, PointCloud)> {
    let keep = dror_mask(pc, cfg)?;
    let (mut kept, mut removed) = (Vec::new(), Vec::new());
    for (p, k) in pc.points.iter().zip(keep) {
        if k {
            kept.push(*p);
        } else {
            removed.push(*p);
        }
    }
    Ok((
        PointCloud::new(kept).with_frame_id(pc.frame_id.clone()),
        PointCloud::new(removed).with_frame_id(pc.frame_id.clone()),
    ))
}

/// `true` for every point the filter keeps.
pub fn dror_mask(pc: &PointCloud, cfg: &DrorConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    if pc.is_empty() {
        return Ok(Vec::new());
    }
    let radii: Vec<f64> = pc.points.iter().map(|p| cfg.search_radius(p)).collect();
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    let grid = Grid::build(&pc.points, mean.max(cfg.r_min));
    Ok(pc
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| grid.has_neighbors(&pc.points, i, p.position(), radii[i], cfg.k_min))
        .collect())
}

struct Grid {
    cell: f64,
    cells: FxHashMap<(i64, i64, i64), Vec<u32>>,
}

impl Grid {
    fn key(&self, p: [f64; 3]) -> (i64, i64, i64) {
        let f = |v: f64| (v / self.cell).floor() as i64;
        (f(p[0]), f(p[1]), f(p[2]))
    }

    fn build(points: &[LidarPoint], cell: f64) -> Self {
        let mut grid = Self {
            cell,
            cells: FxHashMap::default(),
        };
        for (i, p) in points.iter().enumerate() {
            let k = grid.key(p.position());
            grid.cells.entry(k).or_default().push(i as u32);
        }
        grid
    }

    fn has_neighbors(&self, points: &[LidarPoint], me: usize, p: [f64; 3], radius: f64, k_min: usize) -> bool {
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = self.key(p);
        let r2 = radius * radius;
        let mut count = 0;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    let Some(members) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in members {
                        if j as usize != me && distance_sq(p, points[j as usize].position()) <= r2 {
                            count += 1;
                            if count >= k_min {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

pub fn distance_sq(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnowfallClass {
    Clear,
    Light,
    Heavy,
}

/// Region and thresholds of the snowfall split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Box bounds in the sensor frame, meters, inclusive.
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
    /// Fewest removed points for `Light`.
    pub light_min: usize,
    /// Fewest removed points for `Heavy`.
    pub heavy_min: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            x: (0.0, 10.0),
            y: (-1.0, 1.0),
            z: (-1.0, 1.0),
            light_min: 10,
            heavy_min: 80,
        }
    }
}

impl SplitConfig {
    pub fn contains(&self, p: &LidarPoint) -> bool {
        let inside = |v: f32, (lo, hi): (f64, f64)| (lo..=hi).contains(&(v as f64));
        inside(p.x, self.x) && inside(p.y, self.y) && inside(p.z, self.z)
    }

    pub fn class_of(&self, count: usize) -> SnowfallClass {
        if count >= self.heavy_min {
            SnowfallClass::Heavy
        } else if count >= self.light_min {
            SnowfallClass::Light
        } else {
            SnowfallClass::Clear
        }
    }
}

/// Class of a sweep and the number of filtered points inside the box.
pub fn classify_snowfall(pc: &PointCloud, cfg: &DrorConfig, split: &SplitConfig) -> Result<(SnowfallClass, usize)> {
    let (_, removed) = dror_filter(pc, cfg)?;
    let count = removed.points.iter().filter(|p| split.contains(p)).count();
    Ok((split.class_of(count), count))
}
