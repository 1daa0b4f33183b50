//! Received-power echoes of a single beam.
//!
//! With a `sin²` pulse of half-power width `τ_H` and point-like reflectors,
//! the received power is a sum of lobes
//!
//! ```text
//! P_j(R) = A_j · sin²(π (R − R_j) / (c τ_H))    for R_j ≤ R ≤ R_j + c τ_H
//! A_j    = C_A P_0 ρ_j θ_j ξ(R_j) / (Θ R_j²)
//! ```
//!
//! and the sensor reports the strongest peak, shifted back by `c τ_H / 2`.

use std::f64::consts::PI;

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Refinement tolerance of the peak search, meters.
pub const PEAK_TOLERANCE: f64 = 1e-5;

/// Fraction of the receiver field of view overlapping the transmitted beam.
pub fn overlap(range: f64, overlap_start: f64, overlap_full: f64) -> f64 {
    if range <= overlap_start {
        0.0
    } else if range >= overlap_full {
        1.0
    } else {
        (range - overlap_start) / (overlap_full - overlap_start)
    }
}

/// Transmitted pulse power `P_0 sin²(π t / 2τ_H)` at time `t`, evaluated as
/// `(1 + sin(π (t/τ_H − 1/2))) / 2` so that `t = 0`, `τ_H/2` and `τ_H` give
/// exactly 0, 1/2 and 1.
pub fn pulse(t: f64, peak_power: f64, pulse_width: f64) -> f64 {
    if !(0.0..=2.0 * pulse_width).contains(&t) {
        return 0.0;
    }
    let u = t / pulse_width;
    peak_power * 0.5 * (1.0 + (PI * (u - 0.5)).sin())
}

/// Lobe amplitude of a reflector: `C_A P_0 ρ θ ξ(R) / (Θ R²)`.
pub fn echo_amplitude(
    ca_p0: f64,
    reflectivity: f64,
    theta: f64,
    divergence: f64,
    range: f64,
    overlap_start: f64,
    overlap_full: f64,
) -> f64 {
    ca_p0 * reflectivity * theta * overlap(range, overlap_start, overlap_full) / (divergence * range * range)
}

/// One `sin²` lobe of the received power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EchoTerm {
    pub amplitude: f64,
    /// Range where the lobe starts, meters.
    pub range_start: f64,
    /// Spatial lobe width `c τ_H`, meters.
    pub width: f64,
}

impl EchoTerm {
    pub fn new(amplitude: f64, range_start: f64, pulse_width: f64) -> Self {
        Self {
            amplitude,
            range_start,
            width: SPEED_OF_LIGHT * pulse_width,
        }
    }

    pub fn range_end(&self) -> f64 {
        self.range_start + self.width
    }

    pub fn lobe(&self, range: f64) -> f64 {
        if range < self.range_start || range > self.range_end() {
            return 0.0;
        }
        let s = (PI * (range - self.range_start) / self.width).sin();
        self.amplitude * s * s
    }
}

pub fn echo_lobe(term: &EchoTerm, range: f64) -> f64 {
    term.lobe(range)
}

/// The strongest return of a profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub power: f64,
    /// Range of the power maximum.
    pub argmax: f64,
    /// Reported range, `argmax − c τ_H / 2`.
    pub range: f64,
}

/// Superposition of echo lobes for one beam. All terms share one pulse
/// width.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EchoProfile {
    pub terms: Vec<EchoTerm>,
}

impl EchoProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, term: EchoTerm) {
        self.terms.push(term);
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn power_at(&self, range: f64) -> f64 {
        self.terms.iter().map(|t| t.lobe(range)).sum()
    }

    /// Terms sorted by start, grouped into runs with overlapping supports.
    fn clusters(&self) -> Vec<Vec<EchoTerm>> {
        let mut sorted = self.terms.clone();
        sorted.sort_by(|a, b| a.range_start.total_cmp(&b.range_start));
        let mut out: Vec<Vec<EchoTerm>> = Vec::new();
        let mut end = f64::NEG_INFINITY;
        for t in sorted {
            match out.last_mut() {
                Some(cluster) if t.range_start < end => cluster.push(t),
                _ => out.push(vec![t]),
            }
            end = end.max(t.range_end());
        }
        out
    }

    /// Grid of step `step` over the union of the lobe supports.
    pub fn grid(&self, step: f64) -> Vec<f64> {
        self.clusters()
            .iter()
            .flat_map(|c| cluster_grid(c, step))
            .collect()
    }

    /// `(range, power)` samples on [`grid`](Self::grid).
    pub fn sample(&self, step: f64) -> Vec<(f64, f64)> {
        self.grid(step).into_iter().map(|r| (r, self.power_at(r))).collect()
    }

    /// Strongest peak. Each group of overlapping lobes is scanned on a grid
    /// of step `step`; the best grid maxima are refined by golden-section
    /// search. An isolated lobe peaks at its center, which is used directly.
    pub fn max_peak(&self, step: f64) -> Result<Peak> {
        if self.terms.is_empty() {
            return Err(Error::Domain("peak of an empty echo profile".into()));
        }
        if !(step > 0.0) {
            return Err(Error::Domain(format!("peak grid step must be positive, got {step}")));
        }
        let half_width = 0.5 * self.terms[0].width;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for cluster in self.clusters() {
            let (p, r) = match cluster.as_slice() {
                [only] => (only.amplitude, only.range_start + half_width),
                terms => cluster_peak(terms, step),
            };
            if p > best.0 {
                best = (p, r);
            }
        }
        Ok(Peak {
            power: best.0,
            argmax: best.1,
            range: best.1 - half_width,
        })
    }
}

fn cluster_grid(terms: &[EchoTerm], step: f64) -> Vec<f64> {
    let a = terms[0].range_start;
    let b = terms.iter().map(EchoTerm::range_end).fold(a, f64::max);
    let n = ((b - a) / step).ceil() as usize;
    (0..=n).map(|k| (a + k as f64 * step).min(b)).collect()
}

fn cluster_peak(terms: &[EchoTerm], step: f64) -> (f64, f64) {
    let power = |r: f64| terms.iter().map(|t| t.lobe(r)).sum::<f64>();
    let grid = cluster_grid(terms, step);
    let values: Vec<f64> = grid.iter().map(|&r| power(r)).collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (a, b) = (grid[0], grid[grid.len() - 1]);

    let mut best = (f64::NEG_INFINITY, a);
    for k in 0..grid.len() {
        let left = if k > 0 { values[k - 1] } else { f64::NEG_INFINITY };
        let right = values.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        // Refine every local grid maximum that could still be the global one.
        if values[k] < left || values[k] < right || values[k] < top * (1.0 - 1e-3) {
            continue;
        }
        let lo = (grid[k] - step).max(a);
        let hi = (grid[k] + step).min(b);
        let (r, p) = golden_section_max(power, lo, hi, PEAK_TOLERANCE);
        let (r, p) = if p >= values[k] { (r, p) } else { (grid[k], values[k]) };
        if p > best.0 {
            best = (p, r);
        }
    }
    best
}

/// Golden-section search for the maximum of `f` on `[a, b]`, stopping when
/// the bracket is narrower than `tol`. Returns `(x_max, f_max)`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
