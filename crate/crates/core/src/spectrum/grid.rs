use super::transition::admissible_raw;
use super::{AspectRatios, SpectralMeasure};

/// Resolution knobs for the scans that locate critical points and support
/// edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    /// Points per gap of `H` (per scale for the unbounded gap).
    pub scan_points: usize,
    /// Bisection stops at a bracket of `critical_tol * max(1, |x|)`.
    pub critical_tol: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            scan_points: 512,
            critical_tol: 1e-10,
        }
    }
}

/// Relative clearance kept between scan points and atoms.
pub(crate) const ATOM_CLEARANCE: f64 = 1e-8;

/// A point beyond which both support conditions hold for every larger
/// argument. Past `t_max / (1 - sqrt(c2))` the second condition is
/// guaranteed; the derivative is checked by doubling.
pub(crate) fn scan_ceiling(h: &SpectralMeasure, c: &AspectRatios) -> f64 {
    let t_max = h.max_atom();
    let mut u = 4.0 * t_max / (1.0 - c.c2().sqrt()) + t_max;
    for _ in 0..64 {
        if admissible_raw(u, h, c) && admissible_raw(2.0 * u, h, c) {
            break;
        }
        u *= 2.0;
    }
    u
}

/// Increasing scan points strictly inside `(lo, hi)`.
///
/// Endpoints are pulled in by `ATOM_CLEARANCE` relative to themselves (to
/// `hi` when `lo` is zero). An infinite `hi` is cut at `ceiling` and the
/// evenly spaced points are merged with a geometric grid anchored at `lo`,
/// so that structure near the last atom is not skipped.
pub(crate) fn gap_grid(lo: f64, hi: f64, ceiling: f64, settings: &ScanSettings) -> Vec<f64> {
    let n = settings.scan_points.max(2);
    let start = if lo == 0.0 {
        ATOM_CLEARANCE * hi.min(ceiling)
    } else {
        lo + ATOM_CLEARANCE * lo
    };
    if hi.is_finite() {
        let end = hi - ATOM_CLEARANCE * hi;
        if end <= start {
            return vec![0.5 * (lo + hi)];
        }
        return linspace(start, end, n);
    }
    let end = ceiling.max(2.0 * start);
    let mut grid = linspace(start, end, n);
    let (d0, d1) = (start - lo, end - lo);
    if d0 > 0.0 {
        let ratio = (d1 / d0).ln();
        grid.extend((0..n).map(|k| lo + d0 * (ratio * k as f64 / (n - 1) as f64).exp()));
    }
    grid.retain(|&x| x > lo && x <= end);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { b } else { a + step * k as f64 })
        .collect()
}
