use serde::{Deserialize, Serialize};

use super::grid::{gap_grid, scan_ceiling, ScanSettings};
use super::transition::{admissible_raw, psi_raw};
use super::{AspectRatios, SpectralMeasure};
use crate::roots::bisect_predicate;

/// A maximal interval of the complement of the atoms of `H` on which all
/// three support conditions hold. `psi` is strictly increasing on it, and
/// its image lies outside the support of the Fisher LSD. Ends may be
/// infinite; negative arguments only occur when `c1 > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleInterval {
    pub lower: f64,
    pub upper: f64,
}

impl AdmissibleInterval {
    pub fn contains(&self, u: f64) -> bool {
        u >= self.lower && u <= self.upper
    }

    /// `(psi(lower), psi(upper))`; infinite ends map to themselves.
    pub fn image(&self, h: &SpectralMeasure, c: &AspectRatios) -> (f64, f64) {
        (psi_ext(self.lower, h, c), psi_ext(self.upper, h, c))
    }
}

fn psi_ext(u: f64, h: &SpectralMeasure, c: &AspectRatios) -> f64 {
    if u.is_infinite() {
        u
    } else {
        psi_raw(u, h, c)
    }
}

pub fn admissible_intervals(h: &SpectralMeasure, c: &AspectRatios) -> Vec<AdmissibleInterval> {
    admissible_intervals_with(h, c, &ScanSettings::default())
}

/// Scans every gap of `H` for runs where conditions (ii) and (iii) hold and
/// refines each run boundary by bisection on the admissibility predicate.
///
/// When `c1 > 1` the negative half line is scanned as well: the lower edge
/// of the support then comes from a critical point below zero.
pub fn admissible_intervals_with(
    h: &SpectralMeasure,
    c: &AspectRatios,
    settings: &ScanSettings,
) -> Vec<AdmissibleInterval> {
    let ceiling = scan_ceiling(h, c);
    let adm = |u: f64| admissible_raw(u, h, c);
    let tol = |u: f64| settings.critical_tol * u.abs().max(1.0);
    let mut out = Vec::new();

    let mut gaps: Vec<(f64, f64)> = Vec::new();
    if c.c1() > 1.0 {
        gaps.push((f64::NEG_INFINITY, 0.0));
    }
    gaps.extend(h.gaps());

    for (lo, hi) in gaps {
        let grid: Vec<f64> = if lo.is_infinite() {
            gap_grid(0.0, f64::INFINITY, ceiling, settings)
                .into_iter()
                .rev()
                .map(|x| -x)
                .collect()
        } else {
            gap_grid(lo, hi, ceiling, settings)
        };
        let flags: Vec<bool> = grid.iter().map(|&u| adm(u)).collect();
        let last = grid.len() - 1;
        let mut i = 0;
        while i <= last {
            if !flags[i] {
                i += 1;
                continue;
            }
            let mut j = i;
            while j < last && flags[j + 1] {
                j += 1;
            }
            let lower = if i > 0 {
                bisect_predicate(adm, grid[i], grid[i - 1], tol)
            } else if lo == 0.0 || lo.is_infinite() {
                // psi(0) = 0 by continuity; the negative ray is open below
                lo
            } else {
                grid[0]
            };
            let upper = if j < last {
                bisect_predicate(adm, grid[j], grid[j + 1], tol)
            } else if hi == 0.0 || hi.is_infinite() {
                hi
            } else {
                grid[last]
            };
            out.push(AdmissibleInterval { lower, upper });
            i = j + 1;
        }
    }
    out
}

/// Support of the limiting spectral distribution of the Fisher matrix, as a
/// union of closed intervals, plus the point mass at zero that appears when
/// `c1 > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    intervals: Vec<(f64, f64)>,
    zero_mass: f64,
}

impl SupportSet {
    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Mass `1 - 1/c1` at the origin when `c1 > 1`, else zero.
    pub fn zero_mass(&self) -> f64 {
        self.zero_mass
    }

    pub fn lower(&self) -> f64 {
        self.intervals.first().map_or(0.0, |iv| iv.0)
    }

    pub fn upper(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.1)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.contains_dilated(x, 0.0)
    }

    /// Membership in the intervals widened by `margin` on each side.
    pub fn contains_dilated(&self, x: f64, margin: f64) -> bool {
        (self.zero_mass > 0.0 && x.abs() <= margin)
            || self
                .intervals
                .iter()
                .any(|&(a, b)| x >= a - margin && x <= b + margin)
    }

    /// Open gaps between consecutive support intervals.
    pub fn interior_gaps(&self) -> Vec<(f64, f64)> {
        self.intervals
            .windows(2)
            .map(|w| (w[0].1, w[1].0))
            .collect()
    }
}

pub fn lsd_support(h: &SpectralMeasure, c: &AspectRatios) -> SupportSet {
    lsd_support_with(h, c, &ScanSettings::default())
}

/// Complement in `[0, inf)` of the `psi`-images of the admissible intervals.
pub fn lsd_support_with(
    h: &SpectralMeasure,
    c: &AspectRatios,
    settings: &ScanSettings,
) -> SupportSet {
    let mut images: Vec<(f64, f64)> = admissible_intervals_with(h, c, settings)
        .iter()
        .map(|iv| iv.image(h, c))
        .filter(|&(_, b)| b > 0.0)
        .map(|(a, b)| (a.max(0.0), b))
        .collect();
    images.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut intervals = Vec::new();
    let mut cursor = 0.0_f64;
    for (a, b) in images {
        if b <= cursor {
            continue;
        }
        if a > cursor {
            intervals.push((cursor, a));
        }
        cursor = cursor.max(b);
    }
    if cursor.is_finite() {
        // no admissible ray was found; close at the scan ceiling
        let top = psi_ext(scan_ceiling(h, c), h, c);
        if top > cursor {
            intervals.push((cursor, top));
        }
    }
    intervals.retain(|&(a, b)| b > a);
    let zero_mass = if c.c1() > 1.0 {
        1.0 - 1.0 / c.c1()
    } else {
        0.0
    };
    SupportSet {
        intervals,
        zero_mass,
    }
}
