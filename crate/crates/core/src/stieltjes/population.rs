use serde::{Deserialize, Serialize};

use super::StieltjesError;
use crate::roots::bisect;
use crate::spectrum::{admissible_intervals, lsd_support, psi_raw, AspectRatios, SpectralMeasure};

/// The root `m0` with `psi(-m0) = x` on an admissible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompanionRoot {
    pub m0: f64,
    pub x: f64,
}

/// Stieltjes transform `m` of the Fisher LSD and its companion
/// `m_underline = -(1 - c1)/x + c1 m`, both evaluated at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StieltjesPair {
    pub m: f64,
    pub m_underline: f64,
    pub x: f64,
}

impl StieltjesPair {
    /// `m_underline + (1 - c1)/x - c1 m`; zero for a consistent pair.
    pub fn relation_residual(&self, c: &AspectRatios) -> f64 {
        self.m_underline + (1.0 - c.c1()) / self.x - c.c1() * self.m
    }
}

const SOLVE_REL_TOL: f64 = 1e-12;

/// Inverts `psi` at a point `x` outside the support of the Fisher LSD.
pub fn solve_m0(
    x: f64,
    h: &SpectralMeasure,
    c: &AspectRatios,
) -> Result<CompanionRoot, StieltjesError> {
    if !x.is_finite() || x == 0.0 {
        return Err(StieltjesError::InvalidPoint(x));
    }
    let psi = |u: f64| psi_raw(u, h, c);
    let scale = h.max_atom();
    for iv in admissible_intervals(h, c) {
        let (a, b) = iv.image(h, c);
        if !(x > a && x < b) {
            continue;
        }
        let mut lo = iv.lower;
        if lo.is_infinite() {
            lo = -scale;
            while psi(lo) >= x {
                lo *= 2.0;
            }
        }
        let mut hi = iv.upper;
        if hi.is_infinite() {
            hi = (2.0 * lo).max(scale);
            while psi(hi) <= x {
                hi *= 2.0;
            }
        }
        let u = bisect(|u| psi(u) - x, lo, hi, |u| SOLVE_REL_TOL * u.abs())
            .ok_or(StieltjesError::NoRoot(x))?;
        return Ok(CompanionRoot { m0: -u, x });
    }
    if lsd_support(h, c).contains(x) {
        Err(StieltjesError::NotOutsideSupport(x))
    } else {
        Err(StieltjesError::NoRoot(x))
    }
}

/// Population `(m, m_underline)` at `x` from the companion root:
/// `m_underline = 1/m0 - c2 int dH/(t + m0)`, then `m` from the relation
/// `m_underline = -(1 - c1)/x + c1 m`.
///
/// With `c1 = 0` the relation carries no information about `m`; the
/// eigen-equation `1 + c2 x m + m_underline alpha = 0` (with `alpha = -m0`)
/// is used instead, and `m = int dH/(t - x)` when `c2 = 0` as well.
pub fn population_m_pair(
    x: f64,
    h: &SpectralMeasure,
    c: &AspectRatios,
) -> Result<StieltjesPair, StieltjesError> {
    let m0 = solve_m0(x, h, c)?.m0;
    let tail: f64 = h.iter().map(|(t, w)| w / (t + m0)).sum();
    let m_underline = 1.0 / m0 - c.c2() * tail;
    let m = if c.c1() > 0.0 {
        (m_underline + (1.0 - c.c1()) / x) / c.c1()
    } else if c.c2() > 0.0 {
        -(1.0 - m_underline * m0) / (c.c2() * x)
    } else {
        h.iter().map(|(t, w)| w / (t - x)).sum()
    };
    Ok(StieltjesPair { m, m_underline, x })
}
