use serde::{Deserialize, Serialize};

use super::grid::{gap_grid, scan_ceiling, ScanSettings};
use super::{AspectRatios, SpectralMeasure, SpectrumError};
use crate::roots::bisect;

const COLLISION_TOL: f64 = 1e-12;
const DENOMINATOR_TOL: f64 = 1e-12;

/// Raw ingredients of `psi(a) = a A(a) / B(a)` at one point:
/// `A = 1 - c1 sum w t/(t-a)`, `B = 1 + c2 sum w a/(t-a)`, their
/// derivatives, and `sum w a^2/(t-a)^2` for the second support condition.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PsiTerms {
    pub alpha: f64,
    pub a: f64,
    pub da: f64,
    pub b: f64,
    pub db: f64,
    pub quad: f64,
    pub c2: f64,
}

impl PsiTerms {
    pub fn eval(alpha: f64, h: &SpectralMeasure, c: &AspectRatios) -> Self {
        let (mut s_t, mut s_a, mut s_t2, mut s_a2) = (0.0, 0.0, 0.0, 0.0);
        for (t, w) in h.iter() {
            let inv = 1.0 / (t - alpha);
            let inv2 = inv * inv;
            s_t += w * t * inv;
            s_a += w * alpha * inv;
            s_t2 += w * t * inv2;
            s_a2 += w * alpha * alpha * inv2;
        }
        Self {
            alpha,
            a: 1.0 - c.c1() * s_t,
            da: -c.c1() * s_t2,
            b: 1.0 + c.c2() * s_a,
            db: c.c2() * s_t2,
            quad: s_a2,
            c2: c.c2(),
        }
    }

    pub fn psi(&self) -> f64 {
        self.alpha * self.a / self.b
    }

    pub fn psi_prime(&self) -> f64 {
        let num = (self.a + self.alpha * self.da) * self.b - self.alpha * self.a * self.db;
        num / (self.b * self.b)
    }

    pub fn condition_ii(&self) -> f64 {
        1.0 - self.c2 * self.quad
    }

    /// Conditions (ii) and (iii) of the support criterion, with a usable
    /// denominator. Condition (i) is the caller's business.
    pub fn admissible(&self) -> bool {
        let d = self.psi_prime();
        self.b.abs() >= DENOMINATOR_TOL && d.is_finite() && d > 0.0 && self.condition_ii() > 0.0
    }
}

/// Unchecked `psi`; `alpha = 0` maps to `0`.
pub(crate) fn psi_raw(alpha: f64, h: &SpectralMeasure, c: &AspectRatios) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    PsiTerms::eval(alpha, h, c).psi()
}

/// Conditions (ii) and (iii) at a nonzero non-atom `alpha`.
pub(crate) fn admissible_raw(alpha: f64, h: &SpectralMeasure, c: &AspectRatios) -> bool {
    alpha != 0.0
        && alpha.is_finite()
        && !collides(alpha, h)
        && PsiTerms::eval(alpha, h, c).admissible()
}

fn collides(alpha: f64, h: &SpectralMeasure) -> bool {
    h.atoms()
        .iter()
        .any(|&t| (alpha - t).abs() <= COLLISION_TOL * t.max(1.0))
}

fn checked_terms(
    alpha: f64,
    h: &SpectralMeasure,
    c: &AspectRatios,
) -> Result<PsiTerms, SpectrumError> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(SpectrumError::InvalidAlpha(alpha));
    }
    if collides(alpha, h) {
        return Err(SpectrumError::AtomCollision(alpha));
    }
    let terms = PsiTerms::eval(alpha, h, c);
    if terms.b.abs() < DENOMINATOR_TOL {
        return Err(SpectrumError::DegenerateDenominator(alpha));
    }
    Ok(terms)
}

/// The phase-transition map
/// `psi(a) = a (1 - c1 int t/(t-a) dH) / (1 + c2 int a/(t-a) dH)`.
pub fn psi(alpha: f64, h: &SpectralMeasure, c: &AspectRatios) -> Result<f64, SpectrumError> {
    checked_terms(alpha, h, c).map(|t| t.psi())
}

/// Analytic derivative of [`psi`].
pub fn psi_prime(alpha: f64, h: &SpectralMeasure, c: &AspectRatios) -> Result<f64, SpectrumError> {
    checked_terms(alpha, h, c).map(|t| t.psi_prime())
}

/// `1 - c2 int a^2/(t-a)^2 dH`; positive values satisfy the second
/// support condition.
pub fn condition_ii(
    alpha: f64,
    h: &SpectralMeasure,
    c: &AspectRatios,
) -> Result<f64, SpectrumError> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(SpectrumError::InvalidAlpha(alpha));
    }
    if collides(alpha, h) {
        return Err(SpectrumError::AtomCollision(alpha));
    }
    Ok(PsiTerms::eval(alpha, h, c).condition_ii())
}

/// Whether `alpha` is a distant spike: farther than `delta` from every atom
/// of `H`, with `condition_ii > 0` and `psi' > 0`.
pub fn is_distant_spike(alpha: f64, h: &SpectralMeasure, c: &AspectRatios, delta: f64) -> bool {
    match checked_terms(alpha, h, c) {
        Ok(terms) => h.distance(alpha) > delta && terms.admissible(),
        Err(_) => false,
    }
}

/// A population spike: value plus its contiguous 1-based ranks in the
/// descending population spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    alpha: f64,
    ranks: Vec<usize>,
}

impl Spike {
    pub fn new(alpha: f64, first_rank: usize, multiplicity: usize) -> Result<Self, SpectrumError> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(SpectrumError::InvalidAlpha(alpha));
        }
        if multiplicity == 0 || first_rank == 0 {
            return Err(SpectrumError::InvalidRanks);
        }
        Ok(Self {
            alpha,
            ranks: (first_rank..first_rank + multiplicity).collect(),
        })
    }

    /// Spike of multiplicity one whose rank is irrelevant to the caller.
    pub fn single(alpha: f64) -> Result<Self, SpectrumError> {
        Self::new(alpha, 1, 1)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn multiplicity(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }
}

/// Bulk measure plus spikes for a `p`-dimensional population.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedPopulation {
    bulk: SpectralMeasure,
    spikes: Vec<Spike>,
    p: usize,
}

impl SpikedPopulation {
    /// Checks that rank sets lie in `1..=p`, are disjoint, and that every
    /// spike is farther than `delta` from the bulk atoms.
    pub fn new(
        bulk: SpectralMeasure,
        spikes: Vec<Spike>,
        p: usize,
        delta: f64,
    ) -> Result<Self, SpectrumError> {
        let mut seen = vec![false; p + 1];
        for s in &spikes {
            for &r in s.ranks() {
                if r > p || seen[r] {
                    return Err(SpectrumError::InvalidRanks);
                }
                seen[r] = true;
            }
            if bulk.in_support(s.alpha(), delta) {
                return Err(SpectrumError::AtomCollision(s.alpha()));
            }
        }
        let total: usize = spikes.iter().map(Spike::multiplicity).sum();
        if total >= p {
            return Err(SpectrumError::InvalidRanks);
        }
        Ok(Self { bulk, spikes, p })
    }

    pub fn bulk(&self) -> &SpectralMeasure {
        &self.bulk
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Total spike multiplicity `M`.
    pub fn spike_count(&self) -> usize {
        self.spikes.iter().map(Spike::multiplicity).sum()
    }

    pub fn limits(&self, c: &AspectRatios) -> Vec<Result<SpikeClassification, SpectrumError>> {
        self.spikes
            .iter()
            .map(|s| phase_transition_limit(s, &self.bulk, c))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikeKind {
    /// `psi' > 0`: the sample eigenvalue separates from the bulk.
    Distant,
    /// The spike sits below the critical point it sticks to.
    CloseBelow,
    /// The spike sits above the critical point it sticks to.
    CloseAbove,
    /// No critical point reachable inside the gap, or a spike with
    /// `psi' > 0` that fails the other support conditions.
    Undefined,
}

impl std::fmt::Display for SpikeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SpikeKind::Distant => "Distant",
            SpikeKind::CloseBelow => "CloseBelow",
            SpikeKind::CloseAbove => "CloseAbove",
            SpikeKind::Undefined => "Undefined",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeClassification {
    pub kind: SpikeKind,
    pub critical_point: Option<f64>,
    /// Almost-sure limit of the associated sample eigenvalues; `None` when
    /// the kind is `Undefined`.
    pub limit: Option<f64>,
}

/// Classifies a spike and returns the limit of its sample eigenvalues.
pub fn phase_transition_limit(
    spike: &Spike,
    h: &SpectralMeasure,
    c: &AspectRatios,
) -> Result<SpikeClassification, SpectrumError> {
    phase_transition_limit_with(spike, h, c, h.default_delta(), &ScanSettings::default())
}

pub fn phase_transition_limit_with(
    spike: &Spike,
    h: &SpectralMeasure,
    c: &AspectRatios,
    delta: f64,
    settings: &ScanSettings,
) -> Result<SpikeClassification, SpectrumError> {
    let alpha = spike.alpha();
    let terms = checked_terms(alpha, h, c)?;
    let slope = terms.psi_prime();
    if !slope.is_finite() {
        return Err(SpectrumError::NoCriticalPoint(alpha));
    }
    if is_distant_spike(alpha, h, c, delta) {
        return Ok(SpikeClassification {
            kind: SpikeKind::Distant,
            critical_point: None,
            limit: Some(terms.psi()),
        });
    }
    if slope > 0.0 {
        return Ok(SpikeClassification {
            kind: SpikeKind::Undefined,
            critical_point: None,
            limit: None,
        });
    }
    if slope == 0.0 {
        // boundary case: the spike is its own critical point
        return Ok(SpikeClassification {
            kind: SpikeKind::CloseBelow,
            critical_point: Some(alpha),
            limit: Some(terms.psi()),
        });
    }

    let (lo, hi) = h
        .gap_containing(alpha)
        .ok_or(SpectrumError::AtomCollision(alpha))?;
    let ceiling = scan_ceiling(h, c).max(2.0 * alpha);
    let tol = |x: f64| settings.critical_tol * x.abs().max(1.0);
    let slope_at = |x: f64| PsiTerms::eval(x, h, c).psi_prime();

    // upward first, then downward
    let upward = gap_grid(alpha, hi, ceiling, settings);
    let downward = {
        let mut g = gap_grid(lo, alpha, ceiling, settings);
        g.reverse();
        g
    };
    for (grid, kind) in [
        (upward, SpikeKind::CloseBelow),
        (downward, SpikeKind::CloseAbove),
    ] {
        if let Some(root) = first_sign_change(&grid, slope_at, tol)? {
            return Ok(SpikeClassification {
                kind,
                critical_point: Some(root),
                limit: Some(psi_raw(root, h, c)),
            });
        }
    }
    Ok(SpikeClassification {
        kind: SpikeKind::Undefined,
        critical_point: None,
        limit: None,
    })
}

/// Walks `grid` (starting at the spike, where `psi' < 0`) until `psi'`
/// turns positive and refines the crossing.
fn first_sign_change<F, T>(grid: &[f64], slope_at: F, tol: T) -> Result<Option<f64>, SpectrumError>
where
    F: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    let mut prev: Option<f64> = None;
    for &x in grid {
        let d = slope_at(x);
        if !d.is_finite() {
            continue;
        }
        if d >= 0.0 {
            let Some(before) = prev else { continue };
            if d == 0.0 {
                return Ok(Some(x));
            }
            return bisect(&slope_at, before, x, &tol)
                .map(Some)
                .ok_or(SpectrumError::NoCriticalPoint(x));
        }
        prev = Some(x);
    }
    Ok(None)
}
