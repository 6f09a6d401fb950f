use serde::{Deserialize, Serialize};

use super::SpectrumError;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A discrete probability measure on the positive half line.
///
/// Used for the limiting spectral distribution `H` of the non-spiked part of
/// the population ratio `T*T`. Continuous laws have to be discretized by the
/// caller; every integral against `H` is then an exact weighted sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct SpectralMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralMeasure {
    /// Builds a measure from `(location, weight)` pairs.
    ///
    /// Pairs may come in any order; they are sorted by location. Locations
    /// must be positive and distinct, weights positive and summing to one.
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self, SpectrumError> {
        if pairs.is_empty() {
            return Err(SpectrumError::EmptyMeasure);
        }
        let mut pairs = pairs;
        for &(t, w) in &pairs {
            if !t.is_finite() || t <= 0.0 {
                return Err(SpectrumError::InvalidAtom(t));
            }
            if !w.is_finite() || w <= 0.0 || w > 1.0 {
                return Err(SpectrumError::InvalidWeight(w));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(dup) = pairs.windows(2).find(|p| p[0].0 >= p[1].0) {
            return Err(SpectrumError::DuplicateAtom(dup[1].0));
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(SpectrumError::WeightSum(total));
        }
        let (atoms, weights) = pairs.into_iter().unzip();
        Ok(Self { atoms, weights })
    }

    /// Dirac mass at `t`.
    pub fn point_mass(t: f64) -> Result<Self, SpectrumError> {
        Self::new(vec![(t, 1.0)])
    }

    /// Empirical spectral distribution of a finite list of eigenvalues.
    /// Repeated values are merged into one atom.
    pub fn empirical(values: &[f64]) -> Result<Self, SpectrumError> {
        if values.is_empty() {
            return Err(SpectrumError::EmptyMeasure);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let unit = 1.0 / sorted.len() as f64;
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for v in sorted {
            match pairs.last_mut() {
                Some(last) if last.0 == v => last.1 += unit,
                _ => pairs.push((v, unit)),
            }
        }
        // merged weights can drift by a few ulps
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        for p in &mut pairs {
            p.1 /= total;
        }
        Self::new(pairs)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max_atom(&self) -> f64 {
        self.atoms[self.atoms.len() - 1]
    }

    /// Distance from `x` to the nearest atom.
    pub fn distance(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .map(|t| (x - t).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn in_support(&self, x: f64, delta: f64) -> bool {
        self.distance(x) <= delta
    }

    /// Default separation threshold: `1e-3` times the atom range, or times
    /// the atom itself for a point mass.
    pub fn default_delta(&self) -> f64 {
        let range = self.max_atom() - self.min_atom();
        if range > 0.0 {
            1e-3 * range
        } else {
            1e-3 * self.max_atom()
        }
    }

    /// The open interval of the complement of the atoms that contains `x`,
    /// with the half line starting at zero. `None` when `x` is an atom or
    /// not positive.
    pub fn gap_containing(&self, x: f64) -> Option<(f64, f64)> {
        if x <= 0.0 || self.atoms.contains(&x) {
            return None;
        }
        let idx = self.atoms.partition_point(|&t| t < x);
        let lo = if idx == 0 { 0.0 } else { self.atoms[idx - 1] };
        let hi = self.atoms.get(idx).copied().unwrap_or(f64::INFINITY);
        Some((lo, hi))
    }

    /// All gaps `(0, t_1), (t_1, t_2), ..., (t_k, inf)`.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.atoms.len() + 1);
        let mut lo = 0.0;
        for &t in &self.atoms {
            out.push((lo, t));
            lo = t;
        }
        out.push((lo, f64::INFINITY));
        out
    }
}

impl TryFrom<Vec<(f64, f64)>> for SpectralMeasure {
    type Error = SpectrumError;

    fn try_from(pairs: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(pairs)
    }
}

impl From<SpectralMeasure> for Vec<(f64, f64)> {
    fn from(m: SpectralMeasure) -> Self {
        m.atoms.into_iter().zip(m.weights).collect()
    }
}

/// Limiting dimension ratios `c1 = p/n1` and `c2 = p/n2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectRatios {
    c1: f64,
    c2: f64,
}

impl AspectRatios {
    /// `c1 >= 0` and `0 <= c2 < 1`. The zero values are the identity regime
    /// where the phase-transition map reduces to `psi(a) = a`.
    pub fn new(c1: f64, c2: f64) -> Result<Self, SpectrumError> {
        if !c1.is_finite() || c1 < 0.0 {
            return Err(SpectrumError::InvalidRatio {
                name: "c1",
                value: c1,
            });
        }
        if !c2.is_finite() || !(0.0..1.0).contains(&c2) {
            return Err(SpectrumError::InvalidRatio {
                name: "c2",
                value: c2,
            });
        }
        Ok(Self { c1, c2 })
    }

    /// Finite-sample ratios `(p/n1, p/n2)`.
    pub fn from_dims(p: usize, n1: usize, n2: usize) -> Result<Self, SpectrumError> {
        Self::new(p as f64 / n1 as f64, p as f64 / n2 as f64)
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// `h^2 = c1 + c2 - c1 c2`.
    pub fn h_squared(&self) -> f64 {
        self.c1 + self.c2 - self.c1 * self.c2
    }
}
