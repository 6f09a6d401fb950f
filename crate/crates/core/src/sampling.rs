//! Population construction, seeded data generation and Fisher-matrix
//! eigenvalues for the Monte Carlo study.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{SpectralMeasure, SpectrumError};
use crate::stieltjes::{EigenSample, StieltjesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("p = {0} must be even and at least 8")]
    BadDimension(usize),
    #[error("rho = {0} must lie in [0, 1)")]
    BadRho(f64),
    #[error("population spectrum must have p = {p} positive entries in descending order")]
    BadSpectrum { p: usize },
    #[error("need n2 > p and n1 >= 1 (p = {p}, n1 = {n1}, n2 = {n2})")]
    BadSampleSizes { p: usize, n1: usize, n2: usize },
    #[error("S2 is numerically singular (smallest pivot {0:e})")]
    SingularS2(f64),
    #[error("Sigma2^(1/2) must be {p} x {p}")]
    BadSigma2 { p: usize },
    #[error("unknown distribution {0:?}; expected normal, chisq or uniform")]
    UnknownDistribution(String),
    #[error(transparent)]
    Sample(#[from] StieltjesError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Diagonal of the reference population:
/// `10, 7.5, 7.5, 2 x (p-6)/2, 1 x (p-6)/2, 0.2, 0.2, 0.1`.
pub fn build_lambda(p: usize) -> Result<Vec<f64>, SamplingError> {
    build_lambda_with(p, &[10.0, 7.5, 7.5], &[0.2, 0.2, 0.1])
}

/// `top`, then the two-level bulk of twos and ones, then `tail`.
pub fn build_lambda_with(p: usize, top: &[f64], tail: &[f64]) -> Result<Vec<f64>, SamplingError> {
    let spikes = top.len() + tail.len();
    if p < spikes + 2 || !(p - spikes).is_multiple_of(2) || !p.is_multiple_of(2) {
        return Err(SamplingError::BadDimension(p));
    }
    let half = (p - spikes) / 2;
    let mut out = Vec::with_capacity(p);
    out.extend_from_slice(top);
    out.extend(std::iter::repeat_n(2.0, half));
    out.extend(std::iter::repeat_n(1.0, half));
    out.extend_from_slice(tail);
    Ok(out)
}

/// Orthonormal eigenvectors of the symmetric Toeplitz matrix with first row
/// `(1, rho, ..., rho^(p-1))`, as columns.
///
/// Columns are ordered by descending eigenvalue (ties keep solver order) and
/// each is signed so that its first largest-magnitude entry is positive.
pub fn toeplitz_eigvecs(p: usize, rho: f64) -> Result<DMatrix<f64>, SamplingError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(SamplingError::BadRho(rho));
    }
    if rho == 0.0 {
        return Ok(DMatrix::identity(p, p));
    }
    let t = DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32));
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let max = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let lead = col
            .iter()
            .find(|v| v.abs() >= max * (1.0 - 1e-12))
            .copied()
            .unwrap_or(1.0);
        if lead < 0.0 {
            col.neg_mut();
        }
        u.set_column(dst, &col);
    }
    Ok(u)
}

/// Entry laws with mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryDistribution {
    #[serde(alias = "gaussian")]
    Normal,
    /// `chi^2(2)/2 - 1`, i.e. a unit exponential shifted by one.
    #[serde(alias = "chisquare")]
    Chisq,
    /// `U(-sqrt 3, sqrt 3)`.
    Uniform,
}

impl EntryDistribution {
    pub const ALL: [EntryDistribution; 3] = [Self::Normal, Self::Chisq, Self::Uniform];

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Normal => rng.sample(StandardNormal),
            Self::Chisq => {
                let e: f64 = rng.sample(Exp1);
                e - 1.0
            }
            Self::Uniform => {
                let s3 = 3f64.sqrt();
                rng.gen_range(-s3..s3)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Chisq => "chisq",
            Self::Uniform => "uniform",
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntryDistribution {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Self::Normal),
            "chisq" | "chisquare" | "chi2" => Ok(Self::Chisq),
            "uniform" => Ok(Self::Uniform),
            _ => Err(SamplingError::UnknownDistribution(s.to_string())),
        }
    }
}

/// Master seed plus stream id. Each id selects an independent ChaCha
/// stream, so replication `k` draws the same numbers no matter which
/// thread runs it or in which order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRng {
    pub master_seed: u64,
    pub stream: u64,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        Self {
            master_seed,
            stream,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// `rows x cols` matrix of i.i.d. draws, filled column by column.
pub fn draw_matrix<R: Rng + ?Sized>(
    dist: EntryDistribution,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    DMatrix::from_vec(rows, cols, data)
}

/// `Sigma1 = U0 diag(lambda) U0^T` with `U0` from [`toeplitz_eigvecs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    p: usize,
    rho: f64,
    lambda_diagonal: Vec<f64>,
}

impl PopulationSpec {
    pub fn new(rho: f64, lambda_diagonal: Vec<f64>) -> Result<Self, SamplingError> {
        let p = lambda_diagonal.len();
        if !(0.0..1.0).contains(&rho) {
            return Err(SamplingError::BadRho(rho));
        }
        let ok = p > 0
            && lambda_diagonal.iter().all(|v| v.is_finite() && *v > 0.0)
            && lambda_diagonal.windows(2).all(|w| w[0] >= w[1]);
        if !ok {
            return Err(SamplingError::BadSpectrum { p });
        }
        Ok(Self {
            p,
            rho,
            lambda_diagonal,
        })
    }

    /// The reference design: [`build_lambda`] rotated by the `rho = 0.5`
    /// Toeplitz eigenbasis.
    pub fn reference(p: usize) -> Result<Self, SamplingError> {
        Self::new(0.5, build_lambda(p)?)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lambda_diagonal(&self) -> &[f64] {
        &self.lambda_diagonal
    }

    /// Empirical spectral distribution of the population (spikes included).
    pub fn spectral_measure(&self) -> Result<SpectralMeasure, SamplingError> {
        Ok(SpectralMeasure::empirical(&self.lambda_diagonal)?)
    }

    pub fn sigma1(&self) -> Result<DMatrix<f64>, SamplingError> {
        let u = toeplitz_eigvecs(self.p, self.rho)?;
        Ok(conjugate_diagonal(&u, self.lambda_diagonal.iter().copied()))
    }

    pub fn sigma1_sqrt(&self) -> Result<DMatrix<f64>, SamplingError> {
        let u = toeplitz_eigvecs(self.p, self.rho)?;
        Ok(conjugate_diagonal(
            &u,
            self.lambda_diagonal.iter().map(|v| v.sqrt()),
        ))
    }
}

/// `U diag(d) U^T`.
fn conjugate_diagonal(u: &DMatrix<f64>, d: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let d = DVector::from_iterator(u.ncols(), d);
    let mut scaled = u.clone();
    for (mut col, &s) in scaled.column_iter_mut().zip(d.iter()) {
        col *= s;
    }
    scaled * u.transpose()
}

const SINGULAR_FLOOR: f64 = 1e-12;

/// Eigenvalues of `S1 S2^(-1)`, sorted descending.
///
/// With `S2 = L L^T` the matrix `L^(-1) S1 L^(-T)` is symmetric and similar
/// to `S2^(-1/2) S1 S2^(-1/2)`, so it has the same spectrum at a fraction of
/// the cost of an eigendecomposition of `S2`.
pub fn fisher_spectrum(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<Vec<f64>, SamplingError> {
    let chol = s2
        .clone()
        .cholesky()
        .ok_or(SamplingError::SingularS2(f64::NAN))?;
    let l = chol.l();
    let pivot = l
        .diagonal()
        .iter()
        .map(|d| d * d)
        .fold(f64::INFINITY, f64::min);
    if pivot.is_nan() || pivot < SINGULAR_FLOOR {
        return Err(SamplingError::SingularS2(pivot));
    }
    let w = l
        .solve_lower_triangular(s1)
        .ok_or(SamplingError::SingularS2(pivot))?;
    let mut m = l
        .solve_lower_triangular(&w.transpose())
        .ok_or(SamplingError::SingularS2(pivot))?;
    // re-symmetrize rounding noise before the symmetric solver reads one triangle
    let mt = m.transpose();
    m += mt;
    m *= 0.5;
    let mut values: Vec<f64> = m
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Precomputed square roots of the population covariances, ready to draw
/// Fisher samples from.
#[derive(Debug, Clone)]
pub struct FisherDesign {
    sigma1_sqrt: DMatrix<f64>,
    sigma2_sqrt: Option<DMatrix<f64>>,
}

impl FisherDesign {
    /// `Sigma2 = I`.
    pub fn new(spec: &PopulationSpec) -> Result<Self, SamplingError> {
        Ok(Self {
            sigma1_sqrt: spec.sigma1_sqrt()?,
            sigma2_sqrt: None,
        })
    }

    pub fn with_sigma2_sqrt(mut self, sigma2_sqrt: DMatrix<f64>) -> Result<Self, SamplingError> {
        let p = self.p();
        if sigma2_sqrt.shape() != (p, p) {
            return Err(SamplingError::BadSigma2 { p });
        }
        self.sigma2_sqrt = Some(sigma2_sqrt);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.sigma1_sqrt.nrows()
    }

    /// Draws `X` (`p x n1`) then `Y` (`p x n2`) from one stream and returns
    /// the eigenvalues of `S1 S2^(-1)`.
    pub fn sample(
        &self,
        dist: EntryDistribution,
        n1: usize,
        n2: usize,
        seed: &SeededRng,
    ) -> Result<EigenSample, SamplingError> {
        let p = self.p();
        if n1 == 0 || n2 <= p {
            return Err(SamplingError::BadSampleSizes { p, n1, n2 });
        }
        let mut rng = seed.rng();
        let x = draw_matrix(dist, p, n1, &mut rng);
        let y = draw_matrix(dist, p, n2, &mut rng);

        let z1 = &self.sigma1_sqrt * x;
        let s1 = (&z1 * z1.transpose()) / n1 as f64;
        let s2 = match &self.sigma2_sqrt {
            Some(root) => {
                let z2 = root * y;
                (&z2 * z2.transpose()) / n2 as f64
            }
            None => (&y * y.transpose()) / n2 as f64,
        };
        let values = fisher_spectrum(&s1, &s2)?;
        Ok(EigenSample::new(values, n1, n2)?)
    }
}

/// One-shot version of [`FisherDesign::sample`].
pub fn fisher_eigenvalues(
    spec: &PopulationSpec,
    dist: EntryDistribution,
    n1: usize,
    n2: usize,
    seed: &SeededRng,
) -> Result<EigenSample, SamplingError> {
    FisherDesign::new(spec)?.sample(dist, n1, n2, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_shapes() {
        assert_eq!(
            build_lambda(8).unwrap(),
            vec![10.0, 7.5, 7.5, 2.0, 1.0, 0.2, 0.2, 0.1]
        );
        let l = build_lambda(100).unwrap();
        assert_eq!(l.len(), 100);
        assert_eq!(l.iter().filter(|&&v| v == 2.0).count(), 47);
        assert_eq!(l.iter().filter(|&&v| v == 1.0).count(), 47);
        assert!(l.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(build_lambda(7), Err(SamplingError::BadDimension(7)));
        assert_eq!(build_lambda(6), Err(SamplingError::BadDimension(6)));
    }

    #[test]
    fn toeplitz_small_cases() {
        assert_eq!(toeplitz_eigvecs(5, 0.0).unwrap(), DMatrix::identity(5, 5));
        let u = toeplitz_eigvecs(2, 0.5).unwrap();
        let r = 0.5f64.sqrt();
        let expect = DMatrix::from_row_slice(2, 2, &[r, r, r, -r]);
        assert!((u - expect).norm() < 1e-12);
        assert!(toeplitz_eigvecs(3, 1.0).is_err());
    }

    #[test]
    fn orthogonal_basis() {
        for p in [3, 10, 50] {
            let u = toeplitz_eigvecs(p, 0.5).unwrap();
            let gram = u.transpose() * &u;
            assert!((gram - DMatrix::identity(p, p)).norm() < 1e-10);
        }
    }

    #[test]
    fn distribution_parsing() {
        assert_eq!(
            "normal".parse::<EntryDistribution>().unwrap(),
            EntryDistribution::Normal
        );
        assert_eq!(
            "chisq".parse::<EntryDistribution>().unwrap(),
            EntryDistribution::Chisq
        );
        assert_eq!(
            "Uniform".parse::<EntryDistribution>().unwrap(),
            EntryDistribution::Uniform
        );
        assert!("cauchy".parse::<EntryDistribution>().is_err());
    }

    #[test]
    fn chisq_lower_bound() {
        let mut rng = SeededRng::new(3, 0).rng();
        let m = draw_matrix(EntryDistribution::Chisq, 100, 100, &mut rng);
        assert!(m.iter().all(|&v| v >= -1.0));
        let mut rng = SeededRng::new(3, 0).rng();
        let m = draw_matrix(EntryDistribution::Uniform, 100, 100, &mut rng);
        assert!(m.iter().all(|&v| v.abs() < 3f64.sqrt()));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = {
            let mut r = SeededRng::new(9, 4).rng();
            (0..5).map(|_| r.gen()).collect()
        };
        let b: Vec<f64> = {
            let mut r = SeededRng::new(9, 4).rng();
            (0..5).map(|_| r.gen()).collect()
        };
        let c: Vec<f64> = {
            let mut r = SeededRng::new(9, 5).rng();
            (0..5).map(|_| r.gen()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn population_validation() {
        assert!(PopulationSpec::new(0.5, vec![1.0, 2.0]).is_err());
        assert!(PopulationSpec::new(1.5, vec![2.0, 1.0]).is_err());
        let spec = PopulationSpec::reference(8).unwrap();
        let s = spec.sigma1().unwrap();
        let r = spec.sigma1_sqrt().unwrap();
        assert!((&r * &r - &s).norm() < 1e-10);
        let eig = s.symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ev.iter().zip(spec.lambda_diagonal()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_small_n2() {
        let spec = PopulationSpec::reference(8).unwrap();
        let r = fisher_eigenvalues(
            &spec,
            EntryDistribution::Normal,
            16,
            8,
            &SeededRng::new(1, 0),
        );
        assert!(matches!(r, Err(SamplingError::BadSampleSizes { .. })));
    }
}
