//! Stieltjes transforms of the Fisher LSD and the spike estimators built on
//! their empirical counterparts.
//!
//! The population side inverts `psi` on the admissible intervals to recover
//! the companion root `m0` and from it `m` and the companion transform
//! `m_underline`. The empirical side estimates `m` at a sample eigenvalue
//! from the other eigenvalues, excluding those within a relative band of it,
//! and solves the eigen-equation for the population spike.

mod empirical;
mod population;
mod sample;

use thiserror::Error;

use crate::spectrum::SpectrumError;

pub use empirical::{
    empirical_m_hat, empirical_m_underline_hat, estimate_spike_at, estimate_spike_group,
    LocalTransform, RankEstimate, SpikeEstimate, SpikeEstimator, DEFAULT_EXCLUSION_RATIO,
};
pub use population::{population_m_pair, solve_m0, CompanionRoot, StieltjesPair};
pub use sample::EigenSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StieltjesError {
    #[error("x = {0} lies inside the support of the limiting distribution")]
    NotOutsideSupport(f64),
    #[error("no admissible interval maps onto x = {0}")]
    NoRoot(f64),
    #[error("evaluation point {0} must be finite and nonzero")]
    InvalidPoint(f64),
    #[error("every eigenvalue lies within the exclusion band of rank {0}")]
    AllExcluded(usize),
    #[error("eigenvalue at rank {0} is zero")]
    ZeroEigenvalue(usize),
    #[error("estimated companion transform at rank {0} is numerically zero")]
    ZeroDenominator(usize),
    #[error("rank {rank} is outside 1..={p}")]
    RankOutOfRange { rank: usize, p: usize },
    #[error("no ranks given")]
    EmptyRanks,
    #[error("exclusion ratio {0} must be finite and nonnegative")]
    InvalidExclusionRatio(f64),
    #[error("eigenvalue sample is empty")]
    EmptySample,
    #[error("eigenvalue {value} at rank {rank} is negative or not finite")]
    InvalidEigenvalue { rank: usize, value: f64 },
    #[error("eigenvalues must be sorted in descending order; rank {0} exceeds its predecessor (try `sort -gr`)")]
    NotSorted(usize),
    #[error("need n2 > p for an invertible S2 (p = {p}, n2 = {n2})")]
    BadDimensions { p: usize, n1: usize, n2: usize },
    #[error("line {line}: cannot parse {content:?} as a number")]
    Parse { line: usize, content: String },
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}
