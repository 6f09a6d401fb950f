//! Population-level spectral maps for generalized spiked Fisher matrices.
//!
//! Everything here is a pure function of a discrete bulk measure `H` and the
//! dimension ratios `(c1, c2)`: the phase-transition map `psi`, its
//! derivative, the support criterion for the limiting spectral distribution,
//! and the classification of spikes into distant and close ones.

mod grid;
mod measure;
mod support;
mod transition;

use thiserror::Error;

pub use grid::ScanSettings;
pub use measure::{AspectRatios, SpectralMeasure};
pub use support::{admissible_intervals, admissible_intervals_with, lsd_support, lsd_support_with};
pub use support::{AdmissibleInterval, SupportSet};
pub use transition::{
    condition_ii, is_distant_spike, phase_transition_limit, phase_transition_limit_with, psi,
    psi_prime, Spike, SpikeClassification, SpikeKind, SpikedPopulation,
};

pub(crate) use transition::psi_raw;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("spectral measure has no atoms")]
    EmptyMeasure,
    #[error("atom location {0} is not a positive finite number")]
    InvalidAtom(f64),
    #[error("atom weight {0} is not in (0, 1]")]
    InvalidWeight(f64),
    #[error("atom {0} appears more than once")]
    DuplicateAtom(f64),
    #[error("atom weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("{name} = {value} is out of range")]
    InvalidRatio { name: &'static str, value: f64 },
    #[error("alpha = {0} must be positive and finite")]
    InvalidAlpha(f64),
    #[error("alpha = {0} coincides with an atom of H")]
    AtomCollision(f64),
    #[error("denominator of psi vanishes at alpha = {0}")]
    DegenerateDenominator(f64),
    #[error("could not bracket a critical point of psi near {0}")]
    NoCriticalPoint(f64),
    #[error("spike ranks are empty, overlapping or out of range")]
    InvalidRanks,
}
