use super::{EigenSample, StieltjesError};

/// Relative band `|l_i - l_j| / |l_j|` within which eigenvalues are left out
/// of the Stieltjes estimate at `l_j`.
pub const DEFAULT_EXCLUSION_RATIO: f64 = 0.2;

const DENOMINATOR_FLOOR: f64 = 1e-14;

/// Plug-in estimator of population spikes from Fisher sample eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeEstimator {
    exclusion_ratio: f64,
}

impl Default for SpikeEstimator {
    fn default() -> Self {
        Self {
            exclusion_ratio: DEFAULT_EXCLUSION_RATIO,
        }
    }
}

/// Everything the estimator derives at one sample eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTransform {
    pub rank: usize,
    pub lambda: f64,
    /// 1-based ranks inside the exclusion band, always including `rank`.
    pub excluded: Vec<usize>,
    pub c1_tilde: f64,
    pub c2_tilde: f64,
    pub m_hat: f64,
    pub m_underline_hat: f64,
}

impl LocalTransform {
    /// `-(1 + c2~ l m^) / m_^`, the root in `alpha` of the estimated
    /// eigen-equation.
    pub fn spike_estimate(&self) -> Result<f64, StieltjesError> {
        if self.m_underline_hat.abs() < DENOMINATOR_FLOOR {
            return Err(StieltjesError::ZeroDenominator(self.rank));
        }
        Ok(-(1.0 + self.c2_tilde * self.lambda * self.m_hat) / self.m_underline_hat)
    }

    /// `l + c2~ l^2 m^ + l m_^ alpha`.
    pub fn residual(&self, alpha: f64) -> f64 {
        let l = self.lambda;
        l + self.c2_tilde * l * l * self.m_hat + l * self.m_underline_hat * alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEstimate {
    pub rank: usize,
    pub estimate: Result<f64, StieltjesError>,
}

/// Per-rank estimates of one spike and their pooled mean. Ranks whose
/// estimate failed are kept here but left out of `pooled`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeEstimate {
    pub per_rank: Vec<RankEstimate>,
    pub pooled: f64,
}

impl SpikeEstimate {
    /// True when at least one rank failed and was dropped from the mean.
    pub fn is_partial(&self) -> bool {
        self.per_rank.iter().any(|r| r.estimate.is_err())
    }

    pub fn successes(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_rank
            .iter()
            .filter_map(|r| r.estimate.as_ref().ok().copied())
    }
}

impl SpikeEstimator {
    pub fn new(exclusion_ratio: f64) -> Result<Self, StieltjesError> {
        if !exclusion_ratio.is_finite() || exclusion_ratio < 0.0 {
            return Err(StieltjesError::InvalidExclusionRatio(exclusion_ratio));
        }
        Ok(Self { exclusion_ratio })
    }

    pub fn exclusion_ratio(&self) -> f64 {
        self.exclusion_ratio
    }

    pub fn local(
        &self,
        sample: &EigenSample,
        rank: usize,
    ) -> Result<LocalTransform, StieltjesError> {
        let lambda = sample.at_rank(rank)?;
        if lambda == 0.0 {
            return Err(StieltjesError::ZeroEigenvalue(rank));
        }
        let mut excluded = Vec::new();
        let mut sum = 0.0;
        let mut kept = 0usize;
        for (i, &l) in sample.values().iter().enumerate() {
            if (l - lambda).abs() / lambda.abs() <= self.exclusion_ratio {
                excluded.push(i + 1);
            } else {
                sum += 1.0 / (l - lambda);
                kept += 1;
            }
        }
        if kept == 0 {
            return Err(StieltjesError::AllExcluded(rank));
        }
        let m_hat = sum / kept as f64;
        let c1_tilde = kept as f64 / sample.n1() as f64;
        let c2_tilde = kept as f64 / sample.n2() as f64;
        // same evaluation point in both terms of the companion relation
        let m_underline_hat = -(1.0 - c1_tilde) / lambda + c1_tilde * m_hat;
        Ok(LocalTransform {
            rank,
            lambda,
            excluded,
            c1_tilde,
            c2_tilde,
            m_hat,
            m_underline_hat,
        })
    }

    pub fn m_hat(
        &self,
        sample: &EigenSample,
        rank: usize,
    ) -> Result<(f64, Vec<usize>), StieltjesError> {
        self.local(sample, rank).map(|t| (t.m_hat, t.excluded))
    }

    pub fn m_underline_hat(
        &self,
        sample: &EigenSample,
        rank: usize,
    ) -> Result<f64, StieltjesError> {
        self.local(sample, rank).map(|t| t.m_underline_hat)
    }

    pub fn spike_at(&self, sample: &EigenSample, rank: usize) -> Result<f64, StieltjesError> {
        self.local(sample, rank)?.spike_estimate()
    }

    /// Estimates at every rank of a spike, pooled by the unweighted mean of
    /// the ranks that succeeded. Fails with the first error only when no
    /// rank succeeds.
    pub fn spike_group(
        &self,
        sample: &EigenSample,
        ranks: &[usize],
    ) -> Result<SpikeEstimate, StieltjesError> {
        if ranks.is_empty() {
            return Err(StieltjesError::EmptyRanks);
        }
        let per_rank: Vec<RankEstimate> = ranks
            .iter()
            .map(|&rank| RankEstimate {
                rank,
                estimate: self.spike_at(sample, rank),
            })
            .collect();
        let ok: Vec<f64> = per_rank
            .iter()
            .filter_map(|r| r.estimate.as_ref().ok().copied())
            .collect();
        if ok.is_empty() {
            let first = per_rank.into_iter().find_map(|r| r.estimate.err());
            return Err(first.unwrap_or(StieltjesError::EmptyRanks));
        }
        let pooled = ok.iter().sum::<f64>() / ok.len() as f64;
        Ok(SpikeEstimate { per_rank, pooled })
    }
}

/// `m^(l_j)` with the default exclusion band, and the excluded ranks.
pub fn empirical_m_hat(
    sample: &EigenSample,
    rank: usize,
) -> Result<(f64, Vec<usize>), StieltjesError> {
    SpikeEstimator::default().m_hat(sample, rank)
}

pub fn empirical_m_underline_hat(sample: &EigenSample, rank: usize) -> Result<f64, StieltjesError> {
    SpikeEstimator::default().m_underline_hat(sample, rank)
}

pub fn estimate_spike_at(sample: &EigenSample, rank: usize) -> Result<f64, StieltjesError> {
    SpikeEstimator::default().spike_at(sample, rank)
}

pub fn estimate_spike_group(
    sample: &EigenSample,
    ranks: &[usize],
) -> Result<SpikeEstimate, StieltjesError> {
    SpikeEstimator::default().spike_group(sample, ranks)
}
