use std::fmt::Write as _;

use super::StieltjesError;

/// Sample eigenvalues of a Fisher matrix in non-increasing order, together
/// with the dimensions `(p, n1, n2)` they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSample {
    values: Vec<f64>,
    n1: usize,
    n2: usize,
}

impl EigenSample {
    /// Rejects unsorted input rather than sorting it.
    pub fn new(values: Vec<f64>, n1: usize, n2: usize) -> Result<Self, StieltjesError> {
        if values.is_empty() {
            return Err(StieltjesError::EmptySample);
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(StieltjesError::InvalidEigenvalue {
                    rank: i + 1,
                    value: v,
                });
            }
        }
        if let Some(i) = values.windows(2).position(|w| w[1] > w[0]) {
            return Err(StieltjesError::NotSorted(i + 2));
        }
        let p = values.len();
        if n1 == 0 || n2 <= p {
            return Err(StieltjesError::BadDimensions { p, n1, n2 });
        }
        Ok(Self { values, n1, n2 })
    }

    pub fn from_unsorted(
        mut values: Vec<f64>,
        n1: usize,
        n2: usize,
    ) -> Result<Self, StieltjesError> {
        values.sort_by(|a, b| b.total_cmp(a));
        Self::new(values, n1, n2)
    }

    /// One number per line; blank lines and `#` comments are skipped.
    pub fn parse_text(text: &str, n1: usize, n2: usize) -> Result<Self, StieltjesError> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| StieltjesError::Parse {
                line: i + 1,
                content: line.to_string(),
            })?;
            values.push(v);
        }
        Self::new(values, n1, n2)
    }

    /// Inverse of [`EigenSample::parse_text`]; values are written with
    /// round-trip precision.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(24 * self.values.len());
        for v in &self.values {
            let _ = writeln!(s, "{v}");
        }
        s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Eigenvalue at a 1-based descending rank.
    pub fn at_rank(&self, rank: usize) -> Result<f64, StieltjesError> {
        if rank == 0 || rank > self.p() {
            return Err(StieltjesError::RankOutOfRange { rank, p: self.p() });
        }
        Ok(self.values[rank - 1])
    }

    pub fn largest(&self, k: usize) -> &[f64] {
        &self.values[..k.min(self.p())]
    }

    pub fn smallest(&self, k: usize) -> &[f64] {
        &self.values[self.p() - k.min(self.p())..]
    }
}
