//! Monte Carlo driver: replicate Fisher samples, estimate the configured
//! spikes, aggregate, and write CSV reports.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::{
    build_lambda, EntryDistribution, FisherDesign, PopulationSpec, SamplingError, SeededRng,
};
use crate::stieltjes::{SpikeEstimator, StieltjesError};

pub const DEFAULT_REPS: usize = 500;
pub const DEFAULT_BINS: usize = 40;
pub const DEFAULT_RHO: f64 = 0.5;
/// Number of extreme eigenvalues kept per replication at each end.
pub const EXTREMES: usize = 4;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Estimator(#[from] StieltjesError),
    #[error("every replication failed for every spike")]
    AllReplicationsFailed,
    #[error("could not start worker pool: {0}")]
    WorkerPool(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    ConfigParse {
        path: PathBuf,
        source: toml::de::Error,
    },
}

/// A labelled group of 1-based descending ranks estimated as one spike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeTarget {
    pub label: String,
    /// True value, used only when reporting; the estimator never sees it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub ranks: Vec<usize>,
}

impl SpikeTarget {
    pub fn new(label: impl Into<String>, value: Option<f64>, ranks: Vec<usize>) -> Self {
        Self {
            label: label.into(),
            value,
            ranks,
        }
    }
}

/// The four spikes of the reference design at their conventional ranks:
/// the largest, the next two, the two before the smallest, and the smallest.
pub fn reference_spikes(p: usize) -> Vec<SpikeTarget> {
    vec![
        SpikeTarget::new("a1", Some(10.0), vec![1]),
        SpikeTarget::new("a2", Some(7.5), vec![2, 3]),
        SpikeTarget::new("a3", Some(0.2), vec![p - 2, p - 1]),
        SpikeTarget::new("a4", Some(0.1), vec![p]),
    ]
}

/// Complete description of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub dist: EntryDistribution,
    pub reps: usize,
    pub seed: u64,
    pub rho: f64,
    /// Diagonal of `Sigma1` in its Toeplitz eigenbasis, descending.
    pub lambda: Vec<f64>,
    pub spikes: Vec<SpikeTarget>,
    pub exclusion_ratio: f64,
    pub bins: usize,
    /// Worker threads; `None` uses every available core. Never affects output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl SimulationConfig {
    /// Reference design at dimension `p`: `n1 = 2p`, `n2 = 4p`, 500 reps.
    pub fn reference(
        p: usize,
        dist: EntryDistribution,
        seed: u64,
    ) -> Result<Self, SimulationError> {
        Ok(Self {
            p,
            n1: 2 * p,
            n2: 4 * p,
            dist,
            reps: DEFAULT_REPS,
            seed,
            rho: DEFAULT_RHO,
            lambda: build_lambda(p)?,
            spikes: reference_spikes(p),
            exclusion_ratio: crate::stieltjes::DEFAULT_EXCLUSION_RATIO,
            bins: DEFAULT_BINS,
            workers: None,
            out_dir: None,
        })
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |msg: String| Err(SimulationError::InvalidConfig(msg));
        if self.lambda.len() != self.p {
            return bad(format!(
                "lambda has {} entries but p = {}",
                self.lambda.len(),
                self.p
            ));
        }
        if self.n1 == 0 || self.n2 <= self.p {
            return bad(format!(
                "need n1 >= 1 and n2 > p (p = {}, n1 = {}, n2 = {})",
                self.p, self.n1, self.n2
            ));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if self.spikes.is_empty() {
            return bad("no spikes configured".into());
        }
        SpikeEstimator::new(self.exclusion_ratio)?;
        let mut labels = HashSet::new();
        for s in &self.spikes {
            let safe = !s.label.is_empty()
                && s.label
                    .chars()
                    .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-');
            if !safe {
                return bad(format!(
                    "spike label {:?} must be non-empty ASCII letters, digits, '_' or '-'",
                    s.label
                ));
            }
            if !labels.insert(s.label.as_str()) {
                return bad(format!("duplicate spike label {:?}", s.label));
            }
            if s.ranks.is_empty() || s.ranks.iter().any(|&r| r == 0 || r > self.p) {
                return bad(format!(
                    "spike {:?}: ranks must be non-empty and within 1..={}",
                    s.label, self.p
                ));
            }
        }
        PopulationSpec::new(self.rho, self.lambda.clone())?;
        Ok(())
    }
}

/// Optional-everything mirror of [`SimulationConfig`], as read from a TOML
/// file or assembled from command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub p: Option<usize>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub dist: Option<EntryDistribution>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub rho: Option<f64>,
    pub lambda: Option<Vec<f64>>,
    pub spikes: Option<Vec<SpikeTarget>>,
    pub exclusion_ratio: Option<f64>,
    pub bins: Option<usize>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimulationError> {
        let text = fs::read_to_string(path).map_err(|source| SimulationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|source| SimulationError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Fields set in `over` win.
    pub fn merge(self, over: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            p: over.p.or(self.p),
            n1: over.n1.or(self.n1),
            n2: over.n2.or(self.n2),
            dist: over.dist.or(self.dist),
            reps: over.reps.or(self.reps),
            seed: over.seed.or(self.seed),
            rho: over.rho.or(self.rho),
            lambda: over.lambda.or(self.lambda),
            spikes: over.spikes.or(self.spikes),
            exclusion_ratio: over.exclusion_ratio.or(self.exclusion_ratio),
            bins: over.bins.or(self.bins),
            workers: over.workers.or(self.workers),
            out_dir: over.out_dir.or(self.out_dir),
        }
    }

    /// Fills gaps from the reference design and validates. When `lambda` is
    /// overridden the default spikes keep their ranks but lose their values.
    pub fn resolve(self) -> Result<SimulationConfig, SimulationError> {
        let p = match (self.p, &self.lambda) {
            (Some(p), _) => p,
            (None, Some(l)) => l.len(),
            (None, None) => return Err(SimulationError::InvalidConfig("p is required".into())),
        };
        let custom_lambda = self.lambda.is_some();
        let lambda = match self.lambda {
            Some(l) => l,
            None => build_lambda(p)?,
        };
        let spikes = match self.spikes {
            Some(s) => s,
            None if p >= 4 => {
                let mut s = reference_spikes(p);
                if custom_lambda {
                    s.iter_mut().for_each(|t| t.value = None);
                }
                s
            }
            None => {
                return Err(SimulationError::InvalidConfig(
                    "spikes are required when p < 4".into(),
                ))
            }
        };
        let config = SimulationConfig {
            p,
            n1: self.n1.unwrap_or(2 * p),
            n2: self.n2.unwrap_or(4 * p),
            dist: self.dist.unwrap_or(EntryDistribution::Normal),
            reps: self.reps.unwrap_or(DEFAULT_REPS),
            seed: self.seed.unwrap_or(0),
            rho: self.rho.unwrap_or(DEFAULT_RHO),
            lambda,
            spikes,
            exclusion_ratio: self
                .exclusion_ratio
                .unwrap_or(crate::stieltjes::DEFAULT_EXCLUSION_RATIO),
            bins: self.bins.unwrap_or(DEFAULT_BINS),
            workers: self.workers,
            out_dir: self.out_dir,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Outcome of one replication. Failures are kept as messages so that a bad
/// draw never aborts the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: usize,
    /// ChaCha stream the replication drew from, under the config's seed.
    pub stream: u64,
    /// Pooled estimate per configured spike, in config order.
    pub estimates: Vec<Result<f64, String>>,
    /// The `EXTREMES` largest eigenvalues, descending.
    pub largest: Vec<f64>,
    /// The `EXTREMES` smallest eigenvalues, descending.
    pub smallest: Vec<f64>,
}

/// A validated configuration with the population square root precomputed.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimulationConfig,
    design: FisherDesign,
    estimator: SpikeEstimator,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self, SimulationError> {
        config.validate()?;
        let spec = PopulationSpec::new(config.rho, config.lambda.clone())?;
        Ok(Self {
            design: FisherDesign::new(&spec)?,
            estimator: SpikeEstimator::new(config.exclusion_ratio)?,
            config,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn replication(&self, rep: usize) -> ReplicationRecord {
        let c = &self.config;
        let stream = rep as u64;
        let sample = self
            .design
            .sample(c.dist, c.n1, c.n2, &SeededRng::new(c.seed, stream));
        match sample {
            Ok(sample) => ReplicationRecord {
                rep,
                stream,
                estimates: c
                    .spikes
                    .iter()
                    .map(|s| {
                        self.estimator
                            .spike_group(&sample, &s.ranks)
                            .map(|e| e.pooled)
                            .map_err(|e| e.to_string())
                    })
                    .collect(),
                largest: sample.largest(EXTREMES).to_vec(),
                smallest: sample.smallest(EXTREMES).to_vec(),
            },
            Err(e) => ReplicationRecord {
                rep,
                stream,
                estimates: vec![Err(e.to_string()); c.spikes.len()],
                largest: Vec::new(),
                smallest: Vec::new(),
            },
        }
    }

    /// All replications, returned in rep order whatever the worker count.
    pub fn replications(&self) -> Result<Vec<ReplicationRecord>, SimulationError> {
        let reps = 0..self.config.reps;
        match self.config.workers {
            Some(1) => Ok(reps.map(|r| self.replication(r)).collect()),
            workers => {
                let mut builder = rayon::ThreadPoolBuilder::new();
                if let Some(w) = workers {
                    builder = builder.num_threads(w);
                }
                let pool = builder
                    .build()
                    .map_err(|e| SimulationError::WorkerPool(e.to_string()))?;
                Ok(pool.install(|| reps.into_par_iter().map(|r| self.replication(r)).collect()))
            }
        }
    }

    pub fn run(&self) -> Result<AggregateReport, SimulationError> {
        AggregateReport::from_records(self.config.clone(), self.replications()?)
    }
}

pub fn run_replication(
    config: &SimulationConfig,
    rep: usize,
) -> Result<ReplicationRecord, SimulationError> {
    Ok(Simulation::new(config.clone())?.replication(rep))
}

pub fn run_monte_carlo(config: &SimulationConfig) -> Result<AggregateReport, SimulationError> {
    Simulation::new(config.clone())?.run()
}

/// Equal-width bins; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `bins` bins over `[lo, hi]`. Values outside the range land in the
    /// edge bins so that the counts always add up to `values.len()`.
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            let k = ((v - lo) / width).floor();
            let k = if k.is_nan() || k < 0.0 {
                0
            } else {
                (k as usize).min(bins - 1)
            };
            counts[k] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSummary {
    pub label: String,
    pub value: Option<f64>,
    pub successes: usize,
    pub failures: usize,
    /// `None` when every replication failed for this spike.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub histogram: Option<Histogram>,
}

impl SpikeSummary {
    pub fn relative_error(&self) -> Option<f64> {
        match (self.mean, self.value) {
            (Some(m), Some(v)) if v != 0.0 => Some((m - v) / v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub config: SimulationConfig,
    pub records: Vec<ReplicationRecord>,
    pub spikes: Vec<SpikeSummary>,
}

impl AggregateReport {
    /// Sequential fold over `records` in rep order.
    pub fn from_records(
        config: SimulationConfig,
        mut records: Vec<ReplicationRecord>,
    ) -> Result<Self, SimulationError> {
        records.sort_by_key(|r| r.rep);
        let mut spikes = Vec::with_capacity(config.spikes.len());
        for (k, target) in config.spikes.iter().enumerate() {
            let ok: Vec<f64> = records
                .iter()
                .filter_map(|r| r.estimates.get(k).and_then(|e| e.as_ref().ok().copied()))
                .collect();
            let stats = mean_sd(&ok);
            let histogram = stats.map(|(mean, sd)| {
                let half = if sd > 0.0 {
                    4.0 * sd
                } else {
                    1e-6 * mean.abs().max(1.0)
                };
                Histogram::new(&ok, mean - half, mean + half, config.bins)
            });
            spikes.push(SpikeSummary {
                label: target.label.clone(),
                value: target.value,
                successes: ok.len(),
                failures: records.len() - ok.len(),
                mean: stats.map(|s| s.0),
                sd: stats.map(|s| s.1),
                histogram,
            });
        }
        if spikes.iter().all(|s| s.successes == 0) {
            return Err(SimulationError::AllReplicationsFailed);
        }
        Ok(Self {
            config,
            records,
            spikes,
        })
    }

    pub fn spike(&self, label: &str) -> Option<&SpikeSummary> {
        self.spikes.iter().find(|s| s.label == label)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, SimulationError> {
    csv::Writer::from_path(path).map_err(|source| SimulationError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `summary.csv`, `histogram_<label>.csv`, `replications.csv` and a
/// `config.toml` echo into `dir`. Every byte is a function of the report.
pub fn write_report(report: &AggregateReport, dir: &Path) -> Result<Vec<PathBuf>, SimulationError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SimulationError::Io { path, source }
    };
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SimulationError::Csv { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let path = dir.join("summary.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "spike",
        "true_value",
        "mean",
        "sd",
        "reps",
        "failed",
        "relative_error",
        "status",
    ])
    .map_err(csv_err(&path))?;
    for s in &report.spikes {
        let status = if s.successes == 0 {
            "no_estimates"
        } else {
            "ok"
        };
        w.write_record([
            s.label.clone(),
            opt(s.value),
            opt(s.mean),
            opt(s.sd),
            s.successes.to_string(),
            s.failures.to_string(),
            opt(s.relative_error()),
            status.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    written.push(path);

    for s in &report.spikes {
        let path = dir.join(format!("histogram_{}.csv", s.label));
        let mut w = csv_writer(&path)?;
        w.write_record(["bin_left", "bin_right", "count"])
            .map_err(csv_err(&path))?;
        if let Some(h) = &s.histogram {
            for (i, count) in h.counts.iter().enumerate() {
                w.write_record([
                    h.edges[i].to_string(),
                    h.edges[i + 1].to_string(),
                    count.to_string(),
                ])
                .map_err(csv_err(&path))?;
            }
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }

    let path = dir.join("replications.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["rep".to_string(), "stream".to_string()];
    header.extend(report.config.spikes.iter().map(|s| s.label.clone()));
    header.extend((1..=EXTREMES).map(|i| format!("largest_{i}")));
    header.extend((1..=EXTREMES).map(|i| format!("smallest_{i}")));
    header.push("errors".into());
    w.write_record(&header).map_err(csv_err(&path))?;
    for r in &report.records {
        let mut row = vec![r.rep.to_string(), r.stream.to_string()];
        row.extend(
            r.estimates
                .iter()
                .map(|e| e.as_ref().map(|v| v.to_string()).unwrap_or_default()),
        );
        for list in [&r.largest, &r.smallest] {
            row.extend(
                (0..EXTREMES).map(|i| list.get(i).map(|v| v.to_string()).unwrap_or_default()),
            );
        }
        let errors: Vec<String> = report
            .config
            .spikes
            .iter()
            .zip(&r.estimates)
            .filter_map(|(s, e)| e.as_ref().err().map(|msg| format!("{}: {msg}", s.label)))
            .collect();
        row.push(errors.join("; "));
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    written.push(path);

    let path = dir.join("config.toml");
    let mut echo = report.config.clone();
    // scheduling and destination do not change results
    echo.workers = None;
    echo.out_dir = None;
    let text = toml::to_string(&echo).map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))?;
    written.push(path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(reps: usize) -> SimulationConfig {
        SimulationConfig::reference(8, EntryDistribution::Normal, 11)
            .unwrap()
            .with_reps(reps)
            .with_workers(1)
    }

    #[test]
    fn stats() {
        assert_eq!(mean_sd(&[]), None);
        assert_eq!(mean_sd(&[3.0]), Some((3.0, 0.0)));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn histogram_conserves_counts() {
        let v = [0.0, 0.5, 1.0, 1.0, -3.0, 7.0];
        let h = Histogram::new(&v, 0.0, 1.0, 4);
        assert_eq!(h.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(h.counts, vec![2, 0, 1, 3]);
        assert_eq!(h.total(), 6);
    }

    #[test]
    fn validation() {
        let mut c = small(1);
        c.reps = 0;
        assert!(c.validate().is_err());
        let mut c = small(1);
        c.spikes[0].ranks = vec![9];
        assert!(c.validate().is_err());
        let mut c = small(1);
        c.spikes[1].label = "a1".into();
        assert!(c.validate().is_err());
        let mut c = small(1);
        c.spikes[0].label = "../x".into();
        assert!(c.validate().is_err());
        let mut c = small(1);
        c.n2 = 8;
        assert!(c.validate().is_err());
    }

    #[test]
    fn minimal_design_runs() {
        let rec = run_replication(&small(1), 0).unwrap();
        assert_eq!(rec.estimates.len(), 4);
        assert_eq!(rec.largest.len(), EXTREMES);
        assert!(rec.largest.windows(2).all(|w| w[0] >= w[1]));
        assert!(rec.smallest.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(rec, run_replication(&small(1), 0).unwrap());
    }

    #[test]
    fn single_rep_statistics() {
        let report = run_monte_carlo(&small(1)).unwrap();
        let rec = &report.records[0];
        for (s, e) in report.spikes.iter().zip(&rec.estimates) {
            if let Ok(v) = e {
                assert_eq!(s.mean, Some(*v));
                assert_eq!(s.sd, Some(0.0));
                assert_eq!(s.histogram.as_ref().unwrap().total(), 1);
            }
        }
    }

    #[test]
    fn overrides_merge_and_resolve() {
        let file = ConfigOverrides::from_toml_str("p = 8\nreps = 3\nseed = 5\ndist = \"chisq\"\n")
            .unwrap();
        let flags = ConfigOverrides {
            reps: Some(2),
            ..Default::default()
        };
        let c = file.merge(flags).resolve().unwrap();
        assert_eq!((c.p, c.n1, c.n2, c.reps, c.seed), (8, 16, 32, 2, 5));
        assert_eq!(c.dist, EntryDistribution::Chisq);
        assert_eq!(c.spikes, reference_spikes(8));
        assert!(ConfigOverrides::from_toml_str("q = 1").is_err());
        assert!(ConfigOverrides::default().resolve().is_err());
    }

    #[test]
    fn config_file_spikes() {
        let text = "p = 8\nlambda = [4, 3, 2, 2, 1, 1, 1, 0.5]\n\n[[spikes]]\nlabel = \"top\"\nranks = [1]\n";
        let c = ConfigOverrides::from_toml_str(text)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(c.spikes, vec![SpikeTarget::new("top", None, vec![1])]);
        assert_eq!(c.lambda[0], 4.0);
    }
}
