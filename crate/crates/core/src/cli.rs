//! Command-line front end. Every command is a thin adapter over the library:
//! it parses, calls one library entry point, and formats the result.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::sampling::EntryDistribution;
use crate::simulate::{run_monte_carlo, write_report, ConfigOverrides, SpikeTarget};
use crate::spectrum::{
    condition_ii, lsd_support, phase_transition_limit_with, psi_prime, AspectRatios, ScanSettings,
    SpectralMeasure, SpectrumError, Spike, SpikeClassification,
};
use crate::stieltjes::{EigenSample, SpikeEstimate, SpikeEstimator, StieltjesError};

#[derive(Debug, Parser)]
#[command(
    name = "spiked-fisher",
    version,
    about = "Spiked eigenvalues of high-dimensional Fisher matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Classify spikes and print the limits of their sample eigenvalues.
    Limits(LimitsArgs),
    /// Print the support intervals of the limiting spectral distribution.
    Support(SupportArgs),
    /// Estimate population spikes from a file of sample eigenvalues.
    Estimate(EstimateArgs),
    /// Run the Monte Carlo study and write CSV reports.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Population spectral measure as `t:w` pairs, e.g. `2:0.5,1:0.5`.
    #[arg(long, value_parser = parse_measure)]
    pub atoms: SpectralMeasure,
    /// Limit of p/n1.
    #[arg(long)]
    pub c1: f64,
    /// Limit of p/n2, below 1.
    #[arg(long)]
    pub c2: f64,
}

impl ModelArgs {
    fn ratios(&self) -> Result<AspectRatios> {
        Ok(AspectRatios::new(self.c1, self.c2)?)
    }
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated spike values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub spikes: Vec<f64>,
    /// Minimum distance from the atoms of H for a spike to count as outside
    /// its support. Defaults to a thousandth of the atom range.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Also write the table to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SupportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Eigenvalues, one per line in descending order.
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long)]
    pub n1: usize,
    #[arg(long)]
    pub n2: usize,
    /// Rank groups as `label=r1,r2,...` with 1-based descending ranks.
    #[arg(long, num_args = 1.., required = true, value_parser = parse_rank_group)]
    pub ranks: Vec<(String, Vec<usize>)>,
    /// Relative half-width of the band around each eigenvalue that is left
    /// out of the transform.
    #[arg(long, default_value_t = crate::stieltjes::DEFAULT_EXCLUSION_RATIO)]
    pub exclusion_ratio: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file with any of the keys below plus `lambda` and `[[spikes]]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    /// normal, chisq or uniform.
    #[arg(long)]
    pub dist: Option<EntryDistribution>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Toeplitz correlation defining the eigenbasis of Sigma1.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub exclusion_ratio: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory, `simulation` when neither flag nor file sets it.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `t:w[,t:w...]`. Weights summing to within 1% of one are
/// renormalized; anything further off is rejected.
pub fn parse_measure(s: &str) -> Result<SpectralMeasure, String> {
    let mut pairs = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (t, w) = item
            .split_once(':')
            .ok_or_else(|| format!("atom {item:?} is not of the form t:w"))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|_| format!("bad atom location {t:?}"))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| format!("bad atom weight {w:?}"))?;
        pairs.push((t, w));
    }
    if pairs.is_empty() {
        return Err("no atoms given".into());
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if total.is_nan() || (total - 1.0).abs() > 0.01 {
        return Err(format!("weights sum to {total}, not 1"));
    }
    for p in &mut pairs {
        p.1 /= total;
    }
    SpectralMeasure::new(pairs).map_err(|e| e.to_string())
}

/// Parses `label=r1,r2,...`.
pub fn parse_rank_group(s: &str) -> Result<(String, Vec<usize>), String> {
    let (label, ranks) = s
        .split_once('=')
        .ok_or_else(|| format!("rank group {s:?} is not of the form label=r1,r2"))?;
    let label = label.trim();
    if label.is_empty() {
        return Err(format!("rank group {s:?} has an empty label"));
    }
    let ranks = ranks
        .split(',')
        .map(|r| {
            r.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad rank {r:?} in {s:?}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((label.to_string(), ranks))
}

/// Six significant digits, switching to scientific notation outside
/// `[1e-5, 1e6)`.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..6).contains(&e) {
        let decimals = (5 - e) as usize;
        let s = format!("{x:.decimals$}");
        // rounding may carry into a new digit, e.g. 9.999996 -> 10.00000
        if s.trim_start_matches('-')
            .replace('.', "")
            .trim_start_matches('0')
            .len()
            > 6
            && decimals > 0
        {
            let d = decimals - 1;
            return format!("{x:.d$}");
        }
        s
    } else {
        format!("{x:.5e}")
    }
}

fn opt6(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_else(|| "-".into())
}

fn opt_full(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Left-aligned plain-text table.
fn table(out: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    writeln!(out, "{}", line(header.to_vec()))?;
    for row in rows {
        writeln!(out, "{}", line(row.iter().map(String::as_str).collect()))?;
    }
    Ok(())
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// One row of the `limits` table, before formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub alpha: f64,
    pub outcome: Result<SpikeClassification, SpectrumError>,
    pub in_support_of_h: bool,
    pub condition_ii: Option<f64>,
    pub psi_prime: Option<f64>,
}

pub fn limit_rows(args: &LimitsArgs) -> Result<Vec<LimitRow>> {
    let h = &args.model.atoms;
    let c = args.model.ratios()?;
    let delta = args.delta.unwrap_or_else(|| h.default_delta());
    if delta.is_nan() || delta < 0.0 {
        bail!("--delta must be nonnegative");
    }
    let settings = ScanSettings::default();
    args.spikes
        .iter()
        .map(|&alpha| {
            let outcome = Spike::single(alpha)
                .and_then(|s| phase_transition_limit_with(&s, h, &c, delta, &settings));
            Ok(LimitRow {
                alpha,
                outcome,
                in_support_of_h: h.in_support(alpha, delta),
                condition_ii: condition_ii(alpha, h, &c).ok(),
                psi_prime: psi_prime(alpha, h, &c).ok(),
            })
        })
        .collect()
}

fn cmd_limits(args: &LimitsArgs, out: &mut dyn Write) -> Result<()> {
    let rows = limit_rows(args)?;
    let note = |r: &LimitRow| match (&r.outcome, r.in_support_of_h) {
        (_, true) => "in support of H".to_string(),
        (Err(e), false) => e.to_string(),
        (Ok(_), false) => String::new(),
    };
    let kind = |r: &LimitRow| {
        r.outcome
            .as_ref()
            .map(|o| o.kind.to_string())
            .unwrap_or_else(|_| "Error".into())
    };
    let limit = |r: &LimitRow| r.outcome.as_ref().ok().and_then(|o| o.limit);
    let critical = |r: &LimitRow| r.outcome.as_ref().ok().and_then(|o| o.critical_point);

    let header = [
        "spike",
        "class",
        "limit",
        "critical_point",
        "condition_ii",
        "psi_prime",
        "note",
    ];
    let shown: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                sig6(r.alpha),
                kind(r),
                opt6(limit(r)),
                opt6(critical(r)),
                opt6(r.condition_ii),
                opt6(r.psi_prime),
                note(r),
            ]
        })
        .collect();
    table(out, &header, &shown)?;
    if let Some(path) = &args.csv {
        let full: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.alpha.to_string(),
                    kind(r),
                    opt_full(limit(r)),
                    opt_full(critical(r)),
                    opt_full(r.condition_ii),
                    opt_full(r.psi_prime),
                    note(r),
                ]
            })
            .collect();
        write_csv(path, &header, &full)?;
    }
    if rows.iter().all(|r| r.outcome.is_err()) {
        bail!("no spike could be classified");
    }
    Ok(())
}

fn cmd_support(args: &SupportArgs, out: &mut dyn Write) -> Result<()> {
    let c = args.model.ratios()?;
    let support = lsd_support(&args.model.atoms, &c);
    let header = ["interval", "lower", "upper"];
    let rows = |fmt: &dyn Fn(f64) -> String| -> Vec<Vec<String>> {
        support
            .intervals()
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| vec![(i + 1).to_string(), fmt(a), fmt(b)])
            .collect()
    };
    table(out, &header, &rows(&sig6))?;
    if support.zero_mass() > 0.0 {
        writeln!(out, "point mass {} at 0", sig6(support.zero_mass()))?;
    }
    if let Some(path) = &args.csv {
        write_csv(path, &header, &rows(&|v: f64| v.to_string()))?;
    }
    Ok(())
}

pub fn estimate_groups(
    args: &EstimateArgs,
) -> Result<Vec<(String, Result<SpikeEstimate, StieltjesError>)>> {
    let text = fs::read_to_string(&args.file)
        .with_context(|| format!("cannot read {}", args.file.display()))?;
    let sample = EigenSample::parse_text(&text, args.n1, args.n2)
        .with_context(|| args.file.display().to_string())?;
    let estimator = SpikeEstimator::new(args.exclusion_ratio)?;
    Ok(args
        .ranks
        .iter()
        .map(|(label, ranks)| (label.clone(), estimator.spike_group(&sample, ranks)))
        .collect())
}

fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write) -> Result<()> {
    let groups = estimate_groups(args)?;
    let header = ["spike", "rank", "estimate", "pooled", "error"];
    let mut shown = Vec::new();
    let mut full = Vec::new();
    for (label, result) in &groups {
        match result {
            Ok(est) => {
                for r in &est.per_rank {
                    let (v, err) = match &r.estimate {
                        Ok(v) => (Some(*v), String::new()),
                        Err(e) => (None, e.to_string()),
                    };
                    shown.push(vec![
                        label.clone(),
                        r.rank.to_string(),
                        opt6(v),
                        sig6(est.pooled),
                        err.clone(),
                    ]);
                    full.push(vec![
                        label.clone(),
                        r.rank.to_string(),
                        opt_full(v),
                        est.pooled.to_string(),
                        err,
                    ]);
                }
            }
            Err(e) => {
                shown.push(vec![
                    label.clone(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    e.to_string(),
                ]);
                full.push(vec![
                    label.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]);
            }
        }
    }
    table(out, &header, &shown)?;
    if let Some(path) = &args.csv {
        write_csv(path, &header, &full)?;
    }
    if groups.iter().all(|g| g.1.is_err()) {
        bail!("every rank group failed");
    }
    Ok(())
}

impl SimulateArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            p: self.p,
            n1: self.n1,
            n2: self.n2,
            dist: self.dist,
            reps: self.reps,
            seed: self.seed,
            rho: self.rho,
            exclusion_ratio: self.exclusion_ratio,
            bins: self.bins,
            workers: self.workers,
            out_dir: self.out_dir.clone(),
            ..Default::default()
        }
    }
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let base = match &args.config {
        Some(path) => ConfigOverrides::from_file(path)?,
        None => ConfigOverrides::default(),
    };
    let config = base
        .merge(args.overrides())
        .resolve()
        .context("invalid simulation config")?;
    let dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("simulation"));
    let report = run_monte_carlo(&config)?;
    let written = write_report(&report, &dir)?;

    let header = [
        "spike",
        "ranks",
        "true",
        "mean",
        "sd",
        "reps",
        "failed",
        "rel_error",
    ];
    let rows: Vec<Vec<String>> = report
        .spikes
        .iter()
        .zip(&config.spikes)
        .map(|(s, t): (_, &SpikeTarget)| {
            let ranks: Vec<String> = t.ranks.iter().map(|r| r.to_string()).collect();
            vec![
                s.label.clone(),
                ranks.join(","),
                opt6(s.value),
                opt6(s.mean),
                opt6(s.sd),
                s.successes.to_string(),
                s.failures.to_string(),
                opt6(s.relative_error()),
            ]
        })
        .collect();
    writeln!(
        out,
        "p = {}, n1 = {}, n2 = {}, dist = {}, reps = {}, seed = {}",
        config.p, config.n1, config.n2, config.dist, config.reps, config.seed
    )?;
    table(out, &header, &rows)?;
    writeln!(out, "wrote {} files to {}", written.len(), dir.display())?;
    Ok(())
}

/// Runs one parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        CliCommand::Limits(a) => cmd_limits(a, out),
        CliCommand::Support(a) => cmd_support(a, out),
        CliCommand::Estimate(a) => cmd_estimate(a, out),
        CliCommand::Simulate(a) => cmd_simulate(a, out),
    }
}

/// Parses `args` (program name first) and executes.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    execute(&cli, out)
}
