//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spiked_fisher::sampling::{EntryDistribution, FisherDesign, PopulationSpec, SeededRng};
use spiked_fisher::simulate::{mean_sd, run_monte_carlo, AggregateReport, SimulationConfig};
use spiked_fisher::spectrum::{
    is_distant_spike, lsd_support, psi, psi_prime, AspectRatios, SpectralMeasure,
};
use spiked_fisher::stieltjes::{
    empirical_m_hat, population_m_pair, solve_m0, EigenSample, SpikeEstimator,
};

const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reference_h() -> SpectralMeasure {
    SpectralMeasure::new(vec![(2.0, 0.5), (1.0, 0.5)]).unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng) -> SpectralMeasure {
    loop {
        let k = rng.gen_range(1..=4);
        let pairs: Vec<(f64, f64)> = (0..k)
            .map(|_| (rng.gen_range(0.1..20.0), rng.gen_range(0.05..1.0)))
            .collect();
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(t, w)| (t, w / total)).collect();
        if let Ok(h) = SpectralMeasure::new(pairs) {
            if h.atoms().windows(2).all(|w| w[1] - w[0] > 1e-2) {
                return h;
            }
        }
    }
}

fn random_ratios(rng: &mut ChaCha8Rng) -> AspectRatios {
    AspectRatios::new(rng.gen_range(0.01..0.95), rng.gen_range(0.01..0.9)).unwrap()
}

/// Monte Carlo runs of the reference design, one per distribution.
struct Runs {
    p400: Vec<(EntryDistribution, AggregateReport)>,
}

fn reference_runs(p: usize, reps: usize) -> Vec<(EntryDistribution, AggregateReport)> {
    EntryDistribution::ALL
        .into_iter()
        .map(|dist| {
            let config = SimulationConfig::reference(p, dist, SEED)
                .unwrap()
                .with_reps(reps);
            (dist, run_monte_carlo(&config).unwrap())
        })
        .collect()
}

fn pooled(report: &AggregateReport, spike: usize, reps: usize) -> Vec<f64> {
    report.records[..reps]
        .iter()
        .filter_map(|r| r.estimates[spike].as_ref().ok().copied())
        .collect()
}

fn criterion_1(runs: &Runs) -> Outcome {
    let report = &runs
        .p400
        .iter()
        .find(|r| r.0 == EntryDistribution::Normal)
        .unwrap()
        .1;
    let largest: Vec<f64> = report.records[..100].iter().map(|r| r.largest[0]).collect();
    let mean = largest.iter().sum::<f64>() / largest.len() as f64;
    let c = AspectRatios::new(0.5, 0.25).unwrap();
    let rho = psi(10.0, &reference_h(), &c).unwrap();
    let rel = (mean - rho) / rho;
    outcome(
        rel.abs() <= 0.03,
        format!("mean largest {mean:.4} vs limit {rho:.4} (rel {rel:+.4}, tol 0.03)"),
    )
}

fn criterion_2(runs: &Runs) -> Outcome {
    let targets = [
        (0, 10.0, 0.05),
        (1, 7.5, 0.10),
        (2, 0.2, 0.10),
        (3, 0.1, 0.10),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (dist, report) in &runs.p400 {
        for &(k, truth, tol) in &targets {
            let v = pooled(report, k, report.records.len());
            let (mean, _) = mean_sd(&v).unwrap_or((f64::NAN, f64::NAN));
            let rel = (mean - truth) / truth;
            let ok = rel.abs() <= tol;
            pass &= ok;
            parts.push(format!(
                "{dist}/a{}={mean:.4}({rel:+.3}){}",
                k + 1,
                if ok { "" } else { "!" }
            ));
        }
    }
    outcome(pass, parts.join(" "))
}

fn criterion_3(runs: &Runs) -> Outcome {
    let reps = 200;
    let smaller: Vec<Vec<(EntryDistribution, AggregateReport)>> = [100, 200]
        .iter()
        .map(|&p| reference_runs(p, reps))
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, dist) in EntryDistribution::ALL.into_iter().enumerate() {
        let sds: Vec<f64> = [&smaller[0][i].1, &smaller[1][i].1, &runs.p400[i].1]
            .iter()
            .map(|r| mean_sd(&pooled(r, 0, reps)).unwrap().1)
            .collect();
        let ok = sds[0] > sds[1] && sds[1] > sds[2];
        pass &= ok;
        parts.push(format!(
            "{dist}: {:.4} > {:.4} > {:.4}",
            sds[0], sds[1], sds[2]
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let h = SpectralMeasure::point_mass(1.0).unwrap();
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 200 {
        let alpha = rng.gen_range(0.01..30.0);
        let (c1, c2) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..0.95));
        let c = AspectRatios::new(c1, c2).unwrap();
        let Ok(got) = psi(alpha, &h, &c) else {
            continue;
        };
        let want = alpha * (1.0 - alpha - c1) / (1.0 - alpha + c2 * alpha);
        worst = worst.max((got - want).abs() / want.abs());
        count += 1;
    }
    outcome(
        worst <= 1e-12,
        format!("200 points, worst relative error {worst:.2e} (tol 1e-12)"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 1000 {
        let h = random_measure(&mut rng);
        let c = random_ratios(&mut rng);
        let alpha = rng.gen_range(0.01..60.0);
        if !is_distant_spike(alpha, &h, &c, h.default_delta()) {
            continue;
        }
        let d = psi_prime(alpha, &h, &c).unwrap();
        let step = 1e-6 * alpha.abs().max(1.0);
        let fd = (psi(alpha + step, &h, &c).unwrap() - psi(alpha - step, &h, &c).unwrap())
            / (2.0 * step);
        worst = worst.max((d - fd).abs() / d.abs());
        count += 1;
    }
    outcome(
        worst <= 1e-5,
        format!("1000 admissible points, worst relative error {worst:.2e} (tol 1e-5)"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let (mut round, mut closed, mut eig) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    let mut count = 0;
    while count < 100 {
        let h = random_measure(&mut rng);
        let c = random_ratios(&mut rng);
        let alpha = rng.gen_range(0.01..60.0);
        if !is_distant_spike(alpha, &h, &c, h.default_delta()) {
            continue;
        }
        let x = psi(alpha, &h, &c).unwrap();
        if x <= 0.0 {
            continue;
        }
        count += 1;
        let (Ok(root), Ok(pair)) = (solve_m0(x, &h, &c), population_m_pair(x, &h, &c)) else {
            failures += 1;
            continue;
        };
        round = round.max((root.m0 + alpha).abs());
        closed =
            closed.max((pair.m_underline + c.h_squared() / (c.c1() * alpha + c.c2() * x)).abs());
        eig = eig.max((1.0 + c.c2() * x * pair.m + pair.m_underline * alpha).abs());
    }
    let pass = failures == 0 && round <= 1e-8 && closed <= 1e-8 && eig <= 1e-8;
    outcome(
        pass,
        format!("100 spikes: |m0+a| {round:.1e}, closed form {closed:.1e}, eigen-equation {eig:.1e}, solver failures {failures} (tol 1e-8)"),
    )
}

fn criterion_7() -> Outcome {
    let p = 400;
    let lambda: Vec<f64> = (0..p).map(|i| if i < p / 2 { 2.0 } else { 1.0 }).collect();
    let design = FisherDesign::new(&PopulationSpec::new(0.5, lambda).unwrap()).unwrap();
    let support = lsd_support(&reference_h(), &AspectRatios::new(0.5, 0.25).unwrap());
    let gaps = support.interior_gaps();
    let (mut inside, mut in_gaps, mut total) = (0usize, 0usize, 0usize);
    for rep in 0..50 {
        let s = design
            .sample(
                EntryDistribution::Normal,
                2 * p,
                4 * p,
                &SeededRng::new(SEED + 7, rep),
            )
            .unwrap();
        for &v in s.values() {
            total += 1;
            inside += support.contains_dilated(v, 0.15) as usize;
            in_gaps += gaps.iter().any(|&(a, b)| v > a + 0.15 && v < b - 0.15) as usize;
        }
    }
    let frac = inside as f64 / total as f64;
    outcome(
        frac >= 0.99 && in_gaps == 0,
        format!(
            "{:.4} of {total} eigenvalues inside {:?} +/- 0.15, {in_gaps} in shrunk gaps",
            frac,
            support.intervals()
        ),
    )
}

fn criterion_8() -> Outcome {
    // reference values from an exact rational computation
    type Fixture = (&'static [f64], usize, usize, f64, f64, f64);
    let cases: [Fixture; 2] = [
        (
            &[5.0, 1.0, 0.5],
            4,
            8,
            -17.0 / 72.0,
            -0.218_055_555_555_555_56,
            3.232_484_076_433_121,
        ),
        (
            &[5.0, 1.0, 0.9, 0.5],
            8,
            16,
            -0.238_708_220_415_537_5,
            -0.214_515_582_655_826_57,
            3.618_436_636_399_526_4,
        ),
    ];
    let mut worst = 0.0f64;
    for (values, n1, n2, m, mu, alpha) in cases {
        let s = EigenSample::new(values.to_vec(), n1, n2).unwrap();
        let t = SpikeEstimator::default().local(&s, 1).unwrap();
        let a = t.spike_estimate().unwrap();
        worst = worst
            .max((t.m_hat - m).abs())
            .max((t.m_underline_hat - mu).abs())
            .max((a - alpha).abs());
    }
    let s = EigenSample::new(vec![5.0, 4.5, 1.0], 4, 8).unwrap();
    let (m, j0) = empirical_m_hat(&s, 1).unwrap();
    worst = worst.max((m + 0.25).abs());
    outcome(
        worst <= 1e-12 && j0 == vec![1, 2],
        format!("worst deviation {worst:.1e} (tol 1e-12)"),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let dir = root.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_spiked-fisher"))
            .args([
                "simulate", "--p", "100", "--reps", "40", "--seed", "7", "--dist", "chisq",
            ])
            .args(["--workers", workers, "--out-dir"])
            .arg(&dir)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        read_dir_bytes(&dir)
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    let pass = a.len() == 7 && a == b && a == c;
    outcome(
        pass,
        format!(
            "{} files identical across two runs and 1 vs 4 workers",
            a.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let runs = Runs {
        p400: reference_runs(400, 500),
    };
    type Check<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);
    let checks: Vec<Check> = vec![
        (
            1,
            "phase-transition limit of the largest eigenvalue",
            Box::new(|| criterion_1(&runs)),
        ),
        (
            2,
            "estimator accuracy at p = 400",
            Box::new(|| criterion_2(&runs)),
        ),
        (
            3,
            "estimator concentration in p",
            Box::new(|| criterion_3(&runs)),
        ),
        (4, "point-mass closed form of psi", Box::new(criterion_4)),
        (5, "psi' against finite differences", Box::new(criterion_5)),
        (6, "companion-transform identities", Box::new(criterion_6)),
        (
            7,
            "support containment of a null model",
            Box::new(criterion_7),
        ),
        (8, "estimator against exact fixtures", Box::new(criterion_8)),
        (9, "byte-identical simulation output", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (n, name, check) in &checks {
        let o = check();
        failed += !o.pass as usize;
        println!(
            "criterion {n} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.0?}",
        checks.len() - failed,
        checks.len(),
        start.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
