use std::fs;

use spiked_fisher::sampling::EntryDistribution;
use spiked_fisher::simulate::*;

fn config(p: usize, reps: usize) -> SimulationConfig {
    SimulationConfig::reference(p, EntryDistribution::Normal, 7)
        .unwrap()
        .with_reps(reps)
}

#[test]
fn reference_replication_is_near_the_spikes() {
    let c = config(100, 1);
    let rec = run_replication(&c, 0).unwrap();
    let a1 = rec.estimates[0].clone().unwrap();
    assert!(a1 > 8.0 && a1 < 12.0, "{a1}");
    assert_eq!(rec, run_replication(&c, 0).unwrap());
    assert_eq!(rec.stream, 0);
}

#[test]
fn worker_count_does_not_change_the_report() {
    let one = run_monte_carlo(&config(24, 12).with_workers(1)).unwrap();
    let three = run_monte_carlo(&config(24, 12).with_workers(3)).unwrap();
    assert_eq!(one.records, three.records);
    assert_eq!(one.spikes, three.spikes);
}

#[test]
fn aggregate_is_independent_of_record_order() {
    let c = config(16, 9).with_workers(1);
    let sim = Simulation::new(c.clone()).unwrap();
    let records = sim.replications().unwrap();
    let mut shuffled = records.clone();
    shuffled.reverse();
    shuffled.swap(1, 5);
    let a = AggregateReport::from_records(c.clone(), records).unwrap();
    let b = AggregateReport::from_records(c, shuffled).unwrap();
    assert_eq!(a, b);
}

#[test]
fn histograms_conserve_successes() {
    let report = run_monte_carlo(&config(16, 30).with_workers(1)).unwrap();
    for s in &report.spikes {
        assert_eq!(s.successes + s.failures, 30);
        if let Some(h) = &s.histogram {
            assert_eq!(h.total() as usize, s.successes);
            assert_eq!(h.counts.len(), DEFAULT_BINS);
            let (mean, sd) = (s.mean.unwrap(), s.sd.unwrap());
            assert!((h.edges[0] - (mean - 4.0 * sd)).abs() < 1e-9 * mean.abs().max(1.0));
            assert_eq!(*h.edges.last().unwrap(), mean + 4.0 * sd);
        }
    }
}

#[test]
fn report_files_round_trip() {
    let report = run_monte_carlo(&config(16, 10).with_workers(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_report(&report, dir.path()).unwrap();
    assert_eq!(files.len(), 3 + report.spikes.len());

    let mut rd = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), report.spikes.len());
    for (row, s) in rows.iter().zip(&report.spikes) {
        assert_eq!(&row[0], s.label);
        assert_eq!(row[2].parse::<f64>().unwrap(), s.mean.unwrap());
        assert_eq!(row[3].parse::<f64>().unwrap(), s.sd.unwrap());
        assert_eq!(row[4].parse::<usize>().unwrap(), s.successes);
    }

    for s in &report.spikes {
        let mut rd =
            csv::Reader::from_path(dir.path().join(format!("histogram_{}.csv", s.label))).unwrap();
        assert_eq!(
            rd.headers().unwrap(),
            vec!["bin_left", "bin_right", "count"]
        );
        let total: u64 = rd
            .records()
            .map(|r| r.unwrap()[2].parse::<u64>().unwrap())
            .sum();
        assert_eq!(total as usize, s.successes);
    }

    let mut rd = csv::Reader::from_path(dir.path().join("replications.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    for (row, rec) in rows.iter().zip(&report.records) {
        assert_eq!(row[0].parse::<usize>().unwrap(), rec.rep);
        if let Ok(v) = &rec.estimates[0] {
            assert_eq!(row[2].parse::<f64>().unwrap(), *v);
        }
        assert_eq!(row[6].parse::<f64>().unwrap(), rec.largest[0]);
    }

    let echo = ConfigOverrides::from_file(&dir.path().join("config.toml"))
        .unwrap()
        .resolve()
        .unwrap();
    assert_eq!(echo.seed, report.config.seed);
    assert_eq!(echo.spikes, report.config.spikes);
}

#[test]
fn spike_without_estimates_is_flagged() {
    let mut c = config(16, 3).with_workers(1);
    // every eigenvalue of this sample sits within a huge exclusion band
    c.exclusion_ratio = 1e6;
    c.spikes.truncate(1);
    assert!(matches!(
        run_monte_carlo(&c),
        Err(SimulationError::AllReplicationsFailed)
    ));

    let mut c = config(16, 3).with_workers(1);
    c.spikes.push(SpikeTarget::new("lost", None, vec![16]));
    // make every estimate of the extra spike fail
    let sim = Simulation::new(c.clone()).unwrap();
    let mut records = sim.replications().unwrap();
    for r in &mut records {
        r.estimates[4] = Err("forced".into());
    }
    let report = AggregateReport::from_records(c, records).unwrap();
    let lost = report.spike("lost").unwrap();
    assert_eq!((lost.successes, lost.failures), (0, 3));
    assert!(lost.histogram.is_none());

    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    let hist = fs::read_to_string(dir.path().join("histogram_lost.csv")).unwrap();
    assert_eq!(hist, "bin_left,bin_right,count\n");
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary
        .lines()
        .any(|l| l.starts_with("lost,") && l.ends_with(",no_estimates")));
}
