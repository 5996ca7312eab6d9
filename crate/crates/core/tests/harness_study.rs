use std::path::PathBuf;

use perifract::config::{InitialField, RunConfig};
use perifract::harness::{compare_runs, run_convergence_study, SubRun};

fn small() -> RunConfig {
    RunConfig {
        a: 0.012,
        b: 0.016,
        ell0: 0.004,
        epsilon: 2e-3,
        f0: 2e7,
        t_ramp: 4e-6,
        dt: 0.05e-6,
        t_end: 10e-6,
        output_every: 10,
        smoothing_window: 3,
        half_width_x: 0.002,
        half_width_y: 0.003,
        start_x1: Some(0.006),
        write_vtk: false,
        snapshot_every: 50,
        ..RunConfig::default()
    }
}

fn runs_of(report: &perifract::harness::ConvergenceReport, root: &std::path::Path) -> Vec<SubRun> {
    report
        .epsilons
        .iter()
        .enumerate()
        .map(|(k, &e)| SubRun {
            epsilon: e,
            dir: perifract::run::run_dir(root, k, e),
            error: None,
        })
        .collect()
}

#[test]
fn single_horizon_report_is_vacuous() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_convergence_study(&small(), &[2e-3], dir.path(), false).unwrap();
    assert!(report.tip_ordering_pass && report.sz_nesting_pass);
    assert!(report.l2_differences.is_empty());
    assert_eq!((report.tip_times, report.field_times), (0, 0));
    assert!(report.failures.is_empty());
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn two_horizons_compare_on_the_coarse_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_convergence_study(&small(), &[2e-3, 1e-3], dir.path(), false).unwrap();
    assert!(report.failures.is_empty());
    // frames 0..t_end exclusive: the final state has no central velocity yet
    assert_eq!(report.tip_times, 20);
    assert_eq!(report.field_times, 4);
    assert_eq!(report.l2_differences.len(), 1);
    let d = &report.l2_differences[0];
    assert_eq!(d.series.len(), 4);
    assert_eq!(d.series[0].1, 0.0);
    assert!(d.max > 0.0);
    assert_eq!(report.symmetry_max_dev, 0.0);

    // the comparison is a pure function of the stored files
    let first = std::fs::read(dir.path().join("report.json")).unwrap();
    let csv = std::fs::read(dir.path().join("l2.csv")).unwrap();
    let again = compare_runs(&runs_of(&report, dir.path()), dir.path()).unwrap();
    assert_eq!(again, report);
    assert_eq!(std::fs::read(dir.path().join("report.json")).unwrap(), first);
    assert_eq!(std::fs::read(dir.path().join("l2.csv")).unwrap(), csv);
}

#[test]
fn failed_sub_run_gives_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.u0 = InitialField::File(PathBuf::from("/nonexistent/u0.txt"));
    let report = run_convergence_study(&cfg, &[2e-3, 1e-3], dir.path(), false).unwrap();
    assert_eq!(report.failures.len(), 2);
    assert!(report.failures.iter().all(|f| f.error.is_some()));
    assert!(!report.tip_ordering_pass && !report.sz_nesting_pass);
}

#[test]
fn horizons_must_decrease() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_convergence_study(&small(), &[1e-3, 2e-3], dir.path(), false).is_err());
    assert!(run_convergence_study(&small(), &[], dir.path(), false).is_err());
}

#[test]
fn parallel_sub_runs_match_sequential_ones() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let seq = run_convergence_study(&small(), &[2e-3, 1e-3], a.path(), false).unwrap();
    let par = run_convergence_study(&small(), &[2e-3, 1e-3], b.path(), true).unwrap();
    assert_eq!(
        std::fs::read(a.path().join("l2.csv")).unwrap(),
        std::fs::read(b.path().join("l2.csv")).unwrap()
    );
    assert_eq!(seq.l2_differences, par.l2_differences);
}
