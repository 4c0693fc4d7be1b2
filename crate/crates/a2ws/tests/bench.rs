use std::path::Path;

use a2ws::bench::{run_experiment, ExperimentPlan, RadiusPolicy};
use a2ws::{Error, SchedulerKind};
use a2ws_core::builtin_config;

fn read(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    let rows = r.records().map(|x| x.unwrap()).collect();
    (header, rows)
}

fn column(header: &csv::StringRecord, name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn plan(schedulers: Vec<SchedulerKind>, out: &Path) -> ExperimentPlan {
    let mut p = ExperimentPlan::new(schedulers, builtin_config("C1").unwrap(), vec![480], out);
    p.base_cost = 0.01;
    p
}

#[test]
fn single_scheduler_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&plan(vec![SchedulerKind::A2ws], dir.path())).unwrap();
    assert_eq!(report.runs.len(), 5);
    assert_eq!(report.faults(), 0);
    assert!(report.gains.is_empty());
    assert!(!dir.path().join("gains.csv").exists());
    assert!(!dir.path().join("trace.csv").exists());

    let (header, rows) = read(&dir.path().join("runs.csv"));
    assert_eq!(rows.len(), 5);
    let (executed, status, seed) = (
        column(&header, "executed"),
        column(&header, "status"),
        column(&header, "seed"),
    );
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(&row[executed], "480");
        assert_eq!(&row[status], "ok");
        assert_eq!(row[seed].parse::<u64>().unwrap(), i as u64 + 1);
    }
}

#[test]
fn comparison_writes_gains() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan(vec![SchedulerKind::A2ws, SchedulerKind::Ctws], dir.path());
    p.repetitions = 3;
    p.trace = true;
    let report = run_experiment(&p).unwrap();
    assert_eq!(report.runs.len(), 6);
    assert_eq!(report.gains.len(), 1);
    assert_eq!(report.gains[0].samples, 3);

    let (header, rows) = read(&dir.path().join("gains.csv"));
    assert_eq!(rows.len(), 1);
    let gain: f64 = rows[0][column(&header, "gain_percent")].parse().unwrap();
    assert!((gain - report.gains[0].gain_percent).abs() < 1e-9);

    let (header, trace) = read(&dir.path().join("trace.csv"));
    assert_eq!(trace.len(), 6 * 480);
    let duration = column(&header, "duration");
    assert!(trace
        .iter()
        .all(|r| r[duration].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn radius_sweep_expands_a2ws_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan(vec![SchedulerKind::A2ws, SchedulerKind::Lw], dir.path());
    p.repetitions = 2;
    p.radius = RadiusPolicy::Sweep(vec![1, 2, 3, 9]);
    let report = run_experiment(&p).unwrap();
    // C1 has 8 ranks, so 3 and 9 both clamp to 3.
    let a2ws: Vec<_> = report
        .runs
        .iter()
        .filter(|r| r.scheduler == "a2ws")
        .collect();
    assert_eq!(a2ws.len(), 3 * 2);
    let lw: Vec<_> = report.runs.iter().filter(|r| r.scheduler == "lw").collect();
    assert_eq!(lw.len(), 2);
    assert!(lw.iter().all(|r| r.radius.is_none()));
    assert_eq!(report.gains.len(), 3);
}

#[test]
fn parallel_runs_match_sequential_ones() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let seq = run_experiment(&plan(vec![SchedulerKind::A2ws], d1.path())).unwrap();
    let mut p = plan(vec![SchedulerKind::A2ws], d2.path());
    p.parallel_runs = 3;
    let par = run_experiment(&p).unwrap();
    let key = |r: &a2ws::bench::RunRow| (r.seed, r.makespan, r.steals);
    assert_eq!(
        seq.runs.iter().map(key).collect::<Vec<_>>(),
        par.runs.iter().map(key).collect::<Vec<_>>()
    );
}

#[test]
fn invalid_plans_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plan(vec![SchedulerKind::A2ws], dir.path());
    p.task_counts = vec![4];
    assert!(run_experiment(&p).is_err());
    let mut p = plan(vec![SchedulerKind::A2ws], dir.path());
    p.radius = RadiusPolicy::Fixed(0);
    assert!(run_experiment(&p).is_err());
    assert!(!dir.path().join("runs.csv").exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let err = run_experiment(&plan(vec![SchedulerKind::Lw], &file.path().join("sub"))).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}
