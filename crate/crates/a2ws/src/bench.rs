//! Experiment driver behind the command line: expands a plan into runs,
//! executes them and writes `runs.csv`, `trace.csv` and `gains.csv`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use a2ws_core::info::max_radius;
use a2ws_core::{gain, median, ClusterConfig, WorkloadSpec};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::schedulers::{run_schedule, RunResult, RunSpec, SchedulerKind};
use crate::timeline::ExecMode;

/// How A2WS runs choose their radius. Other schedulers ignore it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RadiusPolicy {
    /// 20% of the ring.
    Auto,
    Fixed(usize),
    Sweep(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub schedulers: Vec<SchedulerKind>,
    pub cluster: ClusterConfig,
    pub task_counts: Vec<usize>,
    pub repetitions: usize,
    /// Runs use seeds `first_seed .. first_seed + repetitions`.
    pub first_seed: u64,
    pub radius: RadiusPolicy,
    /// Seconds per task on a one-core node with `alpha = 1`.
    pub base_cost: f64,
    pub sigma: f64,
    pub mode: ExecMode,
    pub latency_us: u64,
    /// Mid-task information exchange period for A2WS, in seconds.
    pub info_interval: Option<f64>,
    pub trace: bool,
    pub out_dir: PathBuf,
    pub parallel_runs: usize,
}

impl ExperimentPlan {
    pub fn new(
        schedulers: Vec<SchedulerKind>,
        cluster: ClusterConfig,
        task_counts: Vec<usize>,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            schedulers,
            cluster,
            task_counts,
            repetitions: 5,
            first_seed: 1,
            radius: RadiusPolicy::Auto,
            base_cost: 0.05,
            sigma: a2ws_core::DEFAULT_SIGMA,
            mode: ExecMode::Virtual,
            latency_us: 0,
            info_interval: None,
            trace: false,
            out_dir: out_dir.into(),
            parallel_runs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedulers.is_empty() {
            return Err(Error::Argument("no scheduler selected".into()));
        }
        if self.task_counts.is_empty() {
            return Err(Error::Argument("no task count given".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Argument("repetitions must be at least 1".into()));
        }
        if self.parallel_runs == 0 {
            return Err(Error::Argument("parallel runs must be at least 1".into()));
        }
        let radii = match &self.radius {
            RadiusPolicy::Auto => vec![],
            RadiusPolicy::Fixed(r) => vec![*r],
            RadiusPolicy::Sweep(list) if list.is_empty() => {
                return Err(Error::Argument("empty radius sweep".into()))
            }
            RadiusPolicy::Sweep(list) => list.clone(),
        };
        if self
            .info_interval
            .is_some_and(|s| !(s.is_finite() && s > 0.0))
        {
            return Err(Error::Argument("info interval must be positive".into()));
        }
        if radii.contains(&0) {
            return Err(Error::Argument("radius values must be positive".into()));
        }
        for &n in &self.task_counts {
            WorkloadSpec::new(n, self.base_cost, self.sigma, self.first_seed)?
                .check_against(&self.cluster)?;
        }
        Ok(())
    }

    /// A2WS radii to run, clamped to the ring and deduplicated in order.
    fn radii(&self) -> Vec<Option<usize>> {
        let clamp = |r: usize| r.clamp(1, max_radius(self.cluster.ranks()));
        match &self.radius {
            RadiusPolicy::Auto => vec![None],
            RadiusPolicy::Fixed(r) => vec![Some(clamp(*r))],
            RadiusPolicy::Sweep(list) => {
                let mut out: Vec<Option<usize>> = Vec::new();
                for r in list.iter().map(|&r| Some(clamp(r))) {
                    if !out.contains(&r) {
                        out.push(r);
                    }
                }
                out
            }
        }
    }

    /// Every run of the plan, in output order.
    pub fn expand(&self) -> Result<Vec<RunSpec>> {
        let mut specs = Vec::new();
        for &n in &self.task_counts {
            for &kind in &self.schedulers {
                let radii = if kind == SchedulerKind::A2ws {
                    self.radii()
                } else {
                    vec![None]
                };
                for radius in radii {
                    for seed in self.first_seed..self.first_seed + self.repetitions as u64 {
                        let workload = WorkloadSpec::new(n, self.base_cost, self.sigma, seed)?;
                        specs.push(
                            RunSpec::new(kind, self.cluster.clone(), workload)
                                .with_radius(radius)
                                .with_mode(self.mode)
                                .with_latency(self.latency_us)
                                .with_info_interval(self.info_interval),
                        );
                    }
                }
            }
        }
        Ok(specs)
    }
}

/// One line of `runs.csv`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunRow {
    pub scheduler: String,
    pub config: String,
    pub n_tasks: usize,
    pub radius: Option<usize>,
    pub seed: u64,
    pub makespan: Option<f64>,
    pub steals: Option<u64>,
    pub failed_steals: Option<u64>,
    pub info_sends: Option<u64>,
    pub executed: Option<usize>,
    pub status: String,
    pub mode: String,
}

impl RunRow {
    fn ok(spec: &RunSpec, res: &RunResult) -> Self {
        let audit = res.audit();
        let status = if audit.is_clean() {
            "ok".to_string()
        } else {
            format!(
                "fault: {} missing, {} duplicated",
                audit.missing.len(),
                audit.duplicated.len()
            )
        };
        Self {
            makespan: Some(res.makespan),
            steals: Some(res.steals()),
            failed_steals: Some(res.failed_steals()),
            info_sends: Some(res.info_sends()),
            executed: Some(res.executed()),
            status,
            ..Self::failed(spec, String::new())
        }
    }

    fn failed(spec: &RunSpec, msg: String) -> Self {
        Self {
            scheduler: spec.scheduler.to_string(),
            config: spec.cluster.name.clone(),
            n_tasks: spec.workload.n_tasks,
            radius: (spec.scheduler == SchedulerKind::A2ws).then(|| spec.effective_radius()),
            seed: spec.workload.seed,
            makespan: None,
            steals: None,
            failed_steals: None,
            info_sends: None,
            executed: None,
            status: if msg.is_empty() {
                msg
            } else {
                format!("fault: {msg}")
            },
            mode: spec.mode.to_string(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One line of `trace.csv`: a task as it ran.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub scheduler: String,
    pub config: String,
    pub n_tasks: usize,
    pub radius: Option<usize>,
    pub seed: u64,
    pub rank: usize,
    pub task_id: u32,
    pub start: f64,
    pub duration: f64,
}

/// One line of `gains.csv`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GainRow {
    pub n_tasks: usize,
    pub config: String,
    pub a: String,
    pub b: String,
    /// Radius of the A2WS arm, if either arm is A2WS.
    pub radius: Option<usize>,
    pub gain_percent: f64,
    pub a_median: f64,
    pub b_median: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub runs: Vec<RunRow>,
    pub gains: Vec<GainRow>,
}

impl ExperimentReport {
    pub fn faults(&self) -> usize {
        self.runs.iter().filter(|r| !r.is_ok()).count()
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

/// Medians of `a` against `b`, paired by seed, per task count and A2WS
/// radius. Failed runs drop their seed from both arms.
pub fn gains(rows: &[RunRow], a: SchedulerKind, b: SchedulerKind) -> Result<Vec<GainRow>> {
    type Key = (usize, Option<usize>);
    let arm = |kind: SchedulerKind| {
        let mut by_key: BTreeMap<Key, BTreeMap<u64, f64>> = BTreeMap::new();
        for r in rows
            .iter()
            .filter(|r| r.scheduler == kind.name() && r.is_ok())
        {
            if let Some(m) = r.makespan {
                by_key
                    .entry((r.n_tasks, r.radius))
                    .or_default()
                    .insert(r.seed, m);
            }
        }
        by_key
    };
    let (arm_a, arm_b) = (arm(a), arm(b));
    let config = rows.first().map(|r| r.config.clone()).unwrap_or_default();
    let mut out = Vec::new();
    for (&(n, ra), seeds_a) in &arm_a {
        for (&(nb, rb), seeds_b) in &arm_b {
            if nb != n || (ra.is_some() && rb.is_some() && ra != rb) {
                continue;
            }
            let paired: Vec<(f64, f64)> = seeds_a
                .iter()
                .filter_map(|(s, &ma)| seeds_b.get(s).map(|&mb| (ma, mb)))
                .collect();
            if paired.is_empty() {
                continue;
            }
            let ma: Vec<f64> = paired.iter().map(|p| p.0).collect();
            let mb: Vec<f64> = paired.iter().map(|p| p.1).collect();
            let (a_median, b_median) = (median(&ma).unwrap_or(0.0), median(&mb).unwrap_or(0.0));
            out.push(GainRow {
                n_tasks: n,
                config: config.clone(),
                a: a.to_string(),
                b: b.to_string(),
                radius: ra.or(rb),
                gain_percent: gain(a_median, b_median)?,
                a_median,
                b_median,
                samples: paired.len(),
            });
        }
    }
    Ok(out)
}

/// Runs every spec, `parallel` at a time, and returns results in input order.
fn execute_all(
    specs: &[RunSpec],
    parallel: usize,
    mut on_done: impl FnMut(usize, &RunSpec, &Result<RunResult>) -> Result<()>,
) -> Result<()> {
    if parallel <= 1 {
        for (i, spec) in specs.iter().enumerate() {
            on_done(i, spec, &run_schedule(spec))?;
        }
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunResult>>>> =
        specs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..parallel.min(specs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = specs.get(i) else { break };
                let res = run_schedule(spec);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(res);
            });
        }
    });
    for (i, (spec, slot)) in specs.iter().zip(slots).enumerate() {
        let res = slot
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .unwrap_or_else(|| Err(Error::Worker("run did not report".into())));
        on_done(i, spec, &res)?;
    }
    Ok(())
}

/// Executes the plan and writes its CSV files into `plan.out_dir`. Every
/// run gets exactly one row in `runs.csv`, failed ones included; a gain
/// table is written when the plan compares exactly two schedulers.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    fs::create_dir_all(&plan.out_dir).map_err(|source| Error::Io {
        path: plan.out_dir.display().to_string(),
        source,
    })?;
    let specs = plan.expand()?;

    let mut runs_csv = create(&plan.out_dir.join("runs.csv"))?;
    let mut trace_csv = if plan.trace {
        Some(create(&plan.out_dir.join("trace.csv"))?)
    } else {
        None
    };
    let mut report = ExperimentReport::default();

    execute_all(&specs, plan.parallel_runs, |_, spec, res| {
        let row = match res {
            Ok(r) => {
                if let Some(w) = trace_csv.as_mut() {
                    for (rank, rec) in r.trace() {
                        w.serialize(TraceRow {
                            scheduler: r.scheduler.to_string(),
                            config: r.config.clone(),
                            n_tasks: r.n_tasks,
                            radius: r.radius,
                            seed: r.seed,
                            rank,
                            task_id: rec.task.0,
                            start: rec.start,
                            duration: rec.duration,
                        })?;
                    }
                }
                RunRow::ok(spec, r)
            }
            Err(e) => RunRow::failed(spec, e.to_string()),
        };
        runs_csv.serialize(&row)?;
        runs_csv.flush().map_err(|source| Error::Io {
            path: "runs.csv".into(),
            source,
        })?;
        report.runs.push(row);
        Ok(())
    })?;
    if let Some(mut w) = trace_csv {
        w.flush().map_err(|source| Error::Io {
            path: "trace.csv".into(),
            source,
        })?;
    }

    if let [a, b] = plan.schedulers[..] {
        report.gains = gains(&report.runs, a, b)?;
        let mut w = create(&plan.out_dir.join("gains.csv"))?;
        for g in &report.gains {
            w.serialize(g)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "gains.csv".into(),
            source,
        })?;
    }
    Ok(report)
}
