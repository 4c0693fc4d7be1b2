//! The three schedulers and the common run harness.
//!
//! Every scheduler runs one thread per rank against the same deque and
//! window substrate, draws task durations from the same per-rank streams
//! and reports the same [`RunResult`].

mod a2ws;
mod ctws;
mod lw;

pub use lw::default_leader_slowdown;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use a2ws_core::info::max_radius;
use a2ws_core::{block_partition, radius_default, ClusterConfig, Criterion, TaskId, WorkloadSpec};

use crate::error::{Error, Result};
use crate::oscwin::World;
use crate::taskdeque::DequeSet;
use crate::timeline::{ExecMode, Timeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedulerKind {
    A2ws,
    Ctws,
    Lw,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [Self::A2ws, Self::Ctws, Self::Lw];

    pub fn name(self) -> &'static str {
        match self {
            Self::A2ws => "a2ws",
            Self::Ctws => "ctws",
            Self::Lw => "lw",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scheduler `{s}` (expected a2ws, ctws or lw)"))
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub scheduler: SchedulerKind,
    pub cluster: ClusterConfig,
    pub workload: WorkloadSpec,
    /// A2WS radius; `None` picks 20% of the ring. Clamped to the legal range.
    pub radius: Option<usize>,
    pub mode: ExecMode,
    /// Upper bound of the injected per-operation latency in microseconds.
    pub latency_us: u64,
    /// Duration multiplier for the worker sharing rank 0 with the LW leader.
    /// `None` uses `c/(c-1)` for a `c`-core node and 2 for a single core.
    pub leader_slowdown: Option<f64>,
    /// A2WS only: while a task runs, also merge and forward information
    /// every this many seconds. Off by default, so information moves only
    /// between tasks.
    pub info_interval: Option<f64>,
}

impl RunSpec {
    pub fn new(scheduler: SchedulerKind, cluster: ClusterConfig, workload: WorkloadSpec) -> Self {
        Self {
            scheduler,
            cluster,
            workload,
            radius: None,
            mode: ExecMode::Virtual,
            latency_us: 0,
            leader_slowdown: None,
            info_interval: None,
        }
    }

    pub fn with_radius(mut self, radius: Option<usize>) -> Self {
        self.radius = radius;
        self
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_latency(mut self, latency_us: u64) -> Self {
        self.latency_us = latency_us;
        self
    }

    pub fn with_info_interval(mut self, seconds: Option<f64>) -> Self {
        self.info_interval = seconds;
        self
    }

    /// Radius the A2WS run will actually use.
    pub fn effective_radius(&self) -> usize {
        let p = self.cluster.ranks();
        self.radius
            .map_or_else(|| radius_default(p), |r| r.clamp(1, max_radius(p)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskRecord {
    pub task: TaskId,
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StealEvent {
    pub start: f64,
    pub end: f64,
    pub victim: usize,
    pub requested: u32,
    pub obtained: u32,
    /// Selection rule behind an A2WS steal.
    pub criterion: Option<Criterion>,
}

/// One LW request and the leader's answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchRecord {
    pub worker: usize,
    pub requested_at: f64,
    pub replied_at: f64,
    /// Tasks still undispatched when the request arrived.
    pub pending: usize,
    pub got_task: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkerStats {
    pub rank: usize,
    pub executed: Vec<TaskRecord>,
    pub steals_attempted: u64,
    pub steals_succeeded: u64,
    pub tasks_stolen: u64,
    pub info_sends: u64,
    pub steal_events: Vec<StealEvent>,
    pub first_completion: Option<f64>,
    /// First moment the rank found its own deque empty.
    pub deque_empty_at: Option<f64>,
    /// Completion time of the rank's last task.
    pub finish_time: f64,
}

impl WorkerStats {
    fn new(rank: usize) -> Self {
        Self {
            rank,
            ..Self::default()
        }
    }

    fn record_task(&mut self, task: TaskId, start: f64, duration: f64, end: f64) {
        self.executed.push(TaskRecord {
            task,
            start,
            duration,
        });
        self.first_completion.get_or_insert(end);
        self.finish_time = end;
    }
}

/// Tasks lost or run more than once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionAudit {
    pub missing: Vec<TaskId>,
    pub duplicated: Vec<TaskId>,
}

impl ExecutionAudit {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.duplicated.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scheduler: SchedulerKind,
    pub config: String,
    pub n_tasks: usize,
    /// Radius used by A2WS; `None` for the baselines.
    pub radius: Option<usize>,
    pub seed: u64,
    pub mode: ExecMode,
    pub makespan: f64,
    pub workers: Vec<WorkerStats>,
    pub writer_violations: u64,
    /// CTWS steals that began while another was in progress.
    pub overlapping_steals: u64,
    pub dispatches: Vec<DispatchRecord>,
}

impl RunResult {
    pub fn steals(&self) -> u64 {
        self.workers.iter().map(|w| w.steals_succeeded).sum()
    }

    pub fn failed_steals(&self) -> u64 {
        self.workers
            .iter()
            .map(|w| w.steals_attempted - w.steals_succeeded)
            .sum()
    }

    pub fn info_sends(&self) -> u64 {
        self.workers.iter().map(|w| w.info_sends).sum()
    }

    pub fn executed(&self) -> usize {
        self.workers.iter().map(|w| w.executed.len()).sum()
    }

    pub fn executed_per_rank(&self) -> Vec<usize> {
        self.workers.iter().map(|w| w.executed.len()).collect()
    }

    pub fn audit(&self) -> ExecutionAudit {
        let mut counts = vec![0u32; self.n_tasks];
        let mut stray = Vec::new();
        for rec in self.workers.iter().flat_map(|w| &w.executed) {
            match counts.get_mut(rec.task.index()) {
                Some(c) => *c += 1,
                None => stray.push(rec.task),
            }
        }
        let mut audit = ExecutionAudit::default();
        for (i, &c) in counts.iter().enumerate() {
            match c {
                0 => audit.missing.push(TaskId(i as u32)),
                1 => {}
                _ => audit.duplicated.push(TaskId(i as u32)),
            }
        }
        audit.duplicated.extend(stray);
        audit
    }

    /// LW requests that waited for a reply although tasks were left and
    /// the wait exceeded `bound` seconds.
    pub fn starved_requests(&self, bound: f64) -> usize {
        self.dispatches
            .iter()
            .filter(|d| d.pending > 0 && d.replied_at - d.requested_at > bound)
            .count()
    }

    /// Pairs of CTWS steal intervals that intersect in time.
    pub fn intersecting_steal_intervals(&self) -> usize {
        let mut spans: Vec<(f64, f64)> = self
            .workers
            .iter()
            .flat_map(|w| w.steal_events.iter().map(|e| (e.start, e.end)))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        spans.windows(2).filter(|p| p[1].0 < p[0].1).count()
    }

    /// `(rank, record)` for every executed task, ordered by rank and start.
    pub fn trace(&self) -> Vec<(usize, TaskRecord)> {
        let mut out: Vec<(usize, TaskRecord)> = self
            .workers
            .iter()
            .flat_map(|w| w.executed.iter().map(move |r| (w.rank, *r)))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.start.total_cmp(&b.1.start)));
        out
    }
}

/// Pieces shared by all schedulers of one run.
pub(crate) struct Harness {
    pub spec: RunSpec,
    pub world: Arc<World>,
    pub deques: DequeSet,
    pub timeline: Timeline,
    pub initial_counts: Vec<u64>,
}

impl Harness {
    fn new(spec: &RunSpec, extra_participants: usize) -> Result<Self> {
        let p = spec.cluster.ranks();
        let n = spec.workload.n_tasks;
        let world = World::with_latency(p, spec.latency_us);
        let deques = DequeSet::new(&world, n, "deque")?;
        let mut initial_counts = Vec::with_capacity(p);
        for (rank, range) in block_partition(n, p).into_iter().enumerate() {
            let ids: Vec<TaskId> = range.map(|i| TaskId(i as u32)).collect();
            deques.init_deque(rank, &ids)?;
            initial_counts.push(ids.len() as u64);
        }
        Ok(Self {
            spec: spec.clone(),
            world,
            deques,
            timeline: Timeline::new(spec.mode, p + extra_participants),
            initial_counts,
        })
    }

    fn ranks(&self) -> usize {
        self.spec.cluster.ranks()
    }

    /// Seed for the latency injector of participant `index`.
    fn thread_seed(&self, index: usize) -> u64 {
        self.spec.workload.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (index as u64).wrapping_add(0x5151)
    }
}

const STALL: &str = "virtual timeline stalled";

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    panic
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| panic.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs `bodies` on scoped threads and collects their results,
/// turning a panic into [`Error::Worker`].
pub(crate) fn join_all<T: Send>(
    bodies: Vec<Box<dyn FnOnce() -> Result<T> + Send + '_>>,
) -> Result<Vec<T>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = bodies
            .into_iter()
            .enumerate()
            .map(|(i, body)| {
                std::thread::Builder::new()
                    .name(format!("rank-{i}"))
                    .stack_size(512 * 1024)
                    .spawn_scoped(s, body)
                    .map_err(|e| Error::Worker(e.to_string()))
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        let mut errors = Vec::new();
        for h in handles {
            match h.join() {
                Ok(Ok(v)) => out.push(v),
                Ok(Err(e)) => errors.push(e),
                Err(panic) => errors.push(Error::Worker(panic_message(panic.as_ref()))),
            }
        }
        if errors.is_empty() {
            return Ok(out);
        }
        // A poisoned timeline makes every other thread fail too; report
        // the original cause.
        let cause = errors
            .iter()
            .position(|e| !e.to_string().contains(STALL))
            .unwrap_or(0);
        Err(errors.swap_remove(cause))
    })
}

/// Executes one run to completion.
pub fn run_schedule(spec: &RunSpec) -> Result<RunResult> {
    let p = spec.cluster.ranks();
    if p == 0 {
        return Err(Error::Argument("cluster has no nodes".into()));
    }
    if spec.scheduler != SchedulerKind::Lw && p < 2 {
        return Err(Error::Argument(format!(
            "{} needs at least two ranks",
            spec.scheduler
        )));
    }
    spec.workload.check_against(&spec.cluster)?;
    if spec
        .info_interval
        .is_some_and(|s| !(s.is_finite() && s > 0.0))
    {
        return Err(Error::Argument(
            "info interval must be a positive number of seconds".into(),
        ));
    }

    let (workers, writer_violations, overlapping_steals, dispatches) = match spec.scheduler {
        SchedulerKind::A2ws => {
            let (w, v) = a2ws::run(spec)?;
            (w, v, 0, Vec::new())
        }
        SchedulerKind::Ctws => {
            let (w, o) = ctws::run(spec)?;
            (w, 0, o, Vec::new())
        }
        SchedulerKind::Lw => {
            let (w, d) = lw::run(spec)?;
            (w, 0, 0, d)
        }
    };
    let makespan = workers.iter().map(|w| w.finish_time).fold(0.0, f64::max);
    Ok(RunResult {
        scheduler: spec.scheduler,
        config: spec.cluster.name.clone(),
        n_tasks: spec.workload.n_tasks,
        radius: (spec.scheduler == SchedulerKind::A2ws).then(|| spec.effective_radius()),
        seed: spec.workload.seed,
        mode: spec.mode,
        makespan,
        workers,
        writer_violations,
        overlapping_steals,
        dispatches,
    })
}
