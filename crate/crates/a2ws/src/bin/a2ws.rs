use std::path::PathBuf;
use std::process::ExitCode;

use a2ws::bench::{run_experiment, ExperimentPlan, RadiusPolicy};
use a2ws::sim::resolve_cluster;
use a2ws::{ExecMode, SchedulerKind};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "a2ws",
    version,
    about = "Run and compare distributed work-stealing schedulers on a simulated heterogeneous cluster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheduler and write runs.csv (and trace.csv with --trace).
    Run {
        /// a2ws, ctws or lw.
        #[arg(long)]
        scheduler: SchedulerKind,
        #[command(flatten)]
        common: Common,
    },
    /// Run two schedulers on the same seeds and write gains.csv as well.
    Compare {
        #[arg(long)]
        a: SchedulerKind,
        #[arg(long)]
        b: SchedulerKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// C1..C5, or @path to a node list with one `cores=<int> [alpha=<float>]` per line.
    #[arg(long)]
    config: String,
    /// Task counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    tasks: Vec<usize>,
    /// Fixed A2WS radius. Defaults to 20% of the ring.
    #[arg(long, conflicts_with = "radius_sweep")]
    radius: Option<usize>,
    /// A2WS radii to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    radius_sweep: Option<Vec<usize>>,
    /// Repetitions per task count, scheduler and radius.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// First seed; repetitions use consecutive seeds.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Milliseconds per task on a one-core node with alpha = 1.
    #[arg(long, default_value_t = 50.0)]
    base_cost: f64,
    /// Overrides every node's scaling exponent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Sigma of the multiplicative lognormal noise on task durations.
    #[arg(long, default_value_t = a2ws_core::DEFAULT_SIGMA)]
    sigma: f64,
    /// `virtual` accounts durations on a simulated clock, `real` sleeps them.
    #[arg(long, default_value_t = ExecMode::Virtual)]
    mode: ExecMode,
    /// Injects up to this many microseconds of latency per window operation.
    #[arg(long, default_value_t = 0)]
    latency_us: u64,
    /// A2WS: also exchange load information every this many milliseconds
    /// while a task runs. Off unless given.
    #[arg(long)]
    info_interval_ms: Option<f64>,
    /// Also write the per-task trace.
    #[arg(long)]
    trace: bool,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    parallel_runs: usize,
}

fn plan(schedulers: Vec<SchedulerKind>, c: Common) -> anyhow::Result<ExperimentPlan> {
    let mut cluster =
        resolve_cluster(&c.config).with_context(|| format!("loading config `{}`", c.config))?;
    if let Some(alpha) = c.alpha {
        cluster = cluster.with_alpha(alpha)?;
    }
    if !(c.base_cost.is_finite() && c.base_cost > 0.0) {
        bail!("--base-cost must be a positive number of milliseconds");
    }
    let mut plan = ExperimentPlan::new(schedulers, cluster, c.tasks, c.out);
    plan.radius = match (c.radius, c.radius_sweep) {
        (Some(r), _) => RadiusPolicy::Fixed(r),
        (None, Some(list)) => RadiusPolicy::Sweep(list),
        (None, None) => RadiusPolicy::Auto,
    };
    plan.repetitions = c.reps;
    plan.first_seed = c.seed;
    plan.base_cost = c.base_cost / 1000.0;
    plan.sigma = c.sigma;
    plan.mode = c.mode;
    plan.latency_us = c.latency_us;
    plan.info_interval = c.info_interval_ms.map(|ms| ms / 1000.0);
    plan.trace = c.trace;
    plan.parallel_runs = c.parallel_runs;
    Ok(plan)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let plan = match cli.command {
        Command::Run { scheduler, common } => plan(vec![scheduler], common)?,
        Command::Compare { a, b, common } => {
            if a == b {
                bail!("--a and --b must name different schedulers");
            }
            plan(vec![a, b], common)?
        }
    };
    let report = run_experiment(&plan)?;
    for row in &report.runs {
        println!(
            "{} {} n={} r={} seed={} makespan={} {}",
            row.scheduler,
            row.config,
            row.n_tasks,
            row.radius.map_or("-".into(), |r| r.to_string()),
            row.seed,
            row.makespan.map_or("-".into(), |m| format!("{m:.4}")),
            row.status
        );
    }
    for g in &report.gains {
        println!(
            "gain {} vs {} n={}: {:+.2}% ({:.4} vs {:.4})",
            g.a, g.b, g.n_tasks, g.gain_percent, g.a_median, g.b_median
        );
    }
    let faults = report.faults();
    if faults > 0 {
        bail!(
            "{faults} of {} runs failed; see runs.csv",
            report.runs.len()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
