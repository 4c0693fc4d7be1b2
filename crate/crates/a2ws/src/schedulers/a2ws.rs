use a2ws_core::{select_victim, steal_rate, FlagCause, RateView, RunningMean};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{join_all, Harness, RunSpec, StealEvent, WorkerStats};
use crate::error::Result;
use crate::oscwin;
use crate::ring::{InfoRing, RingAgent};
use crate::sim::{execute_task, DurationSampler};
use crate::taskdeque::TaskDeque;
use crate::timeline::{ExecMode, Participant};

/// Virtual cost of an iteration that neither ran a task nor stole one:
/// roughly one remote round trip.
const IDLE_COST: f64 = 20e-6;

fn stamp(clock: &Participant) -> u64 {
    (clock.now() * 1e9) as u64
}

pub(super) fn run(spec: &RunSpec) -> Result<(Vec<WorkerStats>, u64)> {
    let h = Harness::new(spec, 0)?;
    let ring = InfoRing::new(&h.world, spec.effective_radius(), "info")?;
    let bodies: Vec<Box<dyn FnOnce() -> Result<WorkerStats> + Send + '_>> = (0..h.ranks())
        .map(|rank| {
            let (h, ring) = (&h, &ring);
            Box::new(move || {
                let agent = ring.agent(rank, &h.initial_counts)?;
                worker(h, rank, agent)
            }) as Box<dyn FnOnce() -> Result<WorkerStats> + Send + '_>
        })
        .collect();
    let stats = join_all(bodies)?;
    Ok((stats, ring.writer_violations()))
}

struct Worker {
    rank: usize,
    deque: TaskDeque,
    agent: RingAgent,
    mean: RunningMean,
    completed: u64,
    rng: ChaCha8Rng,
    stats: WorkerStats,
}

impl Worker {
    /// Own task count: tasks taken from the deque plus tasks still queued.
    fn own_count(&self) -> Result<u64> {
        Ok(self.deque.headtail()?.assigned() as u64)
    }

    fn refresh_self(&mut self, clock: &Participant) -> Result<()> {
        let n = self.own_count()?;
        if n < self.agent.vector().own().info.n {
            self.agent
                .mark_outdated(self.rank, FlagCause::VictimDetectedTheft)?;
        }
        let runtime_changed = self.agent.vector().own().info.mean_runtime != self.mean.mean();
        self.agent
            .update_self(n, self.mean.mean(), self.completed, stamp(clock));
        if runtime_changed {
            self.agent
                .mark_outdated(self.rank, FlagCause::SelfRuntimeUpdate)?;
        }
        Ok(())
    }

    /// Decides whether and from whom to steal, and steals. Returns whether
    /// a steal was attempted.
    fn try_steal(&mut self, clock: &Participant) -> Result<bool> {
        let elapsed = clock.now().max(f64::MIN_POSITIVE);
        let view = RateView::observe(self.rank, elapsed, self.agent.vector().window_infos());
        let s_self = steal_rate(&view, self.rank)?;
        let Some(decision) = select_victim(&view, s_self, &mut self.rng) else {
            return Ok(false);
        };
        let start = clock.now();
        let outcome = self
            .deque
            .steal_tasks(decision.victim, decision.amount.min(u32::MAX as u64) as u32)?;
        self.stats.steals_attempted += 1;

        // What the cursors revealed replaces our estimate of the victim.
        let after = outcome.victim_after();
        let completed_floor = after.head.saturating_sub(1).max(0) as u64;
        self.agent.observe(
            decision.victim,
            after.assigned() as u64,
            completed_floor,
            stamp(clock),
        )?;

        if outcome.adjusted > 0 {
            self.stats.steals_succeeded += 1;
            self.stats.tasks_stolen += outcome.adjusted as u64;
            self.agent.mark_outdated(
                self.rank,
                FlagCause::ThiefStole {
                    victim: decision.victim,
                },
            )?;
            self.agent.mark_outdated(
                decision.victim,
                FlagCause::ThiefStole {
                    victim: decision.victim,
                },
            )?;
        } else {
            self.agent.mark_outdated(
                decision.victim,
                FlagCause::StealFailed {
                    victim: decision.victim,
                },
            )?;
        }
        self.stats.steal_events.push(StealEvent {
            start,
            end: clock.now(),
            victim: decision.victim,
            requested: outcome.requested,
            obtained: outcome.adjusted,
            criterion: Some(decision.criterion),
        });
        Ok(true)
    }
}

fn worker(h: &Harness, rank: usize, agent: RingAgent) -> Result<WorkerStats> {
    let spec = &h.spec;
    let mut sampler = DurationSampler::new(&spec.cluster.nodes[rank], &spec.workload, rank)?;
    let mut clock = h.timeline.join(rank);
    oscwin::bind_thread(h.thread_seed(rank), clock.mode() == ExecMode::Virtual);

    let mut w = Worker {
        rank,
        deque: h.deques.owner(rank),
        agent,
        mean: RunningMean::default(),
        completed: 0,
        rng: ChaCha8Rng::seed_from_u64(spec.workload.seed.rotate_left(17) ^ rank as u64),
        stats: WorkerStats::new(rank),
    };
    // Safety valve against a rank chasing stale information forever.
    let idle_cap = 2 * h.ranks() + 8;
    let mut idle = 0;

    loop {
        w.refresh_self(&clock)?;
        w.agent.merge_incoming()?;
        let attempted = if w.completed >= 1 {
            w.try_steal(&clock)?
        } else {
            false
        };

        let task = w.deque.get_task()?;
        w.refresh_self(&clock)?;

        let Some(task) = task else {
            w.stats.deque_empty_at.get_or_insert(clock.now());
            if !attempted || idle >= idle_cap {
                break;
            }
            idle += 1;
            w.stats.info_sends += w.agent.communicate()? as u64;
            match clock.mode() {
                ExecMode::Virtual => clock.spend(IDLE_COST),
                ExecMode::Real => std::thread::yield_now(),
            }
            continue;
        };
        idle = 0;

        let start = clock.now();
        let planned = sampler.next_duration();
        match spec.info_interval {
            None => {
                execute_task(&mut clock, planned);
            }
            Some(step) => {
                let mut left = planned;
                while left > step {
                    execute_task(&mut clock, step);
                    left -= step;
                    w.refresh_self(&clock)?;
                    w.agent.merge_incoming()?;
                    w.stats.info_sends += w.agent.communicate()? as u64;
                }
                execute_task(&mut clock, left);
            }
        }
        let end = clock.now();
        w.mean.record(end - start);
        w.completed += 1;
        w.stats.record_task(task, start, planned, end);
        // Publish the runtime just measured, not the one from the task before.
        w.refresh_self(&clock)?;
        w.stats.info_sends += w.agent.communicate()? as u64;
    }
    w.stats.info_sends += w.agent.communicate()? as u64;
    clock.finish();
    Ok(w.stats)
}
