//! Cyclic token work stealing. A single token travels around the ring in
//! rank order and carries an upper bound on every rank's queued tasks.
//! Only the holder may steal, and only once its own deque is empty; it
//! takes half (rounded up) of the largest count, lowest rank on ties,
//! ignoring node speed entirely.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use super::{join_all, Harness, RunSpec, StealEvent, WorkerStats};
use crate::error::Result;
use crate::oscwin::{self, CellKind, LockMode, Window};
use crate::sim::{execute_task, DurationSampler};
use crate::timeline::{ExecMode, Participant};

const HOLDER: usize = 0;
const DONE: usize = 1;
const COUNTS: usize = 2;
/// Rank whose window hosts the token.
const HOME: usize = 0;

struct Shared<'a> {
    h: &'a Harness,
    token: Window,
    in_steal: AtomicBool,
    overlaps: AtomicU64,
}

struct TokenState {
    holder: usize,
    done: bool,
    counts: Vec<u64>,
}

impl Shared<'_> {
    fn peek(&self) -> Result<(usize, bool)> {
        let words = self
            .token
            .with_lock(HOME, LockMode::Shared, |l| l.get(HOLDER, 2))??;
        Ok((words[HOLDER] as usize, words[DONE] != 0))
    }

    fn load(&self) -> Result<TokenState> {
        let p = self.h.ranks();
        let words = self
            .token
            .with_lock(HOME, LockMode::Shared, |l| l.get(0, COUNTS + p))??;
        Ok(TokenState {
            holder: words[HOLDER] as usize,
            done: words[DONE] != 0,
            counts: words[COUNTS..].to_vec(),
        })
    }

    fn store(&self, st: &TokenState) -> Result<()> {
        let mut words = vec![st.holder as u64, st.done as u64];
        words.extend_from_slice(&st.counts);
        self.token
            .with_lock(HOME, LockMode::Exclusive, |l| l.put(0, &words))??;
        Ok(())
    }
}

pub(super) fn run(spec: &RunSpec) -> Result<(Vec<WorkerStats>, u64)> {
    let h = Harness::new(spec, 0)?;
    let p = h.ranks();
    let token = h
        .world
        .create_window("ctws.token", COUNTS + p, CellKind::Word)?;
    let shared = Shared {
        h: &h,
        token,
        in_steal: AtomicBool::new(false),
        overlaps: AtomicU64::new(0),
    };
    shared.store(&TokenState {
        holder: 0,
        done: false,
        counts: h.initial_counts.clone(),
    })?;

    let bodies: Vec<Box<dyn FnOnce() -> Result<WorkerStats> + Send + '_>> = (0..p)
        .map(|rank| {
            let shared = &shared;
            Box::new(move || worker(shared, rank))
                as Box<dyn FnOnce() -> Result<WorkerStats> + Send + '_>
        })
        .collect();
    let stats = join_all(bodies)?;
    Ok((stats, shared.overlaps.load(Ordering::Relaxed)))
}

/// The holder's turn: report its own queue, steal if idle, pass the token.
fn hold_token(
    sh: &Shared<'_>,
    rank: usize,
    clock: &Participant,
    stats: &mut WorkerStats,
) -> Result<()> {
    let p = sh.h.ranks();
    let deque = sh.h.deques.owner(rank);
    let mut st = sh.load()?;
    let queued = deque.headtail()?.available() as u64;
    st.counts[rank] = queued;

    if queued == 0 {
        if st.counts.iter().all(|&c| c == 0) {
            st.done = true;
            sh.store(&st)?;
            for r in (0..p).filter(|&r| r != rank) {
                clock.wake(r);
            }
            return Ok(());
        }
        let victim = (0..p)
            .filter(|&r| r != rank)
            .max_by_key(|&r| (st.counts[r], std::cmp::Reverse(r)))
            .unwrap_or(rank);
        let amount = st.counts[victim].div_ceil(2) as u32;

        if sh.in_steal.swap(true, Ordering::SeqCst) {
            sh.overlaps.fetch_add(1, Ordering::Relaxed);
        }
        let start = clock.now();
        let outcome = deque.steal_tasks(victim, amount)?;
        let end = clock.now();
        sh.in_steal.store(false, Ordering::SeqCst);

        stats.steals_attempted += 1;
        if outcome.adjusted > 0 {
            stats.steals_succeeded += 1;
            stats.tasks_stolen += outcome.adjusted as u64;
        }
        stats.steal_events.push(StealEvent {
            start,
            end,
            victim,
            requested: amount,
            obtained: outcome.adjusted,
            criterion: None,
        });
        st.counts[victim] = outcome.victim_after().available() as u64;
        st.counts[rank] = outcome.adjusted as u64;
    }

    st.holder = (rank + 1) % p;
    sh.store(&st)?;
    clock.wake(st.holder);
    Ok(())
}

fn worker(sh: &Shared<'_>, rank: usize) -> Result<WorkerStats> {
    let spec = &sh.h.spec;
    let mut sampler = DurationSampler::new(&spec.cluster.nodes[rank], &spec.workload, rank)?;
    let mut clock = sh.h.timeline.join(rank);
    oscwin::bind_thread(sh.h.thread_seed(rank), clock.mode() == ExecMode::Virtual);
    let deque = sh.h.deques.owner(rank);
    let mut stats = WorkerStats::new(rank);

    loop {
        let (holder, done) = sh.peek()?;
        if done {
            break;
        }
        if holder == rank {
            hold_token(sh, rank, &clock, &mut stats)?;
        }
        match deque.get_task()? {
            Some(task) => {
                let start = clock.now();
                let planned = sampler.next_duration();
                execute_task(&mut clock, planned);
                stats.record_task(task, start, planned, clock.now());
            }
            None => {
                stats.deque_empty_at.get_or_insert(clock.now());
                let (holder, done) = sh.peek()?;
                if done {
                    break;
                }
                if holder != rank {
                    clock.park();
                }
            }
        }
    }
    // Only the holder can steal into this deque, and the run is done only
    // once every count is zero, so nothing can be left behind here.
    debug_assert!(deque.headtail()?.is_empty());
    clock.finish();
    Ok(stats)
}
