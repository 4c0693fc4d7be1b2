//! Leader-workers: an extra thread on rank 0 owns every undispatched task
//! and hands them out one at a time, first come first served.

use std::collections::VecDeque;
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};

use a2ws_core::TaskId;

use super::{join_all, DispatchRecord, Harness, RunSpec, WorkerStats};
use crate::error::{Error, Result};
use crate::oscwin;
use crate::sim::{execute_task, DurationSampler};
use crate::timeline::{ExecMode, Participant};

enum Reply {
    Task(TaskId),
    Done,
}

struct Request {
    worker: usize,
    at: f64,
}

/// Duration multiplier of the worker sharing its node with the leader:
/// one of `c` cores is taken by the dispatcher.
pub fn default_leader_slowdown(cores: u32) -> f64 {
    if cores > 1 {
        cores as f64 / (cores as f64 - 1.0)
    } else {
        2.0
    }
}

pub(super) fn run(spec: &RunSpec) -> Result<(Vec<WorkerStats>, Vec<DispatchRecord>)> {
    // The leader is participant P on the timeline; it uses no deques.
    let h = Harness::new(spec, 1)?;
    let p = h.ranks();
    let (req_tx, req_rx) = mpsc::channel::<Request>();
    let mut reply_txs = Vec::with_capacity(p);
    let mut reply_rxs = Vec::with_capacity(p);
    for _ in 0..p {
        let (tx, rx) = mpsc::channel::<Reply>();
        reply_txs.push(tx);
        reply_rxs.push(rx);
    }
    let slowdown = spec
        .leader_slowdown
        .unwrap_or_else(|| default_leader_slowdown(spec.cluster.nodes[0].cores));
    if !(slowdown.is_finite() && slowdown >= 1.0) {
        return Err(Error::Argument("leader slowdown must be at least 1".into()));
    }

    let leader_out = std::sync::Mutex::new(Vec::new());
    let mut bodies: Vec<Box<dyn FnOnce() -> Result<Option<WorkerStats>> + Send + '_>> =
        Vec::with_capacity(p + 1);
    for (rank, rx) in reply_rxs.into_iter().enumerate() {
        let (h, tx) = (&h, req_tx.clone());
        let factor = if rank == 0 { slowdown } else { 1.0 };
        bodies.push(Box::new(move || worker(h, rank, factor, tx, rx).map(Some)));
    }
    drop(req_tx);
    {
        let (h, leader_out) = (&h, &leader_out);
        bodies.push(Box::new(move || {
            let log = leader(h, req_rx, reply_txs)?;
            *leader_out.lock().unwrap_or_else(|e| e.into_inner()) = log;
            Ok(None)
        }));
    }
    let stats = join_all(bodies)?.into_iter().flatten().collect();
    Ok((
        stats,
        leader_out.into_inner().unwrap_or_else(|e| e.into_inner()),
    ))
}

fn leader(
    h: &Harness,
    requests: Receiver<Request>,
    replies: Vec<Sender<Reply>>,
) -> Result<Vec<DispatchRecord>> {
    let p = h.ranks();
    let mut clock = h.timeline.join(p);
    oscwin::bind_thread(h.thread_seed(p), clock.mode() == ExecMode::Virtual);
    let mut pool: VecDeque<TaskId> = (0..h.spec.workload.n_tasks as u32).map(TaskId).collect();
    let mut released = 0;
    let mut log = Vec::with_capacity(h.spec.workload.n_tasks + p);
    while released < p {
        match requests.try_recv() {
            Ok(req) => {
                let pending = pool.len();
                let reply = match pool.pop_front() {
                    Some(task) => Reply::Task(task),
                    None => {
                        released += 1;
                        Reply::Done
                    }
                };
                let got_task = matches!(reply, Reply::Task(_));
                replies[req.worker]
                    .send(reply)
                    .map_err(|_| Error::Worker("worker hung up".into()))?;
                log.push(DispatchRecord {
                    worker: req.worker,
                    requested_at: req.at,
                    replied_at: clock.now(),
                    pending,
                    got_task,
                });
                clock.wake(req.worker);
            }
            Err(TryRecvError::Empty) => clock.park(),
            Err(TryRecvError::Disconnected) => break,
        }
    }
    clock.finish();
    Ok(log)
}

fn worker(
    h: &Harness,
    rank: usize,
    factor: f64,
    requests: Sender<Request>,
    replies: Receiver<Reply>,
) -> Result<WorkerStats> {
    let spec = &h.spec;
    let leader = h.ranks();
    let mut sampler = DurationSampler::new(&spec.cluster.nodes[rank], &spec.workload, rank)?;
    let mut clock = h.timeline.join(rank);
    oscwin::bind_thread(h.thread_seed(rank), clock.mode() == ExecMode::Virtual);
    let mut stats = WorkerStats::new(rank);
    loop {
        requests
            .send(Request {
                worker: rank,
                at: clock.now(),
            })
            .map_err(|_| Error::Worker("leader hung up".into()))?;
        clock.wake(leader);
        match await_reply(&mut clock, &replies)? {
            Reply::Task(task) => {
                let start = clock.now();
                let planned = sampler.next_duration() * factor;
                execute_task(&mut clock, planned);
                stats.record_task(task, start, planned, clock.now());
            }
            Reply::Done => break,
        }
    }
    clock.finish();
    Ok(stats)
}

fn await_reply(clock: &mut Participant, replies: &Receiver<Reply>) -> Result<Reply> {
    loop {
        match replies.try_recv() {
            Ok(r) => return Ok(r),
            Err(TryRecvError::Empty) => clock.park(),
            Err(TryRecvError::Disconnected) => return Err(Error::Worker("leader hung up".into())),
        }
    }
}
