//! Sequential replay oracle for the packed deque cursor word.
//!
//! Concurrent `get_task`/`steal_tasks` calls on one deque record every
//! fetch-and-add they applied as `(old value, delta)`. Because the word is
//! updated atomically these steps form one total order, which shows up as
//! an Eulerian trail through the states the word passed through. The
//! oracle recovers such a trail with Hierholzer's algorithm, replays it on
//! a plain single-threaded model and derives from the replay which slots
//! each call claimed. The concurrent run must agree with the replay on the
//! final cursors and on every claimed slot set.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use a2ws::oscwin::{self, World};
use a2ws::taskdeque::{DequeSet, Transition};
use a2ws_core::{HeadTail, TaskId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub enum Op {
    Get { got: Option<TaskId> },
    Steal { k: u32, got: Vec<TaskId> },
}

/// One completed call on the shared deque and the steps it applied.
#[derive(Debug, Clone)]
pub struct Record {
    pub op: Op,
    pub steps: Vec<Transition>,
}

fn apply(t: &Transition) -> HeadTail {
    HeadTail::new(t.old.head + t.dh, t.old.tail + t.dt)
}

/// Orders all steps into one trail starting at `start`. Returns the step
/// indices `(record, step)` in trail order, or `None` if no single trail
/// uses every step.
pub fn eulerian_trail(start: HeadTail, records: &[Record]) -> Option<Vec<(usize, usize)>> {
    let mut out: HashMap<HeadTail, Vec<(usize, usize)>> = HashMap::new();
    let mut edges = 0;
    for (r, rec) in records.iter().enumerate() {
        for (s, step) in rec.steps.iter().enumerate() {
            out.entry(step.old).or_default().push((r, s));
            edges += 1;
        }
    }
    // Hierholzer: walk until stuck, then back up and splice in cycles.
    let mut stack: Vec<(HeadTail, Option<(usize, usize)>)> = vec![(start, None)];
    let mut trail: Vec<(usize, usize)> = Vec::with_capacity(edges);
    while let Some(&(node, via)) = stack.last() {
        match out.get_mut(&node).and_then(|v| v.pop()) {
            Some(e) => stack.push((apply(&records[e.0].steps[e.1]), Some(e))),
            None => {
                stack.pop();
                if let Some(e) = via {
                    trail.push(e);
                }
            }
        }
    }
    trail.reverse();
    (trail.len() == edges).then_some(trail)
}

/// What a replay derived for one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub slots: BTreeSet<i32>,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub final_state: HeadTail,
    pub claims: Vec<Claim>,
}

/// Replays the trail on a single-threaded cursor model. Each record's first
/// step decides its claim: a get owns slot `head` if the deque was not
/// empty, a steal of `k` owns the top `min(k, available)` slots.
pub fn replay(
    start: HeadTail,
    records: &[Record],
    trail: &[(usize, usize)],
) -> Result<Verdict, String> {
    let mut state = start;
    let mut claims = vec![
        Claim {
            slots: BTreeSet::new()
        };
        records.len()
    ];
    for &(r, s) in trail {
        let step = &records[r].steps[s];
        if step.old != state {
            return Err(format!(
                "step {r}.{s} expected {:?}, replay is at {state:?}",
                step.old
            ));
        }
        if s == 0 {
            claims[r].slots = match &records[r].op {
                Op::Get { .. } if state.head <= state.tail => BTreeSet::from([state.head]),
                Op::Get { .. } => BTreeSet::new(),
                Op::Steal { k, .. } => {
                    let take = state.available().min(*k) as i32;
                    (state.tail - take + 1..=state.tail).collect()
                }
            };
        }
        state = apply(step);
    }
    Ok(Verdict {
        final_state: state,
        claims,
    })
}

/// Checks a concurrent run against the replay: same final cursors, every
/// call got exactly the tasks in its replayed slots, claims are pairwise
/// disjoint and, together with the slots still queued, cover every slot
/// once.
pub fn check(
    start: HeadTail,
    slots: &[TaskId],
    records: &[Record],
    observed_final: HeadTail,
) -> Result<usize, String> {
    let trail = eulerian_trail(start, records).ok_or("no trail orders all atomic steps")?;
    let verdict = replay(start, records, &trail)?;
    if verdict.final_state != observed_final {
        return Err(format!(
            "final cursors {observed_final:?}, replay {:?}",
            verdict.final_state
        ));
    }
    let mut seen = BTreeSet::new();
    for (rec, claim) in records.iter().zip(&verdict.claims) {
        let expected: Vec<TaskId> = claim.slots.iter().map(|&i| slots[i as usize]).collect();
        let got = match &rec.op {
            Op::Get { got } => got.iter().copied().collect::<Vec<_>>(),
            Op::Steal { got, .. } => got.clone(),
        };
        if got != expected {
            return Err(format!(
                "call {:?} got {got:?}, replay says {expected:?}",
                rec.op
            ));
        }
        for &s in &claim.slots {
            if !seen.insert(s) {
                return Err(format!("slot {s} claimed twice"));
            }
        }
    }
    for s in observed_final.head..=observed_final.tail {
        if !seen.insert(s) {
            return Err(format!("slot {s} both claimed and still queued"));
        }
    }
    let all: BTreeSet<i32> = (0..slots.len() as i32).collect();
    if seen != all {
        return Err(format!(
            "{} slots neither claimed nor queued",
            all.difference(&seen).count()
        ));
    }
    Ok(trail.len())
}

/// One randomized round: the owner of deque 0 calls `get_task` while
/// `thieves` other ranks call `steal_tasks(0, k)`, `ops` calls in total.
/// Injected latency shuffles the interleaving. Returns the number of calls
/// checked.
pub fn random_round(
    seed: u64,
    tasks: usize,
    ops: usize,
    thieves: usize,
    latency_us: u64,
) -> Result<usize, String> {
    let world: Arc<World> = World::with_options(thieves + 1, latency_us, true);
    let set = DequeSet::new(&world, tasks, "replay").map_err(|e| e.to_string())?;
    let slots: Vec<TaskId> = (0..tasks as u32).map(TaskId).collect();
    set.init_deque(0, &slots).map_err(|e| e.to_string())?;
    let start = set.headtail(0).map_err(|e| e.to_string())?;
    let per_thread = ops / (thieves + 1);

    let records: Vec<Record> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..=thieves)
            .map(|rank| {
                let deque = set.owner(rank);
                s.spawn(move || {
                    oscwin::bind_thread(seed.wrapping_mul(31).wrapping_add(rank as u64), false);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (rank as u64) << 32);
                    let mut out = Vec::with_capacity(per_thread);
                    for _ in 0..per_thread {
                        if rank == 0 {
                            let (got, steps) = deque.get_task_traced().expect("get_task");
                            out.push(Record {
                                op: Op::Get { got },
                                steps,
                            });
                        } else {
                            let k = rng.random_range(1..=4);
                            let o = deque.steal_tasks(0, k).expect("steal_tasks");
                            out.push(Record {
                                op: Op::Steal { k, got: o.stolen },
                                steps: o.transitions,
                            });
                        }
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("thread panicked"))
            .collect()
    });
    let observed_final = set.headtail(0).map_err(|e| e.to_string())?;
    let calls = records.len();
    check(start, &slots, &records, observed_final)?;
    Ok(calls)
}
