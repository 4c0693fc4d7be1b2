//! Window-backed transport for the information vectors.
//!
//! Each rank exposes a mailbox window with one six-word record per ring
//! position: task count, mean runtime bits, completed count, report
//! version, count version and the writer's rank plus one. Neighbours put
//! records into it under a shared lock; the owner drains it under an
//! exclusive lock, so it only ever sees whole records.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use a2ws_core::{FlagCause, InfoEntry, InfoVector, ProcessInfo, RingGeometry, SendDirection};

use crate::error::{Error, Result};
use crate::oscwin::{CellKind, LockMode, Window, World};

const WORDS: usize = 6;
const UNKNOWN_RUNTIME: u64 = u64::MAX;

fn encode(entry: &InfoEntry, writer: usize) -> [u64; WORDS] {
    let info = &entry.info;
    let t = info.mean_runtime.map_or(UNKNOWN_RUNTIME, f64::to_bits);
    [
        info.n,
        t,
        info.completed,
        entry.version,
        entry.count_version,
        writer as u64 + 1,
    ]
}

fn decode(words: &[u64]) -> Option<(InfoEntry, usize)> {
    if words[5] == 0 {
        return None;
    }
    let mean_runtime = (words[1] != UNKNOWN_RUNTIME).then(|| f64::from_bits(words[1]));
    let entry = InfoEntry {
        info: ProcessInfo {
            n: words[0],
            mean_runtime,
            completed: words[2],
        },
        version: words[3],
        count_version: words[4],
        dirty: false,
    };
    Some((entry, words[5] as usize - 1))
}

/// The mailboxes of every rank plus a shared violation counter.
#[derive(Debug, Clone)]
pub struct InfoRing {
    window: Window,
    radius: usize,
    violations: Arc<AtomicU64>,
}

impl InfoRing {
    pub fn new(world: &Arc<World>, radius: usize, prefix: &str) -> Result<Self> {
        // Validates the radius against the ring size.
        RingGeometry::new(0, radius, world.size())?;
        let window = world.create_window(
            &format!("{prefix}.info"),
            world.size() * WORDS,
            CellKind::Word,
        )?;
        Ok(Self {
            window,
            radius,
            violations: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Writes that landed on a position the writer does not own.
    pub fn writer_violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }

    pub fn agent(&self, rank: usize, initial_counts: &[u64]) -> Result<RingAgent> {
        let geom = RingGeometry::new(rank, self.radius, self.window.world().size())?;
        Ok(RingAgent {
            ring: self.clone(),
            vector: InfoVector::new(geom, initial_counts)?,
            sends: 0,
        })
    }

    fn violation(&self, what: &str) {
        self.violations.fetch_add(1, Ordering::Relaxed);
        debug_assert!(false, "writer exclusivity violated: {what}");
    }
}

/// One rank's end of the ring.
#[derive(Debug, Clone)]
pub struct RingAgent {
    ring: InfoRing,
    vector: InfoVector,
    sends: u64,
}

impl RingAgent {
    pub fn rank(&self) -> usize {
        self.vector.geometry().rank()
    }

    pub fn vector(&self) -> &InfoVector {
        &self.vector
    }

    pub fn sends(&self) -> u64 {
        self.sends
    }

    pub fn update_self(
        &mut self,
        n: u64,
        mean_runtime: Option<f64>,
        completed: u64,
        stamp: u64,
    ) -> bool {
        self.vector.update_self(n, mean_runtime, completed, stamp)
    }

    pub fn mark_outdated(&mut self, position: usize, cause: FlagCause) -> Result<()> {
        Ok(self.vector.mark_outdated(position, cause)?)
    }

    pub fn observe(
        &mut self,
        position: usize,
        n: u64,
        completed_floor: u64,
        stamp: u64,
    ) -> Result<()> {
        Ok(self.vector.observe(position, n, completed_floor, stamp)?)
    }

    /// Pulls every record the neighbours left in this rank's mailbox into
    /// the local vector. Returns how many positions changed.
    pub fn merge_incoming(&mut self) -> Result<usize> {
        let me = self.rank();
        let geom = *self.vector.geometry();
        let snapshot = self
            .ring
            .window
            .with_lock(me, LockMode::Exclusive, |l| l.get(0, geom.size() * WORDS))??;
        let mut changed = 0;
        for j in geom.window() {
            if j == me {
                continue;
            }
            let Some((entry, writer)) = decode(&snapshot[j * WORDS..(j + 1) * WORDS]) else {
                continue;
            };
            if geom.allowed_writer(j) != Some(writer) {
                self.ring.violation("record written by a foreign rank");
                continue;
            }
            if self.vector.merge(j, &entry) {
                changed += 1;
            }
        }
        Ok(changed)
    }

    /// Sends every dirty position to the neighbour entitled to receive it
    /// and clears all flags. Returns the number of records put.
    pub fn communicate(&mut self) -> Result<usize> {
        if !self.vector.has_dirty() {
            return Ok(0);
        }
        let geom = *self.vector.geometry();
        let dirty = self.vector.take_dirty();
        let me = geom.rank();
        let mut batches: Vec<(usize, Vec<usize>)> = Vec::with_capacity(2);
        for dir in [SendDirection::Right, SendDirection::Left] {
            let to = geom.neighbor(dir);
            let range = geom.send_range(dir);
            let picked: Vec<usize> = dirty
                .iter()
                .copied()
                .filter(|j| range.contains(j))
                .collect();
            match batches.iter_mut().find(|(t, _)| *t == to) {
                Some((_, existing)) => {
                    for j in picked {
                        if !existing.contains(&j) {
                            existing.push(j);
                        }
                    }
                }
                None => batches.push((to, picked)),
            }
        }
        let mut sent = 0;
        for (to, positions) in batches {
            if positions.is_empty() {
                continue;
            }
            let receiver = RingGeometry::new(to, geom.radius(), geom.size())?;
            let lock = self.ring.window.lock(to, LockMode::Shared)?;
            for j in positions {
                if receiver.allowed_writer(j) != Some(me) {
                    self.ring.violation("send outside the writer's region");
                    continue;
                }
                let entry = self
                    .vector
                    .get(j)
                    .ok_or(Error::Argument(format!("position {j} outside window")))?;
                lock.put(j * WORDS, &encode(entry, me))?;
                sent += 1;
            }
        }
        self.sends += sent as u64;
        Ok(sent)
    }
}

/// Synchronous relay rounds on a fresh ring: rank 0 updates its entry,
/// then every round all ranks communicate and afterwards all ranks merge.
/// Returns, per rank, the round after which it held the update (round 0
/// for rank 0 itself), or `None` if it never did within `max_rounds`.
pub fn relay_simulation(
    size: usize,
    radius: usize,
    max_rounds: usize,
) -> Result<Vec<Option<usize>>> {
    let world = World::with_options(size, 0, true);
    let ring = InfoRing::new(&world, radius, "relay")?;
    let counts = vec![10u64; size];
    let mut agents: Vec<RingAgent> = (0..size)
        .map(|r| ring.agent(r, &counts))
        .collect::<Result<_>>()?;
    agents[0].update_self(10, Some(2.5), 1, 1);
    let mut learned = vec![None; size];
    learned[0] = Some(0);
    for round in 1..=max_rounds {
        for a in &mut agents {
            a.communicate()?;
        }
        for a in &mut agents {
            a.merge_incoming()?;
        }
        for (r, a) in agents.iter().enumerate() {
            if learned[r].is_none()
                && a.vector
                    .get(0)
                    .is_some_and(|e| e.info.mean_runtime == Some(2.5))
            {
                learned[r] = Some(round);
            }
        }
    }
    if ring.writer_violations() > 0 {
        return Err(Error::Argument(
            "writer exclusivity violated during relay".into(),
        ));
    }
    Ok(learned)
}
