//! Radius-limited load information on a bidirectional ring.
//!
//! Rank `i` keeps entries for ranks `i-R ..= i+R` (mod `P`). Writes into
//! `i`'s vector are partitioned so no two ranks ever write the same
//! position: `p_{i-1}` owns positions `i-R ..= i-1`, `i` owns position
//! `i`, and `p_{i+1}` owns `i+1 ..= i+R`. Each rank therefore sends the
//! positions `i-R+1 ..= i` to its right neighbour and `i ..= i+R-1` to its
//! left neighbour, its own index included in both.

use alloc::vec::Vec;

use crate::Error;

/// What a rank knows about one rank's load.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessInfo {
    /// Executed plus queued tasks.
    pub n: u64,
    /// Mean task runtime in seconds; `None` until the rank finishes a task.
    pub mean_runtime: Option<f64>,
    pub completed: u64,
}

impl ProcessInfo {
    pub fn initial(n: u64) -> Self {
        Self {
            n,
            mean_runtime: None,
            completed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoEntry {
    pub info: ProcessInfo,
    /// Stamp of the rank's own latest report. Relayed reports that are not
    /// newer are ignored.
    pub version: u64,
    /// Stamp of the task count, which thieves may also learn first-hand.
    pub count_version: u64,
    /// Needs to be communicated to the neighbours.
    pub dirty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendDirection {
    /// Towards `i - 1`.
    Left,
    /// Towards `i + 1`.
    Right,
}

/// Why a position became outdated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagCause {
    /// The rank refreshed its own mean runtime.
    SelfRuntimeUpdate,
    /// The rank stole from `victim`: both the thief and victim entries change.
    ThiefStole { victim: usize },
    /// A steal against `victim` came back empty-handed.
    StealFailed { victim: usize },
    /// The rank found its tail below its head.
    VictimDetectedTheft,
}

/// Position of one rank on the ring together with its radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingGeometry {
    rank: usize,
    radius: usize,
    size: usize,
}

impl RingGeometry {
    /// The radius must keep the two writer regions disjoint, i.e.
    /// `2R + 1 <= P` (a two-rank ring with `R = 1` is allowed since both
    /// neighbours are the same rank).
    pub fn new(rank: usize, radius: usize, size: usize) -> Result<Self, Error> {
        if size < 2 {
            return Err(Error::Argument("ring needs at least two ranks"));
        }
        if rank >= size {
            return Err(Error::Argument("rank outside the ring"));
        }
        if radius < 1 || radius > max_radius(size) {
            return Err(Error::Argument("radius must lie in [1, max(1, (P-1)/2)]"));
        }
        Ok(Self { rank, radius, size })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn radius(&self) -> usize {
        self.radius
    }
    pub fn size(&self) -> usize {
        self.size
    }

    /// Signed ring offset of `position` from this rank, in `(-P/2, P/2]`.
    pub fn offset(&self, position: usize) -> i64 {
        let p = self.size as i64;
        let d = (position as i64 - self.rank as i64).rem_euclid(p);
        if d > p / 2 {
            d - p
        } else {
            d
        }
    }

    fn at(&self, offset: i64) -> usize {
        (self.rank as i64 + offset).rem_euclid(self.size as i64) as usize
    }

    pub fn contains(&self, position: usize) -> bool {
        position < self.size && self.offset(position).unsigned_abs() as usize <= self.radius
    }

    /// Positions maintained by this rank, left to right; `min(2R+1, P)` of them.
    pub fn window(&self) -> Vec<usize> {
        let r = self.radius as i64;
        let mut out: Vec<usize> = Vec::with_capacity(2 * self.radius + 1);
        for d in -r..=r {
            let j = self.at(d);
            if !out.contains(&j) {
                out.push(j);
            }
        }
        out
    }

    pub fn neighbor(&self, dir: SendDirection) -> usize {
        match dir {
            SendDirection::Left => self.at(-1),
            SendDirection::Right => self.at(1),
        }
    }

    /// Positions this rank forwards to its neighbour in `dir`.
    pub fn send_range(&self, dir: SendDirection) -> Vec<usize> {
        let r = self.radius as i64;
        let offsets = match dir {
            SendDirection::Right => (1 - r)..=0,
            SendDirection::Left => 0..=(r - 1),
        };
        let mut out: Vec<usize> = Vec::new();
        for d in offsets {
            let j = self.at(d);
            if !out.contains(&j) {
                out.push(j);
            }
        }
        out
    }

    /// The only rank allowed to write `position` of this rank's vector.
    pub fn allowed_writer(&self, position: usize) -> Option<usize> {
        if !self.contains(position) {
            return None;
        }
        Some(match self.offset(position) {
            0 => self.rank,
            d if d < 0 => self.at(-1),
            _ => self.at(1),
        })
    }

    /// Ring distance between two ranks.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let p = self.size;
        let d = (a + p - b % p) % p;
        d.min(p - d)
    }
}

/// Largest radius a `P`-rank ring supports.
pub fn max_radius(size: usize) -> usize {
    ((size.saturating_sub(1)) / 2).max(1)
}

/// `min(2R + 1, P)`.
pub fn subsystem_size(radius: usize, size: usize) -> usize {
    (2 * radius + 1).min(size)
}

/// Positions rank `i` forwards towards `dir`.
pub fn neighbor_send_range(
    i: usize,
    dir: SendDirection,
    radius: usize,
    size: usize,
) -> Result<Vec<usize>, Error> {
    Ok(RingGeometry::new(i, radius, size)?.send_range(dir))
}

/// Arithmetic mean over every completed task.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMean {
    count: u64,
    sum: f64,
}

impl RunningMean {
    pub fn record(&mut self, sample: f64) -> f64 {
        self.count += 1;
        self.sum += sample;
        self.sum / self.count as f64
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Rank-local information vector. Storage is indexed by absolute rank but
/// only window positions are ever read or written.
#[derive(Debug, Clone)]
pub struct InfoVector {
    geom: RingGeometry,
    entries: Vec<InfoEntry>,
}

impl InfoVector {
    /// `initial_counts[j]` is rank `j`'s static allocation, which every rank
    /// knows before the run starts.
    pub fn new(geom: RingGeometry, initial_counts: &[u64]) -> Result<Self, Error> {
        if initial_counts.len() != geom.size() {
            return Err(Error::Argument("one initial count per rank required"));
        }
        let entries = initial_counts
            .iter()
            .map(|&n| InfoEntry {
                info: ProcessInfo::initial(n),
                version: 0,
                count_version: 0,
                dirty: false,
            })
            .collect();
        Ok(Self { geom, entries })
    }

    pub fn geometry(&self) -> &RingGeometry {
        &self.geom
    }

    pub fn get(&self, position: usize) -> Option<&InfoEntry> {
        self.geom
            .contains(position)
            .then(|| &self.entries[position])
    }

    pub fn own(&self) -> &InfoEntry {
        &self.entries[self.geom.rank()]
    }

    /// `(rank, info)` for every window position, left to right.
    pub fn window_infos(&self) -> impl Iterator<Item = (usize, &ProcessInfo)> + '_ {
        self.geom
            .window()
            .into_iter()
            .map(move |j| (j, &self.entries[j].info))
    }

    fn bump(version: &mut u64, stamp: u64) {
        *version = stamp.max(*version + 1);
    }

    /// Refreshes this rank's own entry. Returns `true` if the entry became
    /// dirty: a changed mean runtime, or a task count that dropped because
    /// a thief took tasks.
    pub fn update_self(
        &mut self,
        n: u64,
        mean_runtime: Option<f64>,
        completed: u64,
        stamp: u64,
    ) -> bool {
        let me = self.geom.rank();
        let entry = &mut self.entries[me];
        let next = ProcessInfo {
            n,
            mean_runtime,
            completed,
        };
        if entry.info == next {
            return false;
        }
        let runtime_changed = entry.info.mean_runtime != mean_runtime;
        let robbed = n < entry.info.n;
        entry.info = next;
        Self::bump(&mut entry.version, stamp);
        Self::bump(&mut entry.count_version, stamp);
        if runtime_changed || robbed {
            entry.dirty = true;
        }
        entry.dirty
    }

    /// Sets the outdated flag of `position`, checking the pair against the
    /// four legal (event, position) combinations.
    pub fn mark_outdated(&mut self, position: usize, cause: FlagCause) -> Result<(), Error> {
        let me = self.geom.rank();
        let legal = match cause {
            FlagCause::SelfRuntimeUpdate | FlagCause::VictimDetectedTheft => position == me,
            FlagCause::ThiefStole { victim } => {
                victim != me && (position == me || position == victim)
            }
            FlagCause::StealFailed { victim } => victim != me && position == victim,
        };
        if !legal {
            return Err(Error::Contract(
                "flag cause does not apply to this position",
            ));
        }
        if !self.geom.contains(position) {
            return Err(Error::Contract("position outside the window"));
        }
        self.entries[position].dirty = true;
        Ok(())
    }

    /// Records first-hand knowledge about another rank's task count, e.g.
    /// from cursors seen during a steal. `completed_floor` is a lower bound
    /// on its finished tasks. The mean runtime keeps coming from the rank's
    /// own reports. Does not touch the dirty flag.
    pub fn observe(
        &mut self,
        position: usize,
        n: u64,
        completed_floor: u64,
        stamp: u64,
    ) -> Result<(), Error> {
        if position == self.geom.rank() || !self.geom.contains(position) {
            return Err(Error::Contract(
                "can only observe other ranks inside the window",
            ));
        }
        let entry = &mut self.entries[position];
        entry.info.n = n;
        entry.info.completed = entry.info.completed.max(completed_floor);
        Self::bump(&mut entry.count_version, stamp);
        Ok(())
    }

    /// Applies an entry relayed by a neighbour. The report part (mean
    /// runtime) and the task count are taken independently when newer; the
    /// completed count only ever grows. Any change marks the position dirty
    /// so it keeps travelling around the ring.
    pub fn merge(&mut self, position: usize, incoming: &InfoEntry) -> bool {
        if position == self.geom.rank() || !self.geom.contains(position) {
            return false;
        }
        let entry = &mut self.entries[position];
        let mut changed = false;
        if incoming.version > entry.version {
            entry.info.mean_runtime = incoming.info.mean_runtime;
            entry.version = incoming.version;
            changed = true;
        }
        if incoming.count_version > entry.count_version {
            entry.info.n = incoming.info.n;
            entry.count_version = incoming.count_version;
            changed = true;
        }
        if incoming.info.completed > entry.info.completed {
            entry.info.completed = incoming.info.completed;
            changed = true;
        }
        if changed {
            entry.dirty = true;
        }
        changed
    }

    /// Dirty positions, clearing every flag.
    pub fn take_dirty(&mut self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for j in self.geom.window() {
            if core::mem::take(&mut self.entries[j].dirty) {
                out.push(j);
            }
        }
        out
    }

    pub fn has_dirty(&self) -> bool {
        self.geom
            .window()
            .into_iter()
            .any(|j| self.entries[j].dirty)
    }
}
