//! Per-rank task deques on top of two windows: a slot window holding task
//! ids and a packed head/tail cursor window.
//!
//! The owner consumes at the head under a shared lock on its own slots;
//! thieves reserve a block at the tail with one fetch-and-add on the packed
//! word, compensate any over-reservation immediately, copy the reserved
//! slots under a shared lock on the victim, and then append them to their
//! own deque under an exclusive lock. Because every reservation goes through
//! the single linearised cursor word, the slot ranges handed out are
//! pairwise disjoint.

use std::sync::Arc;

use a2ws_core::{HeadTail, TaskId};

use crate::error::WinError;
use crate::oscwin::{CellKind, LockMode, Window, World};

/// One atomic step on a cursor word: the value it replaced and the delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub old: HeadTail,
    pub dh: i32,
    pub dt: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StealOutcome {
    pub stolen: Vec<TaskId>,
    pub requested: u32,
    pub adjusted: u32,
    /// Victim cursors returned by the reserving fetch-and-add.
    pub observed: HeadTail,
    /// Atomic steps applied to the victim's cursor word, in order.
    pub transitions: Vec<Transition>,
}

impl StealOutcome {
    /// Victim cursors right after this steal settled.
    pub fn victim_after(&self) -> HeadTail {
        HeadTail::new(
            self.observed.head,
            self.observed.tail - self.adjusted as i32,
        )
    }
}

/// The deques of every rank in a world.
#[derive(Debug, Clone)]
pub struct DequeSet {
    slots: Window,
    cursors: Window,
    capacity: usize,
}

impl DequeSet {
    /// `capacity` is the global task count: no rank can ever need more slots.
    pub fn new(world: &Arc<World>, capacity: usize, prefix: &str) -> Result<Self, WinError> {
        let slots =
            world.create_window(&format!("{prefix}.slots"), capacity.max(1), CellKind::Word)?;
        let cursors =
            world.create_window(&format!("{prefix}.cursors"), 1, CellKind::PackedHeadTail)?;
        // A zeroed word reads as one queued task; start every deque empty.
        for rank in 0..world.size() {
            cursors.fetch_add_packed(rank, 0, -1)?;
        }
        Ok(Self {
            slots,
            cursors,
            capacity,
        })
    }

    pub fn ranks(&self) -> usize {
        self.slots.world().size()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Fills `rank`'s deque with `tasks`: head 0, tail `len - 1`. Must run
    /// before any worker touches the deque.
    pub fn init_deque(&self, rank: usize, tasks: &[TaskId]) -> Result<(), WinError> {
        if tasks.len() > self.capacity {
            return Err(WinError::Argument("more tasks than deque capacity"));
        }
        let target =
            HeadTail::filled(tasks.len()).map_err(|_| WinError::Argument("too many tasks"))?;
        self.slots.with_lock(rank, LockMode::Exclusive, |l| {
            let ids: Vec<u64> = tasks.iter().map(|t| t.0 as u64).collect();
            l.put(0, &ids)?;
            let now = self.cursors.read_packed(rank)?;
            self.cursors
                .fetch_add_packed(rank, target.head - now.head, target.tail - now.tail)?;
            Ok(())
        })?
    }

    pub fn headtail(&self, rank: usize) -> Result<HeadTail, WinError> {
        self.cursors.read_packed(rank)
    }

    /// Handle for the owner of `rank`'s deque.
    pub fn owner(&self, rank: usize) -> TaskDeque {
        TaskDeque {
            set: self.clone(),
            rank,
        }
    }
}

/// Rank-bound view of the deques: `get_task` works on the own deque, steals
/// target other ranks and land in the own deque.
#[derive(Debug, Clone)]
pub struct TaskDeque {
    set: DequeSet,
    rank: usize,
}

impl TaskDeque {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn headtail(&self) -> Result<HeadTail, WinError> {
        self.set.headtail(self.rank)
    }

    pub fn get_task(&self) -> Result<Option<TaskId>, WinError> {
        Ok(self.get_task_traced()?.0)
    }

    /// Takes the task at the head. An empty deque is detected from the
    /// returned cursors (`tail < head`) and the head move is undone.
    pub fn get_task_traced(&self) -> Result<(Option<TaskId>, Vec<Transition>), WinError> {
        let lock = self.set.slots.lock(self.rank, LockMode::Shared)?;
        let old = self.set.cursors.fetch_add_packed(self.rank, 1, 0)?;
        let mut trace = vec![Transition { old, dh: 1, dt: 0 }];
        if old.head <= old.tail {
            let id = lock.get(old.head as usize, 1)?[0];
            Ok((Some(TaskId(id as u32)), trace))
        } else {
            let undo = self.set.cursors.fetch_add_packed(self.rank, -1, 0)?;
            trace.push(Transition {
                old: undo,
                dh: -1,
                dt: 0,
            });
            Ok((None, trace))
        }
    }

    /// Steals up to `k` tasks from the tail of `victim` and appends them to
    /// the own deque.
    pub fn steal_tasks(&self, victim: usize, k: u32) -> Result<StealOutcome, WinError> {
        if victim >= self.set.ranks() {
            return Err(WinError::Rank {
                rank: victim,
                size: self.set.ranks(),
            });
        }
        if victim == self.rank {
            return Err(WinError::Argument("a rank cannot steal from itself"));
        }
        if k == 0 || k > i32::MAX as u32 {
            return Err(WinError::Argument("steal amount must be positive"));
        }
        let k_signed = k as i32;

        // Reserve, compensate and copy while holding the victim's slots
        // shared: the victim can keep consuming its head but cannot append
        // until the undershoot is repaired and the copy is done.
        let victim_lock = self.set.slots.lock(victim, LockMode::Shared)?;
        let observed = self.set.cursors.fetch_add_packed(victim, 0, -k_signed)?;
        let mut transitions = vec![Transition {
            old: observed,
            dh: 0,
            dt: -k_signed,
        }];
        let adjusted = observed.available().min(k);
        if adjusted < k {
            let refund = (k - adjusted) as i32;
            let old = self.set.cursors.fetch_add_packed(victim, 0, refund)?;
            transitions.push(Transition {
                old,
                dh: 0,
                dt: refund,
            });
        }
        let stolen: Vec<TaskId> = if adjusted > 0 {
            let first = (observed.tail - adjusted as i32 + 1) as usize;
            // Temporary buffer on the thief side.
            victim_lock
                .get(first, adjusted as usize)?
                .into_iter()
                .map(|v| TaskId(v as u32))
                .collect()
        } else {
            Vec::new()
        };
        drop(victim_lock);

        if adjusted > 0 {
            self.append(&stolen)?;
        }
        Ok(StealOutcome {
            stolen,
            requested: k,
            adjusted,
            observed,
            transitions,
        })
    }

    fn append(&self, tasks: &[TaskId]) -> Result<(), WinError> {
        let lock = self.set.slots.lock(self.rank, LockMode::Exclusive)?;
        let ht = self.set.cursors.read_packed(self.rank)?;
        let at = (ht.tail + 1).max(ht.head) as usize;
        let ids: Vec<u64> = tasks.iter().map(|t| t.0 as u64).collect();
        lock.put(at, &ids)?;
        let grow = (at as i32 + tasks.len() as i32 - 1) - ht.tail;
        self.set.cursors.fetch_add_packed(self.rank, 0, grow)?;
        Ok(())
    }
}
