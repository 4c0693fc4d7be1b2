//! Run clocks for the two execution modes.
//!
//! In real mode every participant reads a shared wall clock and task
//! execution sleeps. In virtual mode a conductor hands a single turn to the
//! participant with the smallest virtual clock (ties to the lowest index),
//! which makes a run a deterministic discrete-event simulation that still
//! executes on real threads against the real window substrate. A
//! participant only gives up its turn inside [`Participant::spend`],
//! [`Participant::park`] or when it finishes, and never while holding a
//! window lock.

use std::sync::{Arc, Barrier, Condvar, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use crate::oscwin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Real,
    #[default]
    Virtual,
}

impl std::str::FromStr for ExecMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "real" | "real-sleep" => Ok(Self::Real),
            "virtual" => Ok(Self::Virtual),
            other => Err(format!("unknown mode `{other}` (expected real or virtual)")),
        }
    }
}

impl std::fmt::Display for ExecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Real => "real",
            Self::Virtual => "virtual",
        })
    }
}

/// Poll interval of a parked participant in real mode.
const REAL_PARK: Duration = Duration::from_micros(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Runnable,
    Parked,
    Done,
}

#[derive(Debug)]
struct State {
    clocks: Vec<f64>,
    status: Vec<Status>,
    turn: Option<usize>,
    poisoned: bool,
}

impl State {
    fn next_runnable(&self) -> Option<usize> {
        (0..self.clocks.len())
            .filter(|&i| self.status[i] == Status::Runnable)
            .min_by(|&a, &b| self.clocks[a].total_cmp(&self.clocks[b]).then(a.cmp(&b)))
    }
}

#[derive(Debug)]
struct Conductor {
    state: Mutex<State>,
    turns: Vec<Condvar>,
}

impl Conductor {
    fn new(n: usize) -> Self {
        let state = State {
            clocks: vec![0.0; n],
            status: vec![Status::Runnable; n],
            turn: Some(0),
            poisoned: false,
        };
        Self {
            state: Mutex::new(state),
            turns: (0..n).map(|_| Condvar::new()).collect(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn poison(&self, st: &mut State) {
        st.poisoned = true;
        st.turn = None;
        for cv in &self.turns {
            cv.notify_all();
        }
    }

    /// Hands the turn to the next runnable participant. With nobody
    /// runnable but someone parked the run can never progress.
    fn pass_turn(&self, st: &mut State) {
        match st.next_runnable() {
            Some(next) => {
                st.turn = Some(next);
                self.turns[next].notify_one();
            }
            None if st.status.contains(&Status::Parked) => self.poison(st),
            None => st.turn = None,
        }
    }

    fn wait_turn<'a>(&'a self, me: usize, mut st: MutexGuard<'a, State>) -> MutexGuard<'a, State> {
        while st.turn != Some(me) && !st.poisoned {
            st = self.turns[me].wait(st).unwrap_or_else(|e| e.into_inner());
        }
        if st.poisoned {
            drop(st);
            panic!("virtual timeline stalled: every remaining participant is parked or another participant panicked");
        }
        st
    }
}

#[derive(Debug)]
enum Kind {
    Real {
        barrier: Barrier,
        epoch: OnceLock<Instant>,
    },
    Virtual(Conductor),
}

/// Shared clock of one run.
#[derive(Debug, Clone)]
pub struct Timeline {
    kind: Arc<Kind>,
    participants: usize,
}

impl Timeline {
    pub fn new(mode: ExecMode, participants: usize) -> Self {
        let kind = match mode {
            ExecMode::Real => Kind::Real {
                barrier: Barrier::new(participants),
                epoch: OnceLock::new(),
            },
            ExecMode::Virtual => Kind::Virtual(Conductor::new(participants)),
        };
        Self {
            kind: Arc::new(kind),
            participants,
        }
    }

    pub fn mode(&self) -> ExecMode {
        match *self.kind {
            Kind::Real { .. } => ExecMode::Real,
            Kind::Virtual(_) => ExecMode::Virtual,
        }
    }

    pub fn participants(&self) -> usize {
        self.participants
    }

    /// Seat `index` on the timeline. Must be called on the thread that
    /// will use it; blocks until the run starts (real) or until it is this
    /// participant's turn (virtual).
    pub fn join(&self, index: usize) -> Participant {
        assert!(index < self.participants, "participant index out of range");
        match &*self.kind {
            Kind::Real { barrier, epoch } => {
                barrier.wait();
                epoch.get_or_init(Instant::now);
            }
            Kind::Virtual(c) => {
                let st = c.lock();
                drop(c.wait_turn(index, st));
            }
        }
        Participant {
            timeline: self.clone(),
            index,
            finished: false,
        }
    }
}

/// One thread's seat on a [`Timeline`]. Dropping it finishes the
/// participant; dropping it during a panic poisons a virtual timeline so
/// the other threads fail instead of hanging.
#[derive(Debug)]
pub struct Participant {
    timeline: Timeline,
    index: usize,
    finished: bool,
}

impl Participant {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn mode(&self) -> ExecMode {
        self.timeline.mode()
    }

    /// Seconds since the run started.
    pub fn now(&self) -> f64 {
        match &*self.timeline.kind {
            Kind::Real { epoch, .. } => epoch.get().map_or(0.0, |e| e.elapsed().as_secs_f64()),
            Kind::Virtual(c) => c.lock().clocks[self.index],
        }
    }

    /// Spends `dt` seconds of work: a sleep in real mode, a clock advance
    /// plus any pending injected latency in virtual mode.
    pub fn spend(&mut self, dt: f64) {
        match &*self.timeline.kind {
            Kind::Real { .. } => {
                if dt > 0.0 {
                    std::thread::sleep(Duration::from_secs_f64(dt));
                }
            }
            Kind::Virtual(c) => {
                let dt = dt.max(0.0) + oscwin::take_pending_latency();
                let mut st = c.lock();
                st.clocks[self.index] += dt;
                c.pass_turn(&mut st);
                drop(c.wait_turn(self.index, st));
            }
        }
    }

    /// Charges accumulated injected latency without doing other work.
    pub fn settle(&mut self) {
        if self.mode() == ExecMode::Virtual {
            self.spend(0.0);
        }
    }

    /// Waits for a [`Participant::wake`] from another thread. Callers must
    /// re-check their condition afterwards: real mode only polls.
    pub fn park(&mut self) {
        match &*self.timeline.kind {
            Kind::Real { .. } => std::thread::sleep(REAL_PARK),
            Kind::Virtual(c) => {
                let pending = oscwin::take_pending_latency();
                let mut st = c.lock();
                st.clocks[self.index] += pending;
                st.status[self.index] = Status::Parked;
                c.pass_turn(&mut st);
                drop(c.wait_turn(self.index, st));
            }
        }
    }

    /// Makes a parked participant runnable again, no earlier than the
    /// caller's present moment. A no-op in real mode.
    pub fn wake(&self, target: usize) {
        if let Kind::Virtual(c) = &*self.timeline.kind {
            let mut st = c.lock();
            if st.status[target] == Status::Parked {
                let now = st.clocks[self.index];
                st.status[target] = Status::Runnable;
                st.clocks[target] = st.clocks[target].max(now);
            }
        }
    }

    /// Leaves the timeline for good.
    pub fn finish(mut self) {
        self.leave();
    }

    fn leave(&mut self) {
        if std::mem::replace(&mut self.finished, true) {
            return;
        }
        if let Kind::Virtual(c) = &*self.timeline.kind {
            let pending = oscwin::take_pending_latency();
            let mut st = c.lock();
            st.clocks[self.index] += pending;
            st.status[self.index] = Status::Done;
            if std::thread::panicking() {
                c.poison(&mut st);
            } else if st.turn == Some(self.index) {
                c.pass_turn(&mut st);
            }
        }
    }
}

impl Drop for Participant {
    fn drop(&mut self) {
        self.leave();
    }
}
