//! In-process emulation of one-sided communication windows.
//!
//! A [`World`] holds `P` ranks. Creating a [`Window`] is collective: every
//! rank gets an instance of `cell_count` 64-bit cells, and any rank can
//! address any other rank's instance. Data moves through `put`/`get` on a
//! [`WindowLock`] (so an access outside a lock epoch does not type-check)
//! and through the lock-free [`Window::fetch_add_packed`].
//!
//! Ranks are threads. A thread tells the substrate which rank it plays with
//! [`bind_thread`]; that binding seeds the latency injector and selects
//! whether injected latency is slept (real mode) or accumulated for the
//! virtual clock.
//!
//! Lock ordering: a thread holding an exclusive lock never asks for another
//! lock. The steal sequence takes the victim's deque lock shared and then its
//! own deque lock exclusive, which respects that rule. With the watchdog on
//! (`A2WS_LOCK_WATCHDOG=1`, default in debug builds) violations and
//! recursive locking panic instead of deadlocking.

use std::cell::RefCell;
use std::collections::HashSet;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::{Duration, Instant};

use a2ws_core::HeadTail;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::WinError;

pub const LATENCY_ENV: &str = "A2WS_LATENCY_US";
pub const WATCHDOG_ENV: &str = "A2WS_LOCK_WATCHDOG";

pub type WindowId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Word,
    PackedHeadTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockMode {
    Shared,
    Exclusive,
}

/// Communicator of `size` ranks.
#[derive(Debug)]
pub struct World {
    size: usize,
    next_id: AtomicU32,
    names: Mutex<HashSet<String>>,
    latency_us: u64,
    watchdog: bool,
}

impl World {
    /// Latency and watchdog settings come from the environment.
    pub fn new(size: usize) -> Arc<Self> {
        let latency = std::env::var(LATENCY_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        Self::with_latency(size, latency)
    }

    /// `latency_us` is the upper bound of the uniform delay added to every
    /// remote operation.
    pub fn with_latency(size: usize, latency_us: u64) -> Arc<Self> {
        let watchdog = match std::env::var(WATCHDOG_ENV) {
            Ok(v) => v != "0",
            Err(_) => cfg!(debug_assertions),
        };
        Self::with_options(size, latency_us, watchdog)
    }

    /// Fully explicit constructor; ignores the environment.
    pub fn with_options(size: usize, latency_us: u64, watchdog: bool) -> Arc<Self> {
        Arc::new(Self {
            size,
            next_id: AtomicU32::new(0),
            names: Mutex::new(HashSet::new()),
            latency_us,
            watchdog,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn latency_us(&self) -> u64 {
        self.latency_us
    }

    /// Collectively creates a zero-initialised window on every rank.
    pub fn create_window(
        self: &Arc<Self>,
        name: &str,
        cell_count: usize,
        kind: CellKind,
    ) -> Result<Window, WinError> {
        if cell_count == 0 {
            return Err(WinError::Argument("window needs at least one cell"));
        }
        if !self
            .names
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(name.to_owned())
        {
            return Err(WinError::Duplicate(name.to_owned()));
        }
        let instances = (0..self.size)
            .map(|_| Instance {
                cells: (0..cell_count).map(|_| AtomicU64::new(0)).collect(),
                lock: RwLock::new(()),
            })
            .collect();
        Ok(Window(Arc::new(WindowInner {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            name: name.to_owned(),
            cell_count,
            kind,
            world: Arc::clone(self),
            instances,
        })))
    }

    fn remote_op(&self) {
        if self.latency_us == 0 {
            return;
        }
        let delay_ns = SEAT.with(|s| s.borrow_mut().draw_latency_ns(self.latency_us));
        if delay_ns == 0 {
            return;
        }
        let virtual_mode = SEAT.with(|s| s.borrow().virtual_mode);
        if virtual_mode {
            SEAT.with(|s| s.borrow_mut().pending_ns += delay_ns);
        } else {
            let until = Instant::now() + Duration::from_nanos(delay_ns);
            while Instant::now() < until {
                std::thread::yield_now();
            }
        }
    }
}

#[derive(Debug)]
struct Instance {
    cells: Box<[AtomicU64]>,
    lock: RwLock<()>,
}

#[derive(Debug)]
struct WindowInner {
    id: WindowId,
    name: String,
    cell_count: usize,
    kind: CellKind,
    world: Arc<World>,
    instances: Box<[Instance]>,
}

/// Handle to a collectively created window. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Window(Arc<WindowInner>);

impl Window {
    pub fn id(&self) -> WindowId {
        self.0.id
    }
    pub fn name(&self) -> &str {
        &self.0.name
    }
    pub fn cell_count(&self) -> usize {
        self.0.cell_count
    }
    pub fn kind(&self) -> CellKind {
        self.0.kind
    }
    pub fn world(&self) -> &Arc<World> {
        &self.0.world
    }

    fn instance(&self, target: usize) -> Result<&Instance, WinError> {
        self.0.instances.get(target).ok_or(WinError::Rank {
            rank: target,
            size: self.0.instances.len(),
        })
    }

    /// Opens an access epoch on `target`'s instance. Blocks until the mode's
    /// exclusion guarantee holds.
    pub fn lock(&self, target: usize, mode: LockMode) -> Result<WindowLock<'_>, WinError> {
        let inst = self.instance(target)?;
        if self.0.world.watchdog {
            watchdog_check(self.0.id, target, mode);
        }
        let guard = match mode {
            LockMode::Shared => Guard::Shared(inst.lock.read().unwrap_or_else(|e| e.into_inner())),
            LockMode::Exclusive => {
                Guard::Exclusive(inst.lock.write().unwrap_or_else(|e| e.into_inner()))
            }
        };
        SEAT.with(|s| s.borrow_mut().held.push((self.0.id, target, mode)));
        self.0.world.remote_op();
        Ok(WindowLock {
            window: self,
            inst,
            target,
            _guard: guard,
        })
    }

    /// Runs `body` inside a lock epoch; the lock is released on every exit path.
    pub fn with_lock<T>(
        &self,
        target: usize,
        mode: LockMode,
        body: impl FnOnce(&WindowLock<'_>) -> T,
    ) -> Result<T, WinError> {
        let lock = self.lock(target, mode)?;
        Ok(body(&lock))
    }

    fn packed_cell(&self, target: usize) -> Result<&AtomicU64, WinError> {
        if self.0.kind != CellKind::PackedHeadTail {
            return Err(WinError::Contract("packed operation on a scalar window"));
        }
        Ok(&self.instance(target)?.cells[0])
    }

    /// Atomically replaces `(h, t)` by `(h + dh, t + dt)` in `target`'s first
    /// cell and returns the previous value. Lanes never carry into each other.
    pub fn fetch_add_packed(&self, target: usize, dh: i32, dt: i32) -> Result<HeadTail, WinError> {
        let cell = self.packed_cell(target)?;
        self.0.world.remote_op();
        let mut current = cell.load(Ordering::Acquire);
        loop {
            let old = HeadTail::unpack(current);
            let new = old.offset(dh, dt).ok_or(WinError::Contract(
                "head/tail update leaves the packed range",
            ))?;
            match cell.compare_exchange_weak(
                current,
                new.pack(),
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return Ok(old),
                Err(seen) => current = seen,
            }
        }
    }

    /// Atomic read of `target`'s packed cursors.
    pub fn read_packed(&self, target: usize) -> Result<HeadTail, WinError> {
        let cell = self.packed_cell(target)?;
        self.0.world.remote_op();
        Ok(HeadTail::unpack(cell.load(Ordering::Acquire)))
    }
}

enum Guard<'a> {
    Shared(#[allow(dead_code)] RwLockReadGuard<'a, ()>),
    Exclusive(#[allow(dead_code)] RwLockWriteGuard<'a, ()>),
}

/// An open access epoch on one rank's window instance.
pub struct WindowLock<'a> {
    window: &'a Window,
    inst: &'a Instance,
    target: usize,
    _guard: Guard<'a>,
}

impl WindowLock<'_> {
    pub fn target(&self) -> usize {
        self.target
    }

    pub fn mode(&self) -> LockMode {
        match self._guard {
            Guard::Shared(_) => LockMode::Shared,
            Guard::Exclusive(_) => LockMode::Exclusive,
        }
    }

    fn range(&self, offset: usize, len: usize) -> Result<std::ops::Range<usize>, WinError> {
        let cells = self.window.0.cell_count;
        match offset.checked_add(len) {
            Some(end) if end <= cells => Ok(offset..end),
            _ => Err(WinError::Bounds { offset, len, cells }),
        }
    }

    pub fn put(&self, offset: usize, values: &[u64]) -> Result<(), WinError> {
        let range = self.range(offset, values.len())?;
        self.window.0.world.remote_op();
        for (cell, &v) in self.inst.cells[range].iter().zip(values) {
            cell.store(v, Ordering::Release);
        }
        Ok(())
    }

    pub fn get(&self, offset: usize, len: usize) -> Result<Vec<u64>, WinError> {
        let range = self.range(offset, len)?;
        self.window.0.world.remote_op();
        Ok(self.inst.cells[range]
            .iter()
            .map(|c| c.load(Ordering::Acquire))
            .collect())
    }
}

impl Drop for WindowLock<'_> {
    fn drop(&mut self) {
        let key = (self.window.0.id, self.target);
        SEAT.with(|s| {
            let held = &mut s.borrow_mut().held;
            if let Some(pos) = held.iter().rposition(|&(w, t, _)| (w, t) == key) {
                held.remove(pos);
            }
        });
    }
}

fn watchdog_check(window: WindowId, target: usize, mode: LockMode) {
    SEAT.with(|s| {
        let seat = s.borrow();
        if seat.held.iter().any(|&(w, t, _)| w == window && t == target) {
            panic!("recursive lock of window {window} on rank {target}");
        }
        if let Some(&(w, t, _)) = seat.held.iter().find(|&&(_, _, m)| m == LockMode::Exclusive) {
            panic!(
                "lock-ordering violation: {mode:?} lock on window {window}/rank {target} requested while holding \
                 exclusive lock on window {w}/rank {t}"
            );
        }
    });
}

#[derive(Default)]
struct Seat {
    rng: Option<ChaCha8Rng>,
    virtual_mode: bool,
    pending_ns: u64,
    held: Vec<(WindowId, usize, LockMode)>,
}

impl Seat {
    fn draw_latency_ns(&mut self, max_us: u64) -> u64 {
        let rng = self
            .rng
            .get_or_insert_with(|| ChaCha8Rng::from_rng(&mut rand::rng()));
        rng.random_range(0..=max_us * 1_000)
    }
}

thread_local! {
    static SEAT: RefCell<Seat> = RefCell::new(Seat::default());
}

/// Declares that the current thread acts for one rank. `seed` makes the
/// injected latency reproducible; `virtual_mode` accumulates it instead of
/// waiting.
pub fn bind_thread(seed: u64, virtual_mode: bool) {
    SEAT.with(|s| {
        let mut seat = s.borrow_mut();
        seat.rng = Some(ChaCha8Rng::seed_from_u64(seed));
        seat.virtual_mode = virtual_mode;
        seat.pending_ns = 0;
    });
}

/// Injected latency accumulated in virtual mode since the last call, in seconds.
pub fn take_pending_latency() -> f64 {
    SEAT.with(|s| std::mem::take(&mut s.borrow_mut().pending_ns)) as f64 * 1e-9
}
