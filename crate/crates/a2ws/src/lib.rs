//! Threaded runtime for the A2WS load balancer and its two baselines.
//!
//! Each rank of a simulated heterogeneous cluster is a thread. Ranks share
//! state only through emulated one-sided windows ([`oscwin`]), so the deque
//! protocol in [`taskdeque`] and the ring exchange in [`ring`] follow the
//! same locking and atomics discipline a remote-memory implementation would.
//! Task durations come from [`sim`] and are either slept (`ExecMode::Real`)
//! or charged to a deterministic virtual clock ([`timeline`]).
//!
//! [`run_schedule`] executes a single run. [`bench`](mod@bench) expands a plan into
//! repeated runs and writes CSV results; the `a2ws` binary wraps it.

pub mod bench;
pub mod error;
pub mod oscwin;
pub mod ring;
pub mod schedulers;
pub mod sim;
pub mod taskdeque;
pub mod timeline;

pub use error::{Error, Result, WinError};
pub use schedulers::{run_schedule, RunResult, RunSpec, SchedulerKind, WorkerStats};
pub use timeline::ExecMode;
