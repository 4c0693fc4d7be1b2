//! Allocation-only core of the adaptive asynchronous work-stealing (A2WS)
//! load balancer.
//!
//! Everything in this crate is pure computation over plain data:
//!
//! - [`headtail`]: the packed `(head, tail)` deque cursor word and its
//!   lane-wise arithmetic.
//! - [`policy`]: steal rates over a radius-limited window, runtime-aware
//!   rounding and probabilistic victim selection.
//! - [`info`]: per-rank information vectors for the bidirectional ring,
//!   with dirty flags and writer-exclusive send ranges.
//! - [`cluster`]: heterogeneous node specs, the C1..C5 built-ins, the
//!   deterministic speed model and the ideal-runtime lower envelope.
//! - [`metrics`]: run-level numbers (gain, median, default radius).
//!
//! Threads, windows, clocks and file formats live in the `a2ws` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cluster;
pub mod error;
pub mod headtail;
pub mod info;
pub mod metrics;
pub mod partition;
pub mod policy;

pub use cluster::{
    builtin_config, ideal_runtime, nominal_duration, ClusterConfig, NodeSpec, WorkloadSpec,
    DEFAULT_ALPHA, DEFAULT_SIGMA,
};
pub use error::Error;
pub use headtail::HeadTail;
pub use info::{
    FlagCause, InfoEntry, InfoVector, ProcessInfo, RingGeometry, RunningMean, SendDirection,
};
pub use metrics::{gain, median, radius_default};
pub use partition::block_partition;
pub use policy::{
    effective_runtime, gamma, pair_rate, pair_runtime, round_steal, select_victim, steal_rate,
    Criterion, RateEntry, RateView, Scalar, StealDecision,
};

/// Global task identifier in `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u32);

impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl core::fmt::Display for TaskId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}
