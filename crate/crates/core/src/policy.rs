//! Steal-rate arithmetic and victim selection.
//!
//! A rank's steal rate is the gap between its speed-weighted fair share of
//! the tasks visible in its window and the tasks it currently holds:
//!
//! ```text
//! S_i = (sum_w n_j) / (t_i * sum_w 1/t_j) - n_i
//! ```
//!
//! Positive means the rank should take tasks, negative means it holds a
//! surplus. `n_j` counts executed plus queued tasks, `t_j` is the mean task
//! runtime. The rate functions are generic over [`Scalar`] so they can be
//! evaluated in exact rational arithmetic as well as in `f64`.

use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use rand_core::RngCore;

use crate::info::ProcessInfo;
use crate::Error;

/// Field operations the rate formulas need.
pub trait Scalar:
    Clone
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn floor(&self) -> Self;
    fn ceil(&self) -> Self;
    /// Truncating conversion; only called on integral values.
    fn to_i64(&self) -> i64;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn floor(&self) -> Self {
        libm::floor(*self)
    }
    fn ceil(&self) -> Self {
        libm::ceil(*self)
    }
    fn to_i64(&self) -> i64 {
        *self as i64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

/// One rank as seen by a thief: task count, effective runtime, and how
/// many of its tasks the thief believes are still stealable.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEntry<S = f64> {
    pub rank: usize,
    pub n: S,
    pub t: S,
    pub stealable: u64,
}

/// Snapshot of a rank's window taken between tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct RateView<S = f64> {
    pub self_rank: usize,
    /// Seconds since the run started on the observing rank.
    pub elapsed: S,
    pub entries: Vec<RateEntry<S>>,
}

impl<S: Scalar> RateView<S> {
    pub fn entry(&self, rank: usize) -> Option<&RateEntry<S>> {
        self.entries.iter().find(|e| e.rank == rank)
    }
}

impl RateView<f64> {
    /// Builds a view from information-vector entries, substituting the
    /// elapsed wall time for ranks that have not finished a task yet.
    pub fn observe<'a>(
        self_rank: usize,
        elapsed: f64,
        window: impl IntoIterator<Item = (usize, &'a ProcessInfo)>,
    ) -> Self {
        let entries = window
            .into_iter()
            .map(|(rank, info)| RateEntry {
                rank,
                n: info.n as f64,
                t: effective_runtime(info, elapsed),
                // The task in progress is not stealable.
                stealable: info.n.saturating_sub(info.completed).saturating_sub(1),
            })
            .collect();
        Self {
            self_rank,
            elapsed,
            entries,
        }
    }
}

/// Mean runtime if the rank has completed a task, otherwise the observer's
/// elapsed wall time: a silent rank is modelled as if its first task takes
/// as long as the run has lasted so far.
pub fn effective_runtime(info: &ProcessInfo, elapsed: f64) -> f64 {
    match info.mean_runtime {
        Some(t) if info.completed >= 1 => t,
        _ => elapsed,
    }
}

/// Steal rate of `target` over the whole view.
pub fn steal_rate<S: Scalar>(view: &RateView<S>, target: usize) -> Result<S, Error> {
    if view.entries.is_empty() {
        return Err(Error::Contract("steal rate over an empty window"));
    }
    let me = view
        .entry(target)
        .ok_or(Error::Contract("target outside the window"))?;
    let mut total_tasks = S::zero();
    let mut total_speed = S::zero();
    for e in &view.entries {
        total_tasks = total_tasks + e.n.clone();
        total_speed = total_speed + S::one() / e.t.clone();
    }
    Ok(total_tasks / (me.t.clone() * total_speed) - me.n.clone())
}

/// In-pair steal rate of thief `i` against victim `j`:
/// `(n_i + n_j) t_j / (t_j + t_i) - n_i`.
pub fn pair_rate<S: Scalar>(thief: (S, S), victim: (S, S)) -> S {
    let (n_i, t_i) = thief;
    let (n_j, t_j) = victim;
    (n_i.clone() + n_j) * t_j.clone() / (t_j + t_i) - n_i
}

/// Predicted completion time `(n + s) * t` of a rank that ends up holding
/// `n + s` tasks of `t` seconds each.
pub fn pair_runtime<S: Scalar>(n: S, t: S, s: S) -> S {
    (n + s) * t
}

/// Expected runtime of a thief/victim pair after moving `s` tasks.
pub fn gamma<S: Scalar>(s: &S, thief: &(S, S), victim: &(S, S)) -> S {
    let v = pair_runtime(victim.0.clone(), victim.1.clone(), -s.clone());
    let th = pair_runtime(thief.0.clone(), thief.1.clone(), s.clone());
    if v >= th {
        v
    } else {
        th
    }
}

/// Rounds a fractional steal rate to whichever neighbouring integer yields
/// the smaller pair runtime. Ties go to the floor. Negative results clamp
/// to zero.
pub fn round_steal<S: Scalar>(s: &S, thief: &(S, S), victim: &(S, S)) -> i64 {
    let lo = s.floor();
    let hi = s.ceil();
    let d = if lo == hi || gamma(&lo, thief, victim) <= gamma(&hi, thief, victim) {
        lo
    } else {
        hi
    };
    d.to_i64().max(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    ClosestRate,
    InPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StealDecision {
    pub victim: usize,
    pub amount: u64,
    pub criterion: Criterion,
}

/// Weight of a closest-rate candidate. Peaks at 1 when the victim's
/// surplus exactly cancels the thief's deficit.
pub fn closest_rate_weight(s_self: f64, s_victim: f64) -> f64 {
    1.0 / (1.0 + libm::fabs(s_self + s_victim))
}

/// Picks a victim for a thief whose own rate is `s_self`.
///
/// The closest-rate criterion considers ranks with a surplus; when the
/// window looks balanced it falls back to in-pair comparison. Both sample
/// among candidates in proportion to their weight, so concurrent thieves
/// spread over victims.
pub fn select_victim<R: RngCore + ?Sized>(
    view: &RateView<f64>,
    s_self: f64,
    rng: &mut R,
) -> Option<StealDecision> {
    if !(s_self > 0.0) {
        return None;
    }
    let me = view.entry(view.self_rank)?;
    let thief = (me.n, me.t);
    let others = || {
        view.entries
            .iter()
            .filter(|e| e.rank != view.self_rank && e.stealable > 0)
    };

    let mut candidates: Vec<(f64, StealDecision)> = Vec::new();
    for e in others() {
        let Ok(s_j) = steal_rate(view, e.rank) else {
            continue;
        };
        if !(s_j < 0.0) {
            continue;
        }
        let rounded = round_steal(&s_self, &thief, &(e.n, e.t));
        let surplus = libm::round(-s_j) as i64;
        let amount = rounded.min(surplus).min(e.stealable as i64);
        if amount >= 1 {
            let decision = StealDecision {
                victim: e.rank,
                amount: amount as u64,
                criterion: Criterion::ClosestRate,
            };
            candidates.push((closest_rate_weight(s_self, s_j), decision));
        }
    }

    if candidates.is_empty() {
        for e in others() {
            let rate = pair_rate(thief, (e.n, e.t));
            if !(rate > 0.0) {
                continue;
            }
            let amount = round_steal(&rate, &thief, &(e.n, e.t)).min(e.stealable as i64);
            if amount >= 1 {
                let decision = StealDecision {
                    victim: e.rank,
                    amount: amount as u64,
                    criterion: Criterion::InPair,
                };
                candidates.push((rate, decision));
            }
        }
    }

    let idx = weighted_index(candidates.iter().map(|(w, _)| *w), rng)?;
    Some(candidates.swap_remove(idx).1)
}

/// Samples an index with probability proportional to its weight.
/// Non-positive and non-finite weights never win.
pub fn weighted_index<R: RngCore + ?Sized>(
    weights: impl Iterator<Item = f64> + Clone,
    rng: &mut R,
) -> Option<usize> {
    let valid = |w: f64| w.is_finite() && w > 0.0;
    let total: f64 = weights.clone().filter(|&w| valid(w)).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut x = unit_f64(rng) * total;
    let mut last = None;
    for (i, w) in weights.enumerate() {
        if !valid(w) {
            continue;
        }
        if x < w {
            return Some(i);
        }
        x -= w;
        last = Some(i);
    }
    last
}

fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
