//! Exact-arithmetic oracles for the steal-rate formulas, shared by the core
//! test suite and the workspace acceptance run.
//!
//! Every formula is re-derived here directly on `BigRational`, without
//! going through the library, and compared against the library evaluated
//! both in rationals (exact) and in `f64` (relative 1e-9).

#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use a2ws_core::{
    gain, gamma, ideal_runtime, pair_rate, pair_runtime, round_steal, steal_rate, ClusterConfig,
    NodeSpec, RateEntry, RateView, Scalar, WorkloadSpec,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact rational scalar for the generic rate functions.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct Q(pub BigRational);

impl Q {
    pub fn int(v: i64) -> Self {
        Q(BigRational::from_integer(BigInt::from(v)))
    }
    pub fn frac(num: i64, den: i64) -> Self {
        Q(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident) => {
        impl $tr for Q {
            type Output = Q;
            fn $f(self, o: Q) -> Q {
                Q(self.0.$f(o.0))
            }
        }
    };
}
binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Q {
    type Output = Q;
    fn neg(self) -> Q {
        Q(-self.0)
    }
}

impl Scalar for Q {
    fn zero() -> Self {
        Q(BigRational::zero())
    }
    fn one() -> Self {
        Q(BigRational::one())
    }
    fn from_i64(v: i64) -> Self {
        Q::int(v)
    }
    fn floor(&self) -> Self {
        Q(self.0.floor())
    }
    fn ceil(&self) -> Self {
        Q(self.0.ceil())
    }
    fn to_i64(&self) -> i64 {
        self.0
            .to_integer()
            .to_i64()
            .expect("integral value fits i64")
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().expect("finite")
    }
}

fn r(v: &Q) -> &BigRational {
    &v.0
}

fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().expect("finite")
}

/// `|got - want| <= 1e-9 * scale`, where `scale` is the largest magnitude
/// among the terms that were combined. A difference of two nearly equal
/// terms cannot be more accurate than the terms themselves.
pub fn close(got: f64, want: f64, scale: f64) -> bool {
    (got - want).abs() <= 1e-9 * scale.abs().max(want.abs()).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub n: Vec<i64>,
    /// Runtimes as (numerator, denominator).
    pub t: Vec<(i64, i64)>,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let size = rng.random_range(1..=12);
        let n = (0..size).map(|_| rng.random_range(0..=400)).collect();
        let t = (0..size)
            .map(|_| (rng.random_range(1..=5000), rng.random_range(1..=250)))
            .collect();
        Self { n, t }
    }

    pub fn exact_view(&self) -> RateView<Q> {
        RateView {
            self_rank: 0,
            elapsed: Q::one(),
            entries: (0..self.n.len())
                .map(|j| RateEntry {
                    rank: j,
                    n: Q::int(self.n[j]),
                    t: Q::frac(self.t[j].0, self.t[j].1),
                    stealable: 0,
                })
                .collect(),
        }
    }

    pub fn float_view(&self) -> RateView<f64> {
        RateView {
            self_rank: 0,
            elapsed: 1.0,
            entries: (0..self.n.len())
                .map(|j| RateEntry {
                    rank: j,
                    n: self.n[j] as f64,
                    t: self.t[j].0 as f64 / self.t[j].1 as f64,
                    stealable: 0,
                })
                .collect(),
        }
    }
}

/// Fair share minus holding, evaluated as `n_total * speed_i / speed_total`.
pub fn oracle_steal_rate(inst: &Instance, i: usize) -> BigRational {
    let speed = |j: usize| BigRational::new(BigInt::from(inst.t[j].1), BigInt::from(inst.t[j].0));
    let total_n: BigInt = inst.n.iter().map(|&v| BigInt::from(v)).sum();
    let total_speed = (0..inst.n.len())
        .map(speed)
        .fold(BigRational::zero(), |a, b| a + b);
    BigRational::from_integer(total_n) * speed(i) / total_speed
        - BigRational::from_integer(BigInt::from(inst.n[i]))
}

/// Two-rank fair share for the thief: `(n_i + n_j) * speed_i / (speed_i + speed_j) - n_i`.
pub fn oracle_pair_rate(
    ni: &BigRational,
    ti: &BigRational,
    nj: &BigRational,
    tj: &BigRational,
) -> BigRational {
    let (si, sj) = (ti.recip(), tj.recip());
    (ni + nj) * &si / (si + sj) - ni
}

pub fn oracle_gamma(
    s: &BigRational,
    thief: (&BigRational, &BigRational),
    victim: (&BigRational, &BigRational),
) -> BigRational {
    let a = (victim.0 - s) * victim.1;
    let b = (thief.0 + s) * thief.1;
    if a > b {
        a
    } else {
        b
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Summary {
    pub instances: usize,
    pub steal_rate: usize,
    pub zero_sum: usize,
    pub pair_rate: usize,
    pub round_steal: usize,
    pub gamma_minimal: usize,
    pub pair_runtime: usize,
    pub gain: usize,
    pub ideal_runtime: usize,
}

/// Runs every equation oracle on `instances` random instances. Returns the
/// number of checks per formula or the first mismatch.
pub fn check_all(instances: usize, seed: u64) -> Result<Summary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Summary {
        instances,
        ..Summary::default()
    };
    for k in 0..instances {
        let inst = Instance::random(&mut rng);
        let (qv, fv) = (inst.exact_view(), inst.float_view());
        let size = inst.n.len();

        // Steal rate over the window, every member as target.
        let mut sum = BigRational::zero();
        for i in 0..size {
            let want = oracle_steal_rate(&inst, i);
            let exact = steal_rate(&qv, i).map_err(|e| e.to_string())?;
            if exact.0 != want {
                return Err(format!(
                    "instance {k}: steal_rate({i}) = {} exact, oracle {want}",
                    exact.0
                ));
            }
            let float = steal_rate(&fv, i).map_err(|e| e.to_string())?;
            let scale = to_f64(&(&want + BigRational::from_integer(BigInt::from(inst.n[i]))));
            if !close(float, to_f64(&want), scale) {
                return Err(format!(
                    "instance {k}: steal_rate({i}) = {float} in f64, oracle {}",
                    to_f64(&want)
                ));
            }
            sum += want;
            s.steal_rate += 1;
        }
        if !sum.is_zero() {
            return Err(format!("instance {k}: rates sum to {sum}"));
        }
        s.zero_sum += 1;

        // Pair rate: direct formula, and the two-element window of steal_rate.
        let (i, j) = (0, rng.random_range(0..size));
        let thief = (Q::int(inst.n[i]), Q::frac(inst.t[i].0, inst.t[i].1));
        let victim = (Q::int(inst.n[j]), Q::frac(inst.t[j].0, inst.t[j].1));
        let want = oracle_pair_rate(r(&thief.0), r(&thief.1), r(&victim.0), r(&victim.1));
        let exact = pair_rate(thief.clone(), victim.clone());
        let pair_view = RateView {
            self_rank: 0,
            elapsed: Q::one(),
            entries: vec![
                RateEntry {
                    rank: 0,
                    n: thief.0.clone(),
                    t: thief.1.clone(),
                    stealable: 0,
                },
                RateEntry {
                    rank: 1,
                    n: victim.0.clone(),
                    t: victim.1.clone(),
                    stealable: 0,
                },
            ],
        };
        let via_window = steal_rate(&pair_view, 0).map_err(|e| e.to_string())?;
        if exact.0 != want || via_window.0 != want {
            return Err(format!(
                "instance {k}: pair_rate {} / window {} vs oracle {want}",
                exact.0, via_window.0
            ));
        }
        let float = pair_rate(
            (thief.0.to_f64(), thief.1.to_f64()),
            (victim.0.to_f64(), victim.1.to_f64()),
        );
        if !close(float, to_f64(&want), to_f64(&(&want + r(&thief.0)))) {
            return Err(format!(
                "instance {k}: pair_rate f64 {float} vs {}",
                to_f64(&want)
            ));
        }
        s.pair_rate += 1;

        // Rounding: among floor and ceil pick the smaller pair runtime, floor
        // on ties, never below zero. Then check minimality against every
        // integer in a neighbourhood.
        let rate = if rng.random_bool(0.5) {
            exact.clone()
        } else {
            Q::frac(rng.random_range(-2000..=2000), rng.random_range(1..=97))
        };
        let got = round_steal(&rate, &thief, &victim);
        let (lo, hi) = (rate.0.floor(), rate.0.ceil());
        let g = |d: &BigRational| {
            oracle_gamma(d, (r(&thief.0), r(&thief.1)), (r(&victim.0), r(&victim.1)))
        };
        let pick = if lo == hi || g(&lo) <= g(&hi) {
            lo.clone()
        } else {
            hi.clone()
        };
        let want = if pick.is_negative() {
            0
        } else {
            pick.to_integer().to_i64().unwrap()
        };
        if got != want {
            return Err(format!(
                "instance {k}: round_steal({}) = {got}, oracle {want}",
                rate.0
            ));
        }
        if gamma(&Q(pick.clone()), &thief, &victim).0 != g(&pick) {
            return Err(format!("instance {k}: gamma mismatch at {pick}"));
        }
        s.round_steal += 1;
        if !pick.is_negative() {
            let best = [lo.clone(), hi.clone()]
                .into_iter()
                .map(|d| g(&d))
                .min()
                .unwrap();
            if g(&pick) != best {
                return Err(format!(
                    "instance {k}: rounding to {pick} is not gamma-minimal"
                ));
            }
            s.gamma_minimal += 1;
        }
        let fgot = round_steal(
            &rate.to_f64(),
            &(thief.0.to_f64(), thief.1.to_f64()),
            &(victim.0.to_f64(), victim.1.to_f64()),
        );
        // f64 may only disagree on an exact gamma tie it cannot represent.
        if fgot != got && g(&lo) != g(&hi) {
            return Err(format!(
                "instance {k}: f64 round_steal {fgot} vs exact {got}"
            ));
        }

        // Predicted completion time.
        let steal = Q::frac(rng.random_range(-500..=500), rng.random_range(1..=13));
        let want = (r(&victim.0) + r(&steal)) * r(&victim.1);
        if pair_runtime(victim.0.clone(), victim.1.clone(), steal.clone()).0 != want {
            return Err(format!("instance {k}: pair_runtime mismatch"));
        }
        let float = pair_runtime(victim.0.to_f64(), victim.1.to_f64(), steal.to_f64());
        let scale = to_f64(&((r(&victim.0).abs() + r(&steal).abs()) * r(&victim.1)));
        if !close(float, to_f64(&want), scale) {
            return Err(format!(
                "instance {k}: pair_runtime f64 {float} vs {}",
                to_f64(&want)
            ));
        }
        s.pair_runtime += 1;

        // Gain of a over b, and its antisymmetry.
        let (a, b) = (
            Q::frac(rng.random_range(1..=100_000), 1000),
            Q::frac(rng.random_range(1..=100_000), 1000),
        );
        let want =
            (BigRational::one() - r(&a) / r(&b)) * BigRational::from_integer(BigInt::from(100));
        let got = gain(a.to_f64(), b.to_f64()).map_err(|e| e.to_string())?;
        if !close(got, to_f64(&want), 100.0 * (1.0 + a.to_f64() / b.to_f64())) {
            return Err(format!("instance {k}: gain {got} vs {}", to_f64(&want)));
        }
        let back = gain(b.to_f64(), a.to_f64()).map_err(|e| e.to_string())?;
        if ((1.0 - got / 100.0) * (1.0 - back / 100.0) - 1.0).abs() > 1e-9 {
            return Err(format!(
                "instance {k}: gain not antisymmetric ({got}, {back})"
            ));
        }
        s.gain += 1;

        // Ideal runtime with alpha = 1 is exact: N * base / sum(cores).
        let cores: Vec<u32> = (0..rng.random_range(2..=16))
            .map(|_| rng.random_range(1..=64))
            .collect();
        let base_ms: i64 = rng.random_range(1..=500);
        let n_tasks = rng.random_range(cores.len()..=10_000);
        let total: i64 = cores.iter().map(|&c| c as i64).sum();
        let want = BigRational::new(
            BigInt::from(n_tasks as i64 * base_ms),
            BigInt::from(total * 1000),
        );
        let cluster = ClusterConfig::new(
            "oracle",
            cores
                .iter()
                .map(|&c| NodeSpec::new(c, 1.0).unwrap())
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let workload = WorkloadSpec::new(n_tasks, base_ms as f64 / 1000.0, 0.0, 0)
            .map_err(|e| e.to_string())?;
        let got = ideal_runtime(&cluster, &workload);
        if !close(got, to_f64(&want), to_f64(&want)) {
            return Err(format!(
                "instance {k}: ideal_runtime {got} vs {}",
                to_f64(&want)
            ));
        }
        // Any alpha: compare against the sum of per-node throughputs.
        let alpha = rng.random_range(0.0..=1.5);
        let cluster = cluster.with_alpha(alpha).map_err(|e| e.to_string())?;
        let throughput: f64 = cores.iter().map(|&c| (c as f64).powf(alpha)).sum();
        let direct = n_tasks as f64 * workload.base_cost / throughput;
        if !close(ideal_runtime(&cluster, &workload), direct, direct) {
            return Err(format!(
                "instance {k}: ideal_runtime with alpha {alpha} off"
            ));
        }
        s.ideal_runtime += 1;
    }
    Ok(s)
}
