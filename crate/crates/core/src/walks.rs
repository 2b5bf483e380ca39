//! Random-walk kernels and Monte Carlo validators for the drift and tail
//! lemmas.
//!
//! Both walks are simulated as exact discrete chains. Every trial draws from
//! its own ChaCha stream, so results do not depend on the worker count.

use std::f64::consts::LN_10;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkKind {
    /// Reflecting at `d`, absorbing at `0`, started at `d`.
    Barrier,
    /// Symmetric walk on `[-d, d+1]` with jumps to `d+1`, started at `0`.
    Jump,
}

impl FromStr for WalkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "barrier" => Ok(Self::Barrier),
            "jump" => Ok(Self::Jump),
            other => Err(invalid(format!("unknown walk kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub kind: WalkKind,
    pub d: u64,
    /// Step probability per direction; unused by the barrier walk.
    pub p: f64,
    /// Barrier walk: step probability. Jump walk: jump probability.
    pub q: f64,
}

impl WalkSpec {
    pub fn barrier(d: u64, q: f64) -> Result<Self> {
        Self {
            kind: WalkKind::Barrier,
            d,
            p: 0.0,
            q,
        }
        .validated()
    }

    pub fn jump(d: u64, p: f64, q: f64) -> Result<Self> {
        Self {
            kind: WalkKind::Jump,
            d,
            p,
            q,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.d == 0 {
            return Err(invalid("d must be positive"));
        }
        match self.kind {
            WalkKind::Barrier => {
                if !(self.q > 0.0 && self.q <= 0.5) {
                    return Err(invalid(format!("barrier walk needs q in (0, 1/2], got {}", self.q)));
                }
            }
            WalkKind::Jump => {
                if !(self.p > 0.0 && self.p <= 1.0) {
                    return Err(invalid(format!("jump walk needs p in (0, 1], got {}", self.p)));
                }
                if !(0.0..1.0).contains(&self.q) {
                    return Err(invalid(format!("jump walk needs q in [0, 1), got {}", self.q)));
                }
                if self.q + 2.0 * self.p > 1.0 + 1e-12 {
                    return Err(invalid(format!(
                        "jump walk needs q + 2p <= 1, got {}",
                        self.q + 2.0 * self.p
                    )));
                }
            }
        }
        Ok(self)
    }

    /// Whether `d >= 4 ln 10`, below which the threshold claim is void.
    pub fn threshold_applies(&self) -> bool {
        self.d as f64 >= 4.0 * LN_10
    }
}

fn expect_kind(spec: &WalkSpec, kind: WalkKind) {
    debug_assert_eq!(spec.kind, kind, "walk kernel called with the wrong kind");
}

/// Hitting time of `0`, simulating every lazy step.
pub fn barrier_walk_hitting_time<R: Rng + ?Sized>(spec: &WalkSpec, rng: &mut R) -> u64 {
    expect_kind(spec, WalkKind::Barrier);
    let (d, q) = (spec.d, spec.q);
    let mut z = d;
    let mut t = 0u64;
    while z > 0 {
        t += 1;
        let u: f64 = rng.random();
        if z == d {
            if u < 2.0 * q {
                z -= 1;
            }
        } else if u < q {
            z -= 1;
        } else if u < 2.0 * q {
            z += 1;
        }
    }
    t
}

/// Same law as [`barrier_walk_hitting_time`], skipping lazy runs with a
/// geometric holding time. Every state moves with probability `2q`.
pub fn barrier_walk_hitting_time_fast<R: Rng + ?Sized>(spec: &WalkSpec, rng: &mut R) -> u64 {
    expect_kind(spec, WalkKind::Barrier);
    let (d, q) = (spec.d, spec.q);
    let hold = Geometric::new(2.0 * q).expect("2q in (0, 1]");
    let mut z = d;
    let mut t = 0u64;
    while z > 0 {
        t += 1 + hold.sample(rng);
        if z == d || rng.random_bool(0.5) {
            z -= 1;
        } else {
            z += 1;
        }
    }
    t
}

/// `d^2 / (2q)`.
pub fn barrier_walk_expected(d: u64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 0.5) {
        return Err(invalid(format!("q must lie in (0, 1/2], got {q}")));
    }
    let d = d as f64;
    Ok(d * d / (2.0 * q))
}

/// First `t` with `|Z'_t| >= d`.
pub fn jump_walk_sample<R: Rng + ?Sized>(spec: &WalkSpec, rng: &mut R) -> u64 {
    expect_kind(spec, WalkKind::Jump);
    let d = spec.d as i64;
    let (p, q) = (spec.p, spec.q);
    let mut z: i64 = 0;
    let mut t = 0u64;
    while z.abs() < d {
        t += 1;
        let u: f64 = rng.random();
        if u < p {
            z -= 1;
        } else if u < 2.0 * p {
            z += 1;
        } else if u < 2.0 * p + q {
            z = d + 1;
        }
    }
    t
}

/// `min{1/(5q), d^2 (1-q) / (4 ln 10 p)}`; the first branch is infinite at
/// `q = 0`.
pub fn jump_walk_threshold(d: u64, p: f64, q: f64) -> f64 {
    let d = d as f64;
    let diffusive = d * d * (1.0 - q) / (4.0 * LN_10 * p);
    if q == 0.0 {
        diffusive
    } else {
        (1.0 / (5.0 * q)).min(diffusive)
    }
}

/// Geometric variable on `{1, 2, ...}`.
pub fn sample_geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64> {
    let g = Geometric::new(p).map_err(|e| invalid(format!("geometric({p}): {e}")))?;
    Ok(1 + g.sample(rng))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub passed: bool,
    pub frequency: f64,
    pub bound: f64,
    /// Three binomial standard errors.
    pub margin: f64,
}

fn three_sigma(freq: f64, trials: usize) -> f64 {
    3.0 * (freq * (1.0 - freq) / trials as f64).sqrt()
}

const MIN_TRIALS: usize = 10_000;

/// Checks `Pr[X >= c/p] >= 1 - c` for `X ~ Geom(p)`.
pub fn geometric_tail_check<R: Rng + ?Sized>(
    p: f64,
    c: f64,
    trials: usize,
    rng: &mut R,
) -> Result<TailCheck> {
    if trials < MIN_TRIALS {
        return Err(invalid(format!("need at least {MIN_TRIALS} trials")));
    }
    if !(p > 0.0 && p < 1.0) || c.is_nan() || c < 0.0 {
        return Err(invalid(format!("need p in (0,1) and c >= 0, got p={p}, c={c}")));
    }
    let cut = c / p;
    let mut hits = 0usize;
    for _ in 0..trials {
        if sample_geometric(p, rng)? as f64 >= cut {
            hits += 1;
        }
    }
    let frequency = hits as f64 / trials as f64;
    let bound = 1.0 - c;
    let margin = three_sigma(frequency, trials);
    Ok(TailCheck {
        passed: frequency >= bound - margin,
        frequency,
        bound,
        margin,
    })
}

/// `exp(-delta^2 n / (2 - 4 delta / 3))`.
pub fn geometric_sum_lower_bound(n: u64, delta: f64) -> f64 {
    (-(delta * delta) / (2.0 - 4.0 * delta / 3.0) * n as f64).exp()
}

/// Checks `Pr[X <= (1-delta) n/p] <= exp(-delta^2 n / (2 - 4 delta/3))` for
/// `X` a sum of `n` independent `Geom(p)` variables.
pub fn geometric_sum_lower_check<R: Rng + ?Sized>(
    n: u64,
    p: f64,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<TailCheck> {
    if trials < MIN_TRIALS {
        return Err(invalid(format!("need at least {MIN_TRIALS} trials")));
    }
    if n == 0 || !(p > 0.0 && p <= 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!(
            "need n >= 1, p in (0,1], delta in (0,1), got n={n}, p={p}, delta={delta}"
        )));
    }
    let cut = (1.0 - delta) * n as f64 / p;
    let mut hits = 0usize;
    for _ in 0..trials {
        let mut sum = 0u64;
        for _ in 0..n {
            sum += sample_geometric(p, rng)?;
        }
        if sum as f64 <= cut {
            hits += 1;
        }
    }
    let frequency = hits as f64 / trials as f64;
    let bound = geometric_sum_lower_bound(n, delta);
    let margin = three_sigma(frequency, trials);
    Ok(TailCheck {
        passed: frequency <= bound + margin,
        frequency,
        bound,
        margin,
    })
}

/// `(ln s0 - ln smin + 1) / delta`.
pub fn multiplicative_drift_bound(s0: f64, smin: f64, delta: f64) -> Result<f64> {
    if !(smin > 0.0 && s0 >= smin && delta > 0.0) {
        return Err(invalid(format!(
            "need s0 >= smin > 0 and delta > 0, got s0={s0}, smin={smin}, delta={delta}"
        )));
    }
    Ok((s0.ln() - smin.ln() + 1.0) / delta)
}

/// Stream for trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Hitting times of `trials` independent walks, in trial order.
pub fn sample_hitting_times(spec: &WalkSpec, trials: usize, seed: u64) -> Vec<u64> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            match spec.kind {
                WalkKind::Barrier => barrier_walk_hitting_time(spec, &mut rng),
                WalkKind::Jump => jump_walk_sample(spec, &mut rng),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSummary {
    pub mean: f64,
    pub variance: f64,
    /// `d^2/(2q)` for the barrier walk, the lemma threshold for the jump walk.
    pub threshold: f64,
    pub frac_at_least_threshold: f64,
}

pub fn summarize(spec: &WalkSpec, times: &[u64]) -> Result<WalkSummary> {
    if times.is_empty() {
        return Err(invalid("no trials"));
    }
    let threshold = match spec.kind {
        WalkKind::Barrier => barrier_walk_expected(spec.d, spec.q)?,
        WalkKind::Jump => jump_walk_threshold(spec.d, spec.p, spec.q),
    };
    let n = times.len() as f64;
    let mean = times.iter().map(|&t| t as f64).sum::<f64>() / n;
    let variance = if times.len() > 1 {
        times.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let above = times.iter().filter(|&&t| t as f64 >= threshold).count();
    Ok(WalkSummary {
        mean,
        variance,
        threshold,
        frac_at_least_threshold: above as f64 / n,
    })
}

pub fn simulate(spec: &WalkSpec, trials: usize, seed: u64) -> Result<WalkSummary> {
    let spec = spec.validated()?;
    summarize(&spec, &sample_hitting_times(&spec, trials, seed))
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[u64], b: &[u64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Asymptotic two-sample KS critical value at level 1%.
pub fn ks_critical_1pct(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    1.628 * ((na + nb) / (na * nb)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;

    #[test]
    fn expected_examples() {
        assert_eq!(barrier_walk_expected(1, 0.5).unwrap(), 1.0);
        assert_eq!(barrier_walk_expected(20, 0.25).unwrap(), 800.0);
        assert_eq!(barrier_walk_expected(10, 0.5).unwrap(), 100.0);
        assert!(barrier_walk_expected(10, 0.0).is_err());
        assert!(barrier_walk_expected(10, 0.6).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(WalkSpec::barrier(0, 0.5).is_err());
        assert!(WalkSpec::barrier(3, 0.7).is_err());
        assert!(WalkSpec::jump(3, 0.5, 0.1).is_err());
        assert!(WalkSpec::jump(3, 0.0, 0.1).is_err());
        assert!(WalkSpec::jump(3, 0.5, 0.0).is_ok());
        assert!(WalkSpec::jump(30, 0.01, 1e-6).unwrap().threshold_applies());
        assert!(!WalkSpec::jump(9, 0.01, 1e-6).unwrap().threshold_applies());
    }

    #[test]
    fn barrier_walk_from_one_at_half_is_one_step() {
        let spec = WalkSpec::barrier(1, 0.5).unwrap();
        let mut rng = trial_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(barrier_walk_hitting_time(&spec, &mut rng), 1);
            assert_eq!(barrier_walk_hitting_time_fast(&spec, &mut rng), 1);
        }
    }

    #[test]
    fn barrier_walk_d1_is_geometric() {
        // from state 1 = d the walk leaves with probability 2q
        let spec = WalkSpec::barrier(1, 0.1).unwrap();
        let s = simulate(&spec, 40_000, 3).unwrap();
        assert!((s.mean - 5.0).abs() < 0.1, "{s:?}");
        // Var Geom(0.2) = 0.8 / 0.04 = 20
        assert!((s.variance - 20.0).abs() < 1.0, "{s:?}");
    }

    #[test]
    fn barrier_walk_mean_matches_closed_form() {
        let spec = WalkSpec::barrier(10, 0.5).unwrap();
        let s = simulate(&spec, 20_000, 11).unwrap();
        assert!((s.mean / 100.0 - 1.0).abs() < 0.03, "{s:?}");
    }

    #[test]
    fn fast_forward_matches_explicit() {
        let spec = WalkSpec::barrier(8, 0.1).unwrap();
        let n = 20_000;
        let explicit = sample_hitting_times(&spec, n, 5);
        let fast: Vec<u64> = (0..n as u64)
            .map(|i| barrier_walk_hitting_time_fast(&spec, &mut trial_rng(6, i)))
            .collect();
        let ks = ks_statistic(&explicit, &fast);
        assert!(ks < ks_critical_1pct(n, n), "ks = {ks}");
    }

    #[test]
    fn jump_walk_d1_exits_on_first_move() {
        let spec = WalkSpec::jump(1, 0.2, 0.1).unwrap();
        let mut rng = trial_rng(2, 0);
        let times: Vec<u64> = (0..40_000)
            .map(|_| jump_walk_sample(&spec, &mut rng))
            .collect();
        // T' ~ Geom(2p + q) = Geom(0.5)
        let ones = times.iter().filter(|&&t| t == 1).count() as f64 / 40_000.0;
        assert!((ones - 0.5).abs() < 0.015);
    }

    #[test]
    fn jump_walk_without_jumps_is_a_reflected_barrier_walk() {
        let jump = WalkSpec::jump(10, 0.5, 0.0).unwrap();
        let s = simulate(&jump, 20_000, 21).unwrap();
        assert!((s.mean / 100.0 - 1.0).abs() < 0.03, "{s:?}");

        // |Z'| is the barrier walk seen from the other end
        let jump = WalkSpec::jump(6, 0.2, 0.0).unwrap();
        let barrier = WalkSpec::barrier(6, 0.2).unwrap();
        let a = sample_hitting_times(&jump, 20_000, 1);
        let b = sample_hitting_times(&barrier, 20_000, 2);
        let ks = ks_statistic(&a, &b);
        assert!(ks < ks_critical_1pct(a.len(), b.len()), "ks = {ks}");
    }

    #[test]
    fn threshold_examples() {
        let t = jump_walk_threshold(30, 0.01, 1e-6);
        let second = 900.0 * (1.0 - 1e-6) / (4.0 * LN_10 * 0.01);
        assert!((t - second).abs() < 1e-9);
        assert!((t - 9771.6).abs() < 0.1, "{t}");
        assert!((jump_walk_threshold(30, 0.01, 0.0) - 9771.6).abs() < 0.1);
        assert!((jump_walk_threshold(30, 0.25, 0.01) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn geometric_support_starts_at_one() {
        let mut rng = trial_rng(0, 0);
        let xs: Vec<u64> = (0..10_000)
            .map(|_| sample_geometric(0.5, &mut rng).unwrap())
            .collect();
        assert_eq!(*xs.iter().min().unwrap(), 1);
        let mean = xs.iter().sum::<u64>() as f64 / xs.len() as f64;
        assert!((mean - 2.0).abs() < 0.06);
        assert_eq!(sample_geometric(1.0, &mut rng).unwrap(), 1);
    }

    #[test]
    fn geometric_tail_examples() {
        let mut rng = StdRng::seed_from_u64(4);
        let r = geometric_tail_check(0.1, 0.5, 20_000, &mut rng).unwrap();
        assert!(r.passed);
        // Pr[X >= 5] = 0.9^4
        assert!((r.frequency - 0.6561).abs() < 0.02, "{r:?}");

        let r = geometric_tail_check(0.1, 1.5, 10_000, &mut rng).unwrap();
        assert!(r.passed && r.bound < 0.0);

        let r = geometric_tail_check(0.3, 0.0, 10_000, &mut rng).unwrap();
        assert_eq!(r.frequency, 1.0);
        assert!(r.passed);

        assert!(geometric_tail_check(0.1, 0.5, 100, &mut rng).is_err());
    }

    #[test]
    fn geometric_sum_examples() {
        let mut rng = StdRng::seed_from_u64(8);
        let bound = geometric_sum_lower_bound(50, 0.5);
        assert!((bound - 8.5e-5).abs() < 0.3e-5, "{bound}");
        let r = geometric_sum_lower_check(50, 0.2, 0.5, 10_000, &mut rng).unwrap();
        assert!(r.passed);
        assert!(r.frequency < 1e-3);

        let r = geometric_sum_lower_check(1, 0.5, 0.5, 20_000, &mut rng).unwrap();
        assert!((r.bound - (-0.1875f64).exp()).abs() < 1e-12);
        // Pr[X <= 1] = 1/2
        assert!((r.frequency - 0.5).abs() < 0.02);
        assert!(r.passed);

        let r = geometric_sum_lower_check(10, 0.5, 1e-9, 10_000, &mut rng).unwrap();
        assert!(r.bound > 0.999_999 && r.passed);
    }

    #[test]
    fn drift_bound_examples() {
        let n = 100.0f64;
        let e = std::f64::consts::E;
        let b = multiplicative_drift_bound(n * n, 1.0, 2.0 / (e * n)).unwrap();
        assert!((b - e * n * (n.ln() + 0.5)).abs() < 1e-9);
        // 1387.73...
        assert!((b - 1387.6).abs() < 0.2);
        assert_eq!(multiplicative_drift_bound(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((multiplicative_drift_bound(e, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(multiplicative_drift_bound(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn ks_statistic_basics() {
        assert_eq!(ks_statistic(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(ks_statistic(&[1, 1], &[2, 2]), 1.0);
        assert!((ks_statistic(&[1, 2], &[2, 3]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = WalkSpec::jump(12, 0.1, 0.001).unwrap();
        let a = simulate(&spec, 500, 77).unwrap();
        let b = simulate(&spec, 500, 77).unwrap();
        assert_eq!(a, b);
    }
}
