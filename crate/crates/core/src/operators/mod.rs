//! Mutation operators and the (1+1) selection loop.
//!
//! Three algorithms share one engine ([`run`]):
//!
//! - the (1+1) EA flips every bit independently with probability `1/n`;
//! - the Balanced (1+1) EA takes that standard step with probability 1/2 and
//!   otherwise swaps a uniformly chosen vertex with a uniformly chosen
//!   neighbour holding the opposite bit;
//! - RLS flips exactly one uniformly chosen bit.
//!
//! All three accept the offspring when its fitness is not worse.

mod engine;

pub use engine::{
    default_path_budget, run, Hook, Init, NullSemantics, RunRecord, RunSpec, StoppingCriterion,
    TrajectoryRecorder,
};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{GraphInstance, Vertex};
use crate::solution::BitString;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ea")]
    Ea,
    #[serde(rename = "balanced")]
    BalancedEa,
    #[serde(rename = "rls")]
    Rls,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Ea, Algorithm::BalancedEa, Algorithm::Rls];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ea => "ea",
            Self::BalancedEa => "balanced",
            Self::Rls => "rls",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "ea" => Ok(Self::Ea),
            "balanced" => Ok(Self::BalancedEa),
            "rls" => Ok(Self::Rls),
            other => Err(crate::error::invalid(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutationKind {
    StandardFlip,
    /// Swap of `v` with its opposite-valued neighbour `u`.
    BalancedFlip { v: Vertex, u: Vertex },
    /// Balanced pick of `v` with no opposite-valued neighbour.
    BalancedNull { v: Vertex },
    SingleFlip { v: Vertex },
}

impl MutationKind {
    /// Initial vertex of a balanced attempt.
    pub fn balanced_start(&self) -> Option<Vertex> {
        match *self {
            Self::BalancedFlip { v, .. } | Self::BalancedNull { v } => Some(v),
            _ => None,
        }
    }
}

/// An attempted mutation, borrowed from the engine's scratch buffer.
#[derive(Clone, Copy, Debug)]
pub struct Proposal<'a> {
    pub flipped: &'a [Vertex],
    pub kind: MutationKind,
}

/// Parent-independent description of one mutation with its offspring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutationOutcome {
    pub offspring: BitString,
    /// Sorted flipped positions.
    pub flipped: Vec<Vertex>,
    pub kind: MutationKind,
}

impl MutationOutcome {
    fn from_flips(parent: &BitString, mut flipped: Vec<Vertex>, kind: MutationKind) -> Self {
        let mut offspring = parent.clone();
        for &v in &flipped {
            offspring.flip(v);
        }
        flipped.sort_unstable();
        Self {
            offspring,
            flipped,
            kind,
        }
    }

    pub fn proposal(&self) -> Proposal<'_> {
        Proposal {
            flipped: &self.flipped,
            kind: self.kind,
        }
    }
}

/// Standard bit mutation sampler: draws the number of flips from
/// `Binomial(n, 1/n)` and then that many distinct positions uniformly.
#[derive(Clone, Debug)]
pub struct StandardFlipSampler {
    n: usize,
    count: Binomial,
}

impl StandardFlipSampler {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "standard mutation needs at least one bit");
        Self {
            n,
            count: Binomial::new(n as u64, 1.0 / n as f64).expect("1/n is a probability"),
        }
    }

    /// Writes the flipped positions (unsorted, distinct) into `out`.
    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<Vertex>) {
        out.clear();
        let k = self.count.sample(rng) as usize;
        if k == 0 {
            return;
        }
        if 2 * k > self.n {
            out.extend(
                rand::seq::index::sample(rng, self.n, k)
                    .into_iter()
                    .map(|i| i + 1),
            );
            return;
        }
        while out.len() < k {
            let v = rng.random_range(1..=self.n);
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
}

/// Per-bit Bernoulli(1/n) flips; the literal reference form of
/// [`StandardFlipSampler`].
pub fn bernoulli_flips<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vertex> {
    let p = 1.0 / n as f64;
    (1..=n).filter(|_| rng.random::<f64>() < p).collect()
}

pub fn standard_mutation<R: Rng + ?Sized>(parent: &BitString, rng: &mut R) -> MutationOutcome {
    let mut flips = Vec::new();
    StandardFlipSampler::new(parent.len()).sample_into(rng, &mut flips);
    MutationOutcome::from_flips(parent, flips, MutationKind::StandardFlip)
}

/// Number of neighbours of `v` whose bit differs from `v`'s.
#[inline]
pub fn opposite_neighbor_count(g: &GraphInstance, bits: &BitString, v: Vertex) -> usize {
    let bv = bits.get(v);
    g.neighbors(v).iter().filter(|&&w| bits.get(w) != bv).count()
}

/// The `index`-th opposite-valued neighbour of `v` in adjacency order.
#[inline]
pub fn opposite_neighbor(
    g: &GraphInstance,
    bits: &BitString,
    v: Vertex,
    index: usize,
) -> Option<Vertex> {
    let bv = bits.get(v);
    g.neighbors(v)
        .iter()
        .copied()
        .filter(|&w| bits.get(w) != bv)
        .nth(index)
}

/// Balanced step for a fixed start vertex and neighbour choice.
///
/// `u` must be an opposite-valued neighbour of `v`, and may be `None` only
/// when `v` has none.
pub fn balanced_flip_at(
    g: &GraphInstance,
    parent: &BitString,
    v: Vertex,
    u: Option<Vertex>,
) -> Result<MutationOutcome> {
    if parent.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            actual: parent.len(),
        });
    }
    if v == 0 || v > g.n() {
        return Err(invalid(format!("start vertex {v} out of range")));
    }
    match u {
        Some(u) => {
            if !g.neighbors(v).contains(&u) || parent.get(u) == parent.get(v) {
                return Err(invalid(format!(
                    "{u} is not an opposite-valued neighbour of {v}"
                )));
            }
            Ok(MutationOutcome::from_flips(
                parent,
                vec![v, u],
                MutationKind::BalancedFlip { v, u },
            ))
        }
        None if opposite_neighbor_count(g, parent, v) > 0 => Err(invalid(format!(
            "vertex {v} has opposite-valued neighbours; a null step is impossible"
        ))),
        None => Ok(MutationOutcome::from_flips(
            parent,
            Vec::new(),
            MutationKind::BalancedNull { v },
        )),
    }
}

/// Picks `v` uniformly and swaps it with a uniform opposite-valued neighbour.
pub fn balanced_flip<R: Rng + ?Sized>(
    g: &GraphInstance,
    parent: &BitString,
    rng: &mut R,
) -> MutationOutcome {
    let v = rng.random_range(1..=g.n());
    let choices = opposite_neighbor_count(g, parent, v);
    let u = (choices > 0)
        .then(|| opposite_neighbor(g, parent, v, rng.random_range(0..choices)))
        .flatten();
    balanced_flip_at(g, parent, v, u).expect("u drawn from the opposite neighbours of v")
}

pub fn rls_step<R: Rng + ?Sized>(parent: &BitString, rng: &mut R) -> MutationOutcome {
    let v = rng.random_range(1..=parent.len());
    MutationOutcome::from_flips(parent, vec![v], MutationKind::SingleFlip { v })
}

/// Offspring replaces the parent unless strictly worse.
#[inline]
pub fn accept(parent_fitness: u64, offspring_fitness: u64) -> bool {
    offspring_fitness <= parent_fitness
}
