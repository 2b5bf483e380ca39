//! Candidate solutions, the penalised fitness function and exact optima.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{GraphInstance, InstanceKind, Vertex};

/// Largest instance [`brute_force_min_cover`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 24;

/// Bit string over vertices `1..=n`; bit `v` set means `v` is in the cover.
///
/// Displays as ASCII `0`/`1` with vertex 1 first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn zeros(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(Vertex) -> bool) -> Self {
        Self((1..=n).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, v: Vertex) -> bool {
        self.0[v - 1]
    }

    #[inline]
    pub fn set(&mut self, v: Vertex, value: bool) {
        self.0[v - 1] = value;
    }

    #[inline]
    pub fn flip(&mut self, v: Vertex) {
        self.0[v - 1] ^= true;
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Vertices whose bit is set.
    pub fn members(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i + 1))
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    /// Positions where `self` and `other` differ.
    pub fn difference(&self, other: &Self) -> Vec<Vertex> {
        self.0
            .iter()
            .zip(&other.0)
            .enumerate()
            .filter_map(|(i, (a, b))| (a != b).then_some(i + 1))
            .collect()
    }
}

impl From<Vec<bool>> for BitString {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(invalid(format!("bit strings are 0/1 only, found `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_len(g: &GraphInstance, bits: &BitString) -> Result<()> {
    if bits.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            actual: bits.len(),
        });
    }
    Ok(())
}

/// Number of edges with neither endpoint selected.
pub fn uncovered_edges(g: &GraphInstance, bits: &BitString) -> Result<usize> {
    check_len(g, bits)?;
    Ok(g
        .edges()
        .iter()
        .filter(|&&(a, b)| !bits.get(a) && !bits.get(b))
        .count())
}

/// `|X|_1 + (n + 1) u(X)`.
pub fn fitness(g: &GraphInstance, bits: &BitString) -> Result<u64> {
    let u = uncovered_edges(g, bits)? as u64;
    Ok(bits.count_ones() as u64 + (g.n() as u64 + 1) * u)
}

pub fn is_feasible(g: &GraphInstance, bits: &BitString) -> Result<bool> {
    Ok(uncovered_edges(g, bits)? == 0)
}

/// Excess size `|X|_1 - OPT`; negative for small infeasible strings.
pub fn level(g: &GraphInstance, bits: &BitString, opt: &OptimumInfo) -> Result<i64> {
    check_len(g, bits)?;
    Ok(bits.count_ones() as i64 - opt.size as i64)
}

/// Minimum cover cardinality with optional uniqueness and witness.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimumInfo {
    pub size: usize,
    pub unique: Option<bool>,
    pub witness: Option<BitString>,
}

/// Closed-form optimum for paths and complete bipartite graphs.
pub fn known_opt(g: &GraphInstance) -> Option<OptimumInfo> {
    let n = g.n();
    match g.kind() {
        InstanceKind::Path => {
            // even positions; for even n this is one of several optima
            let witness = BitString::from_fn(n, |v| v % 2 == 0);
            Some(OptimumInfo {
                size: n / 2,
                unique: Some(n % 2 == 1),
                witness: Some(witness),
            })
        }
        InstanceKind::CompleteBipartite { left, right } => {
            let take_left = left <= right;
            let witness = BitString::from_fn(n, |v| (v <= left) == take_left);
            Some(OptimumInfo {
                size: left.min(right),
                unique: Some(left != right),
                witness: Some(witness),
            })
        }
        InstanceKind::General => None,
    }
}

/// Exhaustive minimum vertex cover over all `2^n` subsets.
pub fn brute_force_min_cover(g: &GraphInstance) -> Result<OptimumInfo> {
    let n = g.n();
    if n > ENUMERATION_LIMIT {
        return Err(Error::ResourceGuard {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let neighbor_masks: Vec<u32> = (1..=n)
        .map(|v| g.neighbors(v).iter().fold(0u32, |m, &w| m | 1 << (w - 1)))
        .collect();

    let mut best = usize::MAX;
    let mut best_mask = 0u32;
    let mut count = 0usize;
    for mask in 0u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size > best {
            continue;
        }
        // a subset covers every edge iff each excluded vertex has all
        // neighbours included
        let covers = (0..n).all(|i| mask & (1 << i) != 0 || neighbor_masks[i] & !mask == 0);
        if !covers {
            continue;
        }
        if size < best {
            best = size;
            best_mask = mask;
            count = 1;
        } else {
            count += 1;
        }
    }
    Ok(OptimumInfo {
        size: best,
        unique: Some(count == 1),
        witness: Some(BitString::from_fn(n, |v| best_mask & (1 << (v - 1)) != 0)),
    })
}

/// Bit string with cached ones-count, uncovered-edge count and fitness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    bits: BitString,
    ones: usize,
    uncovered: usize,
    fitness: u64,
}

impl Candidate {
    pub fn new(g: &GraphInstance, bits: BitString) -> Result<Self> {
        let uncovered = uncovered_edges(g, &bits)?;
        let ones = bits.count_ones();
        Ok(Self {
            fitness: penalised(g.n(), ones, uncovered),
            bits,
            ones,
            uncovered,
        })
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn into_bits(self) -> BitString {
        self.bits
    }

    pub fn ones(&self) -> usize {
        self.ones
    }

    pub fn uncovered(&self) -> usize {
        self.uncovered
    }

    pub fn fitness(&self) -> u64 {
        self.fitness
    }

    pub fn is_feasible(&self) -> bool {
        self.uncovered == 0
    }

    /// Change in `(ones, uncovered)` if the distinct positions in `flips` were
    /// toggled. Only edges incident to flipped vertices are inspected.
    #[inline]
    pub fn flip_delta(&self, g: &GraphInstance, flips: &[Vertex]) -> (i64, i64) {
        let mut d_ones = 0i64;
        let mut d_uncovered = 0i64;
        for &v in flips {
            let bv = self.bits.get(v);
            d_ones += if bv { -1 } else { 1 };
            for &w in g.neighbors(v) {
                let w_flipped = flips.contains(&w);
                // edges between two flipped vertices are counted once
                if w_flipped && w < v {
                    continue;
                }
                let bw = self.bits.get(w);
                let before = !bv && !bw;
                let after = bv && (bw == w_flipped);
                d_uncovered += after as i64 - before as i64;
            }
        }
        (d_ones, d_uncovered)
    }

    /// Fitness after toggling `flips`, together with the component deltas.
    #[inline]
    pub fn fitness_after(&self, g: &GraphInstance, flips: &[Vertex]) -> (u64, i64, i64) {
        let (d_ones, d_uncovered) = self.flip_delta(g, flips);
        let ones = (self.ones as i64 + d_ones) as usize;
        let uncovered = (self.uncovered as i64 + d_uncovered) as usize;
        (penalised(g.n(), ones, uncovered), d_ones, d_uncovered)
    }

    /// Applies `flips` using deltas from [`Candidate::fitness_after`].
    #[inline]
    pub fn apply(&mut self, flips: &[Vertex], fitness: u64, d_ones: i64, d_uncovered: i64) {
        for &v in flips {
            self.bits.flip(v);
        }
        self.ones = (self.ones as i64 + d_ones) as usize;
        self.uncovered = (self.uncovered as i64 + d_uncovered) as usize;
        self.fitness = fitness;
    }

    /// Toggles `flips` and refreshes the caches incrementally.
    pub fn flip_all(&mut self, g: &GraphInstance, flips: &[Vertex]) {
        let (f, d_ones, d_uncovered) = self.fitness_after(g, flips);
        self.apply(flips, f, d_ones, d_uncovered);
    }
}

#[inline]
fn penalised(n: usize, ones: usize, uncovered: usize) -> u64 {
    ones as u64 + (n as u64 + 1) * uncovered as u64
}
