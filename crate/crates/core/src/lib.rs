//! Simulation laboratory for the (1+1) EA, the Balanced (1+1) EA and RLS on
//! minimum vertex cover.
//!
//! Vertices are numbered `1..=n`. A candidate is a [`solution::BitString`]
//! whose bit `v` marks `v` as part of the cover, scored by the penalised
//! fitness `|X| + (n+1) u(X)` where `u(X)` counts uncovered edges.

pub mod analysis;
pub mod bipartite;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod operators;
pub mod solution;
pub mod walks;

pub use error::{Error, Result};
