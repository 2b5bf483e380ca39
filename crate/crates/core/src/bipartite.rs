//! Instrumentation for complete bipartite graphs `K_{L,R}`.
//!
//! Tracks the stopping times `T_L` (left side fully selected), `T'_R` (at
//! least `R - L` right vertices selected), `T_R` (right side fully selected)
//! and `T_S` (shadow reaches `R - L`), and the shadow process `S_t`:
//!
//! - `S_0 = R_0`, the selected right vertices of the initial string;
//! - an attempted standard flip of the set `A` adds `A ∩ V_R`;
//! - an attempted balanced flip starting at `v ∈ S_t` removes `v`.
//!
//! The shadow follows attempts, not accepted moves, and dominates
//! `R_t = V_R ∩ X_t` up to `min(T_L, T'_R)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{GraphInstance, Vertex};
use crate::operators::{Hook, MutationKind, Proposal, RunRecord};
use crate::solution::{BitString, Candidate};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteTimes {
    pub t_l: Option<u64>,
    pub t_r_prime: Option<u64>,
    pub t_r: Option<u64>,
    /// Only populated when shadow tracking is enabled.
    pub t_s: Option<u64>,
    /// The run visited `X = V_R`.
    pub trapped: bool,
    /// First `t <= min(T_L, T'_R)` with `R_t ⊄ S_t`.
    pub coupling_violation: Option<u64>,
    /// First step that added a right vertex or dropped a left one after
    /// `V_L ⊆ X` with fewer than `R - L` right vertices.
    pub absorption_violation: Option<u64>,
}

impl BipartiteTimes {
    /// `T_S <= T'_R <= T_R` wherever both sides are finite.
    pub fn ordering_holds(&self) -> bool {
        let le = |a: Option<u64>, b: Option<u64>| match (a, b) {
            (Some(a), Some(b)) => a <= b,
            _ => true,
        };
        le(self.t_s, self.t_r_prime) && le(self.t_r_prime, self.t_r)
    }
}

fn partition(g: &GraphInstance) -> Result<(usize, usize)> {
    g.partition_sizes().ok_or_else(|| {
        Error::UnsupportedInstance("operation requires a complete bipartite instance".into())
    })
}

/// `S_t` as a membership vector over the right partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShadowState {
    left: usize,
    members: Vec<bool>,
    size: usize,
}

impl ShadowState {
    /// `S_0 = R_0`.
    pub fn initial(g: &GraphInstance, x: &BitString) -> Result<Self> {
        let (left, right) = partition(g)?;
        let members: Vec<bool> = (left + 1..=left + right).map(|v| x.get(v)).collect();
        let size = members.iter().filter(|&&b| b).count();
        Ok(Self {
            left,
            members,
            size,
        })
    }

    pub fn empty(g: &GraphInstance) -> Result<Self> {
        let (left, right) = partition(g)?;
        Ok(Self {
            left,
            members: vec![false; right],
            size: 0,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn contains(&self, v: Vertex) -> bool {
        v > self.left && self.members[v - self.left - 1]
    }

    pub fn members(&self) -> impl Iterator<Item = Vertex> + '_ {
        let left = self.left;
        self.members
            .iter()
            .enumerate()
            .filter_map(move |(i, &b)| b.then_some(left + i + 1))
    }

    fn insert(&mut self, v: Vertex) {
        let slot = &mut self.members[v - self.left - 1];
        if !*slot {
            *slot = true;
            self.size += 1;
        }
    }

    fn remove(&mut self, v: Vertex) {
        let slot = &mut self.members[v - self.left - 1];
        if *slot {
            *slot = false;
            self.size -= 1;
        }
    }

    /// Applies one attempted mutation in place.
    #[inline]
    pub fn apply(&mut self, proposal: &Proposal<'_>) {
        match proposal.kind {
            MutationKind::StandardFlip | MutationKind::SingleFlip { .. } => {
                for &w in proposal.flipped {
                    if w > self.left {
                        self.insert(w);
                    }
                }
            }
            MutationKind::BalancedFlip { v, .. } | MutationKind::BalancedNull { v } => {
                if self.contains(v) {
                    self.remove(v);
                }
            }
        }
    }

    /// Whether every selected right vertex of `x` lies in the shadow.
    pub fn covers_right_of(&self, x: &BitString) -> bool {
        (self.left + 1..=self.left + self.members.len()).all(|v| !x.get(v) || self.contains(v))
    }
}

/// One shadow transition for the attempted mutation `proposal`.
pub fn shadow_step(
    shadow: &ShadowState,
    proposal: &Proposal<'_>,
    g: &GraphInstance,
) -> Result<ShadowState> {
    partition(g)?;
    let mut next = shadow.clone();
    next.apply(proposal);
    Ok(next)
}

/// `X_t`, `S_t` at one iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoupledState {
    pub t: u64,
    pub x: BitString,
    pub shadow: ShadowState,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingReport {
    pub passed: bool,
    pub first_violation: Option<u64>,
    /// Last `t` inside the checked window.
    pub checked_until: Option<u64>,
}

/// Checks `R_t ⊆ S_t` for every recorded `t <= min(T_L, T'_R)`.
///
/// `states` must be in increasing `t` order and start at `t = 0`.
pub fn coupling_check(g: &GraphInstance, states: &[CoupledState]) -> Result<CouplingReport> {
    let (left, right) = partition(g)?;
    let mut checked_until = None;
    for s in states {
        s.x.len()
            .eq(&g.n())
            .then_some(())
            .ok_or(Error::LengthMismatch {
                expected: g.n(),
                actual: s.x.len(),
            })?;
        if !s.shadow.covers_right_of(&s.x) {
            return Ok(CouplingReport {
                passed: false,
                first_violation: Some(s.t),
                checked_until,
            });
        }
        checked_until = Some(s.t);
        let left_full = (1..=left).all(|v| s.x.get(v));
        let right_count = (left + 1..=left + right).filter(|&v| s.x.get(v)).count();
        // t = min(T_L, T'_R) is the last time inside the window
        if left_full || right_count + left >= right {
            break;
        }
    }
    Ok(CouplingReport {
        passed: true,
        first_violation: None,
        checked_until,
    })
}

/// Engine hook maintaining `S_t`, `T_S` and the coupling check online.
#[derive(Clone, Debug)]
pub struct ShadowTracker {
    left: usize,
    right: usize,
    shadow: Option<ShadowState>,
    left_ones: usize,
    right_ones: usize,
    // min(T_L, T'_R) has been passed
    window_closed: bool,
    t_s: Option<u64>,
    violation: Option<u64>,
    recorded: Option<Vec<CoupledState>>,
}

impl ShadowTracker {
    pub fn new(g: &GraphInstance) -> Result<Self> {
        let (left, right) = partition(g)?;
        Ok(Self {
            left,
            right,
            shadow: None,
            left_ones: 0,
            right_ones: 0,
            window_closed: false,
            t_s: None,
            violation: None,
            recorded: None,
        })
    }

    /// Also keep every `(t, X_t, S_t)` for [`coupling_check`].
    pub fn recording(g: &GraphInstance) -> Result<Self> {
        let mut tracker = Self::new(g)?;
        tracker.recorded = Some(Vec::new());
        Ok(tracker)
    }

    pub fn shadow(&self) -> Option<&ShadowState> {
        self.shadow.as_ref()
    }

    pub fn t_s(&self) -> Option<u64> {
        self.t_s
    }

    pub fn violation(&self) -> Option<u64> {
        self.violation
    }

    pub fn recorded(&self) -> Option<&[CoupledState]> {
        self.recorded.as_deref()
    }

    fn observe(&mut self, t: u64, x: &BitString) {
        let shadow = self.shadow.as_ref().expect("started");
        if self.t_s.is_none() && shadow.size() + self.left >= self.right {
            self.t_s = Some(t);
        }
        if !self.window_closed {
            if self.violation.is_none() && !shadow.covers_right_of(x) {
                self.violation = Some(t);
            }
            if self.left_ones == self.left || self.right_ones + self.left >= self.right {
                self.window_closed = true;
            }
        }
        if let Some(rec) = self.recorded.as_mut() {
            rec.push(CoupledState {
                t,
                x: x.clone(),
                shadow: shadow.clone(),
            });
        }
    }
}

impl Hook for ShadowTracker {
    fn on_start(&mut self, g: &GraphInstance, state: &Candidate) {
        let shadow = ShadowState::initial(g, state.bits()).expect("bipartite instance");
        self.left_ones = (1..=self.left).filter(|&v| state.bits().get(v)).count();
        self.right_ones = state.ones() - self.left_ones;
        self.shadow = Some(shadow);
        self.observe(0, state.bits());
    }

    fn on_step(
        &mut self,
        _g: &GraphInstance,
        t: u64,
        proposal: &Proposal<'_>,
        accepted: bool,
        state: &Candidate,
    ) {
        self.shadow.as_mut().expect("started").apply(proposal);
        if accepted {
            for &v in proposal.flipped {
                let count = if v <= self.left {
                    &mut self.left_ones
                } else {
                    &mut self.right_ones
                };
                if state.bits().get(v) {
                    *count += 1;
                } else {
                    *count -= 1;
                }
            }
        }
        self.observe(t, state.bits());
    }

    fn on_discarded(&mut self, _g: &GraphInstance, proposal: &Proposal<'_>) {
        self.shadow.as_mut().expect("started").apply(proposal);
    }

    fn on_finish(&mut self, record: &mut RunRecord) {
        if let Some(times) = record.bipartite.as_mut() {
            times.t_s = self.t_s;
            times.coupling_violation = self.violation;
        }
    }
}

/// Whether `x` selects exactly the right partition (the local optimum).
pub fn trap_detect(x: &BitString, g: &GraphInstance) -> Result<bool> {
    let (left, _) = partition(g)?;
    if x.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            actual: x.len(),
        });
    }
    Ok((1..=g.n()).all(|v| x.get(v) == (v > left)))
}

/// `⌈multiplier · (c+1) · L² · ln((c+1) L)⌉`.
pub fn balanced_runtime_budget(left: usize, c: f64, multiplier: f64) -> Result<u64> {
    if left == 0 {
        return Err(invalid("L must be positive"));
    }
    if c <= 0.0 || !c.is_finite() {
        return Err(invalid(format!("ratio c = {c} must be positive")));
    }
    if multiplier <= 0.0 || !multiplier.is_finite() {
        return Err(invalid(format!("multiplier {multiplier} must be positive")));
    }
    let right = c * left as f64;
    if (right - right.round()).abs() > 1e-9 {
        return Err(invalid(format!("c·L = {right} is not an integer")));
    }
    let l = left as f64;
    let n = (c + 1.0) * l;
    Ok((multiplier * (c + 1.0) * l * l * n.ln()).ceil() as u64)
}
