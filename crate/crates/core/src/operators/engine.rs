use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    opposite_neighbor, opposite_neighbor_count, Algorithm, MutationKind, Proposal,
    StandardFlipSampler,
};
use crate::bipartite::{BipartiteTimes, ShadowTracker};
use crate::error::{Error, Result};
use crate::graph::{GraphInstance, Vertex};
use crate::solution::{BitString, Candidate, OptimumInfo};

/// How the Balanced EA treats a balanced pick whose vertex has no
/// opposite-valued neighbour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullSemantics {
    /// The pick consumes one iteration with the parent as offspring.
    #[default]
    CountedIteration,
    /// The pick is discarded and the branch coin is redrawn without
    /// counting an iteration.
    Redraw,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    #[default]
    Uniform,
    Fixed(BitString),
}

/// Conditions under which the loop terminates; at least one must be set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingCriterion {
    pub max_iterations: Option<u64>,
    /// Stop once the optimum is sampled; needs [`OptimumInfo`].
    pub until_optimum: bool,
    /// Stop once the fitness is at most this value.
    pub target_fitness: Option<u64>,
}

impl StoppingCriterion {
    pub fn budget(max_iterations: u64) -> Self {
        Self {
            max_iterations: Some(max_iterations),
            ..Self::default()
        }
    }

    pub fn optimum_or_budget(max_iterations: u64) -> Self {
        Self {
            max_iterations: Some(max_iterations),
            until_optimum: true,
            target_fitness: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub init: Init,
    pub stop: StoppingCriterion,
    pub optimum: Option<OptimumInfo>,
    pub null_semantics: NullSemantics,
    /// Maintain the shadow process on complete bipartite instances.
    pub track_shadow: bool,
}

impl RunSpec {
    pub fn new(algorithm: Algorithm, stop: StoppingCriterion) -> Self {
        Self {
            algorithm,
            init: Init::Uniform,
            stop,
            optimum: None,
            null_semantics: NullSemantics::default(),
            track_shadow: false,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_optimum(mut self, optimum: Option<OptimumInfo>) -> Self {
        self.optimum = optimum;
        self
    }

    pub fn with_shadow(mut self, on: bool) -> Self {
        self.track_shadow = on;
        self
    }

    pub fn with_null_semantics(mut self, semantics: NullSemantics) -> Self {
        self.null_semantics = semantics;
        self
    }
}

/// Summary of one run.
///
/// Times count completed iterations: `X_0` is the initial string and `X_t`
/// the parent after `t` loop bodies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub iterations: u64,
    pub t_feasible: Option<u64>,
    pub t_optimal: Option<u64>,
    /// First time the fitness dropped to `target_fitness`.
    pub t_target: Option<u64>,
    /// Whether a target (optimum or fitness) stopped the run before the budget.
    pub completed: bool,
    /// Iterations spent at each level `|X|_1 - OPT`, counting `X_t` for
    /// `t_feasible <= t < iterations`.
    pub level_occupancy: BTreeMap<i64, u64>,
    pub terminal: BitString,
    pub terminal_fitness: u64,
    pub terminal_ones: usize,
    pub terminal_feasible: bool,
    /// Balanced picks discarded under [`NullSemantics::Redraw`].
    pub discarded_picks: u64,
    pub bipartite: Option<BipartiteTimes>,
    pub trapped: Option<bool>,
}

/// Observer of the selection loop.
pub trait Hook {
    fn on_start(&mut self, _g: &GraphInstance, _state: &Candidate) {}

    /// Called after iteration `t`; `state` is `X_t`.
    fn on_step(
        &mut self,
        _g: &GraphInstance,
        _t: u64,
        _proposal: &Proposal<'_>,
        _accepted: bool,
        _state: &Candidate,
    ) {
    }

    /// A balanced pick discarded under [`NullSemantics::Redraw`].
    fn on_discarded(&mut self, _g: &GraphInstance, _proposal: &Proposal<'_>) {}

    fn on_finish(&mut self, _record: &mut RunRecord) {}
}

impl Hook for () {}

impl<H: Hook + ?Sized> Hook for &mut H {
    fn on_start(&mut self, g: &GraphInstance, state: &Candidate) {
        (**self).on_start(g, state)
    }
    fn on_step(
        &mut self,
        g: &GraphInstance,
        t: u64,
        proposal: &Proposal<'_>,
        accepted: bool,
        state: &Candidate,
    ) {
        (**self).on_step(g, t, proposal, accepted, state)
    }
    fn on_discarded(&mut self, g: &GraphInstance, proposal: &Proposal<'_>) {
        (**self).on_discarded(g, proposal)
    }
    fn on_finish(&mut self, record: &mut RunRecord) {
        (**self).on_finish(record)
    }
}

impl<A: Hook, B: Hook> Hook for (A, B) {
    fn on_start(&mut self, g: &GraphInstance, state: &Candidate) {
        self.0.on_start(g, state);
        self.1.on_start(g, state);
    }
    fn on_step(
        &mut self,
        g: &GraphInstance,
        t: u64,
        proposal: &Proposal<'_>,
        accepted: bool,
        state: &Candidate,
    ) {
        self.0.on_step(g, t, proposal, accepted, state);
        self.1.on_step(g, t, proposal, accepted, state);
    }
    fn on_discarded(&mut self, g: &GraphInstance, proposal: &Proposal<'_>) {
        self.0.on_discarded(g, proposal);
        self.1.on_discarded(g, proposal);
    }
    fn on_finish(&mut self, record: &mut RunRecord) {
        self.0.on_finish(record);
        self.1.on_finish(record);
    }
}

/// Records `X_0` and every state change as `(t, X_t)`.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryRecorder {
    pub points: Vec<(u64, BitString)>,
}

impl Hook for TrajectoryRecorder {
    fn on_start(&mut self, _g: &GraphInstance, state: &Candidate) {
        self.points.push((0, state.bits().clone()));
    }

    fn on_step(
        &mut self,
        _g: &GraphInstance,
        t: u64,
        proposal: &Proposal<'_>,
        accepted: bool,
        state: &Candidate,
    ) {
        if accepted && !proposal.flipped.is_empty() {
            self.points.push((t, state.bits().clone()));
        }
    }
}

/// Iteration budget for path runs: `100 e n (ln n + 1/2)` for the
/// feasibility phase plus `20 n^4` (`20 n^3` for the Balanced EA).
pub fn default_path_budget(algorithm: Algorithm, n: usize) -> u64 {
    let nf = n as f64;
    let feasibility = (100.0 * std::f64::consts::E * nf * (nf.ln() + 0.5)).ceil() as u64;
    let n = n as u64;
    let optimisation = match algorithm {
        Algorithm::BalancedEa => 20 * n.pow(3),
        Algorithm::Ea | Algorithm::Rls => 20 * n.pow(4),
    };
    feasibility + optimisation
}

/// Runs one algorithm on `g` with a private stream seeded by `seed`.
pub fn run<H: Hook>(
    g: &GraphInstance,
    spec: &RunSpec,
    seed: u64,
    hooks: &mut H,
) -> Result<RunRecord> {
    if spec.track_shadow && g.partition_sizes().is_some() {
        let mut with_shadow = (ShadowTracker::new(g)?, hooks);
        run_with(g, spec, seed, &mut with_shadow)
    } else {
        run_with(g, spec, seed, hooks)
    }
}

fn run_with<H: Hook>(
    g: &GraphInstance,
    spec: &RunSpec,
    seed: u64,
    hooks: &mut H,
) -> Result<RunRecord> {
    let stop = &spec.stop;
    if stop.max_iterations.is_none() && !stop.until_optimum && stop.target_fitness.is_none() {
        return Err(Error::Configuration(
            "stopping criterion needs a budget or a target".into(),
        ));
    }
    if stop.until_optimum && spec.optimum.is_none() {
        return Err(Error::Configuration(
            "optimum-reached stopping requires a known optimum".into(),
        ));
    }
    let n = g.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let initial = match &spec.init {
        Init::Uniform => BitString::from_fn(n, |_| rng.random()),
        Init::Fixed(bits) => bits.clone(),
    };
    let mut state = Candidate::new(g, initial)?;

    let opt_size = spec.optimum.as_ref().map(|o| o.size as u64);
    let target = match (stop.until_optimum, stop.target_fitness) {
        (true, Some(f)) => opt_size.map(|o| o.max(f)),
        (true, None) => opt_size,
        (false, f) => f,
    };
    let budget = stop.max_iterations.unwrap_or(u64::MAX);

    let mut book = Bookkeeping::new(spec.optimum.as_ref(), &state);
    let mut bip = BipartiteMonitor::new(g, &state);
    hooks.on_start(g, &state);

    let standard = StandardFlipSampler::new(n);
    let mut flips: Vec<Vertex> = Vec::with_capacity(8);
    let mut discarded = 0u64;
    let mut t = 0u64;
    let mut t_target = target.filter(|&f| state.fitness() <= f).map(|_| 0);

    while t_target.is_none() && t < budget {
        let kind = match spec.algorithm {
            Algorithm::Ea => {
                standard.sample_into(&mut rng, &mut flips);
                MutationKind::StandardFlip
            }
            Algorithm::Rls => {
                flips.clear();
                let v = rng.random_range(1..=n);
                flips.push(v);
                MutationKind::SingleFlip { v }
            }
            Algorithm::BalancedEa => loop {
                if rng.random::<f64>() <= 0.5 {
                    standard.sample_into(&mut rng, &mut flips);
                    break MutationKind::StandardFlip;
                }
                flips.clear();
                let v = rng.random_range(1..=n);
                let choices = opposite_neighbor_count(g, state.bits(), v);
                if choices > 0 {
                    let pick = rng.random_range(0..choices);
                    let u = opposite_neighbor(g, state.bits(), v, pick)
                        .expect("pick is below the neighbour count");
                    flips.push(v);
                    flips.push(u);
                    break MutationKind::BalancedFlip { v, u };
                }
                let kind = MutationKind::BalancedNull { v };
                if spec.null_semantics == NullSemantics::CountedIteration {
                    break kind;
                }
                discarded += 1;
                hooks.on_discarded(
                    g,
                    &Proposal {
                        flipped: &flips,
                        kind,
                    },
                );
            },
        };

        t += 1;
        let accepted = if flips.is_empty() {
            true
        } else {
            let (f, d_ones, d_uncovered) = state.fitness_after(g, &flips);
            let ok = super::accept(state.fitness(), f);
            if ok {
                state.apply(&flips, f, d_ones, d_uncovered);
                if d_ones != 0 || d_uncovered != 0 {
                    book.on_change(t, &state);
                }
                bip.on_accept(&flips, &state);
            }
            ok
        };
        bip.observe(t);
        let proposal = Proposal {
            flipped: &flips,
            kind,
        };
        hooks.on_step(g, t, &proposal, accepted, &state);

        if let Some(f) = target {
            if state.fitness() <= f {
                t_target = Some(t);
            }
        }
    }

    let mut record = RunRecord {
        seed,
        algorithm: spec.algorithm,
        iterations: t,
        t_feasible: book.t_feasible,
        t_optimal: book.t_optimal,
        t_target,
        completed: t_target.is_some(),
        level_occupancy: book.finish(t),
        terminal_fitness: state.fitness(),
        terminal_ones: state.ones(),
        terminal_feasible: state.is_feasible(),
        terminal: state.into_bits(),
        discarded_picks: discarded,
        trapped: bip.times.as_ref().map(|b| b.trapped),
        bipartite: bip.times,
    };
    hooks.on_finish(&mut record);
    Ok(record)
}

/// Feasibility, optimality and level-occupancy tracking.
struct Bookkeeping {
    opt: Option<u64>,
    t_feasible: Option<u64>,
    t_optimal: Option<u64>,
    occupancy: BTreeMap<i64, u64>,
    // (level, since) of the current stretch once feasible
    current: Option<(i64, u64)>,
}

impl Bookkeeping {
    fn new(opt: Option<&OptimumInfo>, state: &Candidate) -> Self {
        let mut book = Self {
            opt: opt.map(|o| o.size as u64),
            t_feasible: None,
            t_optimal: None,
            occupancy: BTreeMap::new(),
            current: None,
        };
        book.on_change(0, state);
        book
    }

    fn on_change(&mut self, t: u64, state: &Candidate) {
        if !state.is_feasible() {
            return;
        }
        self.t_feasible.get_or_insert(t);
        let Some(opt) = self.opt else { return };
        let level = state.ones() as i64 - opt as i64;
        if level == 0 {
            self.t_optimal.get_or_insert(t);
        }
        match self.current {
            Some((l, _)) if l == level => {}
            Some((l, since)) => {
                *self.occupancy.entry(l).or_default() += t - since;
                self.current = Some((level, t));
            }
            None => self.current = Some((level, t)),
        }
    }

    fn finish(mut self, end: u64) -> BTreeMap<i64, u64> {
        if let Some((l, since)) = self.current {
            if end > since {
                *self.occupancy.entry(l).or_default() += end - since;
            }
        }
        self.occupancy
    }
}

/// Stopping times and the absorption check on `K_{L,R}`.
struct BipartiteMonitor {
    left: usize,
    right: usize,
    left_ones: usize,
    right_ones: usize,
    times: Option<BipartiteTimes>,
    // set once V_L is selected with fewer than R - L right vertices
    absorbed: bool,
    // right count at the previous observation
    absorbed_right: usize,
}

impl BipartiteMonitor {
    fn new(g: &GraphInstance, state: &Candidate) -> Self {
        let Some((left, right)) = g.partition_sizes() else {
            return Self {
                left: 0,
                right: 0,
                left_ones: 0,
                right_ones: 0,
                times: None,
                absorbed: false,
                absorbed_right: 0,
            };
        };
        let left_ones = (1..=left).filter(|&v| state.bits().get(v)).count();
        let mut m = Self {
            left,
            right,
            left_ones,
            right_ones: state.ones() - left_ones,
            times: Some(BipartiteTimes::default()),
            absorbed: false,
            absorbed_right: 0,
        };
        m.observe(0);
        m
    }

    /// Updates partition counts after `flips` were applied to `state`.
    #[inline]
    fn on_accept(&mut self, flips: &[Vertex], state: &Candidate) {
        if self.times.is_none() {
            return;
        }
        for &v in flips {
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

    #[inline]
    fn observe(&mut self, t: u64) {
        let Some(times) = self.times.as_mut() else { return };
        let (left_ones, right_ones) = (self.left_ones, self.right_ones);
        if self.absorbed
            && times.absorption_violation.is_none()
            && (left_ones != self.left || right_ones > self.absorbed_right)
        {
            times.absorption_violation = Some(t);
        }
        self.absorbed_right = right_ones;

        let l_full = left_ones == self.left;
        if l_full && times.t_l.is_none() {
            times.t_l = Some(t);
        }
        if right_ones + self.left >= self.right && times.t_r_prime.is_none() {
            times.t_r_prime = Some(t);
        }
        if right_ones == self.right {
            times.t_r.get_or_insert(t);
            if left_ones == 0 {
                times.trapped = true;
            }
        }
        if l_full && right_ones + self.left < self.right {
            self.absorbed = true;
        }
    }
}
