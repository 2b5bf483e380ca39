use proptest::prelude::*;

use vclab::graph::{make_complete_bipartite, make_path, make_random, GraphInstance};
use vclab::operators::{
    run, Algorithm, Hook, Init, MutationKind, NullSemantics, Proposal, RunSpec, StoppingCriterion,
};
use vclab::solution::{fitness, known_opt, BitString, Candidate};

/// Checks per-step invariants of the selection loop against full recomputation.
#[derive(Default)]
struct Auditor {
    last_fitness: Option<u64>,
    last_ones: usize,
    was_feasible: bool,
    steps: u64,
    nulls: u64,
    discarded: u64,
    problems: Vec<String>,
}

impl Hook for Auditor {
    fn on_start(&mut self, _g: &GraphInstance, state: &Candidate) {
        self.last_fitness = Some(state.fitness());
        self.last_ones = state.ones();
        self.was_feasible = state.is_feasible();
    }

    fn on_step(&mut self, g: &GraphInstance, t: u64, p: &Proposal<'_>, accepted: bool, state: &Candidate) {
        self.steps += 1;
        if t != self.steps {
            self.problems.push(format!("time {t} after {} steps", self.steps));
        }
        let full = fitness(g, state.bits()).unwrap();
        if full != state.fitness() {
            self.problems.push(format!("t={t}: cached fitness {} != {full}", state.fitness()));
        }
        if full > self.last_fitness.unwrap() {
            self.problems.push(format!("t={t}: fitness rose"));
        }
        if self.was_feasible && !state.is_feasible() {
            self.problems.push(format!("t={t}: left the feasible region"));
        }
        match p.kind {
            MutationKind::BalancedFlip { .. } if accepted && state.ones() != self.last_ones => {
                self.problems.push(format!("t={t}: balanced flip changed |X|"));
            }
            MutationKind::SingleFlip { v } if p.flipped != [v] => {
                self.problems.push(format!("t={t}: RLS flipped {:?}", p.flipped));
            }
            MutationKind::BalancedNull { .. } => self.nulls += 1,
            _ => {}
        }
        self.last_fitness = Some(full);
        self.last_ones = state.ones();
        self.was_feasible |= state.is_feasible();
    }

    fn on_discarded(&mut self, _g: &GraphInstance, _p: &Proposal<'_>) {
        self.discarded += 1;
    }
}

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop_oneof![Just(Algorithm::Ea), Just(Algorithm::BalancedEa), Just(Algorithm::Rls)]
}

fn graph() -> impl Strategy<Value = GraphInstance> {
    prop_oneof![
        (2usize..30).prop_map(|n| make_path(n).unwrap()),
        (1usize..6, 1usize..10).prop_map(|(l, r)| make_complete_bipartite(l, r).unwrap()),
        (2usize..20, 0.05f64..0.6, any::<u64>()).prop_map(|(n, p, s)| make_random(n, p, s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_loop_invariants(g in graph(), alg in algorithm(), seed in any::<u64>()) {
        let spec = RunSpec::new(alg, StoppingCriterion::budget(3_000));
        let mut audit = Auditor::default();
        let rec = run(&g, &spec, seed, &mut audit).unwrap();
        prop_assert!(audit.problems.is_empty(), "{:?}", audit.problems);
        prop_assert_eq!(rec.iterations, audit.steps);
        prop_assert_eq!(rec.terminal_fitness, fitness(&g, &rec.terminal).unwrap());
        prop_assert_eq!(rec.terminal_ones, rec.terminal.count_ones());
        prop_assert_eq!(audit.discarded, 0);
        if alg != Algorithm::BalancedEa {
            prop_assert_eq!(audit.nulls, 0);
        }
    }

    #[test]
    fn runs_are_reproducible(g in graph(), alg in algorithm(), seed in any::<u64>()) {
        let spec = RunSpec::new(alg, StoppingCriterion::budget(500));
        let a = run(&g, &spec, seed, &mut ()).unwrap();
        let b = run(&g, &spec, seed, &mut ()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn level_occupancy_covers_the_feasible_stretch(n in 3usize..25, alg in algorithm(), seed in any::<u64>()) {
        let g = make_path(n).unwrap();
        let spec = RunSpec::new(alg, StoppingCriterion::budget(5_000)).with_optimum(known_opt(&g));
        let rec = run(&g, &spec, seed, &mut ()).unwrap();
        let total: u64 = rec.level_occupancy.values().sum();
        match rec.t_feasible {
            Some(t) => prop_assert_eq!(total, rec.iterations - t),
            None => prop_assert_eq!(total, 0),
        }
        prop_assert!(rec.level_occupancy.keys().all(|&l| l >= 0));
    }

    #[test]
    fn redraw_semantics_never_spends_iterations_on_nulls(l in 1usize..5, r in 1usize..8, seed in any::<u64>()) {
        let g = make_complete_bipartite(l, r).unwrap();
        let spec = RunSpec::new(Algorithm::BalancedEa, StoppingCriterion::budget(2_000))
            .with_null_semantics(NullSemantics::Redraw);
        let mut audit = Auditor::default();
        let rec = run(&g, &spec, seed, &mut audit).unwrap();
        prop_assert_eq!(audit.nulls, 0);
        prop_assert_eq!(audit.discarded, rec.discarded_picks);
    }
}

#[test]
fn counted_nulls_consume_iterations() {
    let g = make_path(21).unwrap();
    let spec = RunSpec::new(Algorithm::BalancedEa, StoppingCriterion::budget(1_000))
        .with_init(Init::Fixed(BitString::ones(21)));
    let mut audit = Auditor::default();
    let rec = run(&g, &spec, 3, &mut audit).unwrap();
    assert_eq!(rec.iterations, 1_000);
    assert_eq!(audit.steps, 1_000);
    assert!(audit.nulls > 0);
    assert_eq!(rec.discarded_picks, 0);
}

#[test]
fn every_algorithm_solves_small_paths() {
    for alg in [Algorithm::Ea, Algorithm::BalancedEa] {
        for n in 3..12 {
            let g = make_path(n).unwrap();
            let spec = RunSpec::new(alg, StoppingCriterion::optimum_or_budget(1_000_000))
                .with_optimum(known_opt(&g));
            let rec = run(&g, &spec, n as u64, &mut ()).unwrap();
            assert!(rec.completed, "{alg} on path:{n}");
            assert_eq!(rec.terminal_ones, n / 2);
        }
    }
}
