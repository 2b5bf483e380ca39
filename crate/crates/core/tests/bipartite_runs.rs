use vclab::bipartite::{coupling_check, trap_detect, ShadowTracker};
use vclab::graph::make_complete_bipartite;
use vclab::operators::{run, Algorithm, RunSpec, StoppingCriterion};
use vclab::solution::{is_feasible, known_opt};

#[test]
fn coupling_ordering_and_absorption_on_k_8_24() {
    let g = make_complete_bipartite(8, 24).unwrap();
    let spec = RunSpec::new(Algorithm::BalancedEa, StoppingCriterion::optimum_or_budget(200_000))
        .with_optimum(known_opt(&g))
        .with_shadow(true);
    for seed in 0..100 {
        let rec = run(&g, &spec, seed, &mut ()).unwrap();
        let times = rec.bipartite.unwrap();
        assert_eq!(times.coupling_violation, None, "seed {seed}");
        assert_eq!(times.absorption_violation, None, "seed {seed}");
        assert!(times.ordering_holds(), "seed {seed}: {times:?}");
    }
}

#[test]
fn offline_check_agrees_with_online_tracker() {
    let g = make_complete_bipartite(6, 20).unwrap();
    let spec = RunSpec::new(Algorithm::BalancedEa, StoppingCriterion::budget(20_000));
    for seed in 0..10 {
        let mut tracker = ShadowTracker::recording(&g).unwrap();
        run(&g, &spec, seed, &mut tracker).unwrap();
        let report = coupling_check(&g, tracker.recorded().unwrap()).unwrap();
        assert!(report.passed);
        assert_eq!(report.first_violation, tracker.violation());
    }
}

#[test]
fn absorption_holds_for_every_algorithm() {
    let g = make_complete_bipartite(5, 20).unwrap();
    for alg in Algorithm::ALL {
        let spec = RunSpec::new(alg, StoppingCriterion::optimum_or_budget(50_000)).with_optimum(known_opt(&g));
        for seed in 0..50 {
            let rec = run(&g, &spec, seed, &mut ()).unwrap();
            assert_eq!(rec.bipartite.unwrap().absorption_violation, None, "{alg} seed {seed}");
        }
    }
}

#[test]
fn trapped_terminals_are_feasible() {
    let g = make_complete_bipartite(4, 12).unwrap();
    let spec = RunSpec::new(Algorithm::Rls, StoppingCriterion::optimum_or_budget(20_000)).with_optimum(known_opt(&g));
    let mut traps = 0;
    for seed in 0..200 {
        let rec = run(&g, &spec, seed, &mut ()).unwrap();
        if trap_detect(&rec.terminal, &g).unwrap() {
            traps += 1;
            assert!(is_feasible(&g, &rec.terminal).unwrap());
            assert_eq!(rec.trapped, Some(true));
        }
    }
    // RLS cannot leave V_R, so a constant fraction of runs ends there
    assert!(traps > 10, "{traps} traps");
}
