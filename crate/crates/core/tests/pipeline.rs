//! End-to-end: problem -> schedule -> run -> report.

use zo_core::diagnostics::{check_variance_smooth, contexts_from_trace};
use zo_core::experiments::{run_suite, DiagnoseOptions, ExperimentConfig, Suite};
use zo_core::optimizer::{make_schedule, run, Budget, Mode, RunOptions, Setting};
use zo_core::problems::{add_value_noise, make_logsumexp_problem, make_norm_problem};
use zo_core::{ProblemRegistry, RandomStream};

#[test]
fn nonsmooth_convex_gap_shrinks_with_horizon() {
    let p = make_norm_problem(4).unwrap();
    let gap = |t| {
        let s = make_schedule(
            Setting::DetNonsmoothCvx,
            &p,
            Budget::Horizon(t),
            p.start(),
            None,
        )
        .unwrap();
        (0..8)
            .map(|seed| {
                run(&p, &s, seed, Mode::Deterministic, &RunOptions::default())
                    .unwrap()
                    .summary
                    .mean_gap
            })
            .sum::<f64>()
            / 8.0
    };
    assert!(gap(4000) < 0.7 * gap(500));
}

#[test]
fn stochastic_run_with_zero_noise_matches_deterministic_run() {
    let p = make_norm_problem(5).unwrap();
    let noisy = add_value_noise(p.clone(), 0.0).unwrap();
    let s = make_schedule(
        Setting::DetNonsmoothCvx,
        &p,
        Budget::Horizon(200),
        p.start(),
        None,
    )
    .unwrap();
    let a = run(&p, &s, 3, Mode::Deterministic, &RunOptions::default()).unwrap();
    let b = run(&noisy, &s, 3, Mode::Stochastic, &RunOptions::default()).unwrap();
    assert_eq!(a.rows, b.rows);
}

#[test]
fn every_registered_problem_runs_every_registered_estimator() {
    let cfg = ExperimentConfig::default();
    let reg = ProblemRegistry::default();
    for id in reg.ids() {
        let p = reg.build(id, &cfg.problem_params(3)).unwrap();
        let s = zo_core::Schedule::manual(Setting::DetSmoothCvx, 1e-3, 0.1, 20).unwrap();
        for est in zo_core::EstimatorRegistry::default().ids() {
            let opts = RunOptions {
                estimator: est.into(),
                ..Default::default()
            };
            let r = run(&p, &s, 0, Mode::Deterministic, &opts).unwrap();
            assert_eq!(r.summary.steps, 20, "{id}/{est}");
        }
    }
}

#[test]
fn traced_logsumexp_run_meets_the_smooth_recursion() {
    let p = make_logsumexp_problem(3, 0.5).unwrap();
    let s = make_schedule(
        Setting::DetSmoothCvx,
        &p,
        Budget::Horizon(40),
        p.start(),
        None,
    )
    .unwrap();
    let opts = RunOptions {
        keep_trace: true,
        ..Default::default()
    };
    let tr = run(&p, &s, 1, Mode::Deterministic, &opts)
        .unwrap()
        .trace
        .unwrap();
    let ctx = contexts_from_trace(&tr, &(1..=40).collect::<Vec<_>>()).unwrap();
    let rep = check_variance_smooth(
        &p,
        &ctx,
        s.alpha,
        s.eta,
        Mode::Deterministic,
        5000,
        5000,
        &mut RandomStream::new(2),
    )
    .unwrap();
    assert!(rep.passed, "{}", rep.to_table());
}

#[test]
fn quick_suites_are_reproducible() {
    let o = DiagnoseOptions::quick();
    let a = run_suite(Suite::Proposition1, &o).unwrap();
    let b = run_suite(Suite::Proposition1, &o).unwrap();
    assert_eq!(a, b);
}
