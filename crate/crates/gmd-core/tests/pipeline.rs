use gmd_core::harness::{
    cf_monotonicity, check, emit_trace, read_trace, run_experiment, ExperimentConfig, MirrorChoice, ProblemKind, Suite,
};
use gmd_core::methods::{baseline_gd, run, MethodKind, RunConfig};
use gmd_core::Error;

#[test]
fn trace_round_trip_through_file() {
    let cfg =
        ExperimentConfig { iters: 300, diag_ck: true, method: MethodKind::Gmd, lambda: 0.7, ..Default::default() };
    let tr = run_experiment(&cfg, cfg.lambda).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    emit_trace(&tr.records, &path).unwrap();
    let back = read_trace(&path).unwrap();
    assert_eq!(back, tr.records);
    assert!(back.iter().skip(1).all(|r| r.e.is_some()));
}

#[test]
fn identical_seeds_give_identical_traces() {
    for mirror in [MirrorChoice::Euclidean, MirrorChoice::EntropySimplex, MirrorChoice::SquaredPNorm] {
        let cfg = ExperimentConfig { iters: 100, seed: 42, mirror, ..Default::default() };
        let a = run_experiment(&cfg, 1.0).unwrap();
        let b = run_experiment(&cfg, 1.0).unwrap();
        assert_eq!(a.records, b.records);
    }
    let a = run_experiment(&ExperimentConfig { seed: 1, iters: 5, ..Default::default() }, 1.0).unwrap();
    let b = run_experiment(&ExperimentConfig { seed: 2, iters: 5, ..Default::default() }, 1.0).unwrap();
    assert_ne!(a.records, b.records);
}

#[test]
fn flipped_dual_update_is_caught() {
    for mirror in [MirrorChoice::Euclidean, MirrorChoice::EntropySimplex] {
        let cfg = ExperimentConfig { mirror, ..Default::default() };
        let p = cfg.problem_instance().unwrap();
        let mut rc = RunConfig::new(MethodKind::GmdF, 1.0, 0.5, 100);
        rc.flip_dual_update = true;
        let worst = cf_monotonicity(&run(&rc, &p).unwrap()).unwrap();
        assert!(worst > 1e-8, "{mirror:?}: {worst}");
    }
}

#[test]
fn baseline_descent() {
    let p = ExperimentConfig::default().problem_instance().unwrap();
    let recs = baseline_gd(&p, 500).unwrap();
    assert!(recs.windows(2).all(|w| w[1].gap.unwrap() <= w[0].gap.unwrap()));

    // starting at the minimizer nothing moves
    let dw = ExperimentConfig { problem: ProblemKind::DoubleWell, mu: 11.0, ..Default::default() };
    let mut p = dw.problem_instance().unwrap();
    p.x0 = gmd_core::PrimalPoint(vec![1.0, 0.0]);
    let recs = baseline_gd(&p, 10).unwrap();
    assert!(recs.iter().all(|r| r.f_y == recs[0].f_y && r.grad_norm_dual == 0.0));

    // O(1/k) stationarity on the double well
    let p = dw.problem_instance().unwrap();
    let recs = baseline_gd(&p, 2000).unwrap();
    let f0 = recs[0].f_y;
    let worst = recs.iter().skip(1).map(|r| r.k as f64 * r.min_grad_sq / (11.0 * f0)).fold(0.0, f64::max);
    assert!(worst <= 2.0, "{worst}");

    let simplex = ExperimentConfig { mirror: MirrorChoice::EntropySimplex, ..Default::default() };
    assert!(matches!(baseline_gd(&simplex.problem_instance().unwrap(), 5), Err(Error::InvalidConfig(_))));
}

#[test]
fn check_suites_select_and_pass() {
    for suite in Suite::MODULES {
        let res = check(suite);
        assert!(!res.is_empty());
        assert!(res.iter().all(|r| r.suite == suite.name()));
        let failed: Vec<String> = res.iter().filter(|r| !r.passed).map(|r| r.to_string()).collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }
}
