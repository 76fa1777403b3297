use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gmd_core::dynamics::{integrate, ContinuousRun, Dynamics, TimeScale};
use gmd_core::harness::{ExperimentConfig, MirrorChoice};
use gmd_core::methods::{run, MethodKind, RunConfig};
use gmd_core::schedules::{Schedule, ScheduleParams};

fn schedules(c: &mut Criterion) {
    let mut g = c.benchmark_group("schedule_build_2000");
    for lambda in [0.0, 0.5, 1.0, 2.0] {
        g.bench_with_input(BenchmarkId::from_parameter(lambda), &lambda, |b, &l| {
            b.iter(|| Schedule::build(ScheduleParams::new(l, 0.5, 1.0, 10.0), black_box(2000)).unwrap())
        });
    }
    g.finish();
}

fn discrete(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_1000_iters");
    for (name, method, mirror) in [
        ("gmd_f_euclidean", MethodKind::GmdF, MirrorChoice::Euclidean),
        ("gmd_euclidean", MethodKind::Gmd, MirrorChoice::Euclidean),
        ("gmd_b_euclidean", MethodKind::GmdB, MirrorChoice::Euclidean),
        ("gmd_f_entropy", MethodKind::GmdF, MirrorChoice::EntropySimplex),
    ] {
        let cfg = ExperimentConfig { dim: 50, kappa: 1e4, mirror, ..Default::default() };
        let p = cfg.problem_instance().unwrap();
        let rc = RunConfig::new(method, 1.0, 0.5, 1000);
        g.bench_function(name, |b| b.iter(|| run(black_box(&rc), &p).unwrap()));
    }
    let p = ExperimentConfig { dim: 10, ..Default::default() }.problem_instance().unwrap();
    let rc = RunConfig::new(MethodKind::Gmd, 1.0, 0.5, 300).with_diagnostics();
    g.bench_function("gmd_with_diagnostics_300", |b| b.iter(|| run(black_box(&rc), &p).unwrap()));
    g.finish();
}

fn continuous(c: &mut Criterion) {
    let cfg = ExperimentConfig { dim: 3, ..Default::default() };
    let p = cfg.problem_instance().unwrap();
    let base = ContinuousRun {
        dynamics: Dynamics::momentum(1.0),
        time_scale: TimeScale::Polynomial { p: 1.0 },
        mirror: p.mirror,
        objective: p.objective.clone(),
        x0: p.x0.clone(),
        z0: p.z0.clone(),
        t0: 0.0,
        dt: 1e-3,
        t_max: 1.0,
    };
    c.bench_function("rk4_mod1_1000_steps", |b| b.iter(|| integrate(black_box(&base)).unwrap()));
}

criterion_group!(benches, schedules, discrete, continuous);
criterion_main!(benches);
