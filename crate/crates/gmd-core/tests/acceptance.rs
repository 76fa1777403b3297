//! Acceptance criteria. One PASS/FAIL line per criterion, nonzero exit on
//! any failure.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use gmd_core::diagnostics::{
    averaged_gap_bound_check, extrapolation_bound, fit_rate_range, gmd_b_error_bound, gmd_error_bound,
    heavy_ball_residual, max_cf_increment, structural_identity_residuals, RateColumn, TraceRecord,
};
use gmd_core::dynamics::{self, ContinuousRun, Dynamics, TimeScale};
use gmd_core::harness::{continuous_conservation, ExperimentConfig, MirrorChoice};
use gmd_core::methods::{run, MethodKind, RunConfig, Trace};
use gmd_core::objectives::{make_nonconvex_2d, make_quadratic, NonconvexKind, Objective};
use gmd_core::rng::{normal_vec, seeded, uniform_vec};
use gmd_core::vecops::max_abs_diff;
use gmd_core::{DualPoint, MirrorMap, PrimalPoint, ProblemInstance, Result};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{id} {} {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn outcome(&mut self, id: &str, r: Result<(bool, String)>) {
        match r {
            Ok((ok, d)) => self.line(id, ok, d),
            Err(e) => self.line(id, false, format!("error: {e}")),
        }
    }
}

/// n = 50, κ = 10⁴, Euclidean μ = 1, seed 0.
fn rate_problem() -> Result<ProblemInstance> {
    ExperimentConfig { dim: 50, kappa: 1e4, ..Default::default() }.problem_instance()
}

fn simplex_problem() -> Result<ProblemInstance> {
    ExperimentConfig { mirror: MirrorChoice::EntropySimplex, ..Default::default() }.problem_instance()
}

fn double_well(seed: u64) -> Result<ProblemInstance> {
    let f = make_nonconvex_2d(NonconvexKind::DoubleWell);
    // μ = L: the λ = 0 schedule has H ≡ 1 and μ/(L·H) = 1
    let mirror = MirrorMap::euclidean(2, f.smoothness())?;
    ProblemInstance::new(f, mirror, PrimalPoint(uniform_vec(&mut seeded(seed), 2, -1.5, 1.5)))
}

fn slope(records: &[TraceRecord], col: RateColumn, k0: usize, k1: usize) -> Result<f64> {
    Ok(fit_rate_range(records, col, k0, k1)?.slope)
}

/// max over k ∈ [100, k_end] of P(k)/P(100), P(k) = k·min_grad_sq/(L(f0 − f*)),
/// and the slope of log min_grad_sq over the same window.
fn gradient_boundedness(trace: &Trace, l: f64, f_star: f64) -> Result<(f64, f64)> {
    let k_end = trace.records.last().unwrap().k;
    let p = |r: &TraceRecord| r.k as f64 * r.min_grad_sq / (l * (trace.f0 - f_star));
    let p100 = p(&trace.records[100]);
    let worst = trace.records[100..].iter().map(p).fold(0.0f64, f64::max) / p100;
    Ok((worst, slope(&trace.records, RateColumn::MinGradSq, 100, k_end)?))
}

fn ac1(rep: &mut Report) {
    let t = Instant::now();
    let r = (|| {
        let p = rate_problem()?;
        let tr = run(&RunConfig::new(MethodKind::GmdF, 1.0, 0.5, 2000), &p)?;
        let s = slope(&tr.records, RateColumn::Gap, 200, 2000)?;
        let secs = t.elapsed().as_secs_f64();
        Ok(((-2.3..=-1.8).contains(&s) && secs < 5.0, format!("slope={s:.4} in [-2.3,-1.8] runtime={secs:.2}s<5s")))
    })();
    rep.outcome("AC1", r);
}

fn ac2(rep: &mut Report) {
    let r = (|| {
        let p = rate_problem()?;
        let tr = run(&RunConfig::new(MethodKind::GmdF, 0.0, 0.5, 2000), &p)?;
        let b = averaged_gap_bound_check(&tr, &p, 1e-9 * p.scale())?;
        let s = slope(&tr.records, RateColumn::Gap, 200, 2000)?;
        Ok((
            b.explicit_bound_holds && (-1.4..=-0.8).contains(&s),
            format!("bound_holds={} max_ratio={:.4} slope={s:.4} in [-1.4,-0.8]", b.explicit_bound_holds, b.max_ratio),
        ))
    })();
    rep.outcome("AC2", r);
}

fn ac3(rep: &mut Report) {
    let r = (|| {
        let mut worst = f64::NEG_INFINITY;
        for p in [rate_problem()?, simplex_problem()?] {
            let tr = run(&RunConfig::new(MethodKind::GmdF, 1.0, 0.5, 500), &p)?;
            worst = worst.max(max_cf_increment(&tr.records).unwrap() / tr.scale);
        }
        Ok((worst <= 1e-8, format!("max_increment/scale={worst:.3e} <= 1e-8")))
    })();
    rep.outcome("AC3", r);
}

fn ac4(rep: &mut Report) {
    let r = (|| {
        let p = simplex_problem()?;
        let tr = run(&RunConfig::new(MethodKind::GmdF, 1.0, 0.5, 500).with_diagnostics(), &p)?;
        let h = tr.history.unwrap();
        let min = h.y.iter().flat_map(|y| y.iter().copied()).fold(f64::INFINITY, f64::min);
        let sum_err = h.y.iter().map(|y| (y.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
        Ok((
            min >= 0.0 && sum_err <= 1e-9,
            format!("iterates={} min_coord={min:.3e} max_sum_err={sum_err:.3e}", h.y.len()),
        ))
    })();
    rep.outcome("AC4", r);
}

fn ac5(rep: &mut Report) {
    let r = (|| {
        let p = rate_problem()?;
        let l = p.objective.smoothness();
        let mut ok = true;
        let mut parts = vec![];
        for lambda in [0.0, 1.0, 2.0] {
            let tr = run(&RunConfig::new(MethodKind::Gmd, lambda, 0.5, 2000), &p)?;
            let (worst, s) = gradient_boundedness(&tr, l, 0.0)?;
            ok &= worst <= 10.0 && s <= -0.8;
            parts.push(format!("λ={lambda}: maxP/P100={worst:.3} slope={s:.3}"));
        }
        Ok((ok, parts.join("; ")))
    })();
    rep.outcome("AC5", r);
}

fn ac6(rep: &mut Report) {
    let r = (|| {
        let mut ok = true;
        let mut parts = vec![];
        for seed in 0..5 {
            let p = double_well(seed)?;
            let l = p.objective.smoothness();
            let f_star = p.objective.optimum_value().unwrap();
            let tr = match run(&RunConfig::new(MethodKind::Gmd, 0.0, 0.5, 2000), &p) {
                Ok(t) => t,
                Err(e) => {
                    ok = false;
                    parts.push(format!("seed {seed}: {e}"));
                    continue;
                }
            };
            let finite = tr.records.iter().all(|r| r.f_y.is_finite() && r.min_grad_sq.is_finite());
            let (worst, s) = gradient_boundedness(&tr, l, f_star)?;
            ok &= finite && worst <= 10.0 && s <= -0.8;
            parts.push(format!("seed {seed}: maxP/P100={worst:.3} slope={s:.3}"));
        }
        Ok((ok, parts.join("; ")))
    })();
    rep.outcome("AC6", r);
}

fn ac7(rep: &mut Report) {
    let r = (|| {
        let mut worst = f64::INFINITY;
        let mut extrap = 0.0f64;
        let cases = [
            (rate_problem()?, MethodKind::Gmd, 1.0),
            (rate_problem()?, MethodKind::GmdB, 1.0),
            (double_well(0)?, MethodKind::Gmd, 0.0),
            (double_well(0)?, MethodKind::GmdB, 0.0),
        ];
        for (p, m, lambda) in cases {
            // ε_H = 0 on the quadratic, ε_H = L on the double well
            let eps_h = p.objective.weak_convexity();
            let tr = run(&RunConfig::new(m, lambda, 0.5, 300).with_diagnostics(), &p)?;
            let h = tr.history.as_ref().unwrap();
            for k in 1..=300 {
                let c = if m == MethodKind::Gmd {
                    gmd_error_bound(h, &tr.schedule, &p.mirror, eps_h, k)?
                } else {
                    gmd_b_error_bound(h, &tr.schedule, &p.mirror, eps_h, k)?
                };
                worst = worst.min(c.slack / p.scale());
                if m == MethodKind::Gmd {
                    let (l, r) = extrapolation_bound(h, &tr.schedule, &p.mirror, k)?;
                    extrap = extrap.max((l - r) / 1f64.max(r.abs()));
                }
            }
        }
        Ok((
            worst >= -1e-8 && extrap <= 1e-9,
            format!("min_slack/scale={worst:.3e} >= -1e-8 extrapolation_excess={extrap:.3e}"),
        ))
    })();
    rep.outcome("AC7", r);
}

fn ac8(rep: &mut Report) {
    let r = (|| {
        let cases = [
            (rate_problem()?, MethodKind::GmdF, 1.0),
            (rate_problem()?, MethodKind::GmdB, 0.5),
            (simplex_problem()?, MethodKind::GmdF, 0.5),
        ];
        let mut worst = 0.0f64;
        for (p, m, lambda) in cases {
            let tr = run(&RunConfig::new(m, lambda, 0.5, 100).with_diagnostics(), &p)?;
            let r = structural_identity_residuals(tr.history.as_ref().unwrap(), &tr.schedule, &p.mirror, 100)?;
            worst = worst.max(r.iter().fold(0.0f64, |a, v| a.max(v.abs())) / p.scale());
        }
        Ok((worst <= 1e-8, format!("max_residual/scale={worst:.3e} <= 1e-8")))
    })();
    rep.outcome("AC8", r);
}

fn ac9(rep: &mut Report) {
    let t = Instant::now();
    let r = (|| {
        let mut ok = true;
        let mut parts = vec![];
        for (name, d, ts) in [
            ("mod(0)", Dynamics::momentum(0.0), TimeScale::Exponential { eta: 0.5 }),
            ("mod(1)", Dynamics::momentum(1.0), TimeScale::Polynomial { p: 1.0 }),
        ] {
            // the order check uses dt = 0.02 → 0.01: at dt = 1e-3 the drift is
            // already at rounding level and its ratio is noise
            let (cf, ct, ratio) = continuous_conservation(d, ts, 1e-3, 10.0, 0.02)?;
            ok &= cf <= 1e-5 && ct <= 1e-4 && ratio >= 8.0;
            parts.push(format!("{name}: cf_drift={cf:.3e} max|C_t|={ct:.3e} halving_ratio={ratio:.2}"));
            let (_, _, literal) = continuous_conservation(d, ts, 1e-3, 10.0, 1e-3)?;
            parts.push(format!("{name}: ratio at dt=1e-3 (info)={literal:.2}"));
        }
        let secs = t.elapsed().as_secs_f64();
        ok &= secs < 10.0;
        parts.push(format!("runtime={secs:.2}s<10s"));
        Ok((ok, parts.join("; ")))
    })();
    rep.outcome("AC9", r);
}

fn ac10(rep: &mut Report) {
    let r = (|| {
        let n = 3;
        let f: Arc<dyn Objective> = Arc::new(make_quadratic(n, 10.0, 1.0)?);
        let run = ContinuousRun {
            dynamics: Dynamics::Hd,
            time_scale: TimeScale::Polynomial { p: 1.0 },
            mirror: MirrorMap::euclidean(n, 1.0)?,
            objective: f,
            x0: PrimalPoint(normal_vec(&mut seeded(0), n)),
            z0: DualPoint::zeros(n),
            t0: 0.0,
            dt: 1e-3,
            t_max: 20.0,
        };
        let tr = dynamics::integrate(&run)?;
        let rep = dynamics::avg_gradient_bound_check(&tr, 0.0, 0.01)?;
        Ok((rep.holds, format!("samples={} max_ratio={:.6} <= 1.01", tr.len() - 1, rep.max_ratio)))
    })();
    rep.outcome("AC10", r);
}

fn ac11(rep: &mut Report) {
    let r = (|| {
        let p = rate_problem()?;
        let hist = |m, lambda, c| -> Result<gmd_core::History> {
            Ok(run(&RunConfig::new(m, lambda, c, 100).with_diagnostics(), &p)?.history.unwrap())
        };
        let diff = |a: &gmd_core::History, b: &gmd_core::History| {
            a.x.iter().zip(&b.x).chain(a.y.iter().zip(&b.y)).map(|(u, v)| max_abs_diff(u, v)).fold(0.0, f64::max)
        };
        let e1 = diff(&hist(MethodKind::Gmd, 1.0, 0.5)?, &hist(MethodKind::GmdF, 1.0, 0.5)?);
        let e2 = diff(&hist(MethodKind::GmdB, 1.0, 1.0)?, &hist(MethodKind::Gmd, 1.0, 1.0)?);

        // two-term form on f = (q/2)‖x‖², the gradient-difference form in general
        let iso: Arc<dyn Objective> = Arc::new(make_quadratic(10, 1.0, 1.0)?);
        let pi =
            ProblemInstance::new(iso, MirrorMap::euclidean(10, 1.0)?, PrimalPoint(normal_vec(&mut seeded(0), 10)))?;
        let tr = run(&RunConfig::new(MethodKind::Gmd, 0.0, 0.5, 100).with_diagnostics(), &pi)?;
        let e3 = heavy_ball_residual(tr.history.as_ref().unwrap(), &tr.schedule, &pi.mirror, Some(1.0))?;
        let tr = run(&RunConfig::new(MethodKind::Gmd, 0.0, 0.5, 100).with_diagnostics(), &p)?;
        let e4 = heavy_ball_residual(tr.history.as_ref().unwrap(), &tr.schedule, &p.mirror, None)?;
        let e5 = heavy_ball_residual(tr.history.as_ref().unwrap(), &tr.schedule, &p.mirror, Some(1.0))?;
        Ok((
            e1 <= 1e-12 && e2 <= 1e-10 && e3 <= 1e-9 && e4 <= 1e-9,
            format!(
                "gmd~gmd_f={e1:.3e} gmd_b~gmd(c=1)={e2:.3e} two_term_isotropic={e3:.3e} \
                 gradient_difference_form={e4:.3e} (info: two_term on κ=1e4 quadratic={e5:.3e})"
            ),
        ))
    })();
    rep.outcome("AC11", r);
}

fn ac12() {
    // recorded only: empirical exponents on an ill-conditioned quadratic
    let r = (|| -> Result<String> {
        let f: Arc<dyn Objective> = Arc::new(make_quadratic(50, 1e7, 1.0)?);
        let p = ProblemInstance::new(f, MirrorMap::euclidean(50, 1.0)?, PrimalPoint(normal_vec(&mut seeded(0), 50)))?;
        let tr = run(&RunConfig::new(MethodKind::Gmd, 1.0, 0.5, 2000), &p)?;
        let g = slope(&tr.records, RateColumn::MinGradSq, 200, 2000)?;
        let v = slope(&tr.records, RateColumn::Gap, 200, 2000)?;
        Ok(format!("κ=1e7 λ=1 gmd: min_grad_sq exponent={g:.3} gap exponent={v:.3}"))
    })();
    match r {
        Ok(s) => println!("AC12 INFO {s}"),
        Err(e) => println!("AC12 INFO error: {e}"),
    }
}

fn main() -> ExitCode {
    let mut rep = Report { failed: 0 };
    ac1(&mut rep);
    ac2(&mut rep);
    ac3(&mut rep);
    ac4(&mut rep);
    ac5(&mut rep);
    ac6(&mut rep);
    ac7(&mut rep);
    ac8(&mut rep);
    ac9(&mut rep);
    ac10(&mut rep);
    ac11(&mut rep);
    ac12();
    println!("acceptance: {} failed of 11", rep.failed);
    if rep.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
