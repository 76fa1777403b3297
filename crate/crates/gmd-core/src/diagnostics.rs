//! Discrete conserved quantities, the discretization error E_k, bound checks
//! and rate fits.
//!
//! Quantities scaled by B_k are returned divided by the relevant B so they
//! stay O(f) even when B_k itself overflows; every ratio of schedule entries
//! is taken in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::{IterateState, Trace};
use crate::objectives::ProblemInstance;
use crate::schedules::{least_squares, Schedule};
use crate::spaces::{DualPoint, MirrorKind, MirrorMap, PrimalPoint};
use crate::vecops::{dot, sub};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub f_y: f64,
    pub f_x: f64,
    pub grad_norm_dual: f64,
    pub min_grad_sq: f64,
    pub gap: Option<f64>,
    pub big_a: Option<f64>,
    pub big_h: Option<f64>,
    pub big_b: Option<f64>,
    pub c_f: Option<f64>,
    pub e: Option<f64>,
}

/// Per-iteration vectors kept for the O(k) diagnostics.
#[derive(Clone, Debug, Default)]
pub struct History {
    pub x: Vec<PrimalPoint>,
    pub y: Vec<PrimalPoint>,
    pub z: Vec<DualPoint>,
    pub grad: Vec<DualPoint>,
    pub f_y: Vec<f64>,
    pub f_x: Vec<f64>,
}

impl History {
    pub fn push(&mut self, state: &IterateState, f_y: f64, f_x: f64, grad: DualPoint) {
        self.x.push(state.x.clone());
        self.y.push(state.y.clone());
        self.z.push(state.z.clone());
        self.grad.push(grad);
        self.f_y.push(f_y);
        self.f_x.push(f_x);
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn need(&self, k: usize) -> Result<()> {
        if k >= self.len() {
            return Err(Error::Unavailable(format!("history holds {} entries, index {k} requested", self.len())));
        }
        Ok(())
    }
}

/// Running sums for C_k^f = H_k f(y_k) − Σ_{i≥1} h_i f(x_i)
/// + Σ_{i≥1} H_i θ_i ⟨∇f(x_i), x_i⟩ + ψ*(z_k).
#[derive(Clone, Copy, Debug, Default)]
pub struct CfAccumulator {
    sum_hf: f64,
    sum_inner: f64,
}

impl CfAccumulator {
    /// Adds iteration i ≥ 1: h_i, f(x_i), θ_i H_i and ⟨∇f(x_i), x_i⟩.
    pub fn push(&mut self, h_i: f64, f_x: f64, theta_h: f64, inner: f64) {
        self.sum_hf += h_i * f_x;
        self.sum_inner += theta_h * inner;
    }

    pub fn value(&self, big_h_k: f64, f_y_k: f64, conj_z_k: f64) -> f64 {
        big_h_k * f_y_k - self.sum_hf + self.sum_inner + conj_z_k
    }
}

/// exp(ln_p − ln_q)
fn ratio(ln_p: f64, ln_q: f64) -> f64 {
    (ln_p - ln_q).exp()
}

/// C_k / B_k.
pub fn ck_normalized(history: &History, schedule: &Schedule, mirror: &MirrorMap, k: usize) -> Result<f64> {
    history.need(k)?;
    let lbk = schedule.ln_big_b(k);
    let mut c = history.f_y[k];
    for i in 0..=k {
        c -= ratio(schedule.ln_b(i), lbk) * history.f_y[i];
    }
    for i in 0..k {
        c += ratio(schedule.ln_a(i), lbk) * mirror.bregman(&history.z[k], &history.z[i]);
    }
    Ok(c)
}

/// C_k = B_k f(y_k) − Σ b_i f(y_i) + Σ a_i D_ψ*(z_k, z_i).
pub fn compute_ck(history: &History, schedule: &Schedule, mirror: &MirrorMap, k: usize) -> Result<f64> {
    Ok(ck_normalized(history, schedule, mirror, k)? * schedule.big_b(k))
}

/// E_k / B_{k−1}, evaluated directly as
/// f(y_k) − f(y_{k−1}) + Σ_{i<k} (a_i/B_{k−1}) [D(z_k, z_i) − D(z_{k−1}, z_i)].
pub fn discretization_error_normalized(history: &History, schedule: &Schedule, mirror: &MirrorMap, k: usize) -> f64 {
    let lb = schedule.ln_big_b(k - 1);
    let mut e = history.f_y[k] - history.f_y[k - 1];
    for i in 0..k {
        let d = mirror.bregman(&history.z[k], &history.z[i]) - mirror.bregman(&history.z[k - 1], &history.z[i]);
        e += ratio(schedule.ln_a(i), lb) * d;
    }
    e
}

/// Identity residuals for every k ≤ k_max:
/// (1/B_k) Σ b_i f(y_i) − [f(y_0) − Σ (1/B_{i−1} − 1/B_i) Σ_{j<i} a_j D(z_i, z_j)
/// + Σ (1/B_{i−1} − 1/B_k) E_i], with E_i taken as C_i − C_{i−1}.
pub fn structural_identity_residuals(
    history: &History,
    schedule: &Schedule,
    mirror: &MirrorMap,
    k_max: usize,
) -> Result<Vec<f64>> {
    history.need(k_max)?;
    let lb = |i: usize| schedule.ln_big_b(i);
    let cn: Vec<f64> = (0..=k_max).map(|i| ck_normalized(history, schedule, mirror, i)).collect::<Result<_>>()?;
    // E_i / B_{i−1}
    let e: Vec<f64> =
        (0..=k_max).map(|i| if i == 0 { 0.0 } else { ratio(lb(i), lb(i - 1)) * cn[i] - cn[i - 1] }).collect();
    // (1/B_{i−1} − 1/B_i) Σ_{j<i} a_j D(z_i, z_j)
    let breg: Vec<f64> = (0..=k_max)
        .map(|i| {
            if i == 0 {
                return 0.0;
            }
            let shrink = -(lb(i - 1) - lb(i)).exp_m1();
            (0..i)
                .map(|j| ratio(schedule.ln_a(j), lb(i - 1)) * mirror.bregman(&history.z[i], &history.z[j]))
                .sum::<f64>()
                * shrink
        })
        .collect();
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let lhs: f64 = (0..=k).map(|i| ratio(schedule.ln_b(i), lb(k)) * history.f_y[i]).sum();
        let mut rhs = history.f_y[0];
        for i in 1..=k {
            rhs -= breg[i];
            rhs += (1.0 - ratio(lb(i - 1), lb(k))) * e[i];
        }
        out.push(lhs - rhs);
    }
    Ok(out)
}

pub fn structural_identity_residual(
    history: &History,
    schedule: &Schedule,
    mirror: &MirrorMap,
    k: usize,
) -> Result<f64> {
    Ok(*structural_identity_residuals(history, schedule, mirror, k)?.last().expect("nonempty"))
}

/// One evaluation of a discretization-error bound, everything divided by B_{k−1}.
#[derive(Clone, Copy, Debug)]
pub struct ErrorBoundCheck {
    pub k: usize,
    pub error: f64,
    pub bound: f64,
    /// bound − error; nonnegative when the bound holds.
    pub slack: f64,
}

/// E_k ≤ −(1−c) A_{k−1} D(z_{k−1}, z_k) + B_{k−1}(ε_H/2)‖x_k − y_{k−1}‖² (GMD).
pub fn gmd_error_bound(
    history: &History,
    schedule: &Schedule,
    mirror: &MirrorMap,
    eps_h: f64,
    k: usize,
) -> Result<ErrorBoundCheck> {
    history.need(k)?;
    let c = schedule.params().c;
    let e = discretization_error_normalized(history, schedule, mirror, k);
    let dx = mirror.space().norm_of(&sub(&history.x[k], &history.y[k - 1]));
    // A_{k−1}/B_{k−1} = 1/H_k
    let bound =
        -(1.0 - c) * mirror.bregman(&history.z[k - 1], &history.z[k]) / schedule.big_h(k) + eps_h / 2.0 * dx * dx;
    Ok(ErrorBoundCheck { k, error: e, bound, slack: bound - e })
}

/// E_k ≤ −(1−c)(B_{k−1}/2L)‖∇f(x_k)‖*² + B_{k−1}(ε_H/2)‖x_k − y_{k−1}‖² (GMD_B).
pub fn gmd_b_error_bound(
    history: &History,
    schedule: &Schedule,
    mirror: &MirrorMap,
    eps_h: f64,
    k: usize,
) -> Result<ErrorBoundCheck> {
    history.need(k)?;
    let p = schedule.params();
    let e = discretization_error_normalized(history, schedule, mirror, k);
    let g = mirror.space().dual_norm_of(&history.grad[k]);
    let dx = mirror.space().norm_of(&sub(&history.x[k], &history.y[k - 1]));
    let bound = -(1.0 - p.c) / (2.0 * p.l) * g * g + eps_h / 2.0 * dx * dx;
    Ok(ErrorBoundCheck { k, error: e, bound, slack: bound - e })
}

/// ½‖x_k − y_{k−1}‖² ≤ (1/μ)(a_k²/(A_k² A_{k−1})) Σ_{i≤k−2} a_i D(z_{k−1}, z_i).
/// Returns (left, right).
pub fn extrapolation_bound(history: &History, schedule: &Schedule, mirror: &MirrorMap, k: usize) -> Result<(f64, f64)> {
    history.need(k)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let d = mirror.space().norm_of(&sub(&history.x[k], &history.y[k - 1]));
    let lhs = 0.5 * d * d;
    let th = schedule.theta(k);
    let lak = schedule.ln_big_a(k - 1);
    let sum: f64 = (0..k.saturating_sub(1))
        .map(|i| ratio(schedule.ln_a(i), lak) * mirror.bregman(&history.z[k - 1], &history.z[i]))
        .sum();
    Ok((lhs, th * th / mirror.modulus() * sum))
}

/// a‖z + Δ‖² + b‖z‖² − (ab/(a+b))‖Δ‖², nonnegative for a, b > 0.
pub fn two_point_gap(a: f64, b: f64, z: &[f64], delta: &[f64]) -> f64 {
    let zd: Vec<f64> = z.iter().zip(delta).map(|(x, d)| x + d).collect();
    a * dot(&zd, &zd) + b * dot(z, z) - a * b / (a + b) * dot(delta, delta)
}

/// Lower bound of Σ_{j<i} a_j D(z_i, z_j) by gradient norms (Euclidean map).
///
/// Pairing consecutive terms and applying [`two_point_gap`] to each pair
/// gives coefficients ν_i = θ_i² H_i² a_{i−1}/2 and, for 1 ≤ j < i,
/// ν_j = θ_j² H_j² a_{j−1}a_j / (2(a_{j−1} + a_j)). Both sides are divided by A_i.
#[derive(Clone, Copy, Debug)]
pub struct GradientLowerBound {
    pub i: usize,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn bregman_gradient_lower_bound_check(
    history: &History,
    schedule: &Schedule,
    mirror: &MirrorMap,
    i: usize,
) -> Result<GradientLowerBound> {
    if mirror.kind() != MirrorKind::EuclideanUnconstrained {
        return Err(Error::InvalidConfig("the gradient lower bound needs the Euclidean map ψ = (μ/2)‖x‖²".into()));
    }
    history.need(i)?;
    if i == 0 {
        return Ok(GradientLowerBound { i, lhs: 0.0, rhs: 0.0 });
    }
    let la = schedule.ln_big_a(i);
    let lhs: f64 = (0..i).map(|j| ratio(schedule.ln_a(j), la) * mirror.bregman(&history.z[i], &history.z[j])).sum();
    let th_h = |j: usize| schedule.theta(j) * schedule.big_h(j);
    let gsq = |j: usize| dot(&history.grad[j], &history.grad[j]);
    let mut rhs = th_h(i).powi(2) * ratio(schedule.ln_a(i - 1), la) / 2.0 * gsq(i);
    for j in 1..i {
        let w = 1.0 / (ratio(la, schedule.ln_a(j)) + ratio(la, schedule.ln_a(j - 1)));
        rhs += th_h(j).powi(2) * w / 2.0 * gsq(j);
    }
    Ok(GradientLowerBound { i, lhs, rhs: rhs / (2.0 * mirror.mu()) })
}

/// c′ Σ (1/B_{i−1} − 1/B_i) Σ_{j<i} a_j D(z_i, z_j) +
/// (c(1−c)/2L) Σ (1 − B_{i−1}/B_k)‖∇f(x_i)‖*² ≤ f(x_0) − f*.
/// Returns (left, right).
pub fn master_inequality(
    history: &History,
    schedule: &Schedule,
    mirror: &MirrorMap,
    c_prime: f64,
    f_star: f64,
    k: usize,
) -> Result<(f64, f64)> {
    history.need(k)?;
    let p = schedule.params();
    let lb = |i: usize| schedule.ln_big_b(i);
    let mut lhs = 0.0;
    for i in 1..=k {
        let shrink = -(lb(i - 1) - lb(i)).exp_m1();
        let inner: f64 =
            (0..i).map(|j| ratio(schedule.ln_a(j), lb(i - 1)) * mirror.bregman(&history.z[i], &history.z[j])).sum();
        lhs += c_prime * shrink * inner;
        let g = mirror.space().dual_norm_of(&history.grad[i]);
        lhs += p.c * (1.0 - p.c) / (2.0 * p.l) * (1.0 - ratio(lb(i - 1), lb(k))) * g * g;
    }
    Ok((lhs, history.f_y[0] - f_star))
}

/// Residual of the momentum recurrence satisfied by λ = 0 GMD with the
/// Euclidean map, over k ≥ 2:
/// x_{k+1} = x_k − s∇f(x_k) + β(x_k − x_{k−1}) − βs(∇f(x_k) − ∇f(x_{k−1})),
/// s = θ²/μ, β = 1 − θ. On f = (q/2)‖x‖² the last term folds into the
/// momentum and the recurrence is the two-term heavy-ball form with
/// β = (1 − θ)(1 − sq); pass `isotropic_curvature = Some(q)` to check that form.
pub fn heavy_ball_residual(
    history: &History,
    schedule: &Schedule,
    mirror: &MirrorMap,
    isotropic_curvature: Option<f64>,
) -> Result<f64> {
    if schedule.params().lambda != 0.0 || mirror.kind() != MirrorKind::EuclideanUnconstrained {
        return Err(Error::InvalidConfig("the heavy-ball form needs λ = 0 and the Euclidean map".into()));
    }
    let (alpha, beta) = heavy_ball_constants(schedule, mirror, isotropic_curvature.unwrap_or(0.0));
    let mut worst = 0.0f64;
    for k in 2..history.len().saturating_sub(1) {
        let (xp, x, xm) = (&history.x[k + 1], &history.x[k], &history.x[k - 1]);
        let (g, gm) = (&history.grad[k], &history.grad[k - 1]);
        for d in 0..x.len() {
            let mut pred = x[d] - alpha * g[d] + beta * (x[d] - xm[d]);
            if isotropic_curvature.is_none() {
                pred -= beta * alpha * (g[d] - gm[d]);
            }
            worst = worst.max((xp[d] - pred).abs() / 1f64.max(x[d].abs()));
        }
    }
    Ok(worst)
}

/// (α, β) of the heavy-ball form; with q = 0 this is (θ²/μ, 1 − θ).
pub fn heavy_ball_constants(schedule: &Schedule, mirror: &MirrorMap, q: f64) -> (f64, f64) {
    let th = schedule.params().ratio().sqrt();
    let s = th * th / mirror.mu();
    (s, (1.0 - th) * (1.0 - s * q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateColumn {
    Gap,
    MinGradSq,
}

#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub window: f64,
    pub k_start: usize,
    pub k_end: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

fn column(r: &TraceRecord, c: RateColumn) -> Option<f64> {
    match c {
        RateColumn::Gap => r.gap,
        RateColumn::MinGradSq => Some(r.min_grad_sq),
    }
}

/// Log-log least squares over the records with k in [k_start, k_end].
pub fn fit_rate_range(records: &[TraceRecord], col: RateColumn, k_start: usize, k_end: usize) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.k >= k_start.max(1) && r.k <= k_end)
        .map(|r| (r.k as f64, column(r, col).unwrap_or(f64::NAN)))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Unavailable("fewer than two points in the fit window".into()));
    }
    if pts.iter().any(|(_, v)| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Unavailable("non-positive or non-finite values in the fit window".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let rms =
        (xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    let k_end = pts.last().map(|p| p.0 as usize).unwrap_or(k_end);
    Ok(RateFit { window: f64::NAN, k_start, k_end, slope, intercept, residual: rms })
}

/// Fit over the tail `window` fraction of the trace (default 0.5).
pub fn fit_rate(records: &[TraceRecord], col: RateColumn, window: f64) -> Result<RateFit> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidArgument("window must lie in (0, 1]".into()));
    }
    let k_last = records.last().map(|r| r.k).unwrap_or(0);
    let k_start = ((1.0 - window) * k_last as f64).ceil() as usize;
    let mut fit = fit_rate_range(records, col, k_start, k_last)?;
    fit.window = window;
    Ok(fit)
}

#[derive(Clone, Debug)]
pub struct AveragedGapReport {
    /// gap(x̂_k) ≤ (H_0(f_0 − f*) + D_ψ(x*, x_0)) / (H_0 + Σ θ_i H_i) + tol at every k.
    pub explicit_bound_holds: bool,
    /// max_k gap_k / bound_k
    pub max_ratio: f64,
    /// min_k (bound_k − gap_k)
    pub min_slack: f64,
    /// λ > 0: max over the tail half of k²·gap_k.
    pub k_squared_constant: Option<f64>,
    /// λ > 0: slope of log(k²·gap) over the tail half.
    pub k_squared_slope: Option<f64>,
}

/// Function-value guarantee for the averaged iterate. For λ = 0 the
/// denominator is 1 + √(cμ/L)·k.
pub fn averaged_gap_bound_check(trace: &Trace, problem: &ProblemInstance, tol: f64) -> Result<AveragedGapReport> {
    let f = problem.objective.as_ref();
    let (Some(f_star), Some(x_star)) = (f.optimum_value(), f.optimum_point()) else {
        return Err(Error::Unavailable("the optimum is unknown".into()));
    };
    let s = &trace.schedule;
    let p = s.params();
    let d0 = problem.mirror.bregman_primal(&x_star, &problem.x0);
    let numer = s.big_h(0) * (trace.f0 - f_star) + d0;
    let mut den = s.big_h(0);
    let (mut ok, mut max_ratio, mut min_slack) = (true, 0.0f64, f64::INFINITY);
    for r in &trace.records {
        if r.k > 0 {
            den += s.theta(r.k) * s.big_h(r.k);
        }
        let bound = if p.lambda == 0.0 { numer / (1.0 + p.ratio().sqrt() * r.k as f64) } else { numer / den };
        let gap = r.gap.ok_or_else(|| Error::Unavailable("gap column missing".into()))?;
        ok &= gap <= bound + tol;
        max_ratio = max_ratio.max(gap / bound);
        min_slack = min_slack.min(bound - gap);
    }
    let (mut kc, mut ks) = (None, None);
    if p.lambda > 0.0 {
        let k_last = trace.records.last().map(|r| r.k).unwrap_or(0);
        let tail: Vec<&TraceRecord> = trace.records.iter().filter(|r| r.k >= (k_last / 2).max(1)).collect();
        kc = tail.iter().map(|r| (r.k as f64).powi(2) * r.gap.unwrap_or(0.0)).reduce(f64::max);
        let pos: Vec<(f64, f64)> = tail
            .iter()
            .filter_map(|r| {
                let v = (r.k as f64).powi(2) * r.gap?;
                (v > 0.0).then(|| ((r.k as f64).ln(), v.ln()))
            })
            .collect();
        if pos.len() >= 2 {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
            ks = Some(least_squares(&xs, &ys).0);
        }
    }
    Ok(AveragedGapReport {
        explicit_bound_holds: ok,
        max_ratio,
        min_slack,
        k_squared_constant: kc,
        k_squared_slope: ks,
    })
}

/// Largest increment of the C_f column; nonpositive when it is monotone.
pub fn max_cf_increment(records: &[TraceRecord]) -> Option<f64> {
    records.windows(2).filter_map(|w| Some(w[1].c_f? - w[0].c_f?)).reduce(f64::max)
}
