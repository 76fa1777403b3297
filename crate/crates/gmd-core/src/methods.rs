//! The iterations GMD_f, GMD and GMD_B, the averaged iterate x̂_k, and the
//! run loop that records a trace.
//!
//! Every stepper is written in terms of θ_k = a_k/A_k and H_{k−1}/H_k so it
//! keeps working after A_k itself leaves f64 range (λ = 0 schedules).

use log::warn;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{discretization_error_normalized, CfAccumulator, History, TraceRecord};
use crate::error::{Error, Result};
use crate::objectives::ProblemInstance;
use crate::schedules::{Schedule, ScheduleParams};
use crate::spaces::{DualPoint, NormKind, PrimalPoint};
use crate::vecops::{all_finite, axpy, dot, lincomb};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    GmdF,
    Gmd,
    GmdB,
}

impl MethodKind {
    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::GmdF => "gmd_f",
            MethodKind::Gmd => "gmd",
            MethodKind::GmdB => "gmd_b",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub k: usize,
    pub x: PrimalPoint,
    pub y: PrimalPoint,
    pub z: DualPoint,
    /// ∇ψ*(z_k), cached.
    pub v: PrimalPoint,
    /// (1/A_k) Σ_{i≤k} a_i ∇ψ*(z_i). Kept as a mean rather than a sum.
    pub dual_mean: PrimalPoint,
    /// Σ_{i=1}^k (θ_i H_i − h_i) x_i
    pub xhat_sum: Vec<f64>,
    /// H_0 + Σ_{i=1}^k θ_i H_i
    pub xhat_weight: f64,
}

impl IterateState {
    pub fn initial(problem: &ProblemInstance, schedule: &Schedule) -> Self {
        let v = PrimalPoint(problem.mirror.grad_conj(&problem.z0));
        IterateState {
            k: 0,
            x: problem.x0.clone(),
            y: problem.x0.clone(),
            z: problem.z0.clone(),
            v: v.clone(),
            dual_mean: v,
            xhat_sum: vec![0.0; problem.x0.len()],
            xhat_weight: schedule.big_h(0),
        }
    }
}

/// Gradient and value at the extrapolated point of the step just taken.
#[derive(Clone, Debug)]
pub struct StepInfo {
    pub grad: DualPoint,
    pub f_x: f64,
}

fn finish(
    state: &IterateState,
    schedule: &Schedule,
    problem: &ProblemInstance,
    x: Vec<f64>,
    y_of: impl FnOnce(&[f64], &DualPoint, &[f64], &[f64]) -> Vec<f64>,
) -> Result<(IterateState, StepInfo)> {
    let k = state.k + 1;
    if k > schedule.k_max() {
        return Err(Error::InvalidArgument(format!("schedule only covers k <= {}", schedule.k_max())));
    }
    let theta = schedule.theta(k);
    let big_h = schedule.big_h(k);
    let f = &problem.objective;
    let grad = f.gradient(&x);
    let f_x = f.value(&x);
    let mut z = state.z.clone();
    axpy(-big_h * theta, &grad, &mut z);
    let v = problem.mirror.grad_conj(&z);
    let y = y_of(&x, &grad, &v, &state.v);
    let dual_mean = lincomb(1.0 - theta, &state.dual_mean, theta, &v);
    let weight = (big_h * (theta - 1.0 + schedule.h_ratio(k))).max(0.0);
    let mut xhat_sum = state.xhat_sum.clone();
    axpy(weight, &x, &mut xhat_sum);

    let diverged = |reason: &str| Error::Divergence {
        iteration: k,
        reason: reason.to_string(),
        last_state: Box::new(state.clone()),
    };
    if !all_finite(&x) || !all_finite(&y) || !all_finite(&z) || !all_finite(&grad) {
        return Err(diverged("non-finite iterate"));
    }
    if !f_x.is_finite() {
        return Err(diverged("non-finite objective value"));
    }
    let next = IterateState {
        k,
        x: PrimalPoint(x),
        y: PrimalPoint(y),
        z,
        v: PrimalPoint(v),
        dual_mean: PrimalPoint(dual_mean),
        xhat_sum,
        xhat_weight: state.xhat_weight + theta * big_h,
    };
    Ok((next, StepInfo { grad, f_x }))
}

fn momentum_y(theta: f64) -> impl FnOnce(&[f64], &DualPoint, &[f64], &[f64]) -> Vec<f64> {
    // y_k = x_k + θ_k (∇ψ*(z_k) − ∇ψ*(z_{k−1}))
    move |x, _g, v_new, v_old| x.iter().zip(v_new.iter().zip(v_old)).map(|(xi, (a, b))| xi + theta * (a - b)).collect()
}

/// One GMD_f step: x_k is the (H_{k−1}/H_k, θ_k)-weighted average of y_{k−1}
/// and ∇ψ*(z_{k−1}).
pub fn gmd_f_step(
    state: &IterateState,
    schedule: &Schedule,
    problem: &ProblemInstance,
) -> Result<(IterateState, StepInfo)> {
    let k = state.k + 1;
    let theta = schedule.theta(k.min(schedule.k_max()));
    let w = schedule.h_ratio(k.min(schedule.k_max()));
    let x: Vec<f64> = state.y.iter().zip(state.v.iter()).map(|(y, v)| (w * y + theta * v) / (w + theta)).collect();
    finish(state, schedule, problem, x, momentum_y(theta))
}

/// One GMD step: x_k = (1 − θ_k) y_{k−1} + θ_k ∇ψ*(z_{k−1}).
pub fn gmd_step(
    state: &IterateState,
    schedule: &Schedule,
    problem: &ProblemInstance,
) -> Result<(IterateState, StepInfo)> {
    if problem.mirror.is_constrained() {
        return Err(Error::InvalidConfig("gmd requires an unconstrained mirror map (X ≡ E)".into()));
    }
    let k = state.k + 1;
    let theta = schedule.theta(k.min(schedule.k_max()));
    let x = lincomb(1.0 - theta, &state.y, theta, &state.v);
    finish(state, schedule, problem, x, momentum_y(theta))
}

/// One GMD_B step: the corrector is a steepest-descent step in the space norm.
pub fn gmd_b_step(
    state: &IterateState,
    schedule: &Schedule,
    problem: &ProblemInstance,
) -> Result<(IterateState, StepInfo)> {
    if problem.mirror.is_constrained() {
        return Err(Error::InvalidConfig("gmd_b requires an unconstrained mirror map (X ≡ E)".into()));
    }
    let kind = problem.mirror.space().kind();
    if kind == NormKind::Ell1Simplex {
        return Err(Error::UnsupportedGeometry("gmd_b has no unique steepest-descent step for the ℓ1 norm".into()));
    }
    let k = state.k + 1;
    let theta = schedule.theta(k.min(schedule.k_max()));
    let l = problem.objective.smoothness();
    // x_k = y_{k−1} + θ_k (∇ψ*(z_{k−1}) − S_{k−1}/A_{k−1})
    let x: Vec<f64> =
        state.y.iter().zip(state.v.iter().zip(state.dual_mean.iter())).map(|(y, (v, m))| y + theta * (v - m)).collect();
    let corrector = move |x: &[f64], g: &DualPoint, _v: &[f64], _vo: &[f64]| steepest_descent(kind, l, x, g);
    finish(state, schedule, problem, x, corrector)
}

/// argmin_u ⟨g, u − x⟩ + (L/2)‖u − x‖² for Euclidean and ℓp norms.
pub fn steepest_descent(kind: NormKind, l: f64, x: &[f64], g: &[f64]) -> Vec<f64> {
    match kind {
        NormKind::Euclidean => x.iter().zip(g).map(|(xi, gi)| xi - gi / l).collect(),
        NormKind::PNorm(p) => {
            // u − x = −(‖g‖_q/L)·d with d_i = sign(g_i)|g_i|^{q−1}/‖g‖_q^{q−1}
            let q = p / (p - 1.0);
            let m = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m == 0.0 {
                return x.to_vec();
            }
            let nq = m * g.iter().map(|v| (v.abs() / m).powf(q)).sum::<f64>().powf(1.0 / q);
            x.iter().zip(g).map(|(xi, gi)| xi - gi.signum() * (gi.abs() / nq).powf(q - 1.0) * nq / l).collect()
        }
        NormKind::Ell1Simplex => unreachable!("rejected before stepping"),
    }
}

pub fn step(
    method: MethodKind,
    state: &IterateState,
    schedule: &Schedule,
    problem: &ProblemInstance,
) -> Result<(IterateState, StepInfo)> {
    match method {
        MethodKind::GmdF => gmd_f_step(state, schedule, problem),
        MethodKind::Gmd => gmd_step(state, schedule, problem),
        MethodKind::GmdB => gmd_b_step(state, schedule, problem),
    }
}

/// x̂_k = (H_k y_k + Σ (θ_i H_i − h_i) x_i) / (H_0 + Σ θ_i H_i).
pub fn averaged_iterate(state: &IterateState, schedule: &Schedule) -> PrimalPoint {
    let hk = schedule.big_h(state.k);
    PrimalPoint(state.y.iter().zip(&state.xhat_sum).map(|(y, s)| (hk * y + s) / state.xhat_weight).collect())
}

pub const DEFAULT_HISTORY_CAP: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: MethodKind,
    pub lambda: f64,
    pub c: f64,
    pub iters: usize,
    /// Record the iterate history and the discretization error E_k.
    pub track_ck: bool,
    pub history_cap: usize,
    /// Fault injection for the mutation check: applies the dual update with
    /// the wrong sign.
    #[doc(hidden)]
    #[serde(skip)]
    pub flip_dual_update: bool,
}

impl RunConfig {
    pub fn new(method: MethodKind, lambda: f64, c: f64, iters: usize) -> Self {
        RunConfig {
            method,
            lambda,
            c,
            iters,
            track_ck: false,
            history_cap: DEFAULT_HISTORY_CAP,
            flip_dual_update: false,
        }
    }

    pub fn with_diagnostics(mut self) -> Self {
        self.track_ck = true;
        self
    }

    pub fn schedule_params(&self, problem: &ProblemInstance) -> ScheduleParams {
        ScheduleParams::new(self.lambda, self.c, problem.mirror.modulus(), problem.objective.smoothness())
    }

    pub fn validate(&self, problem: &ProblemInstance) -> Result<()> {
        match self.method {
            MethodKind::GmdF => {
                if self.lambda > 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "gmd_f requires λ ∈ [0, 1] for its function-value guarantee, got {}",
                        self.lambda
                    )));
                }
            }
            MethodKind::Gmd | MethodKind::GmdB => {
                if problem.mirror.is_constrained() {
                    return Err(Error::InvalidConfig(format!(
                        "{} requires an unconstrained mirror map (X ≡ E)",
                        self.method.name()
                    )));
                }
                if self.method == MethodKind::GmdB && problem.mirror.space().kind() == NormKind::Ell1Simplex {
                    return Err(Error::UnsupportedGeometry("gmd_b is not available for the ℓ1 norm".into()));
                }
            }
        }
        self.schedule_params(problem).validate()
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub final_state: IterateState,
    pub schedule: Schedule,
    pub history: Option<History>,
    pub f0: f64,
    pub scale: f64,
}

pub fn run(config: &RunConfig, problem: &ProblemInstance) -> Result<Trace> {
    config.validate(problem)?;
    let schedule = Schedule::build(config.schedule_params(problem), config.iters.max(1))?;
    let f = problem.objective.as_ref();
    let mirror = &problem.mirror;
    let f_star = f.optimum_value();
    let mut state = IterateState::initial(problem, &schedule);

    let f0 = f.value(&problem.x0);
    let g0 = f.gradient(&problem.x0);
    let g0_norm = mirror.space().dual_norm_of(&g0);
    let mut min_grad_sq = g0_norm * g0_norm;
    let mut cf = CfAccumulator::default();
    let mut history = config.track_ck.then(|| {
        let mut h = History::default();
        h.push(&state, f0, f0, g0.clone());
        h
    });
    let mut records = vec![TraceRecord {
        k: 0,
        f_y: f0,
        f_x: f0,
        grad_norm_dual: g0_norm,
        min_grad_sq,
        gap: f_star.map(|fs| f0 - fs),
        big_a: Some(schedule.big_a(0)),
        big_h: Some(schedule.big_h(0)),
        big_b: Some(schedule.big_b(0)),
        c_f: Some(cf.value(schedule.big_h(0), f0, mirror.conj(&state.z))),
        e: None,
    }];
    let bounds = f.domain_box();
    let mut warned = false;

    for k in 1..=config.iters {
        let (mut next, info) = step(config.method, &state, &schedule, problem)?;
        if config.flip_dual_update {
            next.z = state.z.clone();
            axpy(schedule.big_h(k) * schedule.theta(k), &info.grad, &mut next.z);
            next.v = PrimalPoint(mirror.grad_conj(&next.z));
        }
        if let Some(b) = bounds {
            if next.x.iter().chain(next.y.iter()).any(|v| v.abs() > b) {
                let point = if next.x.iter().any(|v| v.abs() > b) { next.x.0.clone() } else { next.y.0.clone() };
                return Err(Error::OutOfDomain { iteration: k, point });
            }
        }
        let f_y = f.value(&next.y);
        if !f_y.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                reason: "non-finite objective value".into(),
                last_state: Box::new(state),
            });
        }
        let gnorm = mirror.space().dual_norm_of(&info.grad);
        min_grad_sq = min_grad_sq.min(gnorm * gnorm);
        let theta = schedule.theta(k);
        let big_h = schedule.big_h(k);
        cf.push(schedule.h(k), info.f_x, theta * big_h, dot(&info.grad, &next.x));
        let gap = f_star.map(|fs| f.value(&averaged_iterate(&next, &schedule)) - fs);

        let mut e = None;
        if let Some(h) = history.as_mut() {
            if h.len() <= config.history_cap {
                h.push(&next, f_y, info.f_x, info.grad.clone());
                let en = discretization_error_normalized(h, &schedule, mirror, k);
                e = Some(en * schedule.big_b(k - 1));
            } else if !warned {
                warn!("history cap {} reached at k = {k}; E_k diagnostics disabled", config.history_cap);
                warned = true;
            }
        }
        records.push(TraceRecord {
            k,
            f_y,
            f_x: info.f_x,
            grad_norm_dual: gnorm,
            min_grad_sq,
            gap,
            big_a: Some(schedule.big_a(k)),
            big_h: Some(big_h),
            big_b: Some(schedule.big_b(k)),
            c_f: Some(cf.value(big_h, f_y, mirror.conj(&next.z))),
            e,
        });
        state = next;
    }
    let scale = problem.scale();
    Ok(Trace { records, final_state: state, schedule, history, f0, scale })
}

/// Plain gradient descent x_{k+1} = x_k − ∇f(x_k)/L in the trace schema.
pub fn baseline_gd(problem: &ProblemInstance, steps: usize) -> Result<Vec<TraceRecord>> {
    if problem.mirror.is_constrained() || problem.mirror.space().kind() != NormKind::Euclidean {
        return Err(Error::InvalidConfig("baseline gradient descent needs an unconstrained Euclidean problem".into()));
    }
    let f = problem.objective.as_ref();
    let l = f.smoothness();
    let f_star = f.optimum_value();
    let mut x = problem.x0.0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    let mut min_grad_sq = f64::INFINITY;
    for k in 0..=steps {
        let fx = f.value(&x);
        let g = f.gradient(&x);
        let gn = crate::vecops::norm2(&g);
        if !fx.is_finite() || !all_finite(&x) {
            return Err(Error::Divergence {
                iteration: k,
                reason: "non-finite iterate".into(),
                last_state: Box::new(IterateState {
                    k,
                    x: PrimalPoint(x.clone()),
                    y: PrimalPoint(x.clone()),
                    z: DualPoint(x.clone()),
                    v: PrimalPoint(x.clone()),
                    dual_mean: PrimalPoint(x.clone()),
                    xhat_sum: vec![0.0; x.len()],
                    xhat_weight: 1.0,
                }),
            });
        }
        min_grad_sq = min_grad_sq.min(gn * gn);
        out.push(TraceRecord {
            k,
            f_y: fx,
            f_x: fx,
            grad_norm_dual: gn,
            min_grad_sq,
            gap: f_star.map(|fs| fx - fs),
            big_a: None,
            big_h: None,
            big_b: None,
            c_f: None,
            e: None,
        });
        axpy(-1.0 / l, &g, &mut x);
    }
    Ok(out)
}
