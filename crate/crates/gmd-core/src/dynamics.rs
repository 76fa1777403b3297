//! Continuous-time dynamics and their conserved quantities.
//!
//! The integrator is classical fixed-step RK4. A fixed step keeps every
//! stored sample on the same uniform grid that the quadratures use. The
//! scalar integrals inside C_t^f (and ∫β̇f inside C_t) are carried as extra
//! state components, so they get the same fourth-order accuracy as x and z.
//! The double integral in C_t depends on the checkpoint time and is done by
//! trapezoid over the stored samples afterwards.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::spaces::{DualPoint, MirrorKind, MirrorMap, PrimalPoint};
use crate::vecops::{dot, norm2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TimeScale {
    /// α_t = e^{ηt}
    Exponential { eta: f64 },
    /// α_t = (1 + t)^p
    Polynomial { p: f64 },
    /// α_t = t^p, only for runs started at t > 0
    Power { p: f64 },
}

impl TimeScale {
    pub fn alpha(&self, t: f64) -> f64 {
        match *self {
            TimeScale::Exponential { eta } => (eta * t).exp(),
            TimeScale::Polynomial { p } => (1.0 + t).powf(p),
            TimeScale::Power { p } => t.powf(p),
        }
    }

    pub fn alpha_dot(&self, t: f64) -> f64 {
        match *self {
            TimeScale::Exponential { eta } => eta * (eta * t).exp(),
            TimeScale::Polynomial { p } => p * (1.0 + t).powf(p - 1.0),
            TimeScale::Power { p } => p * t.powf(p - 1.0),
        }
    }

    /// α̇/α
    pub fn log_rate(&self, t: f64) -> f64 {
        match *self {
            TimeScale::Exponential { eta } => eta,
            TimeScale::Polynomial { p } => p / (1.0 + t),
            TimeScale::Power { p } => p / t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Dynamics {
    /// ẋ = ∇ψ*(z), ż = −∇f(x)
    Hd,
    /// ẋ = (α̇/α)(∇ψ*(z) − x), ż = −α̇∇f(x)
    Ad,
    /// ẋ = (α̇/α)(∇ψ*(z) − x), ż = −h(α)(α̇/α)∇f(x), h(α) = h_scale·α^λ
    Mod { lambda: f64, h_scale: f64 },
}

impl Dynamics {
    pub fn momentum(lambda: f64) -> Self {
        Dynamics::Mod { lambda, h_scale: 1.0 }
    }

    /// h(α) and dh/dα.
    pub fn h(&self, alpha: f64) -> (f64, f64) {
        match *self {
            Dynamics::Hd => (1.0, 0.0),
            Dynamics::Ad => (alpha, 1.0),
            Dynamics::Mod { lambda, h_scale } => {
                let v = h_scale * alpha.powf(lambda);
                let d = if lambda == 0.0 { 0.0 } else { h_scale * lambda * alpha.powf(lambda - 1.0) };
                (v, d)
            }
        }
    }
}

/// (dx/dt, dz/dt) at (t, x, z).
pub fn rhs(
    dynamics: Dynamics,
    scale: TimeScale,
    mirror: &MirrorMap,
    objective: &dyn Objective,
    t: f64,
    x: &[f64],
    z: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let v = mirror.grad_conj(z);
    let g = objective.gradient(x);
    match dynamics {
        Dynamics::Hd => (v, g.iter().map(|gi| -gi).collect()),
        _ => {
            let rate = scale.log_rate(t);
            let (h, _) = dynamics.h(scale.alpha(t));
            let dx = v.iter().zip(x).map(|(vi, xi)| rate * (vi - xi)).collect();
            let dz = g.iter().map(|gi| -h * rate * gi).collect();
            (dx, dz)
        }
    }
}

/// One classical RK4 step of y' = f(t, y).
pub fn rk4_step(f: &dyn Fn(f64, &[f64]) -> Vec<f64>, t: f64, y: &[f64], dt: f64) -> Vec<f64> {
    let shift = |k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = f(t, y);
    let k2 = f(t + dt / 2.0, &shift(&k1, dt / 2.0));
    let k3 = f(t + dt / 2.0, &shift(&k2, dt / 2.0));
    let k4 = f(t + dt, &shift(&k3, dt));
    (0..y.len()).map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

#[derive(Clone, Debug)]
pub struct ContinuousRun {
    pub dynamics: Dynamics,
    pub time_scale: TimeScale,
    pub mirror: MirrorMap,
    pub objective: Arc<dyn Objective>,
    pub x0: PrimalPoint,
    pub z0: DualPoint,
    pub t0: f64,
    pub dt: f64,
    pub t_max: f64,
}

/// Running integrals carried with the state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Integrals {
    /// ∫ f(x) d(h(α))
    pub f_dh: f64,
    /// ∫ h(α)(α̇/α)⟨∇f(x), x⟩ dτ
    pub inner: f64,
    /// ∫ β̇ f(x) dτ with β = α·h(α)
    pub beta_f: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dynamics: Dynamics,
    pub time_scale: TimeScale,
    pub mirror: MirrorMap,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub integrals: Vec<Integrals>,
    /// ∫ ∇f(x_τ) dτ at each sample
    pub grad_integral: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

pub fn integrate(run: &ContinuousRun) -> Result<Trajectory> {
    let n = run.mirror.dimension();
    if run.x0.len() != n || run.z0.len() != n || run.objective.dimension() != n {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    if !(run.dt > 0.0) || !(run.t_max - run.t0 >= run.dt) {
        return Err(Error::InvalidArgument("need dt > 0 and T ≥ dt".into()));
    }
    if matches!(run.time_scale, TimeScale::Power { .. }) && run.t0 <= 0.0 && run.dynamics != Dynamics::Hd {
        return Err(Error::InvalidArgument("the power time scale needs t0 > 0".into()));
    }
    let steps = ((run.t_max - run.t0) / run.dt).round() as usize;
    let f = run.objective.as_ref();
    let (dynamics, scale, mirror) = (run.dynamics, run.time_scale, &run.mirror);

    // augmented state: x, z, ∫∇f, then the three scalar integrals
    let field = move |t: f64, s: &[f64]| -> Vec<f64> {
        let (x, z) = (&s[..n], &s[n..2 * n]);
        let (dx, dz) = rhs(dynamics, scale, mirror, f, t, x, z);
        let g = f.gradient(x);
        let fx = f.value(x);
        let mut out = Vec::with_capacity(3 * n + 3);
        out.extend(dx);
        out.extend(dz);
        out.extend(g.iter().copied());
        if dynamics == Dynamics::Hd {
            out.extend([0.0, 0.0, 0.0]);
        } else {
            let (alpha, ad) = (scale.alpha(t), scale.alpha_dot(t));
            let (h, dh) = dynamics.h(alpha);
            out.push(fx * dh * ad);
            out.push(h * scale.log_rate(t) * dot(&g, x));
            out.push((h + alpha * dh) * ad * fx);
        }
        out
    };

    let mut state: Vec<f64> =
        run.x0.iter().chain(run.z0.iter()).copied().chain(std::iter::repeat_n(0.0, n + 3)).collect();
    let mut traj = Trajectory {
        dynamics,
        time_scale: scale,
        mirror: *mirror,
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        f: Vec::with_capacity(steps + 1),
        integrals: Vec::with_capacity(steps + 1),
        grad_integral: Vec::with_capacity(steps + 1),
    };
    let record = |traj: &mut Trajectory, t: f64, s: &[f64]| {
        traj.t.push(t);
        traj.x.push(s[..n].to_vec());
        traj.z.push(s[n..2 * n].to_vec());
        traj.f.push(f.value(&s[..n]));
        traj.grad_integral.push(s[2 * n..3 * n].to_vec());
        traj.integrals.push(Integrals { f_dh: s[3 * n], inner: s[3 * n + 1], beta_f: s[3 * n + 2] });
    };
    record(&mut traj, run.t0, &state);
    for j in 0..steps {
        let t = run.t0 + j as f64 * run.dt;
        state = rk4_step(&field, t, &state, run.dt);
        if !state.iter().all(|v| v.is_finite()) {
            return Err(Error::ContinuousDivergence { time: t + run.dt });
        }
        record(&mut traj, run.t0 + (j + 1) as f64 * run.dt, &state);
    }
    Ok(traj)
}

/// C_t^f = h(α_t) f(x_t) − ∫ f d(h(α)) + ∫ h(α)(α̇/α)⟨∇f, x⟩ dτ + ψ*(z_t) at every sample.
pub fn conserved_cf(traj: &Trajectory) -> Vec<f64> {
    (0..traj.len())
        .map(|j| {
            let (h, _) = traj.dynamics.h(traj.time_scale.alpha(traj.t[j]));
            let i = traj.integrals[j];
            h * traj.f[j] - i.f_dh + i.inner + traj.mirror.conj(&traj.z[j])
        })
        .collect()
}

/// C_t = β_t f(x_t) − β_0 f(x_0) − ∫β̇f + α_0 D(z_t, z_0) + ∫ D(z_t, z_σ) α̇_σ dσ
/// at the requested sample indices.
pub fn conserved_c(traj: &Trajectory, checkpoints: &[usize]) -> Result<Vec<f64>> {
    if traj.dynamics == Dynamics::Hd {
        return Err(Error::InvalidArgument("C_t is defined for the momentum dynamics only".into()));
    }
    let beta = |j: usize| {
        let a = traj.time_scale.alpha(traj.t[j]);
        a * traj.dynamics.h(a).0
    };
    let alpha0 = traj.time_scale.alpha(traj.t[0]);
    checkpoints
        .iter()
        .map(|&j| {
            if j >= traj.len() {
                return Err(Error::InvalidArgument(format!("checkpoint {j} beyond trajectory")));
            }
            let zt = &traj.z[j];
            let mut c = beta(j) * traj.f[j] - beta(0) * traj.f[0] - traj.integrals[j].beta_f;
            c += alpha0 * traj.mirror.bregman(zt, &traj.z[0]);
            let g = |s: usize| traj.mirror.bregman(zt, &traj.z[s]) * traj.time_scale.alpha_dot(traj.t[s]);
            let mut quad = 0.0;
            for s in 0..j {
                quad += 0.5 * (g(s) + g(s + 1)) * (traj.t[s + 1] - traj.t[s]);
            }
            Ok(c + quad)
        })
        .collect()
}

/// `count` evenly spaced sample indices, ending at the last sample.
pub fn checkpoints(traj: &Trajectory, count: usize) -> Vec<usize> {
    let last = traj.len() - 1;
    (1..=count).map(|i| i * last / count).collect()
}

#[derive(Clone, Copy, Debug)]
pub struct AvgGradientReport {
    pub holds: bool,
    /// max over samples of ‖z_t/t‖* divided by the bound
    pub max_ratio: f64,
    /// max |z_t + ∫∇f| / (1 + ‖z_t‖), the identity the bound rests on
    pub integral_mismatch: f64,
}

/// ‖z_t/t‖* ≤ (1 + tol)·√(2(f(x_0) − f*)/m)/t where m = 1/μ is the
/// strong-convexity modulus of ψ* = ‖z‖²/(2μ).
pub fn avg_gradient_bound_check(traj: &Trajectory, f_opt: f64, tol: f64) -> Result<AvgGradientReport> {
    if traj.dynamics != Dynamics::Hd {
        return Err(Error::InvalidConfig("the averaged-gradient bound needs the hd dynamics".into()));
    }
    if traj.mirror.kind() != MirrorKind::EuclideanUnconstrained {
        return Err(Error::InvalidConfig("the averaged-gradient bound needs the Euclidean map".into()));
    }
    if traj.z[0].iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidConfig("the averaged-gradient bound needs z0 = 0".into()));
    }
    let m = 1.0 / traj.mirror.mu();
    let gap0 = traj.f[0] - f_opt;
    let t0 = traj.t[0];
    let sp = traj.mirror.space();
    let (mut holds, mut max_ratio, mut mismatch) = (true, 0.0f64, 0.0f64);
    for j in 1..traj.len() {
        let t = traj.t[j] - t0;
        let lhs = sp.dual_norm_of(&traj.z[j]) / t;
        let bound = (2.0 * gap0 / m).sqrt() / t;
        holds &= lhs <= (1.0 + tol) * bound;
        if bound > 0.0 {
            max_ratio = max_ratio.max(lhs / bound);
        }
        let diff: Vec<f64> = traj.z[j].iter().zip(&traj.grad_integral[j]).map(|(a, b)| a + b).collect();
        mismatch = mismatch.max(norm2(&diff) / (1.0 + norm2(&traj.z[j])));
    }
    Ok(AvgGradientReport { holds, max_ratio, integral_mismatch: mismatch })
}

/// Max |C_t^f − C_0^f| over the samples.
pub fn cf_drift(traj: &Trajectory) -> f64 {
    let c = conserved_cf(traj);
    c.iter().map(|v| (v - c[0]).abs()).fold(0.0, f64::max)
}
