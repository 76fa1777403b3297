//! Step-size schedules a_k, A_k, h_k, H_k, b_k, B_k.
//!
//! The defining relations are a_k²/A_k² = cμ/(L·H_k), A_k = Σ_{i≤k} a_i,
//! H_k = A_k^λ and B_{k−1} = A_{k−1}·H_k. For λ = 0 the sequence A_k grows
//! geometrically and leaves f64 range after a few hundred steps, so every
//! sequence is stored as a logarithm and the per-step ratio θ_k = a_k/A_k is
//! kept separately. Methods only ever need θ_k and H_k ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub lambda: f64,
    pub c: f64,
    pub mu: f64,
    pub l: f64,
    pub a0: f64,
}

impl ScheduleParams {
    pub fn new(lambda: f64, c: f64, mu: f64, l: f64) -> Self {
        ScheduleParams { lambda, c, mu, l, a0: 1.0 }
    }

    /// cμ/L
    pub fn ratio(&self) -> f64 {
        self.c * self.mu / self.l
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!("λ must lie in [0, 2], got {}", self.lambda)));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::InvalidArgument(format!("c must lie in (0, 1], got {}", self.c)));
        }
        for (name, v) in [("mu", self.mu), ("L", self.l), ("a0", self.a0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.lambda == 0.0 && self.ratio() >= 1.0 {
            return Err(Error::InfeasibleSchedule(format!("λ=0 requires cμ/L < 1, got cμ/L = {}", self.ratio())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Schedule {
    params: ScheduleParams,
    k_max: usize,
    theta: Vec<f64>,
    ln_a: Vec<f64>,
    ln_big_a: Vec<f64>,
    ln_big_h: Vec<f64>,
    ln_h: Vec<f64>,
    ln_big_b: Vec<f64>,
    ln_b: Vec<f64>,
}

/// ln(−expm1(t)) for t < 0, i.e. ln(1 − e^t).
fn ln_one_minus_exp(t: f64) -> f64 {
    (-t.exp_m1()).ln()
}

/// Solves θ²(1 − θ)^{−λ} = r·A^{−λ} for θ in (0, 1), given ln A.
fn solve_theta(lambda: f64, r: f64, ln_prev: f64, guess: f64) -> Result<f64> {
    let target = r.ln() - lambda * ln_prev;
    let g = |t: f64| 2.0 * t.ln() - lambda * (-t).ln_1p() - target;
    let dg = |t: f64| 2.0 / t + lambda / (1.0 - t);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut t = if guess < 1.0 { guess.max(1e-300) } else { 0.5 };
    for _ in 0..200 {
        let gt = g(t);
        // g is a log residual, so this is a relative tolerance on θ²(1 − θ)^{−λ}
        if gt.abs() <= 1e-14 {
            return Ok(t);
        }
        if gt > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let mut next = t - gt / dg(t);
        if !(next > lo && next < hi) {
            next = if lo == 0.0 { hi / 2.0 } else { 0.5 * (lo + hi) };
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        t = next;
    }
    Err(Error::Internal(format!("step-size root finder did not converge (λ = {lambda})")))
}

impl Schedule {
    /// Builds the schedule for k = 0..=k_max (H is built one index further
    /// since B_k needs H_{k+1}).
    pub fn build(params: ScheduleParams, k_max: usize) -> Result<Self> {
        params.validate()?;
        if k_max < 1 {
            return Err(Error::InvalidArgument("k_max must be at least 1".into()));
        }
        let lambda = params.lambda;
        let r = params.ratio();
        let n = k_max + 2;
        let mut theta = Vec::with_capacity(n);
        let mut ln_a = Vec::with_capacity(n);
        let mut ln_big_a = Vec::with_capacity(n);
        theta.push(1.0);
        ln_a.push(params.a0.ln());
        ln_big_a.push(params.a0.ln());
        for k in 1..n {
            let prev = ln_big_a[k - 1];
            let (t, ln_ak) = if lambda == 0.0 {
                let t = r.sqrt();
                (t, prev - (-t).ln_1p())
            } else if lambda == 2.0 {
                // a_k = √r exactly
                let a = r.sqrt();
                let ln_ak = prev + (a / prev.exp()).ln_1p();
                ((a.ln() - ln_ak).exp(), ln_ak)
            } else {
                let t = solve_theta(lambda, r, prev, theta[k - 1])?;
                (t, prev - (-t).ln_1p())
            };
            theta.push(t);
            ln_big_a.push(ln_ak);
            ln_a.push(t.ln() + ln_ak);
        }
        let ln_big_h: Vec<f64> = ln_big_a.iter().map(|v| lambda * v).collect();
        let mut ln_h = vec![ln_big_h[0]];
        for k in 1..n {
            // h_k = H_k (1 − (1 − θ_k)^λ)
            ln_h.push(ln_big_h[k] + ln_one_minus_exp(lambda * (-theta[k]).ln_1p()));
        }
        let ln_big_b: Vec<f64> = (0..=k_max).map(|k| ln_big_a[k] + ln_big_h[k + 1]).collect();
        let mut ln_b = vec![ln_big_b[0]];
        for k in 1..=k_max {
            ln_b.push(ln_big_b[k] + ln_one_minus_exp(ln_big_b[k - 1] - ln_big_b[k]));
        }
        ln_a.truncate(k_max + 1);
        ln_big_a.truncate(k_max + 1);
        theta.truncate(k_max + 1);
        Ok(Schedule { params, k_max, theta, ln_a, ln_big_a, ln_big_h, ln_h, ln_big_b, ln_b })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// θ_k = a_k/A_k (θ_0 = 1).
    pub fn theta(&self, k: usize) -> f64 {
        self.theta[k]
    }

    pub fn a(&self, k: usize) -> f64 {
        self.ln_a[k].exp()
    }

    pub fn big_a(&self, k: usize) -> f64 {
        self.ln_big_a[k].exp()
    }

    /// H_k, valid up to k_max + 1.
    pub fn big_h(&self, k: usize) -> f64 {
        self.ln_big_h[k].exp()
    }

    /// h_k, valid up to k_max + 1.
    pub fn h(&self, k: usize) -> f64 {
        self.ln_h[k].exp()
    }

    pub fn big_b(&self, k: usize) -> f64 {
        self.ln_big_b[k].exp()
    }

    pub fn b(&self, k: usize) -> f64 {
        self.ln_b[k].exp()
    }

    pub fn ln_a(&self, k: usize) -> f64 {
        self.ln_a[k]
    }

    pub fn ln_big_a(&self, k: usize) -> f64 {
        self.ln_big_a[k]
    }

    pub fn ln_big_h(&self, k: usize) -> f64 {
        self.ln_big_h[k]
    }

    pub fn ln_big_b(&self, k: usize) -> f64 {
        self.ln_big_b[k]
    }

    pub fn ln_b(&self, k: usize) -> f64 {
        self.ln_b[k]
    }

    /// H_{k−1}/H_k = (1 − θ_k)^λ.
    pub fn h_ratio(&self, k: usize) -> f64 {
        (self.params.lambda * (-self.theta[k]).ln_1p()).exp()
    }

    /// 1/B_{i−1} − 1/B_i.
    pub fn inv_b_step(&self, i: usize) -> f64 {
        (-self.ln_big_b[i - 1]).exp() - (-self.ln_big_b[i]).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GrowthKind {
    /// a_k ~ k^e; the field is e.
    Polynomial,
    /// a_k ~ ρ^k; the field is ρ.
    Geometric,
}

#[derive(Clone, Copy, Debug)]
pub struct GrowthReport {
    pub kind: GrowthKind,
    pub fitted: f64,
    pub predicted: f64,
}

/// Fits the tail half of a_k against the growth law: k^{(2−λ)/λ} for λ > 0,
/// (1 − √(cμ/L))^{−k} for λ = 0.
pub fn asymptotic_growth_check(schedule: &Schedule) -> Result<GrowthReport> {
    let lambda = schedule.params.lambda;
    let k_max = schedule.k_max;
    let need = if lambda > 0.0 { (100.0 / lambda).ceil() as usize } else { 100 };
    if k_max < need {
        return Err(Error::InvalidArgument(format!("growth check needs k_max >= {need}")));
    }
    let ks: Vec<usize> = (k_max / 2..=k_max).collect();
    let ys: Vec<f64> = ks.iter().map(|&k| schedule.ln_a(k)).collect();
    if lambda > 0.0 {
        let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
        let (slope, _) = least_squares(&xs, &ys);
        Ok(GrowthReport { kind: GrowthKind::Polynomial, fitted: slope, predicted: (2.0 - lambda) / lambda })
    } else {
        let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        let (slope, _) = least_squares(&xs, &ys);
        Ok(GrowthReport {
            kind: GrowthKind::Geometric,
            fitted: slope.exp(),
            predicted: 1.0 / (1.0 - schedule.params.ratio().sqrt()),
        })
    }
}

/// Slope and intercept of the least-squares line through (xs, ys).
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// min over 1 ≤ i ≤ k of (1 − c′)(1/B_{i−1} − 1/B_i) − (cε_H/L)(1/B_i − 1/B_k).
pub fn condition_margin(schedule: &Schedule, eps_h: f64, c_prime: f64, k: usize) -> Result<f64> {
    if k < 1 || k > schedule.k_max {
        return Err(Error::InvalidArgument(format!("k must lie in [1, {}]", schedule.k_max)));
    }
    if !(0.0..=1.0).contains(&c_prime) {
        return Err(Error::InvalidArgument("c′ must lie in [0, 1]".into()));
    }
    let p = schedule.params;
    let inv_bk = (-schedule.ln_big_b[k]).exp();
    let mut margin = f64::INFINITY;
    for i in 1..=k {
        let inv_bi = (-schedule.ln_big_b[i]).exp();
        let lhs = (1.0 - c_prime) * schedule.inv_b_step(i);
        let rhs = p.c * eps_h / p.l * (inv_bi - inv_bk);
        margin = margin.min(lhs - rhs);
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(lambda: f64, r: f64, k: usize) -> Schedule {
        Schedule::build(ScheduleParams::new(lambda, r, 1.0, 1.0), k).unwrap()
    }

    #[test]
    fn lambda_two_is_constant() {
        let s = build(2.0, 0.25, 50);
        for k in 1..=50 {
            assert!((s.a(k) - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn lambda_zero_doubles() {
        let s = build(0.0, 0.25, 20);
        for k in 0..=20 {
            assert!((s.big_a(k) - 2f64.powi(k as i32)).abs() < 1e-12 * s.big_a(k));
            if k > 0 {
                assert_eq!(s.theta(k), 0.5);
            }
        }
    }

    #[test]
    fn lambda_one_golden_ratio() {
        let s = build(1.0, 1.0, 3);
        assert!((s.a(1) - 1.618_033_988_749_895).abs() < 1e-12);
    }

    #[test]
    fn infeasible_lambda_zero() {
        let e = Schedule::build(ScheduleParams::new(0.0, 1.0, 1.0, 1.0), 5).unwrap_err();
        assert!(matches!(e, Error::InfeasibleSchedule(_)));
        assert!(e.to_string().contains("cμ/L < 1"));
    }

    /// Naive scalar recurrence solved by bisection in a, as an independent oracle.
    fn naive(lambda: f64, r: f64, k_max: usize) -> Vec<f64> {
        let mut a = vec![1.0];
        let mut big_a = 1.0;
        for _ in 1..=k_max {
            let f = |x: f64| x * x - r * (big_a + x).powf(2.0 - lambda);
            let (mut lo, mut hi) = (0.0, big_a + 1.0);
            while f(hi) < 0.0 {
                hi *= 2.0;
            }
            for _ in 0..300 {
                let m = 0.5 * (lo + hi);
                if f(m) < 0.0 {
                    lo = m
                } else {
                    hi = m
                }
            }
            let x = 0.5 * (lo + hi);
            a.push(x);
            big_a += x;
        }
        a
    }

    #[test]
    fn matches_naive_recurrence() {
        for &(lambda, r) in &[(0.5, 0.3), (1.0, 0.01), (1.5, 0.7), (0.1, 0.5), (1.0, 1.0)] {
            let s = build(lambda, r, 200);
            let o = naive(lambda, r, 200);
            for k in 0..=200 {
                assert!((s.a(k) - o[k]).abs() <= 1e-11 * o[k], "λ={lambda} k={k}: {} vs {}", s.a(k), o[k]);
            }
        }
    }

    #[test]
    fn defining_relations_hold() {
        for &(lambda, c, mu, l) in &[
            (0.0, 0.5, 1.0, 1.0),
            (0.3, 0.5, 2.0, 3.0),
            (1.0, 1.0, 1.0, 1.0),
            (1.7, 0.2, 1.0, 5.0),
            (2.0, 0.5, 1.0, 1.0),
        ] {
            let p = ScheduleParams::new(lambda, c, mu, l);
            let s = Schedule::build(p, 400).unwrap();
            let r = p.ratio();
            for k in 1..=400 {
                // in logs: 2 ln θ_k = ln r − λ ln A_k
                let lhs = 2.0 * s.theta(k).ln();
                let rhs = r.ln() - lambda * s.ln_big_a(k);
                assert!((lhs - rhs).abs() <= 1e-10, "λ={lambda} k={k}");
                assert!(s.theta(k) <= s.theta(k - 1) * (1.0 + 1e-15));
                assert!(s.ln_big_b(k) > s.ln_big_b(k - 1));
                assert!((s.ln_big_h(k) - lambda * s.ln_big_a(k)).abs() < 1e-12);
                assert!(s.b(k) > 0.0 && s.h(k) >= 0.0);
            }
            for k in 1..=60 {
                assert!((s.big_a(k) - s.big_a(k - 1) - s.a(k)).abs() <= 1e-12 * s.big_a(k));
                assert!((s.big_h(k) - s.big_h(k - 1) - s.h(k)).abs() <= 1e-11 * s.big_h(k));
                assert!((s.big_b(k - 1) - s.big_a(k - 1) * s.big_h(k)).abs() <= 1e-12 * s.big_b(k - 1));
                assert!((s.big_b(k) - s.big_b(k - 1) - s.b(k)).abs() <= 1e-11 * s.big_b(k));
            }
        }
    }

    #[test]
    fn growth_examples() {
        let g = asymptotic_growth_check(&build(1.0, 0.01, 2000)).unwrap();
        assert!((0.9..=1.1).contains(&g.fitted), "{g:?}");
        assert_eq!(g.predicted, 1.0);
        let g = asymptotic_growth_check(&build(2.0, 0.3, 200)).unwrap();
        assert!(g.fitted.abs() < 0.05);
        let g = asymptotic_growth_check(&build(0.0, 0.25, 200)).unwrap();
        assert!((g.fitted - 2.0).abs() < 1e-6);
        assert!(asymptotic_growth_check(&build(0.5, 0.3, 100)).is_err());
    }

    #[test]
    fn b_ratios() {
        let s = build(0.0, 0.25, 100);
        for k in 2..=100 {
            assert!((s.ln_big_b(k) - s.ln_big_b(k - 1) - 2f64.ln()).abs() < 1e-12);
        }
        let s = build(1.0, 0.5, 2000);
        let r = (s.ln_big_b(2000) - s.ln_big_b(1999)).exp();
        assert!(r > 1.0 && r < 1.01);
    }

    #[test]
    fn condition_margin_examples() {
        let s = build(1.0, 0.5, 100);
        assert!(condition_margin(&s, 0.0, 0.0, 100).unwrap() >= 0.0);
        // constant H: μ/(LH) = 1 means λ = 0 with μ = L; c = 0.25
        let s = Schedule::build(ScheduleParams::new(0.0, 0.25, 4.0, 4.0), 100).unwrap();
        assert!(condition_margin(&s, 4.0, 0.5, 100).unwrap() >= 0.0);
        let s = build(1.0, 0.5, 1000);
        assert!(condition_margin(&s, 1.0, 0.0, 1000).unwrap() < 0.0);
    }
}
