//! Test objectives with exact gradients and their smoothness constants.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{normal_vec, seeded};
use crate::spaces::{DualPoint, MirrorMap, PrimalPoint};
use crate::vecops::{dot, max_abs_diff};

/// A differentiable objective.
///
/// `smoothness` is L in ‖∇f(x) − ∇f(y)‖* ≤ L‖x − y‖ for every norm the crate
/// supports (all objectives here have diagonal or ℓ2-bounded curvature).
pub trait Objective: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DualPoint;
    fn smoothness(&self) -> f64;
    /// ε_H; zero for convex objectives.
    fn weak_convexity(&self) -> f64;
    fn optimum_value(&self) -> Option<f64> {
        None
    }
    fn optimum_point(&self) -> Option<PrimalPoint> {
        None
    }
    /// Half-width b of the box [−b, b]^n on which the constants are valid.
    fn domain_box(&self) -> Option<f64> {
        None
    }
}

/// f(x) = ½⟨x, Qx⟩ with diagonal Q.
#[derive(Clone, Debug)]
pub struct Quadratic {
    eigenvalues: Vec<f64>,
}

impl Quadratic {
    pub fn from_diagonal(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
            return Err(Error::InvalidArgument("eigenvalues must be finite and nonnegative".into()));
        }
        Ok(Quadratic { eigenvalues })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().zip(&self.eigenvalues).map(|(v, q)| q * v * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> DualPoint {
        DualPoint(x.iter().zip(&self.eigenvalues).map(|(v, q)| q * v).collect())
    }
    fn smoothness(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }
    fn weak_convexity(&self) -> f64 {
        0.0
    }
    fn optimum_value(&self) -> Option<f64> {
        Some(0.0)
    }
    fn optimum_point(&self) -> Option<PrimalPoint> {
        Some(PrimalPoint::zeros(self.eigenvalues.len()))
    }
}

/// Diagonal quadratic with eigenvalues log-spaced in [L/κ, L], ascending.
pub fn make_quadratic(dimension: usize, kappa: f64, l: f64) -> Result<Quadratic> {
    if dimension == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if !(kappa >= 1.0) {
        return Err(Error::InvalidArgument(format!("condition number must be >= 1, got {kappa}")));
    }
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!("L must be positive, got {l}")));
    }
    let eig = (0..dimension)
        .map(|i| if dimension == 1 { l } else { l * kappa.powf(i as f64 / (dimension - 1) as f64 - 1.0) })
        .collect();
    Quadratic::from_diagonal(eig)
}

/// Regularization weight of the logistic objective.
pub const LOGISTIC_REG: f64 = 1e-3;

/// Regularized logistic loss (1/n) Σ log(1 + exp(−y_i⟨a_i, w⟩)) + (reg/2)‖w‖².
#[derive(Clone, Debug)]
pub struct Logistic {
    data: Vec<Vec<f64>>,
    labels: Vec<f64>,
    reg: f64,
    l: f64,
}

impl Logistic {
    pub fn new(data: Vec<Vec<f64>>, labels: Vec<f64>, reg: f64) -> Result<Self> {
        let n = data.len();
        if n == 0 || labels.len() != n {
            return Err(Error::InvalidArgument("need one label per sample".into()));
        }
        let d = data[0].len();
        if d == 0 || data.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged data matrix".into()));
        }
        let a = DMatrix::from_fn(n, d, |i, j| data[i][j]);
        let gram = a.transpose() * &a;
        let top = gram.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
        let l = top / (4.0 * n as f64) + reg;
        Ok(Logistic { data, labels, reg, l })
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Objective for Logistic {
    fn name(&self) -> &str {
        "logistic"
    }
    fn dimension(&self) -> usize {
        self.data[0].len()
    }
    fn value(&self, w: &[f64]) -> f64 {
        let n = self.data.len() as f64;
        let loss: f64 = self.data.iter().zip(&self.labels).map(|(a, y)| softplus(-y * dot(a, w))).sum();
        loss / n + 0.5 * self.reg * dot(w, w)
    }
    fn gradient(&self, w: &[f64]) -> DualPoint {
        let n = self.data.len() as f64;
        let mut g: Vec<f64> = w.iter().map(|v| self.reg * v).collect();
        for (a, y) in self.data.iter().zip(&self.labels) {
            let s = -y * sigmoid(-y * dot(a, w)) / n;
            crate::vecops::axpy(s, a, &mut g);
        }
        DualPoint(g)
    }
    fn smoothness(&self) -> f64 {
        self.l
    }
    fn weak_convexity(&self) -> f64 {
        0.0
    }
}

/// Synthetic logistic regression: Gaussian features, labels from a Gaussian
/// ground-truth separator with 10% of them flipped.
pub fn make_logistic(n_samples: usize, dimension: usize, seed: u64) -> Result<Logistic> {
    if n_samples == 0 || dimension == 0 {
        return Err(Error::InvalidArgument("n_samples and dimension must be at least 1".into()));
    }
    let mut rng = seeded(seed);
    let w_true = normal_vec(&mut rng, dimension);
    let mut data = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let a = normal_vec(&mut rng, dimension);
        let mut y = if dot(&a, &w_true) >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < 0.1 {
            y = -y;
        }
        data.push(a);
        labels.push(y);
    }
    Logistic::new(data, labels, LOGISTIC_REG)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonconvexKind {
    DoubleWell,
    StyblinskiTang,
}

/// f = ¼(x₁² − 1)² + ½x₂² on [−2, 2]². Minima at (±1, 0), saddle at 0.
/// Hessian diag(3x₁² − 1, 1), so L = 11 on the box.
#[derive(Clone, Debug)]
pub struct DoubleWell;

impl Objective for DoubleWell {
    fn name(&self) -> &str {
        "double_well"
    }
    fn dimension(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        let a = x[0] * x[0] - 1.0;
        0.25 * a * a + 0.5 * x[1] * x[1]
    }
    fn gradient(&self, x: &[f64]) -> DualPoint {
        DualPoint(vec![x[0] * (x[0] * x[0] - 1.0), x[1]])
    }
    fn smoothness(&self) -> f64 {
        11.0
    }
    fn weak_convexity(&self) -> f64 {
        11.0
    }
    fn optimum_value(&self) -> Option<f64> {
        Some(0.0)
    }
    fn optimum_point(&self) -> Option<PrimalPoint> {
        Some(PrimalPoint(vec![1.0, 0.0]))
    }
    fn domain_box(&self) -> Option<f64> {
        Some(2.0)
    }
}

/// f = ½ Σ (x_i⁴ − 16x_i² + 5x_i) on [−5, 5]². Hessian diag(6x_i² − 16), so
/// L = 134 on the box.
#[derive(Clone, Debug)]
pub struct StyblinskiTang {
    argmin: f64,
}

impl StyblinskiTang {
    pub fn new() -> Self {
        // root of f' = 2x³ − 16x + 2.5 in the left well
        let mut x = -2.9f64;
        for _ in 0..50 {
            x -= (2.0 * x.powi(3) - 16.0 * x + 2.5) / (6.0 * x * x - 16.0);
        }
        StyblinskiTang { argmin: x }
    }
}

impl Default for StyblinskiTang {
    fn default() -> Self {
        Self::new()
    }
}

impl Objective for StyblinskiTang {
    fn name(&self) -> &str {
        "styblinski_tang"
    }
    fn dimension(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v.powi(4) - 16.0 * v * v + 5.0 * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> DualPoint {
        DualPoint(x.iter().map(|v| 2.0 * v.powi(3) - 16.0 * v + 2.5).collect())
    }
    fn smoothness(&self) -> f64 {
        134.0
    }
    fn weak_convexity(&self) -> f64 {
        134.0
    }
    fn optimum_value(&self) -> Option<f64> {
        Some(self.value(&[self.argmin, self.argmin]))
    }
    fn optimum_point(&self) -> Option<PrimalPoint> {
        Some(PrimalPoint(vec![self.argmin; 2]))
    }
    fn domain_box(&self) -> Option<f64> {
        Some(5.0)
    }
}

pub fn make_nonconvex_2d(kind: NonconvexKind) -> Arc<dyn Objective> {
    match kind {
        NonconvexKind::DoubleWell => Arc::new(DoubleWell),
        NonconvexKind::StyblinskiTang => Arc::new(StyblinskiTang::new()),
    }
}

/// f ≡ value. Used for fixed-point checks.
#[derive(Clone, Debug)]
pub struct Constant {
    pub dimension: usize,
    pub value: f64,
    pub l: f64,
}

impl Objective for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn value(&self, _x: &[f64]) -> f64 {
        self.value
    }
    fn gradient(&self, _x: &[f64]) -> DualPoint {
        DualPoint::zeros(self.dimension)
    }
    fn smoothness(&self) -> f64 {
        self.l
    }
    fn weak_convexity(&self) -> f64 {
        0.0
    }
    fn optimum_value(&self) -> Option<f64> {
        Some(self.value)
    }
}

/// Central-difference gradient.
pub fn finite_difference_gradient(objective: &dyn Objective, x: &[f64], step: f64) -> Result<DualPoint> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let fp = objective.value(&xp);
        xp[i] = x[i] - step;
        let fm = objective.value(&xp);
        xp[i] = x[i];
        g.push((fp - fm) / (2.0 * step));
    }
    Ok(DualPoint(g))
}

/// An objective, a mirror map, and a start x0 = ∇ψ*(z0).
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub objective: Arc<dyn Objective>,
    pub mirror: MirrorMap,
    pub x0: PrimalPoint,
    pub z0: DualPoint,
}

impl ProblemInstance {
    pub fn new(objective: Arc<dyn Objective>, mirror: MirrorMap, x0: PrimalPoint) -> Result<Self> {
        if objective.dimension() != mirror.dimension() || x0.len() != mirror.dimension() {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: objective {}, mirror {}, x0 {}",
                objective.dimension(),
                mirror.dimension(),
                x0.len()
            )));
        }
        if let Some(b) = objective.domain_box() {
            if x0.iter().any(|v| v.abs() > b) {
                return Err(Error::InvalidArgument(format!("x0 lies outside the box [-{b}, {b}]^n")));
            }
        }
        let z0 = mirror.primal_to_dual(&x0)?;
        let back = mirror.grad_conj(&z0);
        let tol = 1e-12 * 1f64.max(crate::vecops::norm2(&x0));
        if max_abs_diff(&back, &x0) > tol {
            return Err(Error::InvalidArgument("z0 does not reproduce x0 through the conjugate gradient".into()));
        }
        Ok(ProblemInstance { objective, mirror, x0, z0 })
    }

    pub fn f0(&self) -> f64 {
        self.objective.value(&self.x0)
    }

    /// max(1, |f(x0)|, f(x0) − f*) when f* is known, else max(1, |f(x0)|).
    pub fn scale(&self) -> f64 {
        let f0 = self.f0();
        let mut s = 1f64.max(f0.abs());
        if let Some(fs) = self.objective.optimum_value() {
            s = s.max(f0 - fs);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform_vec;
    use crate::vecops::{norm2, sub};

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        max_abs_diff(a, b) / 1f64.max(norm2(b))
    }

    #[test]
    fn quadratic_examples() {
        let q = make_quadratic(1, 1.0, 1.0).unwrap();
        assert_eq!(q.value(&[2.0]), 2.0);
        assert_eq!(q.gradient(&[2.0]).0, vec![2.0]);
        assert_eq!(q.smoothness(), 1.0);
        let q = make_quadratic(2, 4.0, 1.0).unwrap();
        assert!(max_abs_diff(q.eigenvalues(), &[0.25, 1.0]) < 1e-15);
        assert!(max_abs_diff(&q.gradient(&[1.0, 1.0]), &[0.25, 1.0]) < 1e-15);
        assert!(make_quadratic(3, 0.5, 1.0).is_err());
        let g = finite_difference_gradient(&make_quadratic(1, 1.0, 1.0).unwrap(), &[3.0], 1e-5).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn logistic_origin() {
        let f = make_logistic(40, 5, 3).unwrap();
        assert!((f.value(&[0.0; 5]) - 2f64.ln()).abs() < 1e-15);
        let fd = finite_difference_gradient(&f, &[0.0; 5], 1e-6).unwrap();
        assert!(rel_err(&f.gradient(&[0.0; 5]), &fd) < 1e-6);
    }

    #[test]
    fn double_well_saddle_and_fd() {
        let f = DoubleWell;
        assert_eq!(f.gradient(&[0.0, 0.0]).0, vec![0.0, 0.0]);
        let fd = finite_difference_gradient(&f, &[1.0, 1.0], 1e-6).unwrap();
        assert!(max_abs_diff(&f.gradient(&[1.0, 1.0]), &fd) < 1e-5);
    }

    #[test]
    fn styblinski_tang_optimum() {
        let f = StyblinskiTang::new();
        let x = f.optimum_point().unwrap();
        assert!((x[0] + 2.903534).abs() < 1e-6);
        assert!((f.optimum_value().unwrap() + 78.33233).abs() < 1e-4);
        assert!(norm2(&f.gradient(&x)) < 1e-12);
    }

    fn zoo() -> Vec<(Arc<dyn Objective>, f64)> {
        vec![
            (Arc::new(make_quadratic(6, 100.0, 1.0).unwrap()), 3.0),
            (Arc::new(make_logistic(60, 6, 11).unwrap()), 3.0),
            (Arc::new(DoubleWell), 2.0),
            (Arc::new(StyblinskiTang::new()), 5.0),
        ]
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(1);
        for (f, b) in zoo() {
            for _ in 0..100 {
                let x = uniform_vec(&mut rng, f.dimension(), -b, b);
                let fd = finite_difference_gradient(f.as_ref(), &x, 1e-6).unwrap();
                assert!(rel_err(&f.gradient(&x), &fd) < 1e-5, "{}", f.name());
            }
        }
    }

    #[test]
    fn smoothness_and_weak_convexity_on_samples() {
        let mut rng = seeded(2);
        for (f, b) in zoo() {
            let l = f.smoothness();
            let eps = f.weak_convexity();
            for _ in 0..1000 {
                let x = uniform_vec(&mut rng, f.dimension(), -b, b);
                let y = uniform_vec(&mut rng, f.dimension(), -b, b);
                let d = sub(&y, &x);
                let gx = f.gradient(&x);
                let ratio = norm2(&sub(&gx, &f.gradient(&y))) / norm2(&d);
                assert!(ratio <= l * (1.0 + 1e-9), "{}: {ratio} > {l}", f.name());
                let lower = f.value(&x) + dot(&gx, &d) - eps / 2.0 * dot(&d, &d);
                assert!(f.value(&y) >= lower - 1e-10 * 1f64.max(f.value(&y).abs()), "{}", f.name());
            }
        }
    }

    #[test]
    fn logistic_curvature_below_l() {
        let f = make_logistic(80, 4, 5).unwrap();
        let mut rng = seeded(9);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let x = normal_vec(&mut rng, 4);
            let d = normal_vec(&mut rng, 4);
            let h = 1e-4;
            let xp = crate::vecops::lincomb(1.0, &x, h, &d);
            let xm = crate::vecops::lincomb(1.0, &x, -h, &d);
            let curv = (f.value(&xp) - 2.0 * f.value(&x) + f.value(&xm)) / (h * h * dot(&d, &d));
            worst = worst.max(curv);
        }
        assert!(worst <= f.smoothness(), "{worst} > {}", f.smoothness());
    }

    #[test]
    fn optimum_value_matches_point() {
        for (f, _) in zoo() {
            if let (Some(v), Some(x)) = (f.optimum_value(), f.optimum_point()) {
                assert!((f.value(&x) - v).abs() <= 1e-10 * 1f64.max(v.abs()));
            }
        }
    }

    #[test]
    fn problem_instance_checks() {
        let f: Arc<dyn Objective> = Arc::new(DoubleWell);
        let m = MirrorMap::euclidean(2, 1.0).unwrap();
        assert!(ProblemInstance::new(f.clone(), m, PrimalPoint(vec![3.0, 0.0])).is_err());
        let p = ProblemInstance::new(f, m, PrimalPoint(vec![0.5, 0.5])).unwrap();
        assert_eq!(p.z0.0, vec![0.5, 0.5]);
    }
}
