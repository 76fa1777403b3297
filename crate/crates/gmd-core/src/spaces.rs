//! Norms, dual norms, mirror maps and Bregman divergences.
//!
//! A [`MirrorMap`] pairs a distance generator ψ (strongly convex with modulus
//! μ w.r.t. the space norm) with its conjugate ψ*. The feasible set X is
//! encoded by the range of ∇ψ*.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::{dot, norm2, sub};

/// Smallest coordinate the entropy map hands back, so iterates stay in the
/// relative interior of the simplex.
pub const ENTROPY_FLOOR: f64 = f64::MIN_POSITIVE;

macro_rules! point_type {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                $name(v)
            }
        }

        impl $name {
            pub fn zeros(n: usize) -> Self {
                $name(vec![0.0; n])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }
    };
}

point_type!(PrimalPoint, "A point x in the primal space E.");
point_type!(DualPoint, "A point z in the dual space E* (gradients live here).");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Euclidean,
    /// ℓp with p in (1, 2]; the dual is ℓq with 1/p + 1/q = 1.
    PNorm(f64),
    /// ℓ1 on the simplex; the dual is the max-norm.
    Ell1Simplex,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormedSpace {
    dimension: usize,
    kind: NormKind,
}

impl NormedSpace {
    pub fn new(dimension: usize, kind: NormKind) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if let NormKind::PNorm(p) = kind {
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::InvalidArgument(format!("p-norm needs p in (1, 2], got {p}")));
            }
        }
        Ok(NormedSpace { dimension, kind })
    }

    pub fn euclidean(dimension: usize) -> Result<Self> {
        Self::new(dimension, NormKind::Euclidean)
    }

    pub fn p_norm(dimension: usize, p: f64) -> Result<Self> {
        Self::new(dimension, NormKind::PNorm(p))
    }

    pub fn ell1_simplex(dimension: usize) -> Result<Self> {
        Self::new(dimension, NormKind::Ell1Simplex)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    /// Dual exponent q for a p-norm space.
    pub fn dual_exponent(&self) -> Option<f64> {
        match self.kind {
            NormKind::PNorm(p) => Some(p / (p - 1.0)),
            _ => None,
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dimension {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: expected {}, got {}",
                self.dimension,
                v.len()
            )));
        }
        Ok(())
    }

    pub fn norm(&self, x: &PrimalPoint) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.norm_of(x))
    }

    pub fn dual_norm(&self, z: &DualPoint) -> Result<f64> {
        self.check_dim(z)?;
        Ok(self.dual_norm_of(z))
    }

    /// Primal norm without the dimension check.
    pub fn norm_of(&self, x: &[f64]) -> f64 {
        match self.kind {
            NormKind::Euclidean => norm2(x),
            NormKind::PNorm(p) => lp_norm(x, p),
            NormKind::Ell1Simplex => x.iter().map(|v| v.abs()).sum(),
        }
    }

    /// Dual norm without the dimension check.
    pub fn dual_norm_of(&self, z: &[f64]) -> f64 {
        match self.kind {
            NormKind::Euclidean => norm2(z),
            NormKind::PNorm(p) => lp_norm(z, p / (p - 1.0)),
            NormKind::Ell1Simplex => z.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

fn lp_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    // scaled to avoid overflow for large q
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorKind {
    /// ψ = (μ/2)‖x‖², X = E.
    EuclideanUnconstrained,
    /// ψ = (μ/2)‖x‖² restricted to the ball of the given radius.
    EuclideanBall { radius: f64 },
    /// ψ = μ Σ x_i ln x_i on the probability simplex.
    EntropySimplex,
    /// ψ = (μ/2)‖x‖_p², X = E.
    SquaredPNorm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MirrorMap {
    space: NormedSpace,
    mu: f64,
    kind: MirrorKind,
}

impl MirrorMap {
    pub fn new(space: NormedSpace, mu: f64, kind: MirrorKind) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
        }
        let ok = match kind {
            MirrorKind::EuclideanUnconstrained => space.kind == NormKind::Euclidean,
            MirrorKind::EuclideanBall { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
                }
                space.kind == NormKind::Euclidean
            }
            MirrorKind::EntropySimplex => space.kind == NormKind::Ell1Simplex,
            MirrorKind::SquaredPNorm => matches!(space.kind, NormKind::PNorm(_)),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("mirror map {kind:?} does not match norm {:?}", space.kind)));
        }
        Ok(MirrorMap { space, mu, kind })
    }

    pub fn euclidean(dimension: usize, mu: f64) -> Result<Self> {
        Self::new(NormedSpace::euclidean(dimension)?, mu, MirrorKind::EuclideanUnconstrained)
    }

    pub fn euclidean_ball(dimension: usize, mu: f64, radius: f64) -> Result<Self> {
        Self::new(NormedSpace::euclidean(dimension)?, mu, MirrorKind::EuclideanBall { radius })
    }

    pub fn entropy_simplex(dimension: usize, mu: f64) -> Result<Self> {
        Self::new(NormedSpace::ell1_simplex(dimension)?, mu, MirrorKind::EntropySimplex)
    }

    pub fn squared_p_norm(dimension: usize, mu: f64, p: f64) -> Result<Self> {
        Self::new(NormedSpace::p_norm(dimension, p)?, mu, MirrorKind::SquaredPNorm)
    }

    pub fn space(&self) -> &NormedSpace {
        &self.space
    }

    pub fn kind(&self) -> MirrorKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension
    }

    /// The μ the map was built with.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Strong-convexity modulus of ψ w.r.t. the space norm. For the squared
    /// p-norm this is μ(p − 1).
    pub fn modulus(&self) -> f64 {
        match (self.kind, self.space.kind) {
            (MirrorKind::SquaredPNorm, NormKind::PNorm(p)) => self.mu * (p - 1.0),
            _ => self.mu,
        }
    }

    /// Whether X is a proper subset of E.
    pub fn is_constrained(&self) -> bool {
        matches!(self.kind, MirrorKind::EuclideanBall { .. } | MirrorKind::EntropySimplex)
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        self.space.check_dim(v)?;
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(())
    }

    /// ∇ψ*(z), the maximizer of ⟨z, x⟩ − ψ(x) over X.
    pub fn conjugate_grad(&self, z: &DualPoint) -> Result<PrimalPoint> {
        self.check(z)?;
        Ok(PrimalPoint(self.grad_conj(z)))
    }

    /// ψ*(z).
    pub fn conjugate_value(&self, z: &DualPoint) -> Result<f64> {
        self.check(z)?;
        Ok(self.conj(z))
    }

    /// D_ψ*(z, w) = ψ*(z) − ψ*(w) − ⟨z − w, ∇ψ*(w)⟩.
    pub fn bregman_dual(&self, z: &DualPoint, w: &DualPoint) -> Result<f64> {
        self.check(z)?;
        self.check(w)?;
        Ok(self.bregman(z, w))
    }

    /// Unchecked ∇ψ*.
    pub fn grad_conj(&self, z: &[f64]) -> Vec<f64> {
        let mu = self.mu;
        match self.kind {
            MirrorKind::EuclideanUnconstrained => z.iter().map(|v| v / mu).collect(),
            MirrorKind::EuclideanBall { radius } => {
                let nz = norm2(z);
                if nz / mu <= radius {
                    z.iter().map(|v| v / mu).collect()
                } else {
                    z.iter().map(|v| radius * v / nz).collect()
                }
            }
            MirrorKind::EntropySimplex => {
                let m = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                let mut x: Vec<f64> = z.iter().map(|v| ((v - m) / mu).exp()).collect();
                let s: f64 = x.iter().sum();
                for xi in &mut x {
                    *xi = (*xi / s).max(ENTROPY_FLOOR);
                }
                let s: f64 = x.iter().sum();
                x.iter().map(|v| v / s).collect()
            }
            MirrorKind::SquaredPNorm => {
                // ∇ of (1/2μ)‖z‖_q²: (1/μ)‖z‖_q^{2−q} sign(z_i)|z_i|^{q−1}
                let q = self.space.dual_exponent().expect("p-norm space");
                let nq = lp_norm(z, q);
                if nq == 0.0 {
                    return vec![0.0; z.len()];
                }
                z.iter().map(|v| v.signum() * (v.abs() / nq).powf(q - 1.0) * nq / mu).collect()
            }
        }
    }

    /// Unchecked ψ*.
    pub fn conj(&self, z: &[f64]) -> f64 {
        let mu = self.mu;
        match self.kind {
            MirrorKind::EuclideanUnconstrained => dot(z, z) / (2.0 * mu),
            MirrorKind::EuclideanBall { radius } => {
                let nz = norm2(z);
                if nz / mu <= radius {
                    nz * nz / (2.0 * mu)
                } else {
                    radius * nz - mu * radius * radius / 2.0
                }
            }
            MirrorKind::EntropySimplex => mu * log_sum_exp(z, mu),
            MirrorKind::SquaredPNorm => {
                let q = self.space.dual_exponent().expect("p-norm space");
                let nq = lp_norm(z, q);
                nq * nq / (2.0 * mu)
            }
        }
    }

    /// Unchecked Bregman divergence of ψ*.
    pub fn bregman(&self, z: &[f64], w: &[f64]) -> f64 {
        let mu = self.mu;
        match self.kind {
            MirrorKind::EuclideanUnconstrained => {
                let d = sub(z, w);
                dot(&d, &d) / (2.0 * mu)
            }
            MirrorKind::EntropySimplex => {
                // μ·KL(∇ψ*(w) ‖ ∇ψ*(z)), via log-softmax
                let lz = log_sum_exp(z, mu);
                let lw = log_sum_exp(w, mu);
                let mut d = 0.0;
                for (zi, wi) in z.iter().zip(w) {
                    let log_pw = wi / mu - lw;
                    let log_pz = zi / mu - lz;
                    d += log_pw.exp() * (log_pw - log_pz);
                }
                (mu * d).max(0.0)
            }
            _ => {
                let gw = self.grad_conj(w);
                let d = self.conj(z) - self.conj(w) - dot(&sub(z, w), &gw);
                d.max(0.0)
            }
        }
    }

    /// ψ(x) for feasible x.
    pub fn psi(&self, x: &[f64]) -> f64 {
        let mu = self.mu;
        match self.kind {
            MirrorKind::EuclideanUnconstrained | MirrorKind::EuclideanBall { .. } => mu * dot(x, x) / 2.0,
            MirrorKind::EntropySimplex => mu * x.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).sum::<f64>(),
            MirrorKind::SquaredPNorm => {
                let n = self.space.norm_of(x);
                mu * n * n / 2.0
            }
        }
    }

    /// A dual point z with ∇ψ*(z) = x. For the entropy map this is μ ln x,
    /// for the Euclidean maps μx.
    pub fn primal_to_dual(&self, x: &PrimalPoint) -> Result<DualPoint> {
        self.check(x)?;
        if !self.is_feasible(x, 1e-12) {
            return Err(Error::InvalidArgument("point is not feasible for the mirror map".into()));
        }
        let mu = self.mu;
        let z = match self.kind {
            MirrorKind::EuclideanUnconstrained | MirrorKind::EuclideanBall { .. } => x.iter().map(|v| mu * v).collect(),
            MirrorKind::EntropySimplex => {
                if x.iter().any(|&v| v <= 0.0) {
                    return Err(Error::InvalidArgument("entropy map needs a point in the relative interior".into()));
                }
                x.iter().map(|v| mu * v.ln()).collect()
            }
            MirrorKind::SquaredPNorm => self.grad_psi_p(x),
        };
        Ok(DualPoint(z))
    }

    fn grad_psi_p(&self, x: &[f64]) -> Vec<f64> {
        let NormKind::PNorm(p) = self.space.kind else { unreachable!() };
        let np = lp_norm(x, p);
        if np == 0.0 {
            return vec![0.0; x.len()];
        }
        x.iter().map(|v| self.mu * v.signum() * (v.abs() / np).powf(p - 1.0) * np).collect()
    }

    /// D_ψ(x, y) on the primal side, for feasible x and y (y in the relative
    /// interior for the entropy map).
    pub fn bregman_primal(&self, x: &[f64], y: &[f64]) -> f64 {
        let gy: Vec<f64> = match self.kind {
            MirrorKind::EuclideanUnconstrained | MirrorKind::EuclideanBall { .. } => {
                y.iter().map(|v| self.mu * v).collect()
            }
            MirrorKind::EntropySimplex => y.iter().map(|v| self.mu * (1.0 + v.ln())).collect(),
            MirrorKind::SquaredPNorm => self.grad_psi_p(y),
        };
        (self.psi(x) - self.psi(y) - dot(&gy, &sub(x, y))).max(0.0)
    }

    /// Membership in X up to `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        match self.kind {
            MirrorKind::EuclideanUnconstrained | MirrorKind::SquaredPNorm => x.iter().all(|v| v.is_finite()),
            MirrorKind::EuclideanBall { radius } => norm2(x) <= radius * (1.0 + tol),
            MirrorKind::EntropySimplex => x.iter().all(|&v| v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol,
        }
    }

    /// D(u,v) − D(w,v) − ⟨∇ψ*(w) − ∇ψ*(v), u − w⟩ − D(u,w). Zero up to roundoff.
    pub fn three_point_identity_residual(&self, u: &DualPoint, v: &DualPoint, w: &DualPoint) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        self.check(w)?;
        let gw = self.grad_conj(w);
        let gv = self.grad_conj(v);
        let cross = dot(&sub(&gw, &gv), &sub(u, w));
        Ok(self.bregman(u, v) - self.bregman(w, v) - cross - self.bregman(u, w))
    }
}

fn log_sum_exp(z: &[f64], mu: f64) -> f64 {
    let m = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) / mu;
    m + z.iter().map(|v| (v / mu - m).exp()).sum::<f64>().ln()
}

/// Tolerance scale max(1, |f(x0)|, ‖x0‖).
pub fn problem_scale(f0: f64, x0_norm: f64) -> f64 {
    1f64.max(f0.abs()).max(x0_norm)
}
