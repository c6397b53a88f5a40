//! Monte-Carlo verification of the stochastic-extension Cauchy bound.
//!
//! For f in the symbol class of a nonnegative form A and nested subspaces
//! E_m ⊂ E_n of the ambient phase space, the L^p(μ_h) distance between the
//! cylinder approximations f∘π_{E_n} and f∘π_{E_m} is controlled by
//!
//!   C(p) h^{1/2} ‖f‖_{Q_A} (Σ_j λ_j |π_E u_j − u_j|^{α(p)})^{1/α(p)},
//!
//! with C(p) = K(p)(Σλ_j)^{1/2−1/p}, α(p) = p for p ≥ 2 and C(p) = 1,
//! α(p) = 2 for p ≤ 2, where K(p) = 2^{1/2} π^{−1/2p} Γ((p+1)/2)^{1/p} and
//! (λ_j, u_j) is the eigensystem of A. The check estimates the left side by
//! seeded Monte Carlo with a Student-t confidence interval and reports both
//! sides.

use crate::error::{Result, WeylError};
use crate::exec;
use crate::phase::QuadraticForm;
use crate::symbol::Symbol;
use crate::RVector;
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::gamma;

/// K(p) = 2^{1/2} π^{−1/2p} Γ((p+1)/2)^{1/p}.
pub fn theorem_constant_k(p: f64) -> f64 {
    2.0f64.sqrt() * std::f64::consts::PI.powf(-0.5 / p) * gamma((p + 1.0) / 2.0).powf(1.0 / p)
}

/// C(p) and α(p); the p < 2 branch is taken verbatim (C = 1, α = 2), which
/// meets the p ≥ 2 branch continuously at p = 2 since K(2) = 1.
pub fn theorem_prefactor(p: f64, trace: f64) -> (f64, f64) {
    if p >= 2.0 {
        (
            theorem_constant_k(p) * trace.powf(0.5 - 1.0 / p),
            p,
        )
    } else {
        (1.0, 2.0)
    }
}

/// Nested orthonormal frames E_m ⊂ E_n inside the ambient phase space,
/// with the sampling parameters.
#[derive(Debug, Clone)]
pub struct StochasticSamplePlan {
    /// Orthonormal frame of the coarse subspace (columns, ambient dim 2D).
    pub coarse: Vec<RVector>,
    /// Orthonormal frame of the fine subspace containing the coarse one.
    pub fine: Vec<RVector>,
    pub samples: usize,
    /// Integrability exponent p ≥ 1.
    pub p: f64,
    /// Variance parameter of μ_h.
    pub h: f64,
}

impl StochasticSamplePlan {
    pub fn validate(&self) -> Result<()> {
        if self.p < 1.0 {
            return Err(WeylError::InvalidArgument("p must be ≥ 1".into()));
        }
        if self.coarse.is_empty() && self.fine.is_empty() {
            return Err(WeylError::InvalidArgument("empty plan".into()));
        }
        for fr in [&self.coarse, &self.fine] {
            for (i, u) in fr.iter().enumerate() {
                for (j, v) in fr.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    if (u.dot(v) - target).abs() > 1e-12 {
                        return Err(WeylError::InvalidArgument(
                            "frames must be orthonormal within 1e-12".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn ambient_dim(&self) -> usize {
        self.fine
            .first()
            .or_else(|| self.coarse.first())
            .map(|v| v.len())
            .unwrap_or(0)
    }
}

/// Outcome of the Monte-Carlo Cauchy-difference check.
#[derive(Debug, Clone)]
pub struct StochasticReport {
    /// MC estimate of ‖f∘π_{E_n} − f∘π_{E_m}‖_{L^p}.
    pub measured: f64,
    /// Upper 99% confidence endpoint for the L^p norm.
    pub upper_confidence: f64,
    /// Theorem right-hand side.
    pub bound: f64,
    pub passed: bool,
    /// Flags the verbatim prefactor branch for p < 2.
    pub p_below_two_branch: bool,
    pub samples: usize,
}

/// Monte-Carlo estimate of the cylinder-approximation Cauchy difference,
/// compared against the stochastic-extension bound.
///
/// `seminorm` is the (estimated) class constant ‖f‖_{Q_A}; since the
/// estimator is a lower bound of the sup, a reported violation is a real
/// violation.
pub fn stochastic_cauchy_check(
    f: &Symbol,
    plan: &StochasticSamplePlan,
    a: &QuadraticForm,
    seminorm: f64,
    seed: u64,
) -> Result<StochasticReport> {
    plan.validate()?;
    let dim = plan.ambient_dim();
    if 2 * f.dim() != dim || a.matrix().nrows() != dim {
        return Err(WeylError::DimensionMismatch(
            "plan, symbol, and form must share the ambient dimension".into(),
        ));
    }
    let h = plan.h;

    // projection matrices
    let proj = |frame: &[RVector]| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for u in frame {
            for i in 0..dim {
                for j in 0..dim {
                    m[(i, j)] += u[i] * u[j];
                }
            }
        }
        m
    };
    let p_fine = proj(&plan.fine);
    let p_coarse = proj(&plan.coarse);

    // right-hand side: Σ_j λ_j |π_E u_j − u_j|^α over the eigensystem of A,
    // with E the coarse subspace and the identity on the fine one (the
    // theorem applied with ambient H = E_n).
    let (c_p, alpha) = theorem_prefactor(plan.p, a.trace());
    let mut defect = 0.0;
    for k in 0..dim {
        let lam = a.eigenvalues()[k];
        if lam <= 0.0 {
            continue;
        }
        let u: RVector = a.eigenvectors().column(k).into_owned();
        let moved = &p_coarse * &u - &p_fine * &u;
        defect += lam * moved.norm().powf(alpha);
    }
    let bound = c_p * h.sqrt() * seminorm * defect.powf(1.0 / alpha);

    // Monte Carlo on |f(π_n Z) − f(π_m Z)|^p, Z ~ N(0, h I)
    let batch = 1024usize;
    let n_batches = plan.samples.div_ceil(batch);
    let sums: Vec<(f64, f64, usize)> = exec::map_indexed(n_batches, |bi| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(bi as u64 * 0x9e37));
        let count = batch.min(plan.samples - bi * batch);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for _ in 0..count {
            let z = RVector::from_fn(dim, |_, _| {
                h.sqrt() * rng.sample::<f64, _>(StandardNormal)
            });
            let zn = &p_fine * &z;
            let zm = &p_coarse * &z;
            let d = (f.eval(&zn) - f.eval(&zm)).norm().powf(plan.p);
            s1 += d;
            s2 += d * d;
        }
        (s1, s2, count)
    });
    let (sum, sum_sq, n) = sums
        .into_iter()
        .fold((0.0, 0.0, 0usize), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
    let n_f = n as f64;
    let mean = sum / n_f;
    let var = (sum_sq / n_f - mean * mean).max(0.0) * n_f / (n_f - 1.0);
    let t_dist = StudentsT::new(0.0, 1.0, n_f - 1.0).expect("valid dof");
    let t99 = t_dist.inverse_cdf(0.99);
    let mean_upper = mean + t99 * (var / n_f).sqrt();
    let measured = mean.powf(1.0 / plan.p);
    let upper = mean_upper.max(0.0).powf(1.0 / plan.p);

    Ok(StochasticReport {
        measured,
        upper_confidence: upper,
        bound,
        passed: upper <= bound,
        p_below_two_branch: plan.p < 2.0,
        samples: n,
    })
}

/// Builds a nested axis-aligned plan in an ambient phase space R^{2D}:
/// coarse = span of the first `m` axes, fine = first `n` axes.
pub fn axis_plan(ambient_d: usize, m: usize, n: usize, samples: usize, p: f64, h: f64) -> StochasticSamplePlan {
    let dim = 2 * ambient_d;
    let axis = |k: usize| RVector::from_fn(dim, |i, _| if i == k { 1.0 } else { 0.0 });
    StochasticSamplePlan {
        coarse: (0..m).map(axis).collect(),
        fine: (0..n).map(axis).collect(),
        samples,
        p,
        h,
    }
}
