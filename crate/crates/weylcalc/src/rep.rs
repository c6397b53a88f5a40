//! Truncated Hermite representation of L²(Rᵈ, μ_{h/2}).
//!
//! The basis is the tensor family e_α = ∏ e_{α_k}, α_k ≤ N, orthonormal for
//! the Gaussian measure of variance h/2 per coordinate. Quadrature is
//! tensorized Gauss–Hermite with 2(N+1) nodes per coordinate, exact for
//! polynomial integrands of degree ≤ 4N+3.

use crate::displacement::{coherent_coefficients, hermite_values};
use crate::error::{Result, WeylError};
use crate::phase::PhaseVector;
use crate::{C64, CMatrix, CVector, RMatrix, RVector};

/// Gauss–Hermite rule for the standard normal weight: ∫ f dN(0,1) ≈ Σ wᵢ f(tᵢ).
///
/// Nodes from the Jacobi matrix; weights are the Christoffel numbers
/// 1/Σ_k ẽ_k(tᵢ)², which stay accurate at extreme nodes where the raw
/// Golub–Welsch eigenvector components underflow. Exact for polynomials of
/// degree ≤ 2n−1.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jac = RMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&t| {
            let vals = hermite_values(t, 1.0, n - 1);
            1.0 / vals.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    (nodes, weights.into_iter().map(|w| w / total).collect())
}

/// Truncated Hermite basis of L²(Rᵈ, μ_{h/2}).
#[derive(Debug, Clone)]
pub struct GaussianRep {
    d: usize,
    level: usize,
    h: f64,
    /// Multi-indices in row-major order (mode 0 slowest), matching Kronecker
    /// products with the mode-0 factor leftmost.
    indices: Vec<Vec<usize>>,
    /// 1-dim quadrature nodes for variance h/2 (length 2(N+1)).
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// e_n(node_i), rows n = 0..N, columns over nodes.
    hermite_at_nodes: RMatrix,
}

impl GaussianRep {
    pub fn new(d: usize, level: usize, h: f64) -> Result<Self> {
        if d == 0 || level == 0 {
            return Err(WeylError::InvalidArgument(
                "dimension and truncation level must be ≥ 1".into(),
            ));
        }
        if h <= 0.0 {
            return Err(WeylError::InvalidArgument(
                "semiclassical parameter h must be > 0".into(),
            ));
        }
        let s = (h / 2.0).sqrt();
        let n_nodes = 2 * (level + 1);
        let (t, w) = gauss_hermite_normal(n_nodes);
        let nodes: Vec<f64> = t.iter().map(|&ti| s * ti).collect();
        let mut hermite_at_nodes = RMatrix::zeros(level + 1, n_nodes);
        for (i, &u) in nodes.iter().enumerate() {
            let vals = hermite_values(u, s, level);
            for n in 0..=level {
                hermite_at_nodes[(n, i)] = vals[n];
            }
        }
        let mode = level + 1;
        let size = mode.pow(d as u32);
        let mut indices = Vec::with_capacity(size);
        for flat in 0..size {
            let mut idx = vec![0usize; d];
            let mut rem = flat;
            for k in (0..d).rev() {
                idx[k] = rem % mode;
                rem /= mode;
            }
            indices.push(idx);
        }
        Ok(Self {
            d,
            level,
            h,
            indices,
            nodes,
            weights: w,
            hermite_at_nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Per-coordinate truncation level N.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Gaussian scale s = √(h/2).
    pub fn scale(&self) -> f64 {
        (self.h / 2.0).sqrt()
    }

    /// Number of basis functions per mode, N+1.
    pub fn mode_dim(&self) -> usize {
        self.level + 1
    }

    /// Total basis size (N+1)^d.
    pub fn basis_size(&self) -> usize {
        self.indices.len()
    }

    pub fn multi_index(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mode = self.mode_dim();
        idx.iter().fold(0, |acc, &k| acc * mode + k)
    }

    /// Total Hermite degree of basis state i.
    pub fn degree(&self, i: usize) -> usize {
        self.indices[i].iter().sum()
    }

    /// Indices of the safe subblock: total degree ≤ N − margin.
    pub fn safe_indices(&self, margin: usize) -> Vec<usize> {
        let cut = self.level.saturating_sub(margin);
        (0..self.basis_size())
            .filter(|&i| self.degree(i) <= cut)
            .collect()
    }

    /// 1-dim quadrature nodes (variance h/2).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// e_n evaluated on the quadrature nodes.
    pub fn hermite_at_nodes(&self) -> &RMatrix {
        &self.hermite_at_nodes
    }

    /// Evaluate the 1-dim basis at an arbitrary point.
    pub fn hermite_at(&self, u: f64) -> Vec<f64> {
        hermite_values(u, self.scale(), self.level)
    }

    /// Gram matrix residual ‖G − I‖_max of the 1-dim basis under the rule.
    pub fn gram_residual(&self) -> f64 {
        let m = self.mode_dim();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for (q, &w) in self.weights.iter().enumerate() {
                    s += w * self.hermite_at_nodes[(i, q)] * self.hermite_at_nodes[(j, q)];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    /// Matrix of multiplication by the coordinate u on one mode:
    /// tridiagonal with entries √(h/2)·√(n+1).
    pub fn position_mode_matrix(&self) -> CMatrix {
        let m = self.mode_dim();
        let s = self.scale();
        let mut x = CMatrix::zeros(m, m);
        for n in 0..m - 1 {
            let v = s * ((n + 1) as f64).sqrt();
            x[(n, n + 1)] = C64::new(v, 0.0);
            x[(n + 1, n)] = C64::new(v, 0.0);
        }
        x
    }

    /// Annihilation operator on one mode (a e_n = √n e_{n−1}).
    pub fn annihilation_mode_matrix(&self) -> CMatrix {
        let m = self.mode_dim();
        let mut a = CMatrix::zeros(m, m);
        for n in 1..m {
            a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        a
    }

    /// Multiplication by ℓ_a(x) = a·x as a matrix on the full basis.
    pub fn ell(&self, a: &RVector) -> Result<CMatrix> {
        if a.len() != self.d {
            return Err(WeylError::DimensionMismatch(format!(
                "ell coefficient length {} vs d = {}",
                a.len(),
                self.d
            )));
        }
        let x = self.position_mode_matrix();
        let m = self.mode_dim();
        let eye = CMatrix::identity(m, m);
        let mut total = CMatrix::zeros(self.basis_size(), self.basis_size());
        for k in 0..self.d {
            if a[k] == 0.0 {
                continue;
            }
            let factors: Vec<&CMatrix> = (0..self.d)
                .map(|j| if j == k { &x } else { &eye })
                .collect();
            total += kron_all(&factors) * C64::new(a[k], 0.0);
        }
        Ok(total)
    }

    /// Parity ǧ(u) = g(−u): diagonal (−1)^{degree}.
    pub fn parity_apply(&self, f: &CVector) -> CVector {
        CVector::from_iterator(
            f.len(),
            f.iter()
                .enumerate()
                .map(|(i, &c)| if self.degree(i) % 2 == 0 { c } else { -c }),
        )
    }

    /// Per-mode coherent amplitude α_k = (a_k + i b_k)/√(2h).
    pub fn coherent_alpha(&self, x: &PhaseVector) -> Vec<C64> {
        let s = (2.0 * self.h).sqrt();
        (0..self.d)
            .map(|k| C64::new(x.x[k] / s, x.xi[k] / s))
            .collect()
    }

    /// Coherent state centered at X, refusing when the truncation tail
    /// exceeds `ceiling` (squared-norm tail estimate from |X|²/2h).
    pub fn coherent(&self, x: &PhaseVector, ceiling: f64) -> Result<CoherentState> {
        if x.dim() != self.d {
            return Err(WeylError::DimensionMismatch(format!(
                "coherent center dimension {} vs rep d = {}",
                x.dim(),
                self.d
            )));
        }
        let alphas = self.coherent_alpha(x);
        let m = self.mode_dim();
        let mut coeff = CVector::from_element(1, C64::new(1.0, 0.0));
        let mut tail_total = 0.0;
        for alpha in &alphas {
            let (c, tail) = coherent_coefficients(*alpha, m);
            tail_total += tail;
            coeff = kron_vec(&coeff, &c);
        }
        if tail_total > ceiling {
            return Err(WeylError::TruncationBudget {
                estimate: tail_total,
                ceiling,
            });
        }
        Ok(CoherentState {
            center: x.clone(),
            coefficients: coeff,
            truncation_error: tail_total,
        })
    }

    /// Segal–Bargmann transform (T_X f) = e^{|X|²/4h} ⟨f, Ψ_X⟩.
    pub fn segal_bargmann(&self, f: &CVector, x: &PhaseVector, ceiling: f64) -> Result<C64> {
        let cs = self.coherent(x, ceiling)?;
        let inner: C64 = f
            .iter()
            .zip(cs.coefficients.iter())
            .map(|(fi, ci)| fi * ci.conj())
            .sum();
        Ok(inner * C64::new((x.norm_squared() / (4.0 * self.h)).exp(), 0.0))
    }
}

/// Coherent state Ψ_X in a representation, with its truncation certificate.
#[derive(Debug, Clone)]
pub struct CoherentState {
    pub center: PhaseVector,
    pub coefficients: CVector,
    /// Squared-norm mass beyond the truncation.
    pub truncation_error: f64,
}

impl CoherentState {
    /// ⟨Ψ_X, Ψ_Y⟩ with the convention linear in the first argument.
    pub fn overlap(&self, other: &CoherentState) -> C64 {
        self.coefficients
            .iter()
            .zip(other.coefficients.iter())
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.coefficients.norm()
    }
}

/// Exact overlap law ⟨Ψ_X, Ψ_Y⟩ = e^{−|X−Y|²/4h + iσ(X,Y)/2h}.
pub fn coherent_overlap_exact(x: &PhaseVector, y: &PhaseVector, h: f64) -> C64 {
    let diff = x.sub(y).norm_squared();
    let sigma = crate::phase::symplectic_form(x, y).unwrap();
    (C64::new(-diff / (4.0 * h), sigma / (2.0 * h))).exp()
}

/// Kronecker product of complex matrices (left factor slowest index).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn kron_all(factors: &[&CMatrix]) -> CMatrix {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = kron(&acc, f);
    }
    acc
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[i * b.len() + j] = a[i] * b[j];
        }
    }
    out
}
