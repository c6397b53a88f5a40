//! Phase-space linear algebra.
//!
//! The phase space is R^{2d} with coordinates X = (x, ξ). The symplectic form
//! is σ((x,ξ),(y,η)) = y·ξ − x·η = ⟨X, FY⟩ with F(x,ξ) = (−ξ, x). A
//! nonnegative quadratic form Q_A(X) = ⟨AX, X⟩ induces the inner product
//! q_A(X,Y) = ⟨AX, Y⟩ on H²/Ker A; the fundamental matrix FA is q_A-skew and
//! its symplectic spectrum {λ_j} drives every operator-norm bound in the
//! crate.

use crate::error::{Result, WeylError};
use crate::{RMatrix, RVector};
use nalgebra::DVector;

/// Default constant in the Calderón–Vaillancourt determinant factor.
pub const CV_CONSTANT: f64 = 81.0 * std::f64::consts::PI;

/// A point X = (x, ξ) of phase space R^{2d}.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    /// Configuration part x (length d).
    pub x: RVector,
    /// Momentum part ξ (length d).
    pub xi: RVector,
}

impl PhaseVector {
    pub fn new(x: RVector, xi: RVector) -> Result<Self> {
        if x.len() != xi.len() {
            return Err(WeylError::DimensionMismatch(format!(
                "configuration length {} vs momentum length {}",
                x.len(),
                xi.len()
            )));
        }
        Ok(Self { x, xi })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            x: DVector::zeros(d),
            xi: DVector::zeros(d),
        }
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        assert!(coords.len() % 2 == 0, "phase vector needs 2d coordinates");
        let d = coords.len() / 2;
        Self {
            x: DVector::from_column_slice(&coords[..d]),
            xi: DVector::from_column_slice(&coords[d..]),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Flat 2d-vector (x₁..x_d, ξ₁..ξ_d).
    pub fn flat(&self) -> RVector {
        let d = self.dim();
        let mut v = DVector::zeros(2 * d);
        v.rows_mut(0, d).copy_from(&self.x);
        v.rows_mut(d, d).copy_from(&self.xi);
        v
    }

    pub fn from_flat(v: &RVector) -> Self {
        let d = v.len() / 2;
        Self {
            x: v.rows(0, d).into_owned(),
            xi: v.rows(d, d).into_owned(),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.x.norm_squared() + self.xi.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            x: &self.x + &other.x,
            xi: &self.xi + &other.xi,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: &self.x - &other.x,
            xi: &self.xi - &other.xi,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            x: c * &self.x,
            xi: c * &self.xi,
        }
    }
}

/// σ(X, Y) = y·ξ − x·η for X = (x,ξ), Y = (y,η).
pub fn symplectic_form(a: &PhaseVector, b: &PhaseVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(WeylError::DimensionMismatch(format!(
            "σ arguments of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(b.x.dot(&a.xi) - a.x.dot(&b.xi))
}

/// The matrix of F(x,ξ) = (−ξ, x) on R^{2d}, so that σ(X,Y) = ⟨X, FY⟩ and
/// F² = −I.
pub fn f_matrix(d: usize) -> RMatrix {
    let mut f = RMatrix::zeros(2 * d, 2 * d);
    for j in 0..d {
        f[(j, d + j)] = -1.0;
        f[(d + j, j)] = 1.0;
    }
    f
}

/// σ as a bilinear form on flat 2d-vectors.
pub fn symplectic_form_flat(a: &RVector, b: &RVector) -> f64 {
    let d = a.len() / 2;
    let mut s = 0.0;
    for j in 0..d {
        s += b[j] * a[d + j] - a[j] * b[d + j];
    }
    s
}

/// Symmetric nonnegative form matrix A on phase space, with its
/// eigendecomposition cached and eigenvalues below `kernel_tol` assigned to
/// Ker A.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    matrix: RMatrix,
    eigenvalues: RVector,
    eigenvectors: RMatrix,
    kernel_tol: f64,
}

impl QuadraticForm {
    /// Validates symmetry (relative residual ≤ 1e-12) and nonnegativity, and
    /// caches the eigendecomposition. The kernel tolerance is 1e-12·‖A‖.
    pub fn new(matrix: RMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() % 2 != 0 {
            return Err(WeylError::DimensionMismatch(format!(
                "form matrix must be 2d×2d, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.norm().max(1e-300);
        let asym = (&matrix - matrix.transpose()).norm() / scale;
        if asym > 1e-12 {
            return Err(WeylError::NotSymmetric {
                residual: asym,
                tol: 1e-12,
            });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let kernel_tol = 1e-12 * max_eig.max(1e-300);
        if let Some(min) = eig
            .eigenvalues
            .iter()
            .cloned()
            .reduce(f64::min)
            .filter(|&m| m < -kernel_tol)
        {
            return Err(WeylError::NotNonnegative {
                eigenvalue: min,
                tol: kernel_tol,
            });
        }
        Ok(Self {
            matrix: sym,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            kernel_tol,
        })
    }

    /// Zero form on phase space of dimension 2d.
    pub fn zero(d: usize) -> Self {
        Self::new(RMatrix::zeros(2 * d, 2 * d)).unwrap()
    }

    /// Identity form.
    pub fn identity(d: usize) -> Self {
        Self::new(RMatrix::identity(2 * d, 2 * d)).unwrap()
    }

    /// Phase-space dimension d (matrix is 2d×2d).
    pub fn dim(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.matrix
    }

    pub fn kernel_tol(&self) -> f64 {
        self.kernel_tol
    }

    /// Q_A(X) = ⟨AX, X⟩ on a flat vector.
    pub fn value(&self, v: &RVector) -> f64 {
        (&self.matrix * v).dot(v)
    }

    /// q_A(X, Y) = ⟨AX, Y⟩ on flat vectors.
    pub fn pairing(&self, v: &RVector, w: &RVector) -> f64 {
        (&self.matrix * v).dot(w)
    }

    /// Eigenvalues of A (ascending, as produced by the solver).
    pub fn eigenvalues(&self) -> &RVector {
        &self.eigenvalues
    }

    /// Eigenvectors of A, column-aligned with `eigenvalues`.
    pub fn eigenvectors(&self) -> &RMatrix {
        &self.eigenvectors
    }

    /// A^{1/2}, with kernel eigenvalues clamped to zero.
    pub fn sqrt_matrix(&self) -> RMatrix {
        self.apply_spectral(|t| if t > self.kernel_tol { t.sqrt() } else { 0.0 })
    }

    /// Pseudo-inverse square root A^{-1/2} on Range A.
    pub fn pinv_sqrt_matrix(&self) -> RMatrix {
        self.apply_spectral(|t| if t > self.kernel_tol { 1.0 / t.sqrt() } else { 0.0 })
    }

    /// Moore–Penrose pseudo-inverse applied to a vector.
    pub fn pinv_apply(&self, v: &RVector) -> RVector {
        let coords = self.eigenvectors.transpose() * v;
        let scaled = RVector::from_iterator(
            coords.len(),
            coords
                .iter()
                .zip(self.eigenvalues.iter())
                .map(|(c, &t)| if t > self.kernel_tol { c / t } else { 0.0 }),
        );
        &self.eigenvectors * scaled
    }

    fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> RMatrix {
        let n = self.matrix.nrows();
        let mut out = RMatrix::zeros(n, n);
        for k in 0..n {
            let t = f(self.eigenvalues[k]);
            if t != 0.0 {
                let col = self.eigenvectors.column(k);
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] += t * col[i] * col[j];
                    }
                }
            }
        }
        out
    }

    /// Trace of A.
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Pullback χᵀAχ as a form (Q_A ∘ χ).
    pub fn pullback(&self, chi: &RMatrix) -> Result<Self> {
        Self::new(chi.transpose() * &self.matrix * chi)
    }

    /// Rescaled form cA.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.matrix * c)
    }
}

/// Invertible 2d×2d matrix certified to preserve σ.
#[derive(Debug, Clone)]
pub struct SymplecticMap {
    matrix: RMatrix,
    sigma_residual: f64,
}

impl SymplecticMap {
    /// Checks ‖χᵀFχ − F‖ ≤ 1e-10 (relative to ‖χ‖²).
    pub fn new(matrix: RMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() % 2 != 0 {
            return Err(WeylError::DimensionMismatch(format!(
                "symplectic map must be 2d×2d, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let d = matrix.nrows() / 2;
        let f = f_matrix(d);
        let scale = matrix.norm_squared().max(1.0);
        let residual = (matrix.transpose() * &f * &matrix - &f).norm() / scale;
        if residual > 1e-10 {
            return Err(WeylError::NotSymplectic {
                residual,
                tol: 1e-10,
            });
        }
        Ok(Self {
            matrix,
            sigma_residual: residual,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(RMatrix::identity(2 * d, 2 * d)).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.matrix
    }

    pub fn sigma_residual(&self) -> f64 {
        self.sigma_residual
    }

    pub fn apply(&self, v: &PhaseVector) -> PhaseVector {
        PhaseVector::from_flat(&(&self.matrix * v.flat()))
    }

    /// χ^{-1}, exact through the symplectic inversion χ^{-1} = −F χᵀ F.
    pub fn inverse(&self) -> Self {
        let d = self.dim();
        let f = f_matrix(d);
        let inv = -&f * self.matrix.transpose() * &f;
        Self {
            matrix: inv,
            sigma_residual: self.sigma_residual,
        }
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        Self::new(&self.matrix * other.matrix())
    }
}

/// Symplectic basis (U_j, V_j) adapted to a nonnegative form A.
///
/// Pairs are ordered with the p "degenerate" pairs (AV_j = 0) first, then the
/// elliptic pairs with ⟨AU_j,U_j⟩ = ⟨AV_j,V_j⟩ = λ_j, λ_j sorted descending.
#[derive(Debug, Clone)]
pub struct SymplecticNormalForm {
    /// Basis vectors U_j (flat 2d-columns), j = 1..d.
    pub u: Vec<RVector>,
    /// Basis vectors V_j.
    pub v: Vec<RVector>,
    /// Symplectic eigenvalues λ_j for the elliptic pairs j > p, descending.
    pub lambdas: Vec<f64>,
    /// Number of pairs with AV_j = 0.
    pub p: usize,
}

impl SymplecticNormalForm {
    /// Largest symplectic eigenvalue, i.e. ‖FA‖ in the q_A operator norm.
    pub fn lambda_max(&self) -> f64 {
        self.lambdas.first().copied().unwrap_or(0.0)
    }
}

/// Computes the symplectic normal form of a nonnegative quadratic form.
///
/// The elliptic pairs diagonalize A with σ(U_j,V_j) = 1 and satisfy
/// (FA)²U_j = −λ_j²U_j; the degenerate pairs have AV_j = 0 and exhaust the
/// σ-complement. Output is deterministic for a fixed A.
pub fn symplectic_normal_form(a: &QuadraticForm) -> Result<SymplecticNormalForm> {
    let d = a.dim();
    let n = 2 * d;
    let f = f_matrix(d);
    let fa = &f * a.matrix();
    let sqrt_a = a.sqrt_matrix();
    let k = &sqrt_a * &f * &sqrt_a; // skew-symmetric; nonzero spectrum = ±iλ_j

    // Eigenvalues λ² of −K² with paired eigenvectors (u, v = Ku/λ).
    let m = -(&k * &k);
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let lam2_tol = {
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        1e-12 * max.max(1e-300)
    };

    // Indices of eigenvalues above the cut, grouped later by magnitude.
    let mut idx: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > lam2_tol).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    let mut u_out: Vec<RVector> = Vec::new();
    let mut v_out: Vec<RVector> = Vec::new();
    let mut lambdas: Vec<f64> = Vec::new();

    // Pick K-invariant planes: u orthogonal to all previously chosen (u, v).
    let mut chosen: Vec<RVector> = Vec::new();
    let fa2 = &fa * &fa;
    for &i in &idx {
        let lam = eig.eigenvalues[i].sqrt();
        let mut u_cand: RVector = eig.eigenvectors.column(i).into_owned();
        for c in &chosen {
            let proj = u_cand.dot(c);
            u_cand -= c * proj;
        }
        let nrm = u_cand.norm();
        if nrm < 1e-8 {
            continue; // this eigenvector lies in an already-extracted plane
        }
        u_cand /= nrm;
        // Deterministic sign: largest-magnitude entry positive.
        fix_sign(&mut u_cand);
        let v_cand = (&k * &u_cand) / lam;
        chosen.push(u_cand.clone());
        chosen.push(v_cand.clone());

        // Lift through A^{-1/2} and remove the Ker A component so that
        // (FA)² U = −λ² U holds as a vector identity.
        let lift = |w: &RVector| -> RVector {
            let mut cand = a.pinv_sqrt_matrix() * w;
            for _ in 0..2 {
                let resid = (&fa2 * &cand + &cand * (lam * lam)) / (lam * lam);
                cand -= resid;
            }
            cand
        };
        let u_lift = lift(&u_cand);
        let q_uu = a.value(&u_lift);
        if q_uu <= 0.0 {
            return Err(WeylError::QuadratureDiverged(format!(
                "elliptic pair with nonpositive Q_A(U) = {q_uu:.3e}"
            )));
        }
        let u_j = &u_lift * (lam / q_uu).sqrt();
        let v_j = -(&fa * &u_j) / lam;
        u_out.push(u_j);
        v_out.push(v_j);
        lambdas.push(lam);
    }
    let r = lambdas.len();
    debug_assert!(r <= d);

    // Degenerate part: symplectic complement of the elliptic span.
    let p = d - r;
    if p > 0 {
        // Basis of W^σ = {X : σ(X, U_j) = σ(X, V_j) = 0 ∀ j ≤ r}.
        let mut constraints = RMatrix::zeros(2 * r, n);
        for (j, (uj, vj)) in u_out.iter().zip(v_out.iter()).enumerate() {
            constraints.row_mut(2 * j).copy_from(&(&f * uj).transpose());
            constraints
                .row_mut(2 * j + 1)
                .copy_from(&(&f * vj).transpose());
        }
        let comp = null_space(&constraints, 2 * p)?;

        // A restricted to the complement in its orthonormal basis.
        let a_sub = comp.transpose() * a.matrix() * &comp;
        let a_sub = (&a_sub + a_sub.transpose()) * 0.5;
        let sig_sub = skew_gram(&comp, &f);
        let sub_eig = a_sub.clone().symmetric_eigen();
        let sub_tol = {
            let max = sub_eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            (1e-10 * max).max(a.kernel_tol())
        };
        let mut range_idx: Vec<usize> = (0..2 * p)
            .filter(|&i| sub_eig.eigenvalues[i] > sub_tol)
            .collect();
        range_idx.sort_by(|&i, &j| {
            sub_eig.eigenvalues[j]
                .partial_cmp(&sub_eig.eigenvalues[i])
                .unwrap()
        });
        let s = range_idx.len();
        let kernel_idx: Vec<usize> = (0..2 * p)
            .filter(|&i| sub_eig.eigenvalues[i] <= sub_tol)
            .collect();

        // Radical of σ' within Ker A': vectors killed by A' whose σ'-image
        // is supported on Range A'.
        let mut rad_constraints = RMatrix::zeros(2 * p + kernel_idx.len(), 2 * p);
        rad_constraints.rows_mut(0, 2 * p).copy_from(&a_sub);
        for (row, &ki) in kernel_idx.iter().enumerate() {
            let kvec: RVector = sub_eig.eigenvectors.column(ki).into_owned();
            let sig_k = sig_sub.transpose() * &kvec; // σ'(·, k) functional
            rad_constraints
                .row_mut(2 * p + row)
                .copy_from(&sig_k.transpose());
        }
        let mut u_deg: Vec<RVector> = Vec::new();
        let mut v_deg: Vec<RVector> = Vec::new();
        if s > 0 {
            let rad = null_space(&rad_constraints, s)?;
            // Pair each A'-range eigenvector with a radical partner via the
            // σ'-Gram system.
            let mut gram = RMatrix::zeros(s, s);
            for (row, &wi) in range_idx.iter().enumerate() {
                let w: RVector = sub_eig.eigenvectors.column(wi).into_owned();
                for col in 0..s {
                    let rvec: RVector = rad.column(col).into_owned();
                    gram[(row, col)] = w.dot(&(&sig_sub * &rvec));
                }
            }
            let gram_inv = gram
                .lu()
                .try_inverse()
                .ok_or_else(|| WeylError::NotPositiveDefinite("σ'-pairing singular".into()))?;
            for (row, &wi) in range_idx.iter().enumerate() {
                let mut w: RVector = sub_eig.eigenvectors.column(wi).into_owned();
                fix_sign(&mut w);
                let sign = sub_eig.eigenvectors.column(wi).dot(&w).signum();
                let mut vpart = RVector::zeros(2 * p);
                for col in 0..s {
                    vpart += rad.column(col) * (gram_inv[(col, row)] * sign);
                }
                u_deg.push(&comp * &w);
                v_deg.push(&comp * &vpart);
            }
        }
        // Fully-null pairs: symplectic Gram–Schmidt on the leftover.
        let span_dim = 2 * s;
        if 2 * p > span_dim {
            let mut taken: Vec<RVector> = Vec::new();
            for w in u_deg.iter().chain(v_deg.iter()) {
                taken.push(comp.transpose() * w);
            }
            let mut cons = RMatrix::zeros(taken.len().max(1), 2 * p);
            if taken.is_empty() {
                // no constraints beyond σ'-orthogonality handled below
                cons = RMatrix::zeros(0, 2 * p);
            } else {
                for (row, t) in taken.iter().enumerate() {
                    cons.row_mut(row)
                        .copy_from(&(sig_sub.transpose() * t).transpose());
                }
            }
            let free = null_space(&cons, 2 * p - span_dim)?;
            let mut pool: Vec<RVector> = (0..free.ncols()).map(|c| free.column(c).into_owned()).collect();
            while let Some(mut x) = pool.pop() {
                let nx = x.norm();
                if nx < 1e-10 {
                    continue;
                }
                x /= nx;
                // partner with maximal σ'(x, y)
                let (mut best, mut best_val) = (None, 0.0f64);
                for (i, y) in pool.iter().enumerate() {
                    let v = x.dot(&(&sig_sub * y));
                    if v.abs() > best_val {
                        best_val = v.abs();
                        best = Some(i);
                    }
                }
                let i = best.ok_or_else(|| {
                    WeylError::NotPositiveDefinite("symplectic completion failed".into())
                })?;
                let y = pool.swap_remove(i);
                let sxy = x.dot(&(&sig_sub * &y));
                let y = y / sxy;
                // purge remaining pool of σ'-components along (x, y)
                for z in pool.iter_mut() {
                    let a1 = x.dot(&(&sig_sub * &*z));
                    let a2 = y.dot(&(&sig_sub * &*z));
                    *z = &*z - &y * a1 + &x * a2;
                }
                u_deg.push(&comp * &x);
                v_deg.push(&comp * &y);
            }
        }
        // Degenerate pairs first, then elliptic.
        let mut u_all = u_deg;
        let mut v_all = v_deg;
        u_all.extend(u_out);
        v_all.extend(v_out);
        u_out = u_all;
        v_out = v_all;
    }

    Ok(SymplecticNormalForm {
        u: u_out,
        v: v_out,
        lambdas,
        p,
    })
}

fn fix_sign(v: &mut RVector) {
    let mut imax = 0;
    let mut best = 0.0f64;
    for (i, &t) in v.iter().enumerate() {
        if t.abs() > best {
            best = t.abs();
            imax = i;
        }
    }
    if v[imax] < 0.0 {
        *v = -&*v;
    }
}

/// Orthonormal basis of the null space of `m`, expected dimension `dim`,
/// through the eigendecomposition of mᵀm (covers wide matrices, which thin
/// SVD does not).
fn null_space(m: &RMatrix, dim: usize) -> Result<RMatrix> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return Ok(RMatrix::identity(n, dim.min(n)));
    }
    let gram = m.transpose() * m;
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = gram.symmetric_eigen();
    let emax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let kept: Vec<usize> = order
        .iter()
        .cloned()
        .filter(|&i| eig.eigenvalues[i] <= 1e-18 * emax)
        .collect();
    if kept.len() < dim {
        return Err(WeylError::DimensionMismatch(format!(
            "null space dimension {} below expected {}",
            kept.len(),
            dim
        )));
    }
    let mut out = RMatrix::zeros(n, dim);
    for (j, &c) in kept.iter().take(dim).enumerate() {
        out.column_mut(j).copy_from(&eig.eigenvectors.column(c));
    }
    Ok(out)
}

fn skew_gram(basis: &RMatrix, f: &RMatrix) -> RMatrix {
    // entries σ(c_i, c_j) = ⟨c_i, F c_j⟩
    basis.transpose() * f * basis
}

/// Fredholm determinant det(I + z|T|_q) of a q-skew operator.
///
/// `q_gram` is the Gram matrix of the inner product q on the space where `t`
/// acts (pass the identity for the Euclidean case). The determinant is the
/// product ∏(1 + z s_k) over the q-singular values of `t`, each conjugate
/// pair contributing twice.
pub fn fredholm_det(q_gram: &RMatrix, z: f64, t: &RMatrix) -> Result<f64> {
    let n = t.nrows();
    if q_gram.nrows() != n || q_gram.ncols() != n || t.ncols() != n {
        return Err(WeylError::DimensionMismatch(
            "Gram matrix and operator must share dimensions".into(),
        ));
    }
    let chol = q_gram
        .clone()
        .cholesky()
        .ok_or_else(|| WeylError::NotPositiveDefinite("q Gram matrix".into()))?;
    let r = chol.l().transpose(); // q(X,Y) = (RX)·(RY)
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| WeylError::NotPositiveDefinite("q Gram matrix".into()))?;
    let m = &r * t * &r_inv;
    let skew_resid = (&m + m.transpose()).norm() / m.norm().max(1e-300);
    if skew_resid > 1e-8 {
        return Err(WeylError::NotSkew(skew_resid));
    }
    let m2 = -(&m * &m);
    let m2 = (&m2 + m2.transpose()) * 0.5;
    let eig = m2.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut det = 1.0;
    for &e in eig.eigenvalues.iter() {
        if e < -1e-10 * max.max(1.0) {
            return Err(WeylError::NotNonnegative {
                eigenvalue: e,
                tol: 1e-10 * max.max(1.0),
            });
        }
        det *= 1.0 + z * e.max(0.0).sqrt();
    }
    Ok(det)
}

/// The determinant bound factor
/// D(H²/Ker A, q_A, c·h·max(1, ‖FA‖_{q_A}), FA)^{1/2} = ∏_{j>p}(1 + c h S λ_j)
/// with S = max(1, sup λ_j).
pub fn cv_bound_factor(a: &QuadraticForm, h: f64, c: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(WeylError::InvalidArgument("h must be positive".into()));
    }
    let nf = symplectic_normal_form(a)?;
    Ok(cv_bound_factor_from_lambdas(&nf.lambdas, h, c))
}

/// Same product computed from an explicit symplectic spectrum.
pub fn cv_bound_factor_from_lambdas(lambdas: &[f64], h: f64, c: f64) -> f64 {
    let s = lambdas.iter().cloned().fold(1.0f64, f64::max);
    lambdas.iter().map(|&l| 1.0 + c * h * s * l).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pv(coords: &[f64]) -> PhaseVector {
        PhaseVector::from_slice(coords)
    }

    #[test]
    fn symplectic_form_canonical_pairs() {
        // d = 1: σ(X, X) = 0, σ((1,0),(0,1)) = −1 by direct substitution.
        let e = pv(&[1.0, 0.0]);
        let f = pv(&[0.0, 1.0]);
        assert_eq!(symplectic_form(&e, &e).unwrap(), 0.0);
        assert_relative_eq!(symplectic_form(&e, &f).unwrap(), -1.0);
        assert_relative_eq!(symplectic_form(&f, &e).unwrap(), 1.0);
    }

    #[test]
    fn symplectic_form_matches_f_matrix_and_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 3;
        let f = f_matrix(d);
        for _ in 0..100 {
            let a = RVector::from_fn(2 * d, |_, _| rng.random_range(-1.0..1.0));
            let b = RVector::from_fn(2 * d, |_, _| rng.random_range(-1.0..1.0));
            let s1 = symplectic_form_flat(&a, &b);
            let s2 = a.dot(&(&f * &b));
            assert_relative_eq!(s1, s2, epsilon = 1e-14);
            assert!((s1 + symplectic_form_flat(&b, &a)).abs() <= 1e-14);
        }
        // F² = −I exactly.
        assert_eq!(&f * &f, -RMatrix::identity(2 * d, 2 * d));
    }

    #[test]
    fn symplectic_form_dimension_mismatch() {
        let a = pv(&[1.0, 0.0]);
        let b = pv(&[1.0, 0.0, 0.0, 0.0]);
        assert!(symplectic_form(&a, &b).is_err());
    }

    #[test]
    fn fredholm_det_zero_operator() {
        let q = RMatrix::identity(4, 4);
        let t = RMatrix::zeros(4, 4);
        assert_relative_eq!(fredholm_det(&q, 3.7, &t).unwrap(), 1.0);
    }

    #[test]
    fn fredholm_det_single_rotation_block() {
        // |T| = 0.5·I on R², det(I + 2·0.5 I) = 4.
        let q = RMatrix::identity(2, 2);
        let t = RMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert_relative_eq!(fredholm_det(&q, 2.0, &t).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn fredholm_det_three_pairs_product_formula() {
        // q-singular values (0.5, 0.25, 0.125) doubled; z = 1.
        let mut t = RMatrix::zeros(6, 6);
        for (j, s) in [0.5, 0.25, 0.125].iter().enumerate() {
            t[(2 * j, 2 * j + 1)] = -s;
            t[(2 * j + 1, 2 * j)] = *s;
        }
        let expected = (1.5f64 * 1.25 * 1.125).powi(2);
        let got = fredholm_det(&RMatrix::identity(6, 6), 1.0, &t).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        // against a dense determinant of I + |T|
        let m2 = -(&t * &t);
        let eig = m2.symmetric_eigen();
        let dense: f64 = eig.eigenvalues.iter().map(|e| 1.0 + e.max(0.0).sqrt()).product();
        assert_relative_eq!(got, dense, epsilon = 1e-10);
        assert_relative_eq!(expected, 4.4495, epsilon = 1e-3);
    }

    #[test]
    fn fredholm_det_rejects_non_skew() {
        let q = RMatrix::identity(2, 2);
        let t = RMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.0]);
        assert!(matches!(
            fredholm_det(&q, 1.0, &t),
            Err(WeylError::NotSkew(_))
        ));
    }

    #[test]
    fn fredholm_det_nonresidual_gram() {
        // q given by a non-identity Gram matrix; T skew for q but not Euclid.
        let g = RMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        // build T = G^{-1} K with K Euclid-skew so that q(TX,Y) = (KX)·Y is skew
        let kk = RMatrix::from_row_slice(2, 2, &[0.0, -0.4, 0.4, 0.0]);
        let t = g.clone().try_inverse().unwrap() * &kk;
        let det = fredholm_det(&g, 1.0, &t).unwrap();
        assert!(det >= 1.0);
    }

    fn check_normal_form(a: &QuadraticForm, nf: &SymplecticNormalForm) {
        let d = a.dim();
        assert_eq!(nf.u.len(), d);
        assert_eq!(nf.v.len(), d);
        let fa = f_matrix(d) * a.matrix();
        // symplectic basis relations
        for i in 0..d {
            for j in 0..d {
                let suv = symplectic_form_flat(&nf.u[i], &nf.v[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (suv - target).abs() < 1e-9,
                    "σ(U_{i},V_{j}) = {suv}, want {target}"
                );
                assert!(symplectic_form_flat(&nf.u[i], &nf.u[j]).abs() < 1e-9);
                assert!(symplectic_form_flat(&nf.v[i], &nf.v[j]).abs() < 1e-9);
                if i != j {
                    assert!(a.pairing(&nf.u[i], &nf.u[j]).abs() < 1e-9);
                    assert!(a.pairing(&nf.v[i], &nf.v[j]).abs() < 1e-9);
                }
                assert!(a.pairing(&nf.u[i], &nf.v[j]).abs() < 1e-9);
            }
        }
        for j in 0..nf.p {
            assert!((a.matrix() * &nf.v[j]).norm() < 1e-8, "AV_j ≠ 0 at {j}");
        }
        for (k, &lam) in nf.lambdas.iter().enumerate() {
            let j = nf.p + k;
            assert_relative_eq!(a.value(&nf.u[j]), lam, epsilon = 1e-9, max_relative = 1e-8);
            assert_relative_eq!(a.value(&nf.v[j]), lam, epsilon = 1e-9, max_relative = 1e-8);
            let resid = (&fa * (&fa * &nf.u[j]) + &nf.u[j] * (lam * lam)).norm();
            assert!(resid < 1e-8 * (1.0 + lam * lam), "(FA)² residual {resid}");
        }
        // λ sorted descending
        for w in nf.lambdas.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn normal_form_identity() {
        let a = QuadraticForm::identity(1);
        let nf = symplectic_normal_form(&a).unwrap();
        assert_eq!(nf.p, 0);
        assert_eq!(nf.lambdas.len(), 1);
        assert_relative_eq!(nf.lambdas[0], 1.0, epsilon = 1e-12);
        check_normal_form(&a, &nf);
    }

    #[test]
    fn normal_form_diag_ab() {
        // A = diag(a,b), d = 1: λ₁ = √(ab) since (FA)² = −ab·I.
        let a = QuadraticForm::new(RMatrix::from_diagonal(&RVector::from_column_slice(&[
            0.7, 2.3,
        ])))
        .unwrap();
        let nf = symplectic_normal_form(&a).unwrap();
        assert_eq!(nf.p, 0);
        assert_relative_eq!(nf.lambdas[0], (0.7f64 * 2.3).sqrt(), epsilon = 1e-10);
        check_normal_form(&a, &nf);
    }

    #[test]
    fn normal_form_rank_one() {
        // A = diag(1, 0): FA nilpotent, p = 1, no elliptic pair.
        let a = QuadraticForm::new(RMatrix::from_diagonal(&RVector::from_column_slice(&[
            1.0, 0.0,
        ])))
        .unwrap();
        let nf = symplectic_normal_form(&a).unwrap();
        assert_eq!(nf.p, 1);
        assert!(nf.lambdas.is_empty());
        check_normal_form(&a, &nf);
        // numeric rank of (FA)² is zero
        let fa = f_matrix(1) * a.matrix();
        assert!((&fa * &fa).norm() < 1e-14);
    }

    #[test]
    fn normal_form_zero_form() {
        let a = QuadraticForm::zero(2);
        let nf = symplectic_normal_form(&a).unwrap();
        assert_eq!(nf.p, 2);
        check_normal_form(&a, &nf);
    }

    #[test]
    fn normal_form_mixed_degenerate() {
        // d = 2: one elliptic pair, one rank-one degenerate block.
        let a = QuadraticForm::new(RMatrix::from_diagonal(&RVector::from_column_slice(&[
            1.5, 0.6, 0.9, 0.0,
        ])))
        .unwrap();
        let nf = symplectic_normal_form(&a).unwrap();
        assert_eq!(nf.p, 1);
        assert_eq!(nf.lambdas.len(), 1);
        // elliptic λ from the (x₁, ξ₁) block: √(1.5·0.9)
        assert_relative_eq!(nf.lambdas[0], (1.5f64 * 0.9).sqrt(), epsilon = 1e-10);
        check_normal_form(&a, &nf);
    }

    #[test]
    fn normal_form_degenerate_lambda_multiplicity() {
        // Two equal symplectic eigenvalues.
        let a = QuadraticForm::new(RMatrix::identity(4, 4) * 0.8).unwrap();
        let nf = symplectic_normal_form(&a).unwrap();
        assert_eq!(nf.lambdas.len(), 2);
        for l in &nf.lambdas {
            assert_relative_eq!(*l, 0.8, epsilon = 1e-10);
        }
        check_normal_form(&a, &nf);
    }

    fn random_symplectic(d: usize, rng: &mut ChaCha8Rng, scale: f64) -> SymplecticMap {
        // exp(F S) with S symmetric is symplectic.
        let n = 2 * d;
        let mut s = RMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random_range(-scale..scale);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        let g = f_matrix(d) * s;
        SymplecticMap::new(g.exp()).unwrap()
    }

    #[test]
    fn normal_form_random_spd_and_symplectic_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..8 {
            let d = 1 + (trial % 3);
            let n = 2 * d;
            let mut b = RMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    b[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            let a = QuadraticForm::new(&b * b.transpose() + RMatrix::identity(n, n) * 0.05)
                .unwrap();
            let nf = symplectic_normal_form(&a).unwrap();
            assert_eq!(nf.p, 0);
            check_normal_form(&a, &nf);

            // spectrum invariance under symplectic pullback
            let chi = random_symplectic(d, &mut rng, 0.4);
            let a2 = a.pullback(chi.matrix()).unwrap();
            let nf2 = symplectic_normal_form(&a2).unwrap();
            assert_eq!(nf.lambdas.len(), nf2.lambdas.len());
            for (l1, l2) in nf.lambdas.iter().zip(nf2.lambdas.iter()) {
                assert_relative_eq!(l1, l2, epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn cv_factor_zero_form() {
        let a = QuadraticForm::zero(2);
        assert_relative_eq!(cv_bound_factor(&a, 0.3, CV_CONSTANT).unwrap(), 1.0);
    }

    #[test]
    fn cv_factor_identity_d1() {
        // λ = 1, S = 1: 1 + 81π·h.
        let a = QuadraticForm::identity(1);
        let got = cv_bound_factor(&a, 0.01, CV_CONSTANT).unwrap();
        assert_relative_eq!(got, 1.0 + 0.81 * std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(got, 3.5445, epsilon = 1e-3);
    }

    #[test]
    fn cv_factor_agrees_with_fredholm_det_route() {
        // For positive definite A the factor equals
        // D(H², q_A, c h max(1,λmax), FA)^{1/2}.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 2;
        let n = 2 * d;
        let mut b = RMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let a = QuadraticForm::new(&b * b.transpose() * 0.2 + RMatrix::identity(n, n) * 0.1)
            .unwrap();
        let h = 0.37;
        let fac = cv_bound_factor(&a, h, CV_CONSTANT).unwrap();
        let nf = symplectic_normal_form(&a).unwrap();
        let s = nf.lambda_max().max(1.0);
        let fa = f_matrix(d) * a.matrix();
        let det = fredholm_det(a.matrix(), CV_CONSTANT * h * s, &fa).unwrap();
        assert_relative_eq!(fac, det.sqrt(), epsilon = 1e-9, max_relative = 1e-9);
    }

    #[test]
    fn cv_factor_geometric_tail_dimension_free() {
        // λ_j = 4^{-j}: the product converges; truncating at d = 8 is below
        // the infinite product by at most the geometric tail Σ_{j>8} c λ_j,
        // and every d ≤ 8 value is bounded by the d = 8 one.
        let lambdas: Vec<f64> = (1..=8).map(|j| 0.25f64.powi(j)).collect();
        let f8 = cv_bound_factor_from_lambdas(&lambdas, 1.0, CV_CONSTANT);
        let mut tail = f8;
        for j in 9..200 {
            tail *= 1.0 + CV_CONSTANT * 0.25f64.powi(j);
        }
        let tail_bound = (CV_CONSTANT * 0.25f64.powi(9) * 4.0 / 3.0).exp();
        assert!(tail >= f8 && tail <= f8 * tail_bound);
        for d in 1..8 {
            let fd = cv_bound_factor_from_lambdas(&lambdas[..d], 1.0, CV_CONSTANT);
            assert!(fd <= f8 + 1e-6);
        }
        // built as a diagonal d = 8 form the factor matches the λ route
        let mut diag = RVector::zeros(16);
        for (j, &l) in lambdas.iter().enumerate() {
            diag[j] = l;
            diag[8 + j] = l;
        }
        let a = QuadraticForm::new(RMatrix::from_diagonal(&diag)).unwrap();
        let via_form = cv_bound_factor(&a, 1.0, CV_CONSTANT).unwrap();
        assert_relative_eq!(via_form, f8, epsilon = 1e-9, max_relative = 1e-9);
    }

    #[test]
    fn cv_factor_monotone_in_h_and_lambda() {
        let lambdas = [0.9, 0.4, 0.1];
        let f1 = cv_bound_factor_from_lambdas(&lambdas, 0.2, CV_CONSTANT);
        let f2 = cv_bound_factor_from_lambdas(&lambdas, 0.5, CV_CONSTANT);
        assert!(f2 >= f1);
        let bigger = [1.1, 0.4, 0.1];
        let f3 = cv_bound_factor_from_lambdas(&bigger, 0.2, CV_CONSTANT);
        assert!(f3 >= f1);
    }

    #[test]
    fn quadratic_form_rejects_asymmetric_and_negative() {
        let m = RMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(QuadraticForm::new(m).is_err());
        let m = RMatrix::from_diagonal(&RVector::from_column_slice(&[1.0, -0.2]));
        assert!(QuadraticForm::new(m).is_err());
    }

    #[test]
    fn symplectic_map_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chi = random_symplectic(2, &mut rng, 0.5);
        assert!(chi.sigma_residual() <= 1e-10);
        let inv = chi.inverse();
        let prod = chi.matrix() * inv.matrix();
        assert!((prod - RMatrix::identity(4, 4)).norm() < 1e-10);
        // non-symplectic rejected
        assert!(SymplecticMap::new(RMatrix::identity(4, 4) * 1.1).is_err());
    }
}
