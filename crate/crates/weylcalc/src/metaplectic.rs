//! Metaplectic (Bogoliubov) operators: the three generator families, the
//! factorization of symplectic maps, and Weyl-calculus covariance
//! U_χ* Op(F) U_χ = Op(F ∘ χ).
//!
//! Generators:
//! - unitary symplectic maps (x, ξ) ↔ x + iξ act degree-wise as the second
//!   quantization of a complex unitary;
//! - shears (x, ξ) ↦ (x, ξ + Sx) act by multiplication with
//!   e^{i φ_S(x)/2h}, φ_S(x) = ⟨Sx, x⟩ − (h/2) tr S;
//! - dilations (x, ξ) ↦ (Tx, T⁻¹ξ) act by (Uf)(x) = f(T⁻¹x) D(x)^{1/2}-type
//!   rescalings with D the Gaussian change-of-variables density.
//!
//! The operators are defined only up to a unit-modulus constant, so every
//! identity asserted here is conjugation-based.

use crate::error::{Result, WeylError};
use crate::exec;
use crate::phase::{SymplecticMap, f_matrix};
use crate::quantize::OperatorMatrix;
use crate::rep::GaussianRep;
use crate::{C64, CMatrix, RMatrix, RVector};
use std::sync::Arc;

/// χ = χ₁ · shear(S) · dilate(T): χ₁ orthogonal symplectic, S symmetric,
/// T symmetric positive definite.
#[derive(Debug, Clone)]
pub struct MetaplecticFactorization {
    pub chi1: SymplecticMap,
    pub shear: RMatrix,
    pub dilation: RMatrix,
}

impl MetaplecticFactorization {
    /// χ₁ · [[I,0],[S,I]] · [[T,0],[0,T⁻¹]].
    pub fn reconstruct(&self) -> Result<RMatrix> {
        Ok(self.chi1.matrix() * shear_matrix(&self.shear) * dilation_matrix(&self.dilation)?)
    }
}

/// [[I, 0], [S, I]]: (x, ξ) ↦ (x, ξ + Sx).
pub fn shear_matrix(s: &RMatrix) -> RMatrix {
    let d = s.nrows();
    let mut m = RMatrix::identity(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(d + i, j)] = s[(i, j)];
        }
    }
    m
}

/// [[T, 0], [0, T⁻¹]]: (x, ξ) ↦ (Tx, T⁻¹ξ).
pub fn dilation_matrix(t: &RMatrix) -> Result<RMatrix> {
    let d = t.nrows();
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| WeylError::NotPositiveDefinite("dilation factor not invertible".into()))?;
    let mut m = RMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = t[(i, j)];
            m[(d + i, d + j)] = t_inv[(i, j)];
        }
    }
    Ok(m)
}

/// Factor a symplectic map as χ₁ · shear(S) · dilate(T).
///
/// χ({0}×H) is Lagrangian; an orthonormal basis of it fixes the unitary
/// part, and the polar decomposition of the remaining block-triangular
/// factor produces S and T. Deterministic for a fixed input.
pub fn factorize(chi: &SymplecticMap) -> Result<MetaplecticFactorization> {
    let d = chi.dim();
    let n = 2 * d;
    let m = chi.matrix();

    // orthonormal basis of χ({0}×H) (images of the momentum axes)
    let lag = m.columns(d, d).into_owned();
    let qr = lag.qr();
    let q = qr.q();
    // C-linear unitary sending (0, e_j) ↦ q_j: as a complex matrix,
    // Û e_j = −i (q_j^x + i q_j^ξ); Lagrangian orthonormal frames give
    // complex-orthonormal columns.
    let mut u_complex = CMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            let z = C64::new(q[(i, j)], q[(d + i, j)]);
            u_complex[(i, j)] = C64::new(0.0, -1.0) * z;
        }
    }
    let phi1 = complex_to_real_symplectic(&u_complex);
    let phi1_map = SymplecticMap::new(phi1.clone())?;

    // φ = φ₁⁻¹ χ is block lower-triangular [[A,0],[C,A⁻ᵀ]]
    let phi = phi1_map.inverse().matrix() * m;
    let a_blk = phi.view((0, 0), (d, d)).into_owned();
    let c_blk = phi.view((d, 0), (d, d)).into_owned();

    // polar decomposition A = U_pol S_pol
    let svd = a_blk.clone().svd(true, true);
    let uu = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let u_pol = uu * vt;
    let s_pol = vt.transpose() * RMatrix::from_diagonal(&svd.singular_values) * vt;
    for sv in svd.singular_values.iter() {
        if *sv <= 1e-12 {
            return Err(WeylError::NotPositiveDefinite(
                "polar factor of the configuration block is singular".into(),
            ));
        }
    }
    let s_pol_inv = s_pol.clone().try_inverse().unwrap();
    let shear = u_pol.transpose() * c_blk * &s_pol_inv;
    let shear = (&shear + shear.transpose()) * 0.5;

    // χ₁ = φ₁ · diag(U_pol, U_pol)
    let mut up2 = RMatrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            up2[(i, j)] = u_pol[(i, j)];
            up2[(d + i, d + j)] = u_pol[(i, j)];
        }
    }
    let chi1 = SymplecticMap::new(phi1 * up2)?;

    let fact = MetaplecticFactorization {
        chi1,
        shear,
        dilation: s_pol,
    };
    let resid = (fact.reconstruct()? - m).norm() / m.norm().max(1.0);
    if resid > 1e-9 {
        return Err(WeylError::NotSymplectic {
            residual: resid,
            tol: 1e-9,
        });
    }
    Ok(fact)
}

fn complex_to_real_symplectic(u: &CMatrix) -> RMatrix {
    // (x, ξ) ↔ x + iξ: real matrix of multiplication by U
    let d = u.nrows();
    let mut m = RMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = u[(i, j)].re;
            m[(i, d + j)] = -u[(i, j)].im;
            m[(d + i, j)] = u[(i, j)].im;
            m[(d + i, d + j)] = u[(i, j)].re;
        }
    }
    m
}

/// Complexified matrix of an orthogonal symplectic map (one that commutes
/// with F and therefore is multiplication by a complex unitary).
pub fn real_symplectic_to_complex(chi: &SymplecticMap) -> Result<CMatrix> {
    let d = chi.dim();
    let m = chi.matrix();
    let f = f_matrix(d);
    let comm = (m * &f - &f * m).norm();
    let orth = (m.transpose() * m - RMatrix::identity(2 * d, 2 * d)).norm();
    if comm > 1e-9 || orth > 1e-9 {
        return Err(WeylError::InvalidArgument(format!(
            "map is not unitary-symplectic (‖[χ,F]‖ = {comm:.2e}, ‖χᵀχ−I‖ = {orth:.2e})"
        )));
    }
    let mut u = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            u[(i, j)] = C64::new(m[(i, j)], m[(d + i, j)]);
        }
    }
    Ok(u)
}

/// Unitary operator with a record of how it was built.
#[derive(Debug, Clone)]
pub struct MetaplecticOperator {
    pub op: OperatorMatrix,
    pub provenance: String,
}

impl MetaplecticOperator {
    /// ‖(U*U − I)‖ on the safe subblock.
    pub fn unitarity_residual(&self, margin: usize) -> f64 {
        let set = self.op.safe_set(margin);
        let prod = self.op.adjoint().mul(&self.op).unwrap();
        let sub = crate::quantize::select_submatrix(prod.matrix(), &set);
        (sub - CMatrix::identity(set.len(), set.len())).norm()
    }
}

/// Second quantization Γ(Û*) for an orthogonal symplectic χ₁, chosen so that
/// the covariance U*Op(F)U = Op(F∘χ₁) holds for this χ₁.
///
/// The column for occupations α is ∏ⱼ (Σᵢ W_{ij} aᵢ†)^{αⱼ}|0⟩/√(α!) with
/// W = Û*; built degree-exactly, no quadrature.
pub fn u_rotation(chi1: &SymplecticMap, rep: &Arc<GaussianRep>) -> Result<MetaplecticOperator> {
    let u = real_symplectic_to_complex(chi1)?;
    let d = rep.dim();
    if u.nrows() != d {
        return Err(WeylError::DimensionMismatch(
            "rotation dimension vs rep".into(),
        ));
    }
    // Γ built from Û itself conjugates Op(F) to Op(F∘χ₁); building from Û*
    // would give the inverse map (checked by the covariance tests).
    let w = u.clone();
    let b = rep.basis_size();
    let mode = rep.mode_dim();
    let columns = exec::map_indexed(b, |col| {
        let alpha = rep.multi_index(col).to_vec();
        let mut vec = vec![C64::new(0.0, 0.0); b];
        vec[0] = C64::new(1.0, 0.0);
        for (j, &occ) in alpha.iter().enumerate() {
            for _ in 0..occ {
                let mut next = vec![C64::new(0.0, 0.0); b];
                for (idx, &amp) in vec.iter().enumerate() {
                    if amp == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let midx = rep.multi_index(idx);
                    for i in 0..d {
                        if midx[i] + 1 > mode - 1 {
                            continue; // creation beyond the truncation
                        }
                        let mut t = midx.to_vec();
                        t[i] += 1;
                        let tgt = rep.flat_index(&t);
                        next[tgt] += amp * w[(i, j)] * C64::new((t[i] as f64).sqrt(), 0.0);
                    }
                }
                vec = next;
            }
        }
        let ln_norm: f64 = alpha
            .iter()
            .map(|&k| crate::displacement::ln_factorial(k))
            .sum();
        let scale = C64::new((-0.5 * ln_norm).exp(), 0.0);
        vec.into_iter().map(|c| c * scale).collect::<Vec<_>>()
    });
    let mut m = CMatrix::zeros(b, b);
    for (col, data) in columns.into_iter().enumerate() {
        for (row, val) in data.into_iter().enumerate() {
            m[(row, col)] = val;
        }
    }
    Ok(MetaplecticOperator {
        op: OperatorMatrix::new(m, rep.clone())?,
        provenance: "rotation".into(),
    })
}

/// Multiplication by e^{i φ_S(x)/2h}, φ_S(x) = ⟨Sx, x⟩ − (h/2) tr S; the
/// covariance map is the shear (x, ξ) ↦ (x, ξ + Sx).
pub fn u_shear(s: &RMatrix, rep: &Arc<GaussianRep>) -> Result<MetaplecticOperator> {
    let d = rep.dim();
    if s.nrows() != d || s.ncols() != d {
        return Err(WeylError::DimensionMismatch("shear matrix size".into()));
    }
    let asym = (s - s.transpose()).norm();
    if asym > 1e-10 * s.norm().max(1.0) {
        return Err(WeylError::NotSymmetric {
            residual: asym,
            tol: 1e-10,
        });
    }
    let h = rep.h();
    let tr = s.trace();
    let sm = s.clone();
    let m = multiplication_operator(rep, move |x: &RVector| {
        let phi = (&sm * x).dot(x) - (h / 2.0) * tr;
        C64::from_polar(1.0, phi / (2.0 * h))
    });
    Ok(MetaplecticOperator {
        op: OperatorMatrix::new(m, rep.clone())?,
        provenance: "shear".into(),
    })
}

/// Dilation operator for the map (x, ξ) ↦ (Tx, T⁻¹ξ), T symmetric positive
/// definite: (Uf)(x) = f(T⁻¹x)·D_{h/2}(x)^{1/2}-type rescaling realized as
/// f(T̃x)D_{h/2}(T̃x)^{−1/2} with T̃ = T⁻¹, unitary in L²(μ_{h/2}).
pub fn u_dilate(t: &RMatrix, rep: &Arc<GaussianRep>) -> Result<MetaplecticOperator> {
    let d = rep.dim();
    if t.nrows() != d || t.ncols() != d {
        return Err(WeylError::DimensionMismatch("dilation matrix size".into()));
    }
    let asym = (t - t.transpose()).norm();
    if asym > 1e-10 * t.norm().max(1.0) {
        return Err(WeylError::NotSymmetric {
            residual: asym,
            tol: 1e-10,
        });
    }
    let eig = t.clone().symmetric_eigen();
    for e in eig.eigenvalues.iter() {
        if *e <= 1e-10 {
            return Err(WeylError::NotPositiveDefinite(
                "dilation factor must be positive definite".into(),
            ));
        }
    }
    let t_tilde = t
        .clone()
        .try_inverse()
        .ok_or_else(|| WeylError::NotPositiveDefinite("dilation factor".into()))?;
    // K = T̃² − I drives the density of the change of variables x ↦ T̃x.
    let h = rep.h();
    let kt = &t_tilde * &t_tilde - RMatrix::identity(d, d);
    let keig = kt.clone().symmetric_eigen();
    let k_eigvals: Vec<f64> = keig.eigenvalues.iter().cloned().collect();
    let k_eigvecs = keig.eigenvectors.clone();
    let m = mapped_argument_operator(rep, move |x: &RVector| {
        let tx = &t_tilde * x;
        // D_{h/2}(T̃x)^{−1/2} in log space
        let mut ln_density = 0.0;
        for (j, &nu) in k_eigvals.iter().enumerate() {
            let coord = k_eigvecs.column(j).dot(&tx);
            ln_density += -0.5 * (nu + 1.0).ln() + nu * coord * coord / (h * (nu + 1.0));
        }
        (tx, C64::new((-0.5 * ln_density).exp(), 0.0))
    });
    Ok(MetaplecticOperator {
        op: OperatorMatrix::new(m?, rep.clone())?,
        provenance: "dilation".into(),
    })
}

/// Density of the pushforward of the Gaussian measure of variance `v` under
/// φ with φᵀφ = I + K, evaluated at x:
/// D(x) = ∏ (ν_j+1)^{−1/2} exp[ν_j ⟨x,u_j⟩²/(2v(ν_j+1))].
pub fn gaussian_change_of_variables_density(k: &RMatrix, variance: f64, x: &RVector) -> f64 {
    let eig = k.clone().symmetric_eigen();
    let mut ln_d = 0.0;
    for (j, &nu) in eig.eigenvalues.iter().enumerate() {
        let coord = eig.eigenvectors.column(j).dot(x);
        ln_d += -0.5 * (nu + 1.0).ln() + nu * coord * coord / (2.0 * variance * (nu + 1.0));
    }
    ln_d.exp()
}

/// Matrix of the multiplication operator f ↦ g·f by configuration-space
/// quadrature.
pub fn multiplication_operator<G>(rep: &Arc<GaussianRep>, g: G) -> CMatrix
where
    G: Fn(&RVector) -> C64 + Sync,
{
    let d = rep.dim();
    let b = rep.basis_size();
    let nodes = rep.nodes();
    let weights = rep.weights();
    let nn = nodes.len();
    let total = nn.pow(d as u32);
    let herm = rep.hermite_at_nodes();
    let chunk = 32;
    let n_chunks = total / chunk + 1;
    let partials = exec::map_indexed(n_chunks, |ci| {
        let mut local = CMatrix::zeros(b, b);
        let mut x = RVector::zeros(d);
        let mut node_idx = vec![0usize; d];
        for flat in ci * chunk..((ci + 1) * chunk).min(total) {
            let mut rem = flat;
            let mut w = 1.0;
            for ax in 0..d {
                let i = rem % nn;
                rem /= nn;
                node_idx[ax] = i;
                x[ax] = nodes[i];
                w *= weights[i];
            }
            let gv = g(&x) * C64::new(w, 0.0);
            if gv.norm_sqr() < 1e-260 {
                continue;
            }
            let mut evals = vec![0.0f64; b];
            for (bi, ev) in evals.iter_mut().enumerate() {
                let midx = rep.multi_index(bi);
                let mut p = 1.0;
                for ax in 0..d {
                    p *= herm[(midx[ax], node_idx[ax])];
                }
                *ev = p;
            }
            for i in 0..b {
                let row = gv * C64::new(evals[i], 0.0);
                for j in 0..b {
                    local[(i, j)] += row * C64::new(evals[j], 0.0);
                }
            }
        }
        local
    });
    let mut m = CMatrix::zeros(b, b);
    for p in partials {
        m += p;
    }
    m
}

/// Matrix of f ↦ w(x)·f(y(x)): the closure returns (y, w).
fn mapped_argument_operator<G>(rep: &Arc<GaussianRep>, g: G) -> Result<CMatrix>
where
    G: Fn(&RVector) -> (RVector, C64) + Sync,
{
    let d = rep.dim();
    let b = rep.basis_size();
    let nodes = rep.nodes();
    let weights = rep.weights();
    let nn = nodes.len();
    let total = nn.pow(d as u32);
    let herm = rep.hermite_at_nodes();
    let scale = rep.scale();
    let level = rep.level();
    let chunk = 32;
    let n_chunks = total / chunk + 1;
    let partials = exec::map_indexed(n_chunks, |ci| {
        let mut local = CMatrix::zeros(b, b);
        let mut x = RVector::zeros(d);
        let mut node_idx = vec![0usize; d];
        for flat in ci * chunk..((ci + 1) * chunk).min(total) {
            let mut rem = flat;
            let mut w = 1.0;
            for ax in 0..d {
                let i = rem % nn;
                rem /= nn;
                node_idx[ax] = i;
                x[ax] = nodes[i];
                w *= weights[i];
            }
            let (y, gv) = g(&x);
            let gv = gv * C64::new(w, 0.0);
            if gv.norm_sqr() < 1e-260 {
                continue;
            }
            let y_herms: Vec<Vec<f64>> = (0..d)
                .map(|ax| crate::displacement::hermite_values(y[ax], scale, level))
                .collect();
            let mut row_evals = vec![0.0f64; b];
            let mut col_evals = vec![0.0f64; b];
            for bi in 0..b {
                let midx = rep.multi_index(bi);
                let mut pr = 1.0;
                let mut pc = 1.0;
                for ax in 0..d {
                    pr *= herm[(midx[ax], node_idx[ax])];
                    pc *= y_herms[ax][midx[ax]];
                }
                row_evals[bi] = pr;
                col_evals[bi] = pc;
            }
            for i in 0..b {
                let row = gv * C64::new(row_evals[i], 0.0);
                for j in 0..b {
                    local[(i, j)] += row * C64::new(col_evals[j], 0.0);
                }
            }
        }
        local
    });
    let mut m = CMatrix::zeros(b, b);
    for p in partials {
        m += p;
    }
    Ok(m)
}

/// Metaplectic operator for χ, composed along the factorization
/// U_χ = U_{χ₁} U_{shear} U_{dilate}; defined up to a unit-modulus constant.
pub fn u_of(chi: &SymplecticMap, rep: &Arc<GaussianRep>) -> Result<MetaplecticOperator> {
    let fact = factorize(chi)?;
    let u1 = u_rotation(&fact.chi1, rep)?;
    let u2 = u_shear(&fact.shear, rep)?;
    let u3 = u_dilate(&fact.dilation, rep)?;
    let op = u1.op.mul(&u2.op)?.mul(&u3.op)?;
    Ok(MetaplecticOperator {
        op,
        provenance: "rotation∘shear∘dilation".into(),
    })
}
