//! Weyl quantization and the symbol transforms built on the Wigner pairing
//! ⟨Op(F)f, g⟩ = ∫ F(Z) H(f,g)(Z) dμ_{H², h/2}(Z).
//!
//! The Wigner function of two basis states is a polynomial, so the pairing is
//! evaluated by Gauss–Hermite quadrature with the representation's rule:
//! exact for polynomial symbols, superexponentially convergent for entire
//! ones. Symbols with per-mode tensor structure (trigonometric terms,
//! Gaussian peaks, separable quadratics) are quantized mode by mode and
//! assembled as Kronecker products; everything else goes through the full
//! phase-space grid.

use crate::displacement::{displacement_matrix, displacement_matrix_scaled};
use crate::error::{Result, WeylError};
use crate::exec;
use crate::phase::{PhaseVector, f_matrix};
use crate::rep::{GaussianRep, kron};
use crate::symbol::{Symbol, SymbolKind, heat_apply};
use crate::{C64, CMatrix, CVector, RVector};
use std::sync::Arc;

/// Hard cap on full-grid quadrature work (nodes × matrix entries).
const GENERAL_QUADRATURE_BUDGET: usize = 2_000_000_000;

/// Dense operator over a [`GaussianRep`] basis, optionally tensored with a
/// finite spin space (photon index slow, spin index fast).
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    matrix: CMatrix,
    rep: Arc<GaussianRep>,
    spin_dim: usize,
}

impl OperatorMatrix {
    pub fn new(matrix: CMatrix, rep: Arc<GaussianRep>) -> Result<Self> {
        Self::with_spin(matrix, rep, 1)
    }

    pub fn with_spin(matrix: CMatrix, rep: Arc<GaussianRep>, spin_dim: usize) -> Result<Self> {
        let expected = rep.basis_size() * spin_dim;
        if matrix.nrows() != expected || matrix.ncols() != expected {
            return Err(WeylError::DimensionMismatch(format!(
                "operator is {}×{}, rep ⊗ spin needs {expected}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix,
            rep,
            spin_dim,
        })
    }

    pub fn identity(rep: Arc<GaussianRep>) -> Self {
        let n = rep.basis_size();
        Self {
            matrix: CMatrix::identity(n, n),
            rep,
            spin_dim: 1,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn rep(&self) -> &Arc<GaussianRep> {
        &self.rep
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn total_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            rep: self.rep.clone(),
            spin_dim: self.spin_dim,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            matrix: &self.matrix * c,
            rep: self.rep.clone(),
            spin_dim: self.spin_dim,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            rep: self.rep.clone(),
            spin_dim: self.spin_dim,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            matrix: &self.matrix - &other.matrix,
            rep: self.rep.clone(),
            spin_dim: self.spin_dim,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            matrix: &self.matrix * &other.matrix,
            rep: self.rep.clone(),
            spin_dim: self.spin_dim,
        })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
            rep: self.rep.clone(),
            spin_dim: self.spin_dim,
        })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.total_dim() != other.total_dim() || self.spin_dim != other.spin_dim {
            return Err(WeylError::DimensionMismatch(
                "operator dimensions differ".into(),
            ));
        }
        Ok(())
    }

    /// Indices of the safe subblock (photon degree ≤ N − margin, all spins).
    pub fn safe_set(&self, margin: usize) -> Vec<usize> {
        let photon = self.rep.safe_indices(margin);
        let mut out = Vec::with_capacity(photon.len() * self.spin_dim);
        for &p in &photon {
            for s in 0..self.spin_dim {
                out.push(p * self.spin_dim + s);
            }
        }
        out
    }

    /// Submatrix on the safe subblock.
    pub fn project_safe(&self, margin: usize) -> CMatrix {
        let set = self.safe_set(margin);
        select_submatrix(&self.matrix, &set)
    }

    /// Largest singular value on the safe subblock, and on the full matrix.
    pub fn weyl_norm(&self, margin: usize) -> (f64, f64) {
        let safe = operator_norm(&self.project_safe(margin));
        let full = operator_norm(&self.matrix);
        (safe, full)
    }

    /// Self-adjointness residual ‖M − M†‖ / max(1, ‖M‖).
    pub fn hermiticity_residual(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).norm() / self.matrix.norm().max(1.0)
    }
}

pub fn select_submatrix(m: &CMatrix, set: &[usize]) -> CMatrix {
    let k = set.len();
    let mut out = CMatrix::zeros(k, k);
    for (i, &si) in set.iter().enumerate() {
        for (j, &sj) in set.iter().enumerate() {
            out[(i, j)] = m[(si, sj)];
        }
    }
    out
}

/// Largest singular value: direct SVD for small matrices, power iteration on
/// M†M otherwise (deterministic start vector).
pub fn operator_norm(m: &CMatrix) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    if n <= 192 {
        return m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0, f64::max);
    }
    let mut v = CVector::from_fn(n, |i, _| C64::new(1.0 + (i as f64 * 0.7).sin(), 0.3 * (i as f64 * 1.3).cos()));
    v /= C64::new(v.norm(), 0.0);
    let mut sigma = 0.0f64;
    for _ in 0..1200 {
        let w = m * &v;
        let mut v2 = m.adjoint() * &w;
        let nrm = v2.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        v2 /= C64::new(nrm, 0.0);
        let new_sigma = w.norm();
        let done = (new_sigma - sigma).abs() <= 1e-13 * new_sigma.max(1e-300);
        sigma = new_sigma;
        v = v2;
        if done {
            break;
        }
    }
    sigma
}

/// Per-mode Wigner polynomial matrix: entries H(e_j, e_i)(Z) at a single-mode
/// phase point Z = (z, ζ).
pub fn wigner_mode_matrix(z: f64, zeta: f64, h: f64, dim: usize) -> CMatrix {
    let (mut w, x) = wigner_unit_matrix(z, zeta, h, dim);
    w *= C64::new((0.5 * x).exp(), 0.0);
    w
}

/// Unitary-scale Wigner factor: parity·D(−2α_Z) with entries bounded by 1,
/// plus the log-scale x = |β|² such that H(e_j,e_i)(Z) = e^{x/2}·entry.
///
/// Keeping the entries unitary and folding e^{x/2} into the quadrature
/// weight in log space is what preserves accuracy at high degree.
fn wigner_unit_matrix(z: f64, zeta: f64, h: f64, dim: usize) -> (CMatrix, f64) {
    let alpha = C64::new(z, zeta) / (2.0 * h).sqrt();
    let beta = -2.0 * alpha;
    let mut w = displacement_matrix(beta, dim);
    for i in (1..dim).step_by(2) {
        for j in 0..dim {
            w[(i, j)] = -w[(i, j)];
        }
    }
    (w, beta.norm_sqr())
}

/// Full-basis Wigner matrix [H(e_j, e_i)(Z)]_{ij} at a flat phase point.
pub fn wigner_basis_matrix(rep: &GaussianRep, z: &RVector) -> CMatrix {
    let d = rep.dim();
    let m = rep.mode_dim();
    let mut acc = wigner_mode_matrix(z[0], z[d], rep.h(), m);
    for k in 1..d {
        let wk = wigner_mode_matrix(z[k], z[d + k], rep.h(), m);
        acc = kron(&acc, &wk);
    }
    acc
}

/// Quantize a single-mode symbol f(z, ζ) by the representation's rule.
fn quantize_mode_fn<F>(rep: &GaussianRep, f: F) -> CMatrix
where
    F: Fn(f64, f64) -> C64 + Sync,
{
    let m = rep.mode_dim();
    let nodes = rep.nodes();
    let weights = rep.weights();
    let ln_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let nn = nodes.len();
    let chunk = 64;
    let n_chunks = nn * nn / chunk + 1;
    let partials = exec::map_indexed(n_chunks, |ci| {
        let mut local = CMatrix::zeros(m, m);
        let lo = ci * chunk;
        let hi = ((ci + 1) * chunk).min(nn * nn);
        for flat in lo..hi {
            let (i, j) = (flat / nn, flat % nn);
            let (z, zeta) = (nodes[i], nodes[j]);
            let fv = f(z, zeta);
            if fv == C64::new(0.0, 0.0) {
                continue;
            }
            let (w, x) = wigner_unit_matrix(z, zeta, rep.h(), m);
            // weight × e^{x/2} combined in log space stays O(1)
            let c = fv * C64::new((ln_w[i] + ln_w[j] + 0.5 * x).exp(), 0.0);
            if c.norm_sqr() < 1e-260 {
                continue;
            }
            local += w * c;
        }
        local
    });
    let mut total = CMatrix::zeros(m, m);
    for p in partials {
        total += p;
    }
    total
}

/// Weyl quantization Op_h(F) in the given representation.
pub fn weyl_quantize(f: &Symbol, rep: &Arc<GaussianRep>) -> Result<OperatorMatrix> {
    if f.dim() != rep.dim() {
        return Err(WeylError::DimensionMismatch(format!(
            "symbol d = {} vs rep d = {}",
            f.dim(),
            rep.dim()
        )));
    }
    let d = rep.dim();
    let b = rep.basis_size();

    let matrix = match f.kind() {
        SymbolKind::Constant(c) => CMatrix::identity(b, b) * *c,
        SymbolKind::Linear { a } => {
            // Op of a linear form is the Segal field, exact in the basis.
            return segal_field(&PhaseVector::from_flat(a), rep);
        }
        SymbolKind::Quadratic { m: qm, c } => quadratic_operator(rep, qm, *c),
        SymbolKind::Trig { terms } => {
            // Op(e^{i a·Z}) = V_h(h F a): exact displacement route, and
            // c·cos(θ) = (c/2)(e^{iθ} + e^{iθ}†).
            let mut total = CMatrix::zeros(b, b);
            let fm = f_matrix(d);
            for t in terms {
                let shift = &fm * &t.freq * rep.h();
                let v = weyl_translate(&PhaseVector::from_flat(&shift), rep, f64::INFINITY)?;
                let t_op = v.into_matrix() * C64::from_polar(1.0, t.phase);
                total += (&t_op + t_op.adjoint()) * C64::new(t.amplitude / 2.0, 0.0);
            }
            total
        }
        SymbolKind::GaussianPeak {
            amplitude,
            rate,
            center,
        } => {
            let mut factor = CMatrix::identity(1, 1);
            for k in 0..d {
                let (cx, cxi) = (center[k], center[d + k]);
                let r = *rate;
                let mk = quantize_mode_fn(rep, |z, zeta| {
                    C64::new(
                        (-r * ((z - cx).powi(2) + (zeta - cxi).powi(2))).exp(),
                        0.0,
                    )
                });
                factor = kron(&factor, &mk);
            }
            factor * C64::new(*amplitude, 0.0)
        }
        SymbolKind::Custom(_) => quantize_general(f, rep)?,
    };
    OperatorMatrix::new(matrix, rep.clone())
}

/// Exact quantization of ⟨MZ, Z⟩ + c from the oscillator algebra.
///
/// Per mode: Op(z²), Op(ζ²) and the symmetrized Op(zζ) have closed forms;
/// cross-mode products act on distinct tensor factors and multiply exactly.
fn quadratic_operator(rep: &GaussianRep, qm: &crate::RMatrix, c: f64) -> CMatrix {
    let d = rep.dim();
    let b = rep.basis_size();
    let m = rep.mode_dim();
    let s2 = rep.h() / 2.0;
    let eye = CMatrix::identity(m, m);

    // same-mode blocks: α z² + 2β zζ + γ ζ², exact band matrices
    let mode_block = |alpha: f64, beta: f64, gamma: f64| -> CMatrix {
        let mut out = CMatrix::zeros(m, m);
        for n in 0..m {
            // x̂² and p̂² diagonals: s²(2n+1)
            out[(n, n)] = C64::new((alpha + gamma) * s2 * (2.0 * n as f64 + 1.0), 0.0);
            if n + 2 < m {
                let amp = s2 * (((n + 1) * (n + 2)) as f64).sqrt();
                // x̂²: +amp, p̂²: −amp, sym(x̂p̂): i·amp on the a†² side
                let upper = C64::new((alpha - gamma) * amp, -2.0 * beta * amp);
                out[(n, n + 2)] = upper;
                out[(n + 2, n)] = upper.conj();
            }
        }
        out
    };

    let mut total = CMatrix::identity(b, b) * C64::new(c, 0.0);
    for k in 0..d {
        let blk = mode_block(qm[(k, k)], qm[(k, d + k)], qm[(d + k, d + k)]);
        if blk.norm() > 0.0 {
            total += embed_mode(rep, k, &blk, &eye);
        }
    }
    // cross-mode couplings: Op(u_k v_l) = Op(u_k) ⊗ Op(v_l) for k ≠ l
    let x_mat = rep.position_mode_matrix();
    let ann = rep.annihilation_mode_matrix();
    let p_mat = (ann.adjoint() - &ann) * C64::new(0.0, s2.sqrt());
    let single = |axis: usize| -> &CMatrix {
        if axis == 0 { &x_mat } else { &p_mat }
    };
    for k in 0..d {
        for l in 0..d {
            if k == l {
                continue;
            }
            // pairs (z_k, z_l) with k < l, (z_k, ζ_l) all k ≠ l, (ζ_k, ζ_l) k < l
            for (ak, al, coef) in [
                (0usize, 0usize, if k < l { 2.0 * qm[(k, l)] } else { 0.0 }),
                (0, 1, qm[(k, d + l)] + qm[(d + l, k)]),
                (1, 1, if k < l { 2.0 * qm[(d + k, d + l)] } else { 0.0 }),
            ] {
                if coef == 0.0 {
                    continue;
                }
                let factors: Vec<&CMatrix> = (0..d)
                    .map(|j| {
                        if j == k {
                            single(ak)
                        } else if j == l {
                            single(al)
                        } else {
                            &eye
                        }
                    })
                    .collect();
                total += crate::rep::kron_all(&factors) * C64::new(coef, 0.0);
            }
        }
    }
    total
}

fn embed_mode(rep: &GaussianRep, k: usize, mk: &CMatrix, eye: &CMatrix) -> CMatrix {
    let d = rep.dim();
    let factors: Vec<&CMatrix> = (0..d).map(|j| if j == k { mk } else { eye }).collect();
    crate::rep::kron_all(&factors)
}

/// Quantization through the Wigner-pairing quadrature regardless of the
/// symbol kind — the defining route, used to cross-validate the exact
/// algebraic constructions.
pub fn weyl_quantize_grid(f: &Symbol, rep: &Arc<GaussianRep>) -> Result<OperatorMatrix> {
    OperatorMatrix::new(quantize_general(f, rep)?, rep.clone())
}

/// Full phase-space grid quantization (non-separable symbols).
fn quantize_general(f: &Symbol, rep: &Arc<GaussianRep>) -> Result<CMatrix> {
    let d = rep.dim();
    let b = rep.basis_size();
    let nn = rep.nodes().len();
    let total_nodes = nn.pow(2 * d as u32);
    if total_nodes.saturating_mul(b * b) > GENERAL_QUADRATURE_BUDGET {
        return Err(WeylError::QuadratureDiverged(format!(
            "full-grid quantization needs {total_nodes} nodes × {b}² entries; \
             use a tensor-structured symbol kind or reduce d/N"
        )));
    }
    let nodes = rep.nodes().to_vec();
    let ln_w: Vec<f64> = rep.weights().iter().map(|w| w.ln()).collect();
    let mode = rep.mode_dim();
    let chunk = 16;
    let n_chunks = total_nodes / chunk + 1;
    let partials = exec::map_indexed(n_chunks, |ci| {
        let mut local = CMatrix::zeros(b, b);
        let lo = ci * chunk;
        let hi = ((ci + 1) * chunk).min(total_nodes);
        let mut z = RVector::zeros(2 * d);
        for flat in lo..hi {
            let mut rem = flat;
            let mut ln_scale = 0.0;
            for ax in 0..2 * d {
                let i = rem % nn;
                rem /= nn;
                z[ax] = nodes[i];
                ln_scale += ln_w[i];
            }
            let fv = f.eval(&z);
            if fv == C64::new(0.0, 0.0) {
                continue;
            }
            let mut wig = CMatrix::identity(1, 1);
            for k in 0..d {
                let (wk, xk) = wigner_unit_matrix(z[k], z[d + k], rep.h(), mode);
                ln_scale += 0.5 * xk;
                wig = kron(&wig, &wk);
            }
            let c = fv * C64::new(ln_scale.exp(), 0.0);
            if c.norm_sqr() < 1e-260 {
                continue;
            }
            local += wig * c;
        }
        local
    });
    let mut total = CMatrix::zeros(b, b);
    for p in partials {
        total += p;
    }
    Ok(total)
}

/// Quantization from tabulated symbol values on a uniform phase-space
/// lattice (trapezoidal rule against the Gaussian weight). d = 1 only.
pub fn weyl_quantize_lattice(
    rep: &Arc<GaussianRep>,
    points: &[RVector],
    values: &[C64],
    cell_volume: f64,
) -> Result<OperatorMatrix> {
    if rep.dim() != 1 {
        return Err(WeylError::InvalidArgument(
            "lattice quantization implemented for d = 1".into(),
        ));
    }
    if points.len() != values.len() {
        return Err(WeylError::DimensionMismatch(
            "points and values must align".into(),
        ));
    }
    let h = rep.h();
    let b = rep.basis_size();
    // Gaussian density on R² times e^{x/2} cancels analytically:
    // dens·e^{x/2} = 1/(πh), so every term carries the constant scale below.
    let scale = cell_volume / (std::f64::consts::PI * h);
    let mode = rep.mode_dim();
    let chunk = 64;
    let n_chunks = points.len() / chunk + 1;
    let partials = exec::map_indexed(n_chunks, |ci| {
        let mut local = CMatrix::zeros(b, b);
        let lo = ci * chunk;
        let hi = ((ci + 1) * chunk).min(points.len());
        for i in lo..hi {
            let z = &points[i];
            let c = values[i] * C64::new(scale, 0.0);
            if c.norm_sqr() < 1e-260 {
                continue;
            }
            let (w, _) = wigner_unit_matrix(z[0], z[1], h, mode);
            local += w * c;
        }
        local
    });
    let mut total = CMatrix::zeros(b, b);
    for p in partials {
        total += p;
    }
    OperatorMatrix::new(total, rep.clone())
}

/// Weyl translation V_h(X) = ⊗ₖ D(αₖ), αₖ = (aₖ + i bₖ)/√(2h).
///
/// Refuses when the per-mode truncation tail (coherent mass beyond the
/// basis) exceeds `ceiling`.
pub fn weyl_translate(x: &PhaseVector, rep: &Arc<GaussianRep>, ceiling: f64) -> Result<OperatorMatrix> {
    if x.dim() != rep.dim() {
        return Err(WeylError::DimensionMismatch(
            "translation point dimension mismatch".into(),
        ));
    }
    let alphas = rep.coherent_alpha(x);
    let m = rep.mode_dim();
    let mut tail = 0.0;
    let mut total = CMatrix::identity(1, 1);
    for alpha in &alphas {
        let (_, t) = crate::displacement::coherent_coefficients(*alpha, m);
        tail += t;
        total = kron(&total, &displacement_matrix(*alpha, m));
    }
    if tail > ceiling {
        return Err(WeylError::TruncationBudget {
            estimate: tail,
            ceiling,
        });
    }
    OperatorMatrix::new(total, rep.clone())
}

/// Segal field Op(V·Z) = ℓ_{a+ib} + (h/i) b·∂ for V = (a, b): per mode,
/// s[(aₖ+ibₖ)a† + (aₖ−ibₖ)a] with s = √(h/2).
pub fn segal_field(v: &PhaseVector, rep: &Arc<GaussianRep>) -> Result<OperatorMatrix> {
    if v.dim() != rep.dim() {
        return Err(WeylError::DimensionMismatch(
            "field vector dimension mismatch".into(),
        ));
    }
    let d = rep.dim();
    let m = rep.mode_dim();
    let s = rep.scale();
    let b = rep.basis_size();
    let eye = CMatrix::identity(m, m);
    let ann = rep.annihilation_mode_matrix();
    let cre = ann.adjoint();
    let mut total = CMatrix::zeros(b, b);
    for k in 0..d {
        let coef = C64::new(v.x[k], v.xi[k]);
        if coef == C64::new(0.0, 0.0) {
            continue;
        }
        let mk = &cre * (coef * s) + &ann * (coef.conj() * s);
        total += embed_mode(rep, k, &mk, &eye);
    }
    OperatorMatrix::new(total, rep.clone())
}

/// The commutator generator L_h(V) = Op(σ(·, V)) = segal_field(FV).
///
/// Satisfies V_h(X) = e^{−i L_h(X)/h} and the derivative law
/// ad(L_h V₁)…ad(L_h V_m) Op(F) = (h/i)^m Op(d^m F(·)(V₁..V_m)).
pub fn weyl_generator(v: &PhaseVector, rep: &Arc<GaussianRep>) -> Result<OperatorMatrix> {
    let d = v.dim();
    let f = f_matrix(d);
    let fv = PhaseVector::from_flat(&(&f * v.flat()));
    segal_field(&fv, rep)
}

/// Wigner function H(f, g) as an evaluable symbol:
/// Z ↦ e^{|Z|²/h} ⟨V_h(−2Z) f, ǧ⟩.
pub fn wigner(f: &CVector, g: &CVector, rep: &Arc<GaussianRep>) -> Result<Symbol> {
    let b = rep.basis_size();
    if f.len() != b || g.len() != b {
        return Err(WeylError::DimensionMismatch(
            "wigner arguments must live in the rep".into(),
        ));
    }
    let g_check = rep.parity_apply(g);
    let f = f.clone();
    let rep = rep.clone();
    let d = rep.dim();
    Ok(Symbol::custom(
        d,
        Arc::new(move |z: &RVector| wigner_eval_inner(&rep, &f, &g_check, z)),
    ))
}

fn wigner_eval_inner(rep: &GaussianRep, f: &CVector, g_check: &CVector, z: &RVector) -> C64 {
    let d = rep.dim();
    let m = rep.mode_dim();
    let mats: Vec<CMatrix> = (0..d)
        .map(|k| {
            // e^{|Zₖ|²/h} V(−2Zₖ) per mode, growth folded into the scaled matrix
            let alpha = C64::new(z[k], z[d + k]) / (2.0 * rep.h()).sqrt();
            let beta = -2.0 * alpha;
            displacement_matrix_scaled(beta, m, 0.5 * beta.norm_sqr())
        })
        .collect();
    let vf = tensor_apply(&mats, f, m, d);
    // ⟨Vf, ǧ⟩ linear in the first argument
    vf.iter()
        .zip(g_check.iter())
        .map(|(a, b)| a * b.conj())
        .sum()
}

/// Apply ⊗ₖ Mₖ to a coefficient vector without forming the product.
pub fn tensor_apply(mats: &[CMatrix], v: &CVector, mode: usize, d: usize) -> CVector {
    let total = v.len();
    let mut cur = v.clone();
    for k in 0..d {
        let stride = mode.pow((d - 1 - k) as u32);
        let block = mode * stride;
        let n_blocks = total / block;
        let mut next = CVector::zeros(total);
        let mk = &mats[k];
        for ob in 0..n_blocks {
            for inner in 0..stride {
                let base = ob * block + inner;
                for r in 0..mode {
                    let mut acc = C64::new(0.0, 0.0);
                    for c in 0..mode {
                        acc += mk[(r, c)] * cur[base + c * stride];
                    }
                    next[base + r * stride] = acc;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Wick symbol X ↦ ⟨M Ψ_X, Ψ_X⟩ (spinless operators).
pub fn wick_symbol(op: &OperatorMatrix) -> Result<Symbol> {
    if op.spin_dim() != 1 {
        return Err(WeylError::InvalidArgument(
            "wick symbol of spin-valued operators is matrix-valued; take components".into(),
        ));
    }
    let rep = op.rep().clone();
    let m = op.matrix().clone();
    let d = rep.dim();
    Ok(Symbol::custom(
        d,
        Arc::new(move |z: &RVector| {
            let x = PhaseVector::from_flat(z);
            let cs = match rep.coherent(&x, 1e-4) {
                Ok(c) => c,
                Err(_) => return C64::new(f64::NAN, f64::NAN),
            };
            let mv = &m * &cs.coefficients;
            cs.coefficients
                .iter()
                .zip(mv.iter())
                .map(|(c, w)| w * c.conj())
                .sum()
        }),
    ))
}

/// Anti-Wick quantization ⟨Op^{AW}(Φ)f, g⟩ = ∫Φ(X) T_Xf conj(T_Xg) dμ_{H²,h}.
///
/// The integrand against basis states is the polynomial
/// ∏ₖ ᾱ^{jₖ} α^{iₖ}/√(iₖ! jₖ!), so the rule with variance h applies; tensor
/// kinds are assembled per mode.
pub fn anti_wick(phi: &Symbol, rep: &Arc<GaussianRep>) -> Result<OperatorMatrix> {
    if phi.dim() != rep.dim() {
        return Err(WeylError::DimensionMismatch(
            "anti-Wick symbol dimension mismatch".into(),
        ));
    }
    let d = rep.dim();
    let b = rep.basis_size();

    // variance-h rule from the rep's standard-normal rule
    let nn = 2 * (rep.level() + 1) + 2;
    let (tnodes, weights) = crate::rep::gauss_hermite_normal(nn);
    let sv = rep.h().sqrt();
    let nodes: Vec<f64> = tnodes.iter().map(|&t| sv * t).collect();

    let mode_general = |fk: &dyn Fn(f64, f64) -> C64| -> CMatrix {
        let m = rep.mode_dim();
        let mut total = CMatrix::zeros(m, m);
        for (i, &q) in nodes.iter().enumerate() {
            for (j, &p) in nodes.iter().enumerate() {
                let c = fk(q, p) * C64::new(weights[i] * weights[j], 0.0);
                if c.norm_sqr() < 1e-260 {
                    continue;
                }
                total += anti_wick_mode_kernel(q, p, rep.h(), m) * c;
            }
        }
        total
    };

    let matrix = match phi.kind() {
        SymbolKind::Constant(c) => CMatrix::identity(b, b) * *c,
        SymbolKind::Trig { terms } => {
            let eye = CMatrix::identity(rep.mode_dim(), rep.mode_dim());
            let mut total = CMatrix::zeros(b, b);
            for t in terms {
                let mut factor = CMatrix::identity(1, 1);
                for k in 0..d {
                    let (ax, axi) = (t.freq[k], t.freq[d + k]);
                    let mk = if ax == 0.0 && axi == 0.0 {
                        eye.clone()
                    } else {
                        mode_general(&|q, p| C64::new(0.0, ax * q + axi * p).exp())
                    };
                    factor = kron(&factor, &mk);
                }
                let t_op = factor * C64::from_polar(1.0, t.phase);
                total += (&t_op + t_op.adjoint()) * C64::new(t.amplitude / 2.0, 0.0);
            }
            total
        }
        _ => {
            // full-grid path (d = 1 practical)
            let total_nodes = nodes.len().pow(2 * d as u32);
            if total_nodes.saturating_mul(b * b) > GENERAL_QUADRATURE_BUDGET {
                return Err(WeylError::QuadratureDiverged(
                    "anti-Wick full grid too large; use tensor-structured symbols".into(),
                ));
            }
            let mut total = CMatrix::zeros(b, b);
            let mut z = RVector::zeros(2 * d);
            let mut idx = vec![0usize; 2 * d];
            loop {
                let mut w = 1.0;
                for ax in 0..2 * d {
                    z[ax] = nodes[idx[ax]];
                    w *= weights[idx[ax]];
                }
                let c = phi.eval(&z) * C64::new(w, 0.0);
                if c.norm_sqr() >= 1e-260 {
                    let mut kernel = CMatrix::identity(1, 1);
                    for k in 0..d {
                        kernel = kron(
                            &kernel,
                            &anti_wick_mode_kernel(z[k], z[d + k], rep.h(), rep.mode_dim()),
                        );
                    }
                    total += kernel * c;
                }
                let mut ax = 0;
                loop {
                    if ax == 2 * d {
                        return OperatorMatrix::new(total, rep.clone());
                    }
                    idx[ax] += 1;
                    if idx[ax] < nodes.len() {
                        break;
                    }
                    idx[ax] = 0;
                    ax += 1;
                }
            }
        }
    };
    OperatorMatrix::new(matrix, rep.clone())
}

/// Per-mode anti-Wick kernel matrix ᾱ^j α^i / √(i! j!) at X = (q, p).
fn anti_wick_mode_kernel(q: f64, p: f64, h: f64, dim: usize) -> CMatrix {
    let alpha = C64::new(q, p) / (2.0 * h).sqrt();
    let mut pow = Vec::with_capacity(dim);
    let mut cur = C64::new(1.0, 0.0);
    for n in 0..dim {
        let denom = (0.5 * crate::displacement::ln_factorial(n)).exp();
        pow.push(cur / denom);
        cur *= alpha;
    }
    let mut out = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            out[(i, j)] = pow[i] * pow[j].conj();
        }
    }
    out
}

/// Wick symbol of Op(F) equals the half-heat flow of F; convenience wrapper
/// returning H_{h/2} F.
pub fn half_heat(f: &Symbol, rep: &GaussianRep) -> Result<Symbol> {
    heat_apply(f, rep.h() / 2.0, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::QuadraticForm;
    use crate::rep::coherent_overlap_exact;
    use crate::symbol::TrigTerm;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rep1(level: usize, h: f64) -> Arc<GaussianRep> {
        Arc::new(GaussianRep::new(1, level, h).unwrap())
    }

    #[test]
    fn quantize_constant_is_identity() {
        let rep = rep1(12, 0.7);
        let op = weyl_quantize(&Symbol::constant(1, C64::new(1.0, 0.0)), &rep).unwrap();
        let eye = CMatrix::identity(13, 13);
        assert!((op.matrix() - eye).norm() < 1e-12);
    }

    #[test]
    fn quantize_identity_via_custom_grid() {
        // the full-grid path must also give Op(1) = I
        let rep = rep1(10, 1.3);
        let f = Symbol::custom(1, Arc::new(|_z: &RVector| C64::new(1.0, 0.0)));
        let op = weyl_quantize(&f, &rep).unwrap();
        assert!((op.matrix() - CMatrix::identity(11, 11)).norm() < 1e-10);
    }

    #[test]
    fn quantize_linear_matches_ell() {
        // Op(x) is multiplication by x; entry (0,1) = √(h/2)
        let h = 0.9;
        let rep = rep1(14, h);
        let f = Symbol::linear(RVector::from_column_slice(&[1.0, 0.0]));
        let op = weyl_quantize(&f, &rep).unwrap();
        let ell = rep.ell(&RVector::from_column_slice(&[1.0])).unwrap();
        assert!((op.matrix() - &ell).norm() < 1e-10);
        assert_relative_eq!(op.matrix()[(0, 1)].re, (h / 2.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn quantize_harmonic_oscillator_spectrum() {
        // Op(x² + ξ²) = diag(h(2n+1))
        for h in [0.5, 1.0] {
            let rep = rep1(24, h);
            let op = weyl_quantize(&Symbol::norm_squared(1), &rep).unwrap();
            for n in 0..=24usize {
                let want = h * (2.0 * n as f64 + 1.0);
                assert_relative_eq!(op.matrix()[(n, n)].re, want, epsilon = 1e-9);
            }
            let off = op.matrix()
                - CMatrix::from_fn(25, 25, |i, j| {
                    if i == j {
                        op.matrix()[(i, i)]
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
            assert!(off.norm() < 1e-9);
        }
    }

    #[test]
    fn segal_field_reduces_to_ell() {
        let rep = rep1(10, 1.1);
        let v = PhaseVector::from_slice(&[0.8, 0.0]);
        let l = segal_field(&v, &rep).unwrap();
        let ell = rep.ell(&RVector::from_column_slice(&[0.8])).unwrap();
        assert!((l.matrix() - &ell).norm() < 1e-12);
        // self-adjoint for general V
        let v2 = PhaseVector::from_slice(&[0.4, -1.2]);
        let l2 = segal_field(&v2, &rep).unwrap();
        assert!(l2.hermiticity_residual() < 1e-14);
    }

    #[test]
    fn segal_field_is_quantized_linear_symbol() {
        let rep = rep1(16, 0.8);
        let v = PhaseVector::from_slice(&[0.5, -0.7]);
        let direct = segal_field(&v, &rep).unwrap();
        let via_quadrature =
            weyl_quantize(&Symbol::linear(v.flat()), &rep).unwrap();
        assert!((direct.matrix() - via_quadrature.matrix()).norm() < 1e-9);
    }

    #[test]
    fn weyl_translate_unitary_and_fixes_vacuum() {
        let h = 1.0;
        let rep = rep1(40, h);
        let x = PhaseVector::from_slice(&[0.7, -0.4]);
        let v = weyl_translate(&x, &rep, 1e-8).unwrap();
        // V_h(X) Ψ₀ = Ψ_X
        let cs = rep.coherent(&x, 1e-8).unwrap();
        let mut vac = CVector::zeros(rep.basis_size());
        vac[0] = C64::new(1.0, 0.0);
        let moved = v.matrix() * &vac;
        assert!((moved - &cs.coefficients).norm() < 1e-8);
        // unitary on the safe subblock
        let (nrm, _) = v.weyl_norm(4);
        assert_relative_eq!(nrm, 1.0, epsilon = 1e-8);
        // V_h(X) V_h(−X) = I on the safe set
        let vm = weyl_translate(&x.scale(-1.0), &rep, 1e-8).unwrap();
        let prod = v.mul(&vm).unwrap();
        // products of translations leak mass ~|α|√N degrees past the cut
        let set = prod.safe_set(16);
        let sub = select_submatrix(prod.matrix(), &set);
        assert!((sub - CMatrix::identity(set.len(), set.len())).norm() < 1e-8);
    }

    #[test]
    fn weyl_translate_composition_law() {
        // V(X)V(Y) = e^{iσ(X,Y)/2h} V(X+Y)
        let h = 0.6;
        let rep = rep1(36, h);
        let x = PhaseVector::from_slice(&[0.5, 0.2]);
        let y = PhaseVector::from_slice(&[-0.3, 0.45]);
        let vx = weyl_translate(&x, &rep, 1e-7).unwrap();
        let vy = weyl_translate(&y, &rep, 1e-7).unwrap();
        let vxy = weyl_translate(&x.add(&y), &rep, 1e-7).unwrap();
        let sigma = crate::phase::symplectic_form(&x, &y).unwrap();
        let phase = C64::from_polar(1.0, sigma / (2.0 * h));
        let lhs = vx.mul(&vy).unwrap();
        let set = lhs.safe_set(16);
        let m1 = select_submatrix(lhs.matrix(), &set);
        let m2 = select_submatrix(vxy.matrix(), &set) * phase;
        assert!((m1 - m2).norm() < 1e-8);
    }

    #[test]
    fn generator_exponential_reproduces_translation() {
        // V_h(X) = e^{−i L_h(X)/h}
        let h = 1.0;
        let rep = rep1(30, h);
        let x = PhaseVector::from_slice(&[0.3, 0.4]);
        let l = weyl_generator(&x, &rep).unwrap();
        let gen = l.matrix() * C64::new(0.0, -1.0 / h);
        let expm = gen.exp();
        let v = weyl_translate(&x, &rep, 1e-8).unwrap();
        let set = v.safe_set(6);
        let a = select_submatrix(&expm, &set);
        let b = select_submatrix(v.matrix(), &set);
        assert!((a - b).norm() < 1e-7, "Eq 4.5 route disagrees");
    }

    #[test]
    fn generator_canonical_commutator() {
        // [L_h(V), L_h(W)] = (h/i) σ(V, W) I on the safe subblock
        let h = 0.8;
        let rep = rep1(20, h);
        let v = PhaseVector::from_slice(&[0.6, -0.1]);
        let w = PhaseVector::from_slice(&[0.2, 0.9]);
        let lv = weyl_generator(&v, &rep).unwrap();
        let lw = weyl_generator(&w, &rep).unwrap();
        let comm = lv.commutator(&lw).unwrap();
        let sigma = crate::phase::symplectic_form(&v, &w).unwrap();
        let target = C64::new(0.0, -h * sigma); // (h/i)σ = −ihσ
        let set = comm.safe_set(2);
        for &i in &set {
            for &j in &set {
                let want = if i == j { target } else { C64::new(0.0, 0.0) };
                assert!((comm.matrix()[(i, j)] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn wigner_coherent_state_law() {
        // H(Ψ_X, Ψ_X)(Z) = e^{(−|X|² + 2X·Z)/h}
        let h = 1.0;
        let rep = rep1(40, h);
        let x = PhaseVector::from_slice(&[0.8, -0.5]);
        let cs = rep.coherent(&x, 1e-9).unwrap();
        let w = wigner(&cs.coefficients, &cs.coefficients, &rep).unwrap();
        for zc in [[0.0, 0.0], [0.5, 0.3], [-0.7, 0.9], [1.1, -1.0]] {
            let z = RVector::from_column_slice(&zc);
            let got = w.eval(&z);
            let want = ((-x.norm_squared() + 2.0 * x.flat().dot(&z)) / h).exp();
            assert!(
                (got - C64::new(want, 0.0)).norm() < 1e-7,
                "at {zc:?}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn wigner_parity_diagonal_and_bound() {
        let h = 0.9;
        let rep = rep1(30, h);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut f = CVector::from_fn(rep.basis_size(), |i, _| {
            if i < 10 {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                C64::new(0.0, 0.0)
            }
        });
        f /= C64::new(f.norm(), 0.0);
        // even real f: H(f,f)(0) = ⟨f, f̌⟩ = ‖f‖² when f is even
        let mut even = CVector::zeros(rep.basis_size());
        for i in (0..10).step_by(2) {
            even[i] = C64::new(rng.random_range(-1.0..1.0), 0.0);
        }
        even /= C64::new(even.norm(), 0.0);
        let w = wigner(&even, &even, &rep).unwrap();
        let z0 = RVector::zeros(2);
        assert!((w.eval(&z0) - C64::new(1.0, 0.0)).norm() < 1e-10);
        // |H(f,g)(Z)| ≤ e^{|Z|²/h} ‖f‖ ‖g‖ on random probes
        let mut g = CVector::from_fn(rep.basis_size(), |i, _| {
            if i < 10 {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            } else {
                C64::new(0.0, 0.0)
            }
        });
        g /= C64::new(g.norm(), 0.0);
        let wfg = wigner(&f, &g, &rep).unwrap();
        for _ in 0..100 {
            let z = RVector::from_fn(2, |_, _| rng.random_range(-1.5..1.5));
            let bound = (z.norm_squared() / h).exp();
            assert!(wfg.eval(&z).norm() <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn wick_equals_heat_of_symbol() {
        // σ^{wick}(Op(F)) = H_{h/2} F for a trigonometric symbol
        let h = 0.8;
        let rep = rep1(34, h);
        let f = Symbol::cosine(RVector::from_column_slice(&[1.1, -0.6]), 0.4);
        let op = weyl_quantize(&f, &rep).unwrap();
        let wick = wick_symbol(&op).unwrap();
        let heat = half_heat(&f, &rep).unwrap();
        for zc in [[0.0, 0.0], [0.4, 0.1], [-0.5, 0.6], [0.9, 0.9]] {
            let z = RVector::from_column_slice(&zc);
            let diff = (wick.eval(&z) - heat.eval(&z)).norm();
            assert!(diff < 1e-7, "wick vs heat at {zc:?}: {diff}");
        }
        // Op(x²+ξ²) has Wick symbol |X|² + h
        let q = weyl_quantize(&Symbol::norm_squared(1), &rep).unwrap();
        let wq = wick_symbol(&q).unwrap();
        let z = RVector::from_column_slice(&[0.3, -0.2]);
        assert!((wq.eval(&z) - C64::new(z.norm_squared() + h, 0.0)).norm() < 1e-7);
    }

    #[test]
    fn wick_of_coherent_projector() {
        // M = |Ψ_X₀⟩⟨Ψ_X₀|: wick symbol e^{−|X−X₀|²/2h}
        let h = 1.0;
        let rep = rep1(36, h);
        let x0 = PhaseVector::from_slice(&[0.5, 0.5]);
        let cs = rep.coherent(&x0, 1e-9).unwrap();
        let b = rep.basis_size();
        let mut proj = CMatrix::zeros(b, b);
        for i in 0..b {
            for j in 0..b {
                proj[(i, j)] = cs.coefficients[i] * cs.coefficients[j].conj();
            }
        }
        let op = OperatorMatrix::new(proj, rep.clone()).unwrap();
        let wick = wick_symbol(&op).unwrap();
        for zc in [[0.0, 0.0], [0.5, 0.5], [1.0, 0.0]] {
            let z = RVector::from_column_slice(&zc);
            let x = PhaseVector::from_flat(&z);
            let want = (-(x.sub(&x0).norm_squared()) / (2.0 * h)).exp();
            assert!((wick.eval(&z) - C64::new(want, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn projection_symbol_quantizes_to_projector() {
        // Op of 2^d e^{−|X−Z|²/h} is the rank-one projector on Ψ_X
        let h = 0.9;
        let rep = rep1(38, h);
        let x0 = PhaseVector::from_slice(&[0.4, -0.3]);
        let sym = Symbol::gaussian_peak(2.0, 1.0 / h, x0.flat());
        let op = weyl_quantize(&sym, &rep).unwrap();
        let cs = rep.coherent(&x0, 1e-10).unwrap();
        let set = op.safe_set(6);
        for &i in &set {
            for &j in &set {
                let want = cs.coefficients[i] * cs.coefficients[j].conj();
                assert!(
                    (op.matrix()[(i, j)] - want).norm() < 1e-6,
                    "projector entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn anti_wick_identity_and_positivity() {
        let h = 1.1;
        let rep = rep1(20, h);
        let one = anti_wick(&Symbol::constant(1, C64::new(1.0, 0.0)), &rep).unwrap();
        assert!((one.matrix() - CMatrix::identity(21, 21)).norm() < 1e-9);
        // Φ ≥ 0 → positive semidefinite
        let phi = Symbol::trig(
            1,
            vec![
                TrigTerm {
                    amplitude: 1.0,
                    freq: RVector::zeros(2),
                    phase: 0.0,
                },
                TrigTerm {
                    amplitude: 0.7,
                    freq: RVector::from_column_slice(&[0.9, 0.4]),
                    phase: 0.2,
                },
            ],
        );
        let op = anti_wick(&phi, &rep).unwrap();
        let sym = (op.matrix() + op.matrix().adjoint()) * C64::new(0.5, 0.0);
        let eig = sym.symmetric_eigen();
        for e in eig.eigenvalues.iter() {
            assert!(*e > -1e-9, "anti-Wick of nonnegative symbol not PSD: {e}");
        }
    }

    #[test]
    fn anti_wick_heat_weyl_identity() {
        // Op^{AW}(Φ) = Op(H_{h/2} Φ) for Φ = cos(a·Z)
        let h = 0.75;
        let rep = rep1(28, h);
        let phi = Symbol::cosine(RVector::from_column_slice(&[1.0, -0.5]), 0.3);
        let aw = anti_wick(&phi, &rep).unwrap();
        let heated = heat_apply(&phi, h / 2.0, None).unwrap();
        let wq = weyl_quantize(&heated, &rep).unwrap();
        let set = aw.safe_set(4);
        let m1 = select_submatrix(aw.matrix(), &set);
        let m2 = select_submatrix(wq.matrix(), &set);
        assert!((m1 - m2).norm() < 1e-6);
    }

    #[test]
    fn beals_derivative_law() {
        // ad(L_h V₁)..ad(L_h V_m) Op(F) = (h/i)^m Op(d^m F(·)(V₁..V_m))
        let h = 0.7;
        let rep = rep1(26, h);
        let a = RVector::from_column_slice(&[1.2, -0.8]);
        let f = Symbol::cosine(a.clone(), 0.25);
        let op = weyl_quantize(&f, &rep).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..=2usize {
            let dirs: Vec<PhaseVector> = (0..m)
                .map(|_| {
                    PhaseVector::from_slice(&[
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ])
                })
                .collect();
            let mut lhs = op.clone();
            for v in &dirs {
                let l = weyl_generator(v, &rep).unwrap();
                lhs = l.commutator(&lhs).unwrap();
            }
            // derivative symbol: closed form for trig
            let dirs_flat: Vec<RVector> = dirs.iter().map(|v| v.flat()).collect();
            let deriv = {
                let base = f.clone();
                let dirs_flat = dirs_flat.clone();
                Symbol::custom(
                    1,
                    Arc::new(move |z: &RVector| base.derivative(z, &dirs_flat)),
                )
            };
            let rhs = weyl_quantize(&deriv, &rep).unwrap();
            let factor = C64::new(0.0, -h).powu(m as u32); // (h/i)^m
            let set = op.safe_set(4 + 2 * m);
            let l = select_submatrix(lhs.matrix(), &set);
            let r = select_submatrix(rhs.matrix(), &set) * factor;
            assert!(
                (l.clone() - r.clone()).norm() < 1e-6 * (1.0 + r.norm()),
                "derivative law order {m}"
            );
        }
    }

    #[test]
    fn cv_bound_on_random_trig_corpus() {
        // ‖Op(F)‖_safe ≤ ‖F‖_{4d,Q_A} × cv factor, small smoke corpus
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 0.5;
        let rep = rep1(30, h);
        for _ in 0..5 {
            let n_terms = rng.random_range(1..=3);
            let terms: Vec<TrigTerm> = (0..n_terms)
                .map(|_| {
                    let dir = RVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
                    let dir = dir.clone() * (rng.random_range(0.2..2.0) / dir.norm());
                    TrigTerm {
                        amplitude: rng.random_range(-1.0..1.0),
                        freq: dir,
                        phase: rng.random_range(0.0..std::f64::consts::TAU),
                    }
                })
                .collect();
            let f = Symbol::trig(1, terms);
            let lam = rng.random_range(0.3..1.0);
            let ratio: f64 = rng.random_range(0.3..0.8);
            let a = QuadraticForm::new(crate::RMatrix::from_diagonal(
                &RVector::from_column_slice(&[lam, lam * ratio]),
            ))
            .unwrap();
            let op = weyl_quantize(&f, &rep).unwrap();
            let (norm, _) = op.weyl_norm(4);
            let semi = crate::symbol::symbol_seminorm_class(&f, 4, &a, 4000, 11).unwrap();
            let factor = crate::phase::cv_bound_factor(&a, h, crate::phase::CV_CONSTANT).unwrap();
            assert!(
                norm <= semi * factor * (1.0 + 1e-9),
                "CV bound violated: {norm} > {semi} × {factor}"
            );
        }
    }

    #[test]
    fn trig_quantization_grid_route_agrees() {
        // the defining Wigner-pairing quadrature reproduces the exact
        // displacement construction on the safe subblock
        let h = 0.85;
        let rep = rep1(30, h);
        let a = RVector::from_column_slice(&[0.9, -0.4]);
        let f = Symbol::cosine(a.clone(), 0.35);
        let op = weyl_quantize(&f, &rep).unwrap();
        let grid = weyl_quantize_grid(&f, &rep).unwrap();
        let set = op.safe_set(6);
        let m1 = select_submatrix(op.matrix(), &set);
        let m2 = select_submatrix(grid.matrix(), &set);
        let diff = (m1 - m2).norm();
        assert!(diff < 1e-5, "grid route drifts: {diff}");
    }

    #[test]
    fn quadratic_quantization_grid_route_agrees() {
        let h = 0.7;
        let rep = rep1(18, h);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let b = crate::RMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.6..0.6));
        let f = Symbol::quadratic(&b + b.transpose(), 0.3);
        let op = weyl_quantize(&f, &rep).unwrap();
        let grid = weyl_quantize_grid(&f, &rep).unwrap();
        let set = op.safe_set(4);
        let m1 = select_submatrix(op.matrix(), &set);
        let m2 = select_submatrix(grid.matrix(), &set);
        let diff = (m1 - m2).norm();
        assert!(diff < 1e-8, "grid route drifts: {diff}");
    }

    #[test]
    fn cross_mode_quadratic_exact() {
        // d = 2 symbol z₁ζ₂ + ζ₁z₂ against the grid route at small N
        let h = 1.0;
        let rep = Arc::new(GaussianRep::new(2, 5, h).unwrap());
        let mut qm = crate::RMatrix::zeros(4, 4);
        qm[(0, 3)] = 0.5;
        qm[(3, 0)] = 0.5;
        qm[(2, 1)] = 0.35;
        qm[(1, 2)] = 0.35;
        let f = Symbol::quadratic(qm, 0.0);
        let op = weyl_quantize(&f, &rep).unwrap();
        let grid = weyl_quantize_grid(&f, &rep).unwrap();
        let set = op.safe_set(2);
        let m1 = select_submatrix(op.matrix(), &set);
        let m2 = select_submatrix(grid.matrix(), &set);
        let diff = (m1 - m2).norm();
        assert!(diff < 1e-9, "cross-mode mismatch: {diff}");
    }

    #[test]
    fn tensor_apply_matches_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = 3;
        let d = 2;
        let mats: Vec<CMatrix> = (0..d)
            .map(|_| {
                CMatrix::from_fn(m, m, |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        let v = CVector::from_fn(m * m, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let big = kron(&mats[0], &mats[1]);
        let want = &big * &v;
        let got = tensor_apply(&mats, &v, m, d);
        assert!((want - got).norm() < 1e-12);
    }

    #[test]
    fn d2_trig_quantization_tensor_structure() {
        // product symbol on two modes equals the Kronecker of mode parts
        let h = 1.0;
        let rep = Arc::new(GaussianRep::new(2, 8, h).unwrap());
        let rep1d = rep1(8, h);
        let a = RVector::from_column_slice(&[0.7, 0.0, -0.3, 0.0]); // mode-0 only
        let f2 = Symbol::cosine(a.clone(), 0.1);
        let op2 = weyl_quantize(&f2, &rep).unwrap();
        let f1 = Symbol::cosine(RVector::from_column_slice(&[0.7, -0.3]), 0.1);
        let op1 = weyl_quantize(&f1, &rep1d).unwrap();
        let eye = CMatrix::identity(9, 9);
        let want = kron(op1.matrix(), &eye);
        assert!((op2.matrix() - want).norm() < 1e-10);
    }

    #[test]
    fn lattice_quantization_matches_gauss_hermite() {
        let h = 0.8;
        let rep = rep1(16, h);
        let f = Symbol::cosine(RVector::from_column_slice(&[1.0, 0.3]), 0.2);
        let op = weyl_quantize(&f, &rep).unwrap();
        // uniform lattice
        let step = (h).sqrt() / 6.0;
        let half = (8.0 * (h * (2.0 * 17.0f64)).sqrt() / 8.0).ceil(); // generous range
        let nsteps = (2.0 * half / step).ceil() as i64;
        let mut points = Vec::new();
        let mut values = Vec::new();
        for i in 0..=nsteps {
            for j in 0..=nsteps {
                let z = RVector::from_column_slice(&[
                    -half + i as f64 * step,
                    -half + j as f64 * step,
                ]);
                values.push(f.eval(&z));
                points.push(z);
            }
        }
        let lop = weyl_quantize_lattice(&rep, &points, &values, step * step).unwrap();
        let set = op.safe_set(4);
        let m1 = select_submatrix(op.matrix(), &set);
        let m2 = select_submatrix(lop.matrix(), &set);
        assert!(
            (m1 - m2).norm() < 1e-7,
            "lattice quantization drifted from the exact rule"
        );
    }

    #[test]
    fn weyl_norm_of_identity_and_translation() {
        let rep = rep1(24, 1.0);
        let id = OperatorMatrix::identity(rep.clone());
        let (s, f) = id.weyl_norm(4);
        assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f, 1.0, epsilon = 1e-12);
        let v = weyl_translate(&PhaseVector::from_slice(&[0.4, 0.2]), &rep, 1e-7).unwrap();
        let (s, _) = v.weyl_norm(4);
        assert_relative_eq!(s, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn coherent_overlap_through_translation() {
        // consistency: ⟨V(X)Ψ₀, V(Y)Ψ₀⟩ = ⟨Ψ_X, Ψ_Y⟩ exact law
        let h = 1.0;
        let rep = rep1(44, h);
        let x = PhaseVector::from_slice(&[0.9, 0.1]);
        let y = PhaseVector::from_slice(&[-0.2, 0.6]);
        let cx = rep.coherent(&x, 1e-9).unwrap();
        let cy = rep.coherent(&y, 1e-9).unwrap();
        let got = cx.overlap(&cy);
        let want = coherent_overlap_exact(&x, &y, h);
        assert!((got - want).norm() < 1e-9);
    }
}
