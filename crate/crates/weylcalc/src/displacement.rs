//! Single-mode Fock-space kernels: displacement matrices, coherent
//! coefficients, and Hermite-function evaluation.
//!
//! In the Hermite basis of L²(R, μ_{h/2}) the Weyl translation V_h(X) for a
//! one-mode phase point X = (a, b) acts as the displacement D(α) with
//! α = (a + ib)/√(2h). Matrix elements are evaluated in log space through
//! associated Laguerre recurrences so that large displacements stay finite.

use crate::{C64, CMatrix, CVector};
use std::sync::OnceLock;

const MAX_FACT: usize = 512;

fn ln_factorials() -> &'static [f64; MAX_FACT] {
    static TABLE: OnceLock<[f64; MAX_FACT]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0f64; MAX_FACT];
        for n in 1..MAX_FACT {
            t[n] = t[n - 1] + (n as f64).ln();
        }
        t
    })
}

/// ln(n!)
pub fn ln_factorial(n: usize) -> f64 {
    ln_factorials()[n]
}

/// Matrix ⟨m|D(α)|n⟩ of the displacement operator on the first `dim` Fock
/// states, with D(α) = exp(α a† − ᾱ a).
///
/// For m ≥ n: ⟨m|D|n⟩ = √(n!/m!) α^{m−n} e^{−|α|²/2} L_n^{(m−n)}(|α|²), and
/// ⟨m|D|n⟩ = ⟨n|D(−α)|m⟩* below the diagonal.
pub fn displacement_matrix(alpha: C64, dim: usize) -> CMatrix {
    displacement_matrix_scaled(alpha, dim, 0.0)
}

/// Displacement matrix with every entry multiplied by e^{ln_extra}.
///
/// `ln_extra = |α|²/2` removes the Gaussian prefactor, which is what the
/// Wigner polynomials need (the growth cancels against e^{|Z|²/h}).
///
/// Entries are filled by the ladder recurrences
/// √(m+1) d_{m+1,n} = β d_{m,n} + √n d_{m,n−1} and
/// d_{0,n} = (−β̄)ⁿ/√n! · d_{0,0}, which stay stable where the upward
/// Laguerre recurrence loses digits for |α|² ≫ n.
pub fn displacement_matrix_scaled(alpha: C64, dim: usize, ln_extra: f64) -> CMatrix {
    let mut out = CMatrix::zeros(dim, dim);
    let x = alpha.norm_sqr();
    out[(0, 0)] = C64::new((-0.5 * x + ln_extra).exp(), 0.0);
    for n in 0..dim - 1 {
        out[(0, n + 1)] = -alpha.conj() * out[(0, n)] / ((n + 1) as f64).sqrt();
    }
    for m in 0..dim - 1 {
        let rm = 1.0 / ((m + 1) as f64).sqrt();
        for n in 0..dim {
            let mut v = alpha * out[(m, n)];
            if n > 0 {
                v += (n as f64).sqrt() * out[(m, n - 1)];
            }
            out[(m + 1, n)] = v * rm;
        }
    }
    out
}

/// Coefficients of the coherent state D(α)|0⟩ = e^{−|α|²/2} Σ αⁿ/√n! |n⟩,
/// truncated to `dim` entries, together with the squared-norm tail beyond
/// the truncation.
pub fn coherent_coefficients(alpha: C64, dim: usize) -> (CVector, f64) {
    let x = alpha.norm_sqr();
    let lf = ln_factorials();
    let mut c = CVector::zeros(dim);
    let mut mass = 0.0;
    for n in 0..dim {
        let ln_mag = -0.5 * x + (n as f64) * alpha.norm().max(1e-300).ln() - 0.5 * lf[n];
        let mag = if x == 0.0 {
            if n == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            ln_mag.exp()
        };
        let ph = if x == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            (alpha / alpha.norm()).powu(n as u32)
        };
        c[n] = ph * C64::new(mag, 0.0);
        mass += mag * mag;
    }
    ((&c).clone(), (1.0 - mass).max(0.0))
}

/// Evaluate the orthonormal Hermite family e_0..e_{nmax} of L²(R, μ_{s²}) at
/// `u`, using the normalized probabilists' recurrence
/// ẽ_{n+1}(t) = (t ẽ_n − √n ẽ_{n−1})/√(n+1) with t = u/s.
pub fn hermite_values(u: f64, s: f64, nmax: usize) -> Vec<f64> {
    let t = u / s;
    let mut vals = Vec::with_capacity(nmax + 1);
    vals.push(1.0);
    if nmax == 0 {
        return vals;
    }
    vals.push(t);
    for n in 1..nmax {
        let next = (t * vals[n] - (n as f64).sqrt() * vals[n - 1]) / ((n + 1) as f64).sqrt();
        vals.push(next);
    }
    vals
}
