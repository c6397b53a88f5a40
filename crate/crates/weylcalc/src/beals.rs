//! Wick bisymbol, Beals commutator seminorms, and the constructive symbol
//! reconstruction at finite dimension (d = 1).
//!
//! The reconstruction proceeds in two steps. For each subset I of the mode
//! set, a regularized integral over (S, T) ∈ E(I)²×E(I)² produces G_I with
//! H_{E(I),h/2} G_I = wick(M); the divergent T-integral is tamed by moving
//! derivatives onto the bisymbol with the coefficients a₀(u) = 3 − 4u²,
//! a₁(u) = 4u, a₂ = −1 (solved from the defining identity
//! Σ (−1)^α ∂^α[a_α K] = (1+τ̂²)K and tensored per variable pair). Diagonal
//! derivatives of the bisymbol are exact bisymbols of iterated commutators,
//! (i/h) ad(L_h W) per order. The telescoping sum F = Σ_I T_{I,h} G_I with
//! T_{I,h} = ∏(I − H_{D_j,h/2}) then satisfies H_{h/2} F = wick(M).
//!
//! All integrals run on one aligned uniform lattice (trapezoid sums against
//! Gaussian kernels are spectrally accurate), so bisymbol evaluations are
//! shared between the S-convolution, the heat step, and re-quantization.

use crate::error::{Result, WeylError};
use crate::exec;
use crate::phase::{PhaseVector, QuadraticForm};
use crate::quantize::{OperatorMatrix, select_submatrix, weyl_generator, weyl_quantize_lattice};
use crate::rep::GaussianRep;
use crate::symbol::Symbol;
use crate::{C64, CVector, RVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

/// Wick bisymbol S_h(M)(X, Y) = ⟨M Ψ_X, Ψ_Y⟩ / ⟨Ψ_X, Ψ_Y⟩.
///
/// Refuses when |X−Y|²/4h > 60 (overlap below the underflow floor).
pub fn bisymbol(m: &OperatorMatrix, x: &PhaseVector, y: &PhaseVector) -> Result<C64> {
    let rep = m.rep();
    let h = rep.h();
    if x.sub(y).norm_squared() / (4.0 * h) > 60.0 {
        return Err(WeylError::TruncationBudget {
            estimate: x.sub(y).norm_squared() / (4.0 * h),
            ceiling: 60.0,
        });
    }
    let cu = unnormalized_coherent(rep, x);
    let cv = unnormalized_coherent(rep, y);
    let mv = m.matrix() * &cu;
    let num: C64 = cv.iter().zip(mv.iter()).map(|(c, w)| w * c.conj()).sum();
    let au = alpha_of(rep, x);
    let av = alpha_of(rep, y);
    let phase: C64 = au.iter().zip(av.iter()).map(|(u, v)| v.conj() * u).sum();
    Ok((-phase).exp() * num)
}

fn alpha_of(rep: &GaussianRep, x: &PhaseVector) -> Vec<C64> {
    rep.coherent_alpha(x)
}

/// Coherent coefficients without the Gaussian normalization: ∏ α^{n_k}/√(n_k!).
fn unnormalized_coherent(rep: &GaussianRep, x: &PhaseVector) -> CVector {
    let alphas = rep.coherent_alpha(x);
    let mode = rep.mode_dim();
    let mut per_mode: Vec<Vec<C64>> = Vec::with_capacity(alphas.len());
    for a in &alphas {
        let mut v = Vec::with_capacity(mode);
        let mut cur = C64::new(1.0, 0.0);
        for n in 0..mode {
            v.push(cur / C64::new((0.5 * crate::displacement::ln_factorial(n)).exp(), 0.0));
            cur *= *a;
        }
        per_mode.push(v);
    }
    CVector::from_fn(rep.basis_size(), |i, _| {
        let midx = rep.multi_index(i);
        midx.iter()
            .enumerate()
            .map(|(k, &n)| per_mode[k][n])
            .product()
    })
}

/// Cauchy–Riemann residual of the bisymbol in its first argument at (X, Y),
/// by central differences: |∂_x S + i ∂_ξ S| (holomorphy in x + iξ).
pub fn bisymbol_holomorphy_residual(
    m: &OperatorMatrix,
    x: &PhaseVector,
    y: &PhaseVector,
) -> Result<f64> {
    let h = 1e-4;
    let d = x.dim();
    let mut shift = |coord: usize, eps: f64| -> Result<C64> {
        let mut xs = x.clone();
        if coord < d {
            xs.x[coord] += eps;
        } else {
            xs.xi[coord - d] += eps;
        }
        bisymbol(m, &xs, y)
    };
    let dx = (shift(0, h)? - shift(0, -h)?) / C64::new(2.0 * h, 0.0);
    let dxi = (shift(d, h)? - shift(d, -h)?) / C64::new(2.0 * h, 0.0);
    Ok((dx + C64::new(0.0, 1.0) * dxi).norm())
}

/// Beals seminorm estimates C_m for m = 0..=m_max:
/// C_m = sup ‖ad(L_h V₁)…ad(L_h V_m) M‖ / (h^m ∏ Q_A(V_j)^{1/2}),
/// a lower estimate over sampled Q_A-unit direction tuples (operator norms
/// on the safe subblock with the given margin).
#[derive(Debug, Clone)]
pub struct BealsProfile {
    pub orders: Vec<f64>,
    pub margin: usize,
}

impl BealsProfile {
    /// Estimate of ‖M‖_{L(Q)}: the best constant over all orders.
    pub fn class_norm(&self) -> f64 {
        self.orders.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn beals_seminorm_estimate(
    m: &OperatorMatrix,
    a: &QuadraticForm,
    m_max: usize,
    tuples: usize,
    margin: usize,
    seed: u64,
) -> Result<BealsProfile> {
    let rep = m.rep().clone();
    if a.dim() != rep.dim() {
        return Err(WeylError::DimensionMismatch(
            "form dimension vs rep".into(),
        ));
    }
    let h = rep.h();
    let n = 2 * rep.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Q_A-unit candidate directions: eigendirections plus random draws.
    let mut dirs: Vec<PhaseVector> = Vec::new();
    for k in 0..n {
        let col: RVector = a.eigenvectors().column(k).into_owned();
        let q = a.value(&col);
        if q > 1e-14 {
            dirs.push(PhaseVector::from_flat(&(col / q.sqrt())));
        }
    }
    for _ in 0..tuples {
        let v = RVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = a.value(&v);
        if q > 1e-14 {
            dirs.push(PhaseVector::from_flat(&(v / q.sqrt())));
        }
    }
    if dirs.is_empty() {
        return Err(WeylError::InvalidArgument(
            "form has no positive directions".into(),
        ));
    }
    let gens: Vec<OperatorMatrix> = dirs
        .iter()
        .map(|v| weyl_generator(v, &rep))
        .collect::<Result<_>>()?;

    let mut orders = Vec::with_capacity(m_max + 1);
    let set = m.safe_set(margin);
    orders.push(crate::quantize::operator_norm(&select_submatrix(
        m.matrix(),
        &set,
    )));
    for order in 1..=m_max {
        let mut tuple_list: Vec<Vec<usize>> =
            (0..dirs.len()).map(|i| vec![i; order]).collect();
        for _ in 0..tuples {
            tuple_list.push((0..order).map(|_| rng.random_range(0..dirs.len())).collect());
        }
        let best = exec::map_slice(&tuple_list, |tuple| {
            let mut acc = m.clone();
            for &i in tuple {
                acc = gens[i].commutator(&acc).unwrap();
            }
            let sub = select_submatrix(acc.matrix(), &set);
            crate::quantize::operator_norm(&sub) / h.powi(order as i32)
        })
        .into_iter()
        .fold(0.0f64, f64::max);
        orders.push(best);
    }
    Ok(BealsProfile { orders, margin })
}

/// Reconstruction parameters; lengths are in units of √h.
#[derive(Debug, Clone)]
pub struct ReconstructionConfig {
    /// Lattice step δ = √h / step_div.
    pub step_div: f64,
    /// S-integral radius in √h units (Gaussian scale is √(h/2)).
    pub s_radius: f64,
    /// Inner T-disk radius in √h units (kernel scale is √(2h)).
    pub t_radius: f64,
    /// Certificate annulus outer radius in √h units.
    pub t_radius_outer: f64,
    /// T-lattice step multiplier (δ_T = mult·δ).
    pub t_step_mult: usize,
    /// Probe ring radius in √h units.
    pub probe_radius: f64,
    /// Extra quantization-lattice margin in √h units.
    pub quant_margin: f64,
    /// Restrict the output grid to the probe neighborhood (no
    /// re-quantization support, much smaller lattices).
    pub probes_only: bool,
    /// Taper the output at the coherent-faithfulness radius √(c·N·h)
    /// (truncated coherent states are unfaithful beyond |α|² ≈ N, so the
    /// reconstruction carries no information there; low-degree matrix
    /// elements of the true symbol beyond the taper are e^{−2r²/h}-small).
    pub window_alpha_fraction: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            step_div: 5.0,
            s_radius: 4.0,
            t_radius: 6.5,
            t_radius_outer: 8.2,
            t_step_mult: 2,
            probe_radius: 2.2,
            quant_margin: 2.5,
            probes_only: false,
            window_alpha_fraction: 0.6,
        }
    }
}

/// A symbol tabulated on a uniform phase-space lattice, with the convergence
/// certificate of the regularized T-integral.
#[derive(Debug, Clone)]
pub struct ReconstructedSymbol {
    /// Lattice origin (both axes), step, and per-axis point count.
    pub lattice_min: f64,
    pub step: f64,
    pub n_axis: usize,
    /// Values on the lattice, row-major over (z index, ζ index).
    pub values: Vec<C64>,
    /// Probe points (on the lattice) with values.
    pub probes: Vec<(RVector, C64)>,
    /// Max |change| on probes when extending the T-disk to the outer radius.
    pub tail_change: f64,
    pub h: f64,
}

impl ReconstructedSymbol {
    pub fn point(&self, i: usize, j: usize) -> RVector {
        RVector::from_column_slice(&[
            self.lattice_min + i as f64 * self.step,
            self.lattice_min + j as f64 * self.step,
        ])
    }

    pub fn value(&self, i: usize, j: usize) -> C64 {
        self.values[i * self.n_axis + j]
    }

    /// Bilinear interpolation.
    pub fn eval(&self, z: &RVector) -> C64 {
        let fx = ((z[0] - self.lattice_min) / self.step)
            .clamp(0.0, (self.n_axis - 1) as f64 - 1e-9);
        let fy = ((z[1] - self.lattice_min) / self.step)
            .clamp(0.0, (self.n_axis - 1) as f64 - 1e-9);
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v00 = self.value(i, j);
        let v10 = self.value((i + 1).min(self.n_axis - 1), j);
        let v01 = self.value(i, (j + 1).min(self.n_axis - 1));
        let v11 = self.value((i + 1).min(self.n_axis - 1), (j + 1).min(self.n_axis - 1));
        v00 * ((1.0 - tx) * (1.0 - ty))
            + v10 * (tx * (1.0 - ty))
            + v01 * ((1.0 - tx) * ty)
            + v11 * (tx * ty)
    }

    /// Wrap as an evaluable [`Symbol`] (bilinear interpolation off-lattice).
    pub fn symbol(&self) -> Symbol {
        let me = self.clone();
        Symbol::custom(1, Arc::new(move |z: &RVector| me.eval(z)))
    }

    /// Heat flow H_t of the tabulated values at a lattice point, by the
    /// discrete Gaussian sum (valid where the stencil stays on the grid).
    pub fn lattice_heat_at(&self, i: usize, j: usize, t: f64) -> C64 {
        let radius = (4.0 * t.sqrt() / self.step).ceil() as i64;
        let mut total = C64::new(0.0, 0.0);
        let mut mass = 0.0;
        for yi in -radius..=radius {
            for yj in -radius..=radius {
                let (a, b) = (i as i64 + yi, j as i64 + yj);
                if a < 0 || b < 0 || a >= self.n_axis as i64 || b >= self.n_axis as i64 {
                    continue;
                }
                let w = (-((yi * yi + yj * yj) as f64) * self.step * self.step / (2.0 * t)).exp();
                total += self.value(a as usize, b as usize) * C64::new(w, 0.0);
                mass += w;
            }
        }
        total / C64::new(mass, 0.0)
    }

    /// Index of the lattice point nearest to z.
    pub fn nearest_index(&self, z: &RVector) -> (usize, usize) {
        let i = ((z[0] - self.lattice_min) / self.step).round() as i64;
        let j = ((z[1] - self.lattice_min) / self.step).round() as i64;
        (
            i.clamp(0, self.n_axis as i64 - 1) as usize,
            j.clamp(0, self.n_axis as i64 - 1) as usize,
        )
    }

    /// Re-quantize the lattice values.
    pub fn quantize(&self, rep: &Arc<GaussianRep>) -> Result<OperatorMatrix> {
        let mut points = Vec::with_capacity(self.values.len());
        for i in 0..self.n_axis {
            for j in 0..self.n_axis {
                points.push(self.point(i, j));
            }
        }
        weyl_quantize_lattice(rep, &points, &self.values, self.step * self.step)
    }
}

/// The integration-by-parts coefficients a₀, a₁, a₂ in the scaled variable.
fn ibp_coeff(order: usize, u: f64) -> f64 {
    match order {
        0 => 3.0 - 4.0 * u * u,
        1 => 4.0 * u,
        _ => -1.0,
    }
}

/// Constructive symbol reconstruction (d = 1): returns F with
/// H_{h/2} F = wick(M) and Op(F) = M, tabulated on a uniform lattice.
pub fn reconstruct_symbol(
    m: &OperatorMatrix,
    rep: &Arc<GaussianRep>,
    config: &ReconstructionConfig,
) -> Result<ReconstructedSymbol> {
    if rep.dim() != 1 {
        return Err(WeylError::InvalidArgument(
            "reconstruction implemented for d = 1 (subset enumeration is 2^d)".into(),
        ));
    }
    if m.spin_dim() != 1 {
        return Err(WeylError::InvalidArgument(
            "reconstruction of spin-valued operators: take components".into(),
        ));
    }
    let h = rep.h();
    let sq = h.sqrt();
    let delta = sq / config.step_div;
    let nlev = rep.level() as f64;

    // lattice ranges (in absolute units)
    let r_quant = if config.probes_only {
        config.probe_radius * sq
    } else {
        ((2.0 * nlev + 1.0) * h / 2.0).sqrt() + config.quant_margin * sq
    };
    let heat_radius = 4.0 * (h / 2.0).sqrt();
    let r_x = r_quant + heat_radius;
    let r_s = config.s_radius * sq;
    let r_c = r_x + r_s;
    let r_t_out = config.t_radius_outer * sq;
    let r_t_in = config.t_radius * sq;
    let r_u = r_c + r_t_out / 2.0;

    // grid radii defined additively so every composite index stays in range
    let to_grid = |r: f64| -> i64 { (r / delta).ceil() as i64 };
    let tmult = config.t_step_mult as i64;
    let gq = to_grid(r_quant);
    let gh = to_grid(heat_radius);
    let gx = gq + gh;
    let gs = to_grid(r_s);
    let gc = gx + gs;
    let gt_out = (to_grid(r_t_out) + tmult - 1) / tmult;
    let gu = gc + (gt_out * tmult) / 2 + 1;
    let _ = (r_x, r_c, r_u);

    // commutator family M_{αβ} = ((i/h) ad(L_h W₁))^α ((i/h) ad(L_h W₂))^β M
    let w1 = PhaseVector::from_slice(&[1.0, 0.0]);
    let w2 = PhaseVector::from_slice(&[0.0, 1.0]);
    let l1 = weyl_generator(&w1, rep)?;
    let l2 = weyl_generator(&w2, rep)?;
    let iov_h = C64::new(0.0, 1.0 / h);
    let mut fam: Vec<Vec<OperatorMatrix>> = Vec::with_capacity(3);
    for alpha in 0..3usize {
        let mut row = Vec::with_capacity(3);
        for beta in 0..3usize {
            let mut acc = m.clone();
            for _ in 0..alpha {
                acc = l1.commutator(&acc)?.scale(iov_h);
            }
            for _ in 0..beta {
                acc = l2.commutator(&acc)?.scale(iov_h);
            }
            row.push(acc);
        }
        fam.push(row);
    }

    // skip commutator orders that vanish (constants, linear symbols)
    let m_scale = m.matrix().norm().max(1e-300);
    let active: Vec<bool> = fam
        .iter()
        .flatten()
        .map(|op| op.matrix().norm() > 1e-13 * m_scale)
        .collect();

    // unnormalized coherent vectors and matvecs on the U-lattice
    let u_axis = (2 * gu + 1) as usize;
    let coh: Vec<CVector> = exec::map_indexed(u_axis * u_axis, |flat| {
        let i = (flat / u_axis) as i64 - gu;
        let j = (flat % u_axis) as i64 - gu;
        let x = PhaseVector::from_slice(&[i as f64 * delta, j as f64 * delta]);
        unnormalized_coherent(rep, &x)
    });
    let mats: Vec<&OperatorMatrix> = fam.iter().flatten().collect();
    let bsize = rep.basis_size();
    let matvecs: Vec<Vec<C64>> = exec::map_indexed(u_axis * u_axis, |flat| {
        let mut out = vec![C64::new(0.0, 0.0); bsize * 9];
        for (q, op) in mats.iter().enumerate() {
            if !active[q] {
                continue;
            }
            let y = op.matrix() * &coh[flat];
            for n in 0..bsize {
                out[n * 9 + q] = y[n];
            }
        }
        out
    });
    let uidx = |i: i64, j: i64| -> usize { ((i + gu) as usize) * u_axis + (j + gu) as usize };

    // T grid (even multiples of δ within the outer disk)
    let mut t_points: Vec<(i64, i64)> = Vec::new();
    for ti in -gt_out..=gt_out {
        for tj in -gt_out..=gt_out {
            let t2 = ((ti * tmult) as f64 * delta).powi(2) + ((tj * tmult) as f64 * delta).powi(2);
            if t2 <= r_t_out * r_t_out {
                t_points.push((ti * tmult, tj * tmult));
            }
        }
    }

    // per-T assembly of the S-convolved integrand, accumulated into
    // G₁ on the X-grid (inner sum) and onto probes for the tail certificate
    let x_axis = (2 * gx + 1) as usize;
    let c_axis = (2 * gc + 1) as usize;
    let alpha_of_grid = |i: i64| -> C64 {
        // α for the lattice point (i, j) handled per-axis below
        C64::new(i as f64 * delta, 0.0)
    };
    let _ = alpha_of_grid;

    let delta_t = (tmult as f64) * delta;
    let kernel_prefactor = 2.0 / (2.0 * std::f64::consts::PI * h).powi(2)
        * delta.powi(2)
        * delta_t.powi(2);

    // probe set: lattice points on rings
    let mut probe_pts: Vec<(i64, i64)> = vec![(0, 0)];
    let rings = [0.6f64, 1.2, 1.8, 2.2, config.probe_radius];
    for (ri, &r) in rings.iter().enumerate() {
        let count = 8;
        for k in 0..count {
            let ang = std::f64::consts::TAU * (k as f64 + 0.5 * ri as f64) / count as f64;
            let px = ((r * sq * ang.cos()) / delta).round() as i64;
            let py = ((r * sq * ang.sin()) / delta).round() as i64;
            probe_pts.push((px.clamp(-gq, gq), py.clamp(-gq, gq)));
        }
    }
    probe_pts.dedup();

    // G₁ accumulation over T: inner-disk points get the full S-convolution
    // onto the X-grid; annulus points contribute only to the probe-based
    // tail certificate (direct window sums, far cheaper).
    let s_range: Vec<i64> = (-gs..=gs).collect();
    let g1_parts: Vec<(Vec<C64>, Vec<C64>)> = exec::map_slice(&t_points, |&(ti, tj)| {
        let t_val = (ti as f64 * delta, tj as f64 * delta);
        let in_inner = t_val.0 * t_val.0 + t_val.1 * t_val.1 <= r_t_in * r_t_in;

        // kernels: ker_s(s; τ) = e^{−s²/h + i s τ/h} a_α(ŝ) h^{α/2},
        //          ker_σ(σ; t) = e^{−σ²/h − i t σ/h} a_β(σ̂) h^{β/2}
        let mut ker_s = vec![vec![C64::new(0.0, 0.0); s_range.len()]; 3];
        let mut ker_sig = vec![vec![C64::new(0.0, 0.0); s_range.len()]; 3];
        for (k, &si) in s_range.iter().enumerate() {
            let s = si as f64 * delta;
            let gauss = (-s * s / h).exp();
            for alpha in 0..3usize {
                let a = ibp_coeff(alpha, s / sq) * h.powf(alpha as f64 / 2.0);
                ker_s[alpha][k] = C64::from_polar(gauss * a, s * t_val.1 / h);
                ker_sig[alpha][k] = C64::from_polar(gauss * a, -s * t_val.0 / h);
            }
        }
        let t_hat2 = (t_val.0 / sq).powi(2);
        let tau_hat2 = (t_val.1 / sq).powi(2);
        let w_t = C64::new(
            kernel_prefactor * (-(t_val.0 * t_val.0 + t_val.1 * t_val.1) / (4.0 * h)).exp()
                / ((1.0 + t_hat2) * (1.0 + tau_hat2)),
            0.0,
        );

        // E-planes for this T on the c'-grid (9 planes, row-contiguous)
        let mut planes: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); c_axis * c_axis]; 9];
        for ci in -gc..=gc {
            let (ui, vi) = (ci + ti / 2, ci - ti / 2);
            let row_base = ((ci + gc) as usize) * c_axis;
            for cj in -gc..=gc {
                let (uj, vj) = (cj + tj / 2, cj - tj / 2);
                let cu_alpha = C64::new(ui as f64 * delta, uj as f64 * delta) / (2.0 * h).sqrt();
                let cv_alpha = C64::new(vi as f64 * delta, vj as f64 * delta) / (2.0 * h).sqrt();
                let phase = (-(cv_alpha.conj() * cu_alpha)).exp();
                let cv = &coh[uidx(vi, vj)];
                let yy = &matvecs[uidx(ui, uj)];
                let col = (cj + gc) as usize;
                let mut acc = [C64::new(0.0, 0.0); 9];
                for n in 0..bsize {
                    let cvn = cv[n].conj();
                    let row = &yy[n * 9..n * 9 + 9];
                    for q in 0..9 {
                        acc[q] += row[q] * cvn;
                    }
                }
                for q in 0..9 {
                    if active[q] {
                        planes[q][row_base + col] = phase * acc[q];
                    }
                }
            }
        }

        if !in_inner {
            // certificate annulus: probe-window sums from the planes
            let probe_vals = probe_pts
                .iter()
                .map(|&(pi, pj)| {
                    let mut acc = C64::new(0.0, 0.0);
                    for alpha in 0..3usize {
                        for beta in 0..3usize {
                            if !active[alpha * 3 + beta] {
                                continue;
                            }
                            let plane = &planes[alpha * 3 + beta];
                            let mut sum = C64::new(0.0, 0.0);
                            for (ks, &si) in s_range.iter().enumerate() {
                                let row_base = ((pi + si + gc) as usize) * c_axis;
                                let mut row = C64::new(0.0, 0.0);
                                for (kt, &sj) in s_range.iter().enumerate() {
                                    row += ker_sig[beta][kt]
                                        * plane[row_base + (pj + sj + gc) as usize];
                                }
                                sum += ker_s[alpha][ks] * row;
                            }
                            acc += sum;
                        }
                    }
                    acc * w_t
                })
                .collect();
            return (Vec::new(), probe_vals);
        }

        // separable convolution, AXPY over contiguous rows
        let mut g_local = vec![C64::new(0.0, 0.0); x_axis * x_axis];
        let mut out0 = vec![C64::new(0.0, 0.0); x_axis * c_axis];
        for alpha in 0..3usize {
            for beta in 0..3usize {
                let q = alpha * 3 + beta;
                if !active[q] {
                    continue;
                }
                out0.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                // axis 0: out0[xi][·] = Σ_k ker_s[α][k] · plane[xi + s_k][·]
                for xi in 0..x_axis {
                    let dst = &mut out0[xi * c_axis..(xi + 1) * c_axis];
                    for (k, &si) in s_range.iter().enumerate() {
                        let ci = xi as i64 - gx + si + gc;
                        let src = &planes[q][(ci as usize) * c_axis..(ci as usize + 1) * c_axis];
                        let kv = ker_s[alpha][k];
                        for (d, s) in dst.iter_mut().zip(src.iter()) {
                            *d += kv * s;
                        }
                    }
                }
                // axis 1: g[xi][xj] += w_T Σ_k ker_σ[β][k] out0[xi][xj + s_k]
                for xi in 0..x_axis {
                    let row = &out0[xi * c_axis..(xi + 1) * c_axis];
                    let dst = &mut g_local[xi * x_axis..(xi + 1) * x_axis];
                    for (k, &si) in s_range.iter().enumerate() {
                        let off = (si + gs) as usize;
                        let kv = ker_sig[beta][k] * w_t;
                        for (d, s) in dst.iter_mut().zip(row[off..off + x_axis].iter()) {
                            *d += kv * s;
                        }
                    }
                }
            }
        }
        let probe_vals = probe_pts
            .iter()
            .map(|&(pi, pj)| g_local[((pi + gx) as usize) * x_axis + (pj + gx) as usize])
            .collect();
        (g_local, probe_vals)
    });

    let mut g1 = vec![C64::new(0.0, 0.0); x_axis * x_axis];
    let mut probe_tail = vec![C64::new(0.0, 0.0); probe_pts.len()];
    for (part, probes) in g1_parts.iter() {
        if !part.is_empty() {
            for (acc, v) in g1.iter_mut().zip(part.iter()) {
                *acc += *v;
            }
        } else {
            for (acc, v) in probe_tail.iter_mut().zip(probes.iter()) {
                *acc += *v;
            }
        }
    }
    let tail_change = probe_tail.iter().map(|c| c.norm()).fold(0.0, f64::max);

    // wick values on the X-grid: diagonal bisymbol of M
    let wick_vals: Vec<C64> = exec::map_indexed(x_axis * x_axis, |flat| {
        let i = (flat / x_axis) as i64 - gx;
        let j = (flat % x_axis) as i64 - gx;
        let cu = &coh[uidx(i, j)];
        let y = &matvecs[uidx(i, j)];
        let num: C64 = (0..bsize).map(|n| y[n * 9] * cu[n].conj()).sum();
        let a = C64::new(i as f64 * delta, j as f64 * delta) / (2.0 * h).sqrt();
        (-(a.conj() * a)).exp() * num
    });

    // heat of G₁ over the full plane (d = 1: D₁ is the whole phase plane):
    // Gaussian lattice sum with variance h/2 per axis
    let gh = to_grid(heat_radius);
    let mut heat_w = Vec::new();
    let mut heat_total = 0.0;
    for yi in -gh..=gh {
        for yj in -gh..=gh {
            let y2 = ((yi * yi + yj * yj) as f64) * delta * delta;
            let w = (-y2 / h).exp();
            heat_w.push(((yi, yj), w));
            heat_total += w;
        }
    }
    for hw in heat_w.iter_mut() {
        hw.1 /= heat_total;
    }

    // F = wick + G₁ − H_{h/2} G₁ on the quantization grid, tapered at the
    // coherent-faithfulness radius
    let r_window = (2.0 * config.window_alpha_fraction * nlev * h).sqrt();
    let taper_width = 0.7 * sq;
    let taper = |r: f64| -> f64 {
        if r <= r_window - taper_width {
            1.0
        } else if r >= r_window {
            0.0
        } else {
            let t = (r_window - r) / taper_width;
            (0.5 - 0.5 * (std::f64::consts::PI * t).cos()).clamp(0.0, 1.0)
        }
    };
    let q_axis = (2 * gq + 1) as usize;
    let values: Vec<C64> = exec::map_indexed(q_axis * q_axis, |flat| {
        let i = (flat / q_axis) as i64 - gq;
        let j = (flat % q_axis) as i64 - gq;
        let xflat = |a: i64, b: i64| -> usize {
            ((a + gx) as usize) * x_axis + (b + gx) as usize
        };
        let mut heated = C64::new(0.0, 0.0);
        for &((yi, yj), w) in &heat_w {
            heated += g1[xflat(i + yi, j + yj)] * C64::new(w, 0.0);
        }
        let raw = wick_vals[xflat(i, j)] + g1[xflat(i, j)] - heated;
        let r = (((i * i + j * j) as f64).sqrt()) * delta;
        raw * C64::new(taper(r), 0.0)
    });

    let probes = probe_pts
        .iter()
        .map(|&(pi, pj)| {
            let z = RVector::from_column_slice(&[pi as f64 * delta, pj as f64 * delta]);
            let v = values[((pi + gq) as usize) * q_axis + (pj + gq) as usize];
            (z, v)
        })
        .collect();

    Ok(ReconstructedSymbol {
        lattice_min: -(gq as f64) * delta,
        step: delta,
        n_axis: q_axis,
        values,
        probes,
        tail_change,
        h,
    })
}

/// Composition through reconstruction: K with Op(K) = Op(F)·Op(G), together
/// with the operator-distance report of the round trip.
pub struct CompositionResult {
    pub symbol: ReconstructedSymbol,
    /// ‖Op(K) − Op(F)Op(G)‖ on the safe subblock.
    pub requantization_distance: f64,
    pub margin: usize,
}

pub fn compose_symbols(
    f: &Symbol,
    g: &Symbol,
    rep: &Arc<GaussianRep>,
    config: &ReconstructionConfig,
    margin: usize,
) -> Result<CompositionResult> {
    let op_f = crate::quantize::weyl_quantize(f, rep)?;
    let op_g = crate::quantize::weyl_quantize(g, rep)?;
    let product = op_f.mul(&op_g)?;
    let symbol = reconstruct_symbol(&product, rep, config)?;
    let requant = symbol.quantize(rep)?;
    let set = product.safe_set(margin);
    let diff = (select_submatrix(requant.matrix(), &set)
        - select_submatrix(product.matrix(), &set))
    .norm();
    Ok(CompositionResult {
        symbol,
        requantization_distance: diff,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::{weyl_quantize, weyl_translate, wick_symbol};
    use approx::assert_relative_eq;

    fn rep1(level: usize, h: f64) -> Arc<GaussianRep> {
        Arc::new(GaussianRep::new(1, level, h).unwrap())
    }

    #[test]
    fn ibp_coefficients_satisfy_defining_identity() {
        // Σ_α (−1)^α ∂_ŝ^α [a_α(ŝ) K(ŝ)] = (1 + τ̂²) K(ŝ) with
        // K(ŝ) = e^{−ŝ² + i ŝ τ̂}, checked by central differences.
        let k = |s: f64, tau: f64| C64::new(0.0, s * tau).exp() * C64::new((-s * s).exp(), 0.0);
        let term = |order: usize, s: f64, tau: f64| ibp_coeff(order, s) * k(s, tau);
        let eps = 1e-4;
        for &(s, tau) in &[(0.3, 0.7), (-1.1, 0.4), (0.9, -1.6), (0.0, 2.0)] {
            let d1 = (term(1, s + eps, tau) - term(1, s - eps, tau)) / (2.0 * eps);
            let d2 = (term(2, s + eps, tau) + term(2, s - eps, tau) - term(2, s, tau) * 2.0)
                / (eps * eps);
            let lhs = term(0, s, tau) - d1 + d2;
            let rhs = k(s, tau) * (1.0 + tau * tau);
            assert!(
                (lhs - rhs).norm() < 1e-6 * (1.0 + rhs.norm()),
                "identity fails at ({s},{tau}): {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn bisymbol_identity_and_diagonal() {
        let rep = rep1(24, 0.8);
        let id = OperatorMatrix::identity(rep.clone());
        for pts in [[0.3, -0.2, 0.7, 0.4], [0.0, 0.0, 1.0, -1.0]] {
            let x = PhaseVector::from_slice(&pts[..2]);
            let y = PhaseVector::from_slice(&pts[2..]);
            let v = bisymbol(&id, &x, &y).unwrap();
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-10);
        }
        // diagonal equals the Wick symbol
        let f = Symbol::cosine(RVector::from_column_slice(&[1.0, -0.3]), 0.2);
        let op = weyl_quantize(&f, &rep).unwrap();
        let wick = wick_symbol(&op).unwrap();
        for zc in [[0.2, 0.5], [-0.6, 0.1]] {
            let z = RVector::from_column_slice(&zc);
            let x = PhaseVector::from_flat(&z);
            let diag = bisymbol(&op, &x, &x).unwrap();
            assert!((diag - wick.eval(&z)).norm() < 1e-8);
        }
    }

    #[test]
    fn bisymbol_growth_and_holomorphy() {
        let rep = rep1(28, 1.0);
        let f = Symbol::cosine(RVector::from_column_slice(&[0.8, 0.5]), 0.0);
        let op = weyl_quantize(&f, &rep).unwrap();
        let (norm, _) = op.weyl_norm(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let x = PhaseVector::from_slice(&[
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            ]);
            let y = PhaseVector::from_slice(&[
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            ]);
            let v = bisymbol(&op, &x, &y).unwrap();
            let bound = norm * (x.sub(&y).norm_squared() / 4.0).exp();
            assert!(
                v.norm() <= bound * (1.0 + 1e-6) + 1e-9,
                "growth bound violated: {} > {bound}",
                v.norm()
            );
        }
        let x = PhaseVector::from_slice(&[0.4, -0.3]);
        let y = PhaseVector::from_slice(&[0.1, 0.6]);
        let cr = bisymbol_holomorphy_residual(&op, &x, &y).unwrap();
        assert!(cr < 1e-5, "Cauchy–Riemann residual {cr}");
    }

    #[test]
    fn bisymbol_underflow_floor() {
        let rep = rep1(12, 0.5);
        let id = OperatorMatrix::identity(rep.clone());
        let x = PhaseVector::from_slice(&[12.0, 0.0]);
        let y = PhaseVector::from_slice(&[-12.0, 0.0]);
        assert!(bisymbol(&id, &x, &y).is_err());
    }

    #[test]
    fn bisymbol_linear_operator_against_translation_identity() {
        // bisymbol of a Weyl translation is an explicit affine exponential
        let h = 0.8;
        let rep = rep1(30, h);
        let w = PhaseVector::from_slice(&[0.5, -0.3]);
        let v = weyl_translate(&w, &rep, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let x = PhaseVector::from_slice(&[
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let y = PhaseVector::from_slice(&[
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let got = bisymbol(&v, &x, &y).unwrap();
            let sigma = crate::phase::symplectic_form(&w, &x).unwrap();
            let num = crate::rep::coherent_overlap_exact(&x.add(&w), &y, h);
            let den = crate::rep::coherent_overlap_exact(&x, &y, h);
            let want = C64::from_polar(1.0, sigma / (2.0 * h)) * num / den;
            assert!((got - want).norm() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn profile_of_identity_and_position() {
        let rep = rep1(20, 0.9);
        let a = QuadraticForm::identity(1);
        let id = OperatorMatrix::identity(rep.clone());
        let prof = beals_seminorm_estimate(&id, &a, 2, 12, 4, 3).unwrap();
        assert_relative_eq!(prof.orders[0], 1.0, epsilon = 1e-10);
        assert!(prof.orders[1] < 1e-10);
        assert!(prof.orders[2] < 1e-8);

        // M = Op(x): ad(L_h V) Op(x) = (h/i) V_x I, so C₁ = sup |V_x|/|V| = 1
        let op = weyl_quantize(&Symbol::linear(RVector::from_column_slice(&[1.0, 0.0])), &rep)
            .unwrap();
        let prof = beals_seminorm_estimate(&op, &a, 1, 64, 4, 3).unwrap();
        assert!(prof.orders[1] <= 1.0 + 1e-9);
        assert!(prof.orders[1] > 0.95, "C₁ = {}", prof.orders[1]);
    }

    #[test]
    fn profile_of_trig_operator_bounded_by_cv_chain() {
        let h = 0.6;
        let rep = rep1(24, h);
        let freq = RVector::from_column_slice(&[1.3, -0.4]);
        let f = Symbol::cosine(freq.clone(), 0.1);
        let op = weyl_quantize(&f, &rep).unwrap();
        let a = QuadraticForm::identity(1);
        let prof = beals_seminorm_estimate(&op, &a, 2, 32, 6, 9).unwrap();
        let fnorm = freq.norm();
        let cv = crate::phase::cv_bound_factor(&a, h, crate::phase::CV_CONSTANT).unwrap();
        for (m, c) in prof.orders.iter().enumerate() {
            let bound = fnorm.max(1.0).powi(m as i32) * cv;
            assert!(*c <= bound * 1.05, "order {m}: estimate {c} exceeds {bound}");
        }
    }

    #[test]
    fn diagonal_derivative_bound() {
        // |d_diag S_h(M)(X,Y)(V)| ≤ C₁ e^{|X−Y|²/4h} Q(V)^{1/2}
        let h = 0.9;
        let rep = rep1(26, h);
        let f = Symbol::cosine(RVector::from_column_slice(&[0.9, 0.2]), 0.4);
        let op = weyl_quantize(&f, &rep).unwrap();
        let a = QuadraticForm::identity(1);
        let prof = beals_seminorm_estimate(&op, &a, 1, 32, 6, 11).unwrap();
        let vdir = PhaseVector::from_slice(&[0.6, 0.8]); // Q_A-unit
        let l = weyl_generator(&vdir, &rep).unwrap();
        let comm = l.commutator(&op).unwrap().scale(C64::new(0.0, 1.0 / h));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = PhaseVector::from_slice(&[
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let y = PhaseVector::from_slice(&[
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let d = bisymbol(&comm, &x, &y).unwrap();
            let bound =
                prof.orders[1] * (x.sub(&y).norm_squared() / (4.0 * h)).exp() * 1.05 + 1e-9;
            assert!(d.norm() <= bound, "diag-derivative bound: {} > {bound}", d.norm());
        }
    }

    #[test]
    fn reconstruct_constant_operator() {
        // the operator is c·P_N; probe drift decays with N
        let h = 0.5;
        let rep = rep1(16, h);
        let c = C64::new(0.7, 0.0);
        let id = OperatorMatrix::identity(rep.clone()).scale(c);
        let cfg = ReconstructionConfig {
            probes_only: true,
            ..Default::default()
        };
        let rec = reconstruct_symbol(&id, &rep, &cfg).unwrap();
        for (z, v) in &rec.probes {
            assert!((*v - c).norm() < 2e-3, "drift at {z:?}: {v}");
            if z.norm() < 1e-12 {
                assert!((*v - c).norm() < 1e-5, "origin drift: {v}");
            }
        }
        assert!(rec.tail_change < 1e-3, "tail {:.3e}", rec.tail_change);
    }

    #[test]
    fn reconstruct_cosine_roundtrip() {
        let h = 0.5;
        let rep = rep1(24, h);
        let a = RVector::from_column_slice(&[0.8, 0.6]);
        let f = Symbol::cosine(a.clone(), 0.3);
        let op = weyl_quantize(&f, &rep).unwrap();
        // full grid: the heat-identity stencil needs room beyond the probes
        let cfg = ReconstructionConfig {
            probe_radius: 2.0,
            ..Default::default()
        };
        let rec = reconstruct_symbol(&op, &rep, &cfg).unwrap();
        let mut worst = 0.0f64;
        for (z, v) in &rec.probes {
            worst = worst.max((v - f.eval(z)).norm());
        }
        assert!(worst < 1e-3, "probe distance {worst}");
        // H_{h/2} F = wick(M): discrete lattice heat vs the Wick symbol on
        // probes where the heat stencil stays on the grid
        let wick = wick_symbol(&op).unwrap();
        let mut checked = 0;
        for (z, _) in rec.probes.iter() {
            if z.norm() > 0.9 * h.sqrt() {
                continue;
            }
            let (i, j) = rec.nearest_index(z);
            let heated = rec.lattice_heat_at(i, j, h / 2.0);
            let d = (heated - wick.eval(z)).norm();
            assert!(d < 2e-3, "heat identity residual {d} at {z:?}");
            checked += 1;
        }
        assert!(checked >= 5, "too few heat-identity probes");
    }

    #[test]
    fn reconstruct_translation_roundtrip() {
        // re-quantization on a deep safe subblock: the quantization weight
        // of low degrees stays inside the faithful region
        let h = 0.5;
        let level = 32;
        let rep = rep1(level, h);
        let x0 = PhaseVector::from_slice(&[0.4, -0.25]);
        let v = weyl_translate(&x0, &rep, 1e-10).unwrap();
        let cfg = ReconstructionConfig {
            t_radius: 7.5,
            t_radius_outer: 9.0,
            ..Default::default()
        };
        let rec = reconstruct_symbol(&v, &rep, &cfg).unwrap();
        let requant = rec.quantize(&rep).unwrap();
        let set = v.safe_set(level - 6);
        let diff = (select_submatrix(requant.matrix(), &set)
            - select_submatrix(v.matrix(), &set))
        .norm();
        assert!(diff < 1e-3, "re-quantization distance {diff}");
        // probes match the closed-form symbol e^{−iσ(Z, X₀)/h}
        let wf = x0.flat();
        for (z, val) in &rec.probes {
            let sigma = crate::phase::symplectic_form_flat(z, &wf);
            let want = C64::from_polar(1.0, -sigma / h);
            assert!((*val - want).norm() < 1e-3, "probe {z:?}");
        }
    }

    #[test]
    fn compose_with_identity_returns_first_factor() {
        let h = 0.5;
        let level = 32;
        let rep = rep1(level, h);
        let f = Symbol::cosine(RVector::from_column_slice(&[0.7, -0.5]), 0.1);
        let one = Symbol::constant(1, C64::new(1.0, 0.0));
        let cfg = ReconstructionConfig {
            t_radius: 7.5,
            t_radius_outer: 9.0,
            ..Default::default()
        };
        let res = compose_symbols(&f, &one, &rep, &cfg, level - 6).unwrap();
        let mut worst = 0.0f64;
        for (z, v) in &res.symbol.probes {
            worst = worst.max((v - f.eval(z)).norm());
        }
        assert!(worst < 1e-3, "K vs F distance {worst}");
        assert!(
            res.requantization_distance < 2e-3,
            "requant {}",
            res.requantization_distance
        );
    }

    #[test]
    fn compose_cosines_roundtrip_and_class_bound() {
        let h = 0.5;
        let level = 32;
        let rep = rep1(level, h);
        let f = Symbol::cosine(RVector::from_column_slice(&[0.8, 0.3]), 0.0);
        let g = Symbol::cosine(RVector::from_column_slice(&[-0.4, 0.7]), 0.5);
        let cfg = ReconstructionConfig {
            t_radius: 7.5,
            t_radius_outer: 9.0,
            ..Default::default()
        };
        let res = compose_symbols(&f, &g, &rep, &cfg, level - 6).unwrap();
        assert!(
            res.requantization_distance < 1e-3,
            "Op(K) vs Op(F)Op(G): {}",
            res.requantization_distance
        );
        // Beals profile of the product wrt 4Q ≤ product of profiles wrt Q
        let a = QuadraticForm::identity(1);
        let a4 = a.scaled(4.0).unwrap();
        let op_f = weyl_quantize(&f, &rep).unwrap();
        let op_g = weyl_quantize(&g, &rep).unwrap();
        let prod = op_f.mul(&op_g).unwrap();
        let p_prod = beals_seminorm_estimate(&prod, &a4, 2, 24, 8, 13).unwrap();
        let p_f = beals_seminorm_estimate(&op_f, &a, 2, 24, 8, 13).unwrap();
        let p_g = beals_seminorm_estimate(&op_g, &a, 2, 24, 8, 13).unwrap();
        assert!(
            p_prod.class_norm() <= p_f.class_norm() * p_g.class_norm() * 1.1,
            "composition class bound: {} vs {}",
            p_prod.class_norm(),
            p_f.class_norm() * p_g.class_norm()
        );
    }

    #[test]
    fn two_level_consistency() {
        // reconstruction at N and N+8 agree on near probes
        let h = 0.5;
        let a = RVector::from_column_slice(&[1.0, 0.0]);
        let f = Symbol::cosine(a, 0.0);
        let cfg = ReconstructionConfig {
            probes_only: true,
            probe_radius: 1.5,
            ..Default::default()
        };
        let mut vals = Vec::new();
        for level in [20usize, 28] {
            let rep = rep1(level, h);
            let op = weyl_quantize(&f, &rep).unwrap();
            let rec = reconstruct_symbol(&op, &rep, &cfg).unwrap();
            vals.push(
                rec.probes
                    .iter()
                    .map(|(z, v)| (z.clone(), *v))
                    .collect::<Vec<_>>(),
            );
        }
        for ((z1, v1), (z2, v2)) in vals[0].iter().zip(vals[1].iter()) {
            assert!((z1 - z2).norm() < 1e-12, "probe sets differ");
            // the 1e-4 agreement holds on the coherent-scale window; the
            // outer ring converges more slowly
            let tol = if z1.norm() <= 1.3 * h.sqrt() { 1e-4 } else { 5e-4 };
            assert!(
                (v1 - v2).norm() < tol,
                "levels disagree at {z1:?}: {v1} vs {v2}"
            );
        }
    }
}
