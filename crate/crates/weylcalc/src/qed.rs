//! Truncated spin-boson model: fixed spin-1/2 particles coupled to a
//! quantized transverse field on a finite mode set.
//!
//! The one-photon space is discretized on wave-vector nodes with two
//! polarizations each; H ≅ R^{n_p} with n_p = 2·#modes, phase space R^{2n_p}
//! identified with the complexification H_C. The field components are linear
//! symbols Z ↦ Z·B_{jxt} with
//! B_{jxt}(k) = i χ(|k|) |k|^{1/2} (2π)^{−3/2} e^{i(t|k| − k·x)} (k∧e_j)/|k|,
//! the helicity J acts per mode as the quarter-turn on the polarization
//! plane, and the free flow rotates each mode plane by the photon frequency.
//! The Hamiltonian is H(h) = h·dΓ(ω)⊗I + h·Σ_{λm}(β_m + Op(B_m(x_λ)))⊗σ_m^{[λ]},
//! and the time-dependent form Q_t accumulates the free field symbols along
//! the evolution.

use crate::error::{Result, WeylError};
use crate::phase::{PhaseVector, QuadraticForm, SymplecticMap, f_matrix};
use crate::quantize::{OperatorMatrix, segal_field, select_submatrix, weyl_generator};
use crate::rep::{GaussianRep, kron};
use crate::{C64, CMatrix, RMatrix, RVector};
use std::sync::Arc;

/// Smooth cutoff profile χ(|k|): a Gaussian bump, optionally with a hard
/// infrared cutoff reproducing the older regime, or identically zero to
/// decouple the field.
#[derive(Debug, Clone)]
pub struct CutoffProfile {
    pub gaussian_scale: f64,
    pub infrared_min: Option<f64>,
    pub vanishing: bool,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self {
            gaussian_scale: 1.0,
            infrared_min: None,
            vanishing: false,
        }
    }
}

impl CutoffProfile {
    pub fn eval(&self, k_norm: f64) -> f64 {
        if self.vanishing {
            return 0.0;
        }
        if let Some(min) = self.infrared_min {
            if k_norm < min {
                return 0.0;
            }
        }
        (-(k_norm / self.gaussian_scale).powi(2)).exp()
    }
}

/// One discretized wave vector with its quadrature weight and orthonormal
/// transverse polarization pair.
#[derive(Debug, Clone)]
pub struct Mode {
    pub k: RVector,
    pub weight: f64,
    pub eps1: RVector,
    pub eps2: RVector,
}

/// Finite transverse mode set.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub cutoff: CutoffProfile,
}

impl ModeSet {
    /// Builds polarization pairs by Gram–Schmidt against each wave vector.
    pub fn new(kpoints: &[([f64; 3], f64)], cutoff: CutoffProfile) -> Result<Self> {
        let mut modes = Vec::with_capacity(kpoints.len());
        for (karr, w) in kpoints {
            let k = RVector::from_column_slice(karr);
            if k.norm() < 1e-12 {
                return Err(WeylError::InvalidArgument(
                    "mode with k = 0 excluded".into(),
                ));
            }
            if *w <= 0.0 {
                return Err(WeylError::InvalidArgument(
                    "mode weights must be positive".into(),
                ));
            }
            let khat = &k / k.norm();
            // reference axis least aligned with k
            let mut ref_axis = RVector::zeros(3);
            let amin = (0..3)
                .min_by(|&a, &b| khat[a].abs().partial_cmp(&khat[b].abs()).unwrap())
                .unwrap();
            ref_axis[amin] = 1.0;
            let mut e1 = &ref_axis - &khat * khat.dot(&ref_axis);
            e1 /= e1.norm();
            let e2 = cross(&khat, &e1);
            modes.push(Mode {
                k,
                weight: *w,
                eps1: e1,
                eps2: e2,
            });
        }
        let set = Self { modes, cutoff };
        set.check_invariants()?;
        Ok(set)
    }

    fn check_invariants(&self) -> Result<()> {
        for m in &self.modes {
            if m.k.dot(&m.eps1).abs() > 1e-12 * m.k.norm()
                || m.k.dot(&m.eps2).abs() > 1e-12 * m.k.norm()
            {
                return Err(WeylError::InvalidArgument(
                    "polarizations must be transverse".into(),
                ));
            }
            if (m.eps1.norm() - 1.0).abs() > 1e-12
                || (m.eps2.norm() - 1.0).abs() > 1e-12
                || m.eps1.dot(&m.eps2).abs() > 1e-12
            {
                return Err(WeylError::InvalidArgument(
                    "polarizations must be orthonormal".into(),
                ));
            }
        }
        Ok(())
    }

    /// Real dimension n_p = 2·#modes of the one-photon space.
    pub fn field_dims(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.modes[i].k.norm()
    }

    /// Complex coefficients of the field B_{jxt} in the orthonormal
    /// (mode, polarization) basis: √w_i · (B(k_i)·ε_i^{(s)}).
    pub fn field_coefficients(&self, j: usize, x: &[f64; 3], t: f64) -> Result<Vec<C64>> {
        if j >= 3 {
            return Err(WeylError::InvalidArgument("axis j must be 0..3".into()));
        }
        let mut e_j = RVector::zeros(3);
        e_j[j] = 1.0;
        let xv = RVector::from_column_slice(x);
        let norm3 = (2.0 * std::f64::consts::PI).powf(-1.5);
        let mut out = Vec::with_capacity(self.field_dims());
        for m in &self.modes {
            let kn = m.k.norm();
            let chi = self.cutoff.eval(kn);
            let dir = cross(&m.k, &e_j) / kn; // (k ∧ e_j)/|k|, transverse
            let phase = C64::from_polar(1.0, t * kn - m.k.dot(&xv));
            let amp = C64::new(0.0, 1.0) * chi * kn.sqrt() * norm3 * phase;
            let sw = m.weight.sqrt();
            out.push(amp * dir.dot(&m.eps1) * sw);
            out.push(amp * dir.dot(&m.eps2) * sw);
        }
        Ok(out)
    }

    /// Flat phase-space vector (Re parts; Im parts) of a complex field.
    pub fn complex_to_phase(&self, coeff: &[C64]) -> PhaseVector {
        let n = coeff.len();
        PhaseVector {
            x: RVector::from_fn(n, |i, _| coeff[i].re),
            xi: RVector::from_fn(n, |i, _| coeff[i].im),
        }
    }

    pub fn field_phase_vector(&self, j: usize, x: &[f64; 3], t: f64) -> Result<PhaseVector> {
        Ok(self.complex_to_phase(&self.field_coefficients(j, x, t)?))
    }

    /// Helicity J: per mode, the quarter turn ε₁ ↦ ε₂ ↦ −ε₁ on the
    /// polarization coefficients, extended complex-linearly. J² = −I.
    pub fn helicity_apply(&self, coeff: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); coeff.len()];
        for i in 0..self.modes.len() {
            out[2 * i] = -coeff[2 * i + 1];
            out[2 * i + 1] = coeff[2 * i];
        }
        out
    }

    /// Free field flow: rotation by tω(kᵢ) in each (q, p) mode plane,
    /// q_t = cos·q + sin·p, p_t = −sin·q + cos·p (multiplication by
    /// e^{−itω} on H_C). Orthogonal and symplectic; χ_{t+s} = χ_t χ_s.
    pub fn free_flow(&self, t: f64) -> SymplecticMap {
        let np = self.field_dims();
        let mut m = RMatrix::zeros(2 * np, 2 * np);
        for (i, mode) in self.modes.iter().enumerate() {
            let th = t * mode.k.norm();
            let (c, s) = (th.cos(), th.sin());
            for pol in 0..2 {
                let q = 2 * i + pol;
                let p = np + q;
                m[(q, q)] = c;
                m[(q, p)] = s;
                m[(p, q)] = -s;
                m[(p, p)] = c;
            }
        }
        SymplecticMap::new(m).expect("mode rotations are symplectic")
    }
}

fn cross(a: &RVector, b: &RVector) -> RVector {
    RVector::from_column_slice(&[
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// Fixed spin-1/2 particles in a constant external field.
#[derive(Debug, Clone)]
pub struct SpinRegister {
    pub positions: Vec<[f64; 3]>,
    pub beta: [f64; 3],
}

impl SpinRegister {
    pub fn new(positions: Vec<[f64; 3]>, beta: [f64; 3]) -> Result<Self> {
        if positions.is_empty() {
            return Err(WeylError::InvalidArgument(
                "at least one particle required".into(),
            ));
        }
        Ok(Self { positions, beta })
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn spin_dim(&self) -> usize {
        1usize << self.count()
    }
}

/// Pauli matrices σ₁, σ₂, σ₃ (index 0..3).
pub fn pauli(j: usize) -> CMatrix {
    let (z, o, i) = (
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(0.0, 1.0),
    );
    match j {
        0 => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        1 => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// σ_m acting on the λ-th of n spins.
pub fn pauli_at(m: usize, lambda: usize, n: usize) -> CMatrix {
    let mut acc = CMatrix::identity(1, 1);
    for site in 0..n {
        let factor = if site == lambda {
            pauli(m)
        } else {
            CMatrix::identity(2, 2)
        };
        acc = kron(&acc, &factor);
    }
    acc
}

/// Time-dependent nonnegative form
/// Q_t = 3N|t| Σ_{mλ} ∫ B_m^{free}(x_λ, s)·B_m^{free}(x_λ, s)ᵀ ds.
#[derive(Debug, Clone)]
pub struct QtForm {
    pub t: f64,
    pub form: QuadraticForm,
}

/// The assembled model: photon representation tensored with the spin
/// register, with the Hamiltonian eigendecomposition cached for reuse
/// across evolution times.
pub struct QedSystem {
    pub modes: ModeSet,
    pub register: SpinRegister,
    pub rep: Arc<GaussianRep>,
    pub h: f64,
    h_ph: CMatrix,
    h_int: OperatorMatrix,
    h_full: OperatorMatrix,
    eig_vals: RVector,
    eig_vecs: CMatrix,
}

impl QedSystem {
    pub fn new(
        modes: ModeSet,
        register: SpinRegister,
        n_max: usize,
        h: f64,
        ceiling: usize,
    ) -> Result<Self> {
        let np = modes.field_dims();
        let spin_dim = register.spin_dim();
        let photon_dim = (n_max + 1).pow(np as u32);
        let total = photon_dim * spin_dim;
        if total > ceiling {
            return Err(WeylError::CeilingExceeded {
                requested: total,
                ceiling,
            });
        }
        let rep = Arc::new(GaussianRep::new(np, n_max, h)?);

        // photon Hamiltonian h·dΓ(ω): diagonal on the Hermite basis
        let mut h_ph = CMatrix::zeros(photon_dim, photon_dim);
        for b in 0..photon_dim {
            let midx = rep.multi_index(b);
            let energy: f64 = midx
                .iter()
                .enumerate()
                .map(|(axis, &n)| modes.omega(axis / 2) * n as f64)
                .sum();
            h_ph[(b, b)] = C64::new(h * energy, 0.0);
        }

        // interaction Σ_{λm} (β_m + Op(B_m(x_λ))) ⊗ σ_m^{[λ]}
        let nsp = register.count();
        let mut h_int = CMatrix::zeros(total, total);
        let eye_ph = CMatrix::identity(photon_dim, photon_dim);
        for (lambda, pos) in register.positions.iter().enumerate() {
            for m in 0..3 {
                let field = modes.field_phase_vector(m, pos, 0.0)?;
                let op = segal_field(&field, &rep)?;
                let photon_part = op.matrix() + &eye_ph * C64::new(register.beta[m], 0.0);
                h_int += kron(&photon_part, &pauli_at(m, lambda, nsp));
            }
        }
        let h_int = OperatorMatrix::with_spin(h_int, rep.clone(), spin_dim)?;

        let full = kron(&h_ph, &CMatrix::identity(spin_dim, spin_dim))
            + h_int.matrix() * C64::new(h, 0.0);
        let full = OperatorMatrix::with_spin(full, rep.clone(), spin_dim)?;
        let herm = full.hermiticity_residual();
        if herm > 1e-12 {
            return Err(WeylError::NotSymmetric {
                residual: herm,
                tol: 1e-12,
            });
        }
        let sym = (full.matrix() + full.matrix().adjoint()) * C64::new(0.5, 0.0);
        let eig = sym.symmetric_eigen();
        Ok(Self {
            modes,
            register,
            rep,
            h,
            h_ph,
            h_int,
            h_full: full,
            eig_vals: eig.eigenvalues,
            eig_vecs: eig.eigenvectors,
        })
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.h_full
    }

    pub fn interaction(&self) -> &OperatorMatrix {
        &self.h_int
    }

    pub fn spin_dim(&self) -> usize {
        self.register.spin_dim()
    }

    pub fn total_dim(&self) -> usize {
        self.h_full.total_dim()
    }

    /// e^{−itH(h)/h}.
    pub fn propagator(&self, t: f64) -> CMatrix {
        let n = self.total_dim();
        let phases = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::from_polar(1.0, -t * self.eig_vals[i] / self.h)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        &self.eig_vecs * phases * self.eig_vecs.adjoint()
    }

    /// Heisenberg evolution e^{itH/h} M e^{−itH/h}.
    pub fn evolve(&self, op: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
        let u = self.propagator(t);
        OperatorMatrix::with_spin(
            u.adjoint() * op.matrix() * &u,
            self.rep.clone(),
            self.spin_dim(),
        )
    }

    /// e^{itH_ph/h} ⊗ I (diagonal).
    pub fn free_propagator_inverse(&self, t: f64) -> CMatrix {
        let pd = self.h_ph.nrows();
        let ph = CMatrix::from_fn(pd, pd, |i, j| {
            if i == j {
                C64::from_polar(1.0, t * self.h_ph[(i, i)].re / self.h)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        kron(&ph, &CMatrix::identity(self.spin_dim(), self.spin_dim()))
    }

    /// Reduced propagator U_h^{red}(t) = [e^{itH_ph/h}⊗I] e^{−itH(h)/h}.
    pub fn reduced_propagator(&self, t: f64) -> Result<OperatorMatrix> {
        let u = self.free_propagator_inverse(t) * self.propagator(t);
        OperatorMatrix::with_spin(u, self.rep.clone(), self.spin_dim())
    }

    /// Residual of dU/dt = −i H_int^{free}(t) U by central differences.
    pub fn reduced_propagator_derivative_residual(&self, t: f64, dt: f64) -> Result<f64> {
        let up = self.reduced_propagator(t + dt)?;
        let um = self.reduced_propagator(t - dt)?;
        let du = (up.matrix() - um.matrix()) / C64::new(2.0 * dt, 0.0);
        let u = self.reduced_propagator(t)?;
        let rhs = self.h_int_free(t)?.matrix() * u.matrix() * C64::new(0.0, -1.0);
        let scale = rhs.norm().max(1.0);
        Ok((du - rhs).norm() / scale)
    }

    /// H_int^{free}(t) = Σ_{λm} (β_m + B_m^{free}(x_λ, t)) ⊗ σ_m^{[λ]}.
    pub fn h_int_free(&self, t: f64) -> Result<OperatorMatrix> {
        let photon_dim = self.h_ph.nrows();
        let nsp = self.register.count();
        let eye_ph = CMatrix::identity(photon_dim, photon_dim);
        let mut total = CMatrix::zeros(self.total_dim(), self.total_dim());
        for (lambda, pos) in self.register.positions.iter().enumerate() {
            for m in 0..3 {
                let field = self.modes.field_phase_vector(m, pos, t)?;
                let op = segal_field(&field, &self.rep)?;
                let photon_part = op.matrix() + &eye_ph * C64::new(self.register.beta[m], 0.0);
                total += kron(&photon_part, &pauli_at(m, lambda, nsp));
            }
        }
        OperatorMatrix::with_spin(total, self.rep.clone(), self.spin_dim())
    }

    /// Field component operator ⊗ I at time t (free symbol).
    pub fn field_operator(&self, j: usize, x: &[f64; 3], t: f64) -> Result<OperatorMatrix> {
        let field = self.modes.field_phase_vector(j, x, t)?;
        self.tensor_with_spin_identity(&segal_field(&field, &self.rep)?)
    }

    /// Electric component: the helicity-rotated field.
    pub fn electric_operator(&self, j: usize, x: &[f64; 3], t: f64) -> Result<OperatorMatrix> {
        let coeff = self.modes.field_coefficients(j, x, t)?;
        let rotated = self.modes.helicity_apply(&coeff);
        let pv = self.modes.complex_to_phase(&rotated);
        self.tensor_with_spin_identity(&segal_field(&pv, &self.rep)?)
    }

    pub fn tensor_with_spin_identity(&self, op: &OperatorMatrix) -> Result<OperatorMatrix> {
        OperatorMatrix::with_spin(
            kron(op.matrix(), &CMatrix::identity(self.spin_dim(), self.spin_dim())),
            self.rep.clone(),
            self.spin_dim(),
        )
    }

    /// Photon number dΓ(I) ⊗ I.
    pub fn photon_number(&self) -> OperatorMatrix {
        let pd = self.h_ph.nrows();
        let n_ph = CMatrix::from_fn(pd, pd, |i, j| {
            if i == j {
                C64::new(self.rep.degree(i) as f64, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        OperatorMatrix::with_spin(
            kron(&n_ph, &CMatrix::identity(self.spin_dim(), self.spin_dim())),
            self.rep.clone(),
            self.spin_dim(),
        )
        .unwrap()
    }

    /// Spin observable I ⊗ σ_j^{[λ]}.
    pub fn spin_observable(&self, j: usize, lambda: usize) -> OperatorMatrix {
        let pd = self.h_ph.nrows();
        OperatorMatrix::with_spin(
            kron(
                &CMatrix::identity(pd, pd),
                &pauli_at(j, lambda, self.register.count()),
            ),
            self.rep.clone(),
            self.spin_dim(),
        )
        .unwrap()
    }

    /// Photon-side generator L_h(V) ⊗ I.
    pub fn generator(&self, v: &PhaseVector) -> Result<OperatorMatrix> {
        self.tensor_with_spin_identity(&weyl_generator(v, &self.rep)?)
    }

    /// Q_t assembled by adaptive Simpson on the Gram integrand
    /// Σ_{mλ} v_{mλs} v_{mλs}ᵀ; PSD by construction, Q_0 = 0.
    pub fn qt_form(&self, t: f64) -> Result<QtForm> {
        let np = self.modes.field_dims();
        let dim = 2 * np;
        if t == 0.0 {
            return Ok(QtForm {
                t,
                form: QuadraticForm::new(RMatrix::zeros(dim, dim))?,
            });
        }
        let integrand = |s: f64| -> Result<RMatrix> {
            let mut g = RMatrix::zeros(dim, dim);
            for pos in &self.register.positions {
                for m in 0..3 {
                    let v = self.modes.field_phase_vector(m, pos, s)?.flat();
                    for i in 0..dim {
                        for j in 0..dim {
                            g[(i, j)] += v[i] * v[j];
                        }
                    }
                }
            }
            Ok(g)
        };
        let (lo, hi) = if t > 0.0 { (0.0, t) } else { (t, 0.0) };
        let integral = adaptive_simpson_matrix(&integrand, lo, hi, 1e-8, 24)?;
        let prefactor = 3.0 * self.register.count() as f64 * t.abs();
        let a_t = integral * prefactor;
        let a_t = (&a_t + a_t.transpose()) * 0.5;
        Ok(QtForm {
            t,
            form: QuadraticForm::new(a_t)?,
        })
    }

    /// Brute-force Riemann oracle for the Q_t assembly.
    pub fn qt_form_riemann(&self, t: f64, steps: usize) -> Result<RMatrix> {
        let np = self.modes.field_dims();
        let dim = 2 * np;
        let (lo, hi) = if t > 0.0 { (0.0, t) } else { (t, 0.0) };
        let ds = (hi - lo) / steps as f64;
        let mut acc = RMatrix::zeros(dim, dim);
        for step in 0..steps {
            let s = lo + (step as f64 + 0.5) * ds;
            for pos in &self.register.positions {
                for m in 0..3 {
                    let v = self.modes.field_phase_vector(m, pos, s)?.flat();
                    for i in 0..dim {
                        for j in 0..dim {
                            acc[(i, j)] += v[i] * v[j] * ds;
                        }
                    }
                }
            }
        }
        Ok(acc * (3.0 * self.register.count() as f64 * t.abs()))
    }

    /// N_t(V) = Σ_{jλ} |V·B_{j,x_λ,t}| of the commutator estimate.
    pub fn n_t(&self, v: &PhaseVector, t: f64) -> Result<f64> {
        let vf = v.flat();
        let mut total = 0.0;
        for pos in &self.register.positions {
            for m in 0..3 {
                let b = self.modes.field_phase_vector(m, pos, t)?.flat();
                total += vf.dot(&b).abs();
            }
        }
        Ok(total)
    }
}

fn adaptive_simpson_matrix<F>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_depth: usize,
) -> Result<RMatrix>
where
    F: Fn(f64) -> Result<RMatrix>,
{
    fn simpson(fa: &RMatrix, fm: &RMatrix, fb: &RMatrix, len: f64) -> RMatrix {
        (fa + fm * 4.0 + fb) * (len / 6.0)
    }
    fn recurse<F>(
        f: &F,
        lo: f64,
        hi: f64,
        fa: RMatrix,
        fm: RMatrix,
        fb: RMatrix,
        whole: RMatrix,
        tol: f64,
        depth: usize,
    ) -> Result<RMatrix>
    where
        F: Fn(f64) -> Result<RMatrix>,
    {
        let mid = 0.5 * (lo + hi);
        let lm = f(0.5 * (lo + mid))?;
        let rm = f(0.5 * (mid + hi))?;
        let left = simpson(&fa, &lm, &fm, mid - lo);
        let right = simpson(&fm, &rm, &fb, hi - mid);
        let refined = &left + &right;
        let err = (&refined - &whole).norm();
        if err < 15.0 * tol || depth == 0 {
            let correction = (&refined - &whole) / 15.0;
            return Ok(refined + correction);
        }
        let l = recurse(f, lo, mid, fa, lm, fm.clone(), left, tol / 2.0, depth - 1)?;
        let r = recurse(f, mid, hi, fm, rm, fb, right, tol / 2.0, depth - 1)?;
        Ok(l + r)
    }
    let fa = f(lo)?;
    let fb = f(hi)?;
    let fm = f(0.5 * (lo + hi))?;
    let whole = simpson(&fa, &fm, &fb, hi - lo);
    recurse(f, lo, hi, fa.clone(), fm.clone(), fb.clone(), whole, tol, max_depth)
}

/// Per-observable evolution report.
#[derive(Debug, Clone)]
pub struct EvolutionReport {
    pub kind: String,
    /// Safe-subblock operator norm of the evolved observable (or of the
    /// difference to its free evolution, for field components).
    pub measured: f64,
    /// The theorem's right-hand side where one applies (h·Q_t(·)^{1/2}).
    pub bound: Option<f64>,
    /// Residual of the derivative identity, for the photon number.
    pub residual: Option<f64>,
}

/// Observable kinds of the evolution suite.
#[derive(Debug, Clone)]
pub enum ObservableKind {
    Spin { j: usize, lambda: usize },
    Magnetic { j: usize, x: [f64; 3] },
    Electric { j: usize, x: [f64; 3] },
    PhotonNumber,
}

/// Evolves one observable and evaluates the statement that applies to it:
/// spins keep unit norm; magnetic/electric components minus their free
/// evolutions obey ‖·‖ ≤ h·Q_t(F B)^{1/2} (helicity-rotated for electric);
/// the photon number satisfies the derivative identity
/// dN/dt = Σ X_{mλ}(t) S_m^{[λ]}(t).
pub fn observable_evolution(
    system: &QedSystem,
    kind: &ObservableKind,
    t: f64,
    margin: usize,
) -> Result<EvolutionReport> {
    let h = system.h;
    match kind {
        ObservableKind::Spin { j, lambda } => {
            let s = system.evolve(&system.spin_observable(*j, *lambda), t)?;
            let set = s.safe_set(0);
            let norm = crate::quantize::operator_norm(&select_submatrix(s.matrix(), &set));
            Ok(EvolutionReport {
                kind: format!("spin({j},{lambda})"),
                measured: norm,
                bound: Some(1.0),
                residual: None,
            })
        }
        ObservableKind::Magnetic { j, x } | ObservableKind::Electric { j, x } => {
            let electric = matches!(kind, ObservableKind::Electric { .. });
            let base = if electric {
                system.electric_operator(*j, x, 0.0)?
            } else {
                system.field_operator(*j, x, 0.0)?
            };
            let evolved = system.evolve(&base, t)?;
            let free = if electric {
                system.electric_operator(*j, x, t)?
            } else {
                system.field_operator(*j, x, t)?
            };
            let diff = evolved.sub(&free)?;
            let set = diff.safe_set(margin);
            let norm = crate::quantize::operator_norm(&select_submatrix(diff.matrix(), &set));
            // bound h·Q_t(F B_{jxt})^{1/2}, with J folded in for electric
            let coeff = system.modes.field_coefficients(*j, x, t)?;
            let coeff = if electric {
                system.modes.helicity_apply(&coeff)
            } else {
                coeff
            };
            let b = system.modes.complex_to_phase(&coeff).flat();
            let np = system.modes.field_dims();
            let fb = f_matrix(np) * b;
            let qt = system.qt_form(t)?;
            let bound = h * qt.form.value(&fb).max(0.0).sqrt();
            Ok(EvolutionReport {
                kind: format!(
                    "{}({j},{x:?})",
                    if electric { "electric" } else { "magnetic" }
                ),
                measured: norm,
                bound: Some(bound),
                residual: None,
            })
        }
        ObservableKind::PhotonNumber => {
            let residual = photon_number_identity_residual(system, t, 1e-4)?;
            let n_t = system.evolve(&system.photon_number(), t)?;
            let set = n_t.safe_set(margin);
            let norm = crate::quantize::operator_norm(&select_submatrix(n_t.matrix(), &set));
            Ok(EvolutionReport {
                kind: "photon_number".into(),
                measured: norm,
                bound: None,
                residual: Some(residual),
            })
        }
    }
}

/// Residual of dN(t)/dt = Σ_{λm} X_{mλ}(t) ∘ S_m^{[λ]}(t), with
/// X_{mλ} = −L_h(χ_t B_{m,x_λ}) ⊗ I + Y_{mλ} and
/// Y_{mλ} = −U_red* [L_h(χ_t B)⊗I, U_red]; the derivative by 5-point
/// central differences.
pub fn photon_number_identity_residual(system: &QedSystem, t: f64, dt: f64) -> Result<f64> {
    let n_op = system.photon_number();
    let d_num = {
        let m2 = system.evolve(&n_op, t + 2.0 * dt)?;
        let m1 = system.evolve(&n_op, t + dt)?;
        let p1 = system.evolve(&n_op, t - dt)?;
        let p2 = system.evolve(&n_op, t - 2.0 * dt)?;
        (p2.matrix() - m2.matrix() + (m1.matrix() - p1.matrix()) * C64::new(8.0, 0.0))
            / C64::new(12.0 * dt, 0.0)
    };
    let rhs = photon_number_flux(system, t)?;
    Ok((d_num - rhs.matrix()).norm() / rhs.matrix().norm().max(1.0))
}

/// The right-hand side Σ X_{mλ}(t) S_m^{[λ]}(t) built from the reduced
/// propagator exactly as the decomposition states.
pub fn photon_number_flux(system: &QedSystem, t: f64) -> Result<OperatorMatrix> {
    let u_red = system.reduced_propagator(t)?;
    let mut total = CMatrix::zeros(system.total_dim(), system.total_dim());
    for (lambda, pos) in system.register.positions.iter().enumerate() {
        for m in 0..3 {
            let b_t = system.modes.field_phase_vector(m, pos, t)?;
            let l_op = system.generator(&b_t)?;
            let comm = l_op.commutator(&u_red)?;
            let y = u_red.adjoint().mul(&comm)?.scale(C64::new(-1.0, 0.0));
            let x_op = y.sub(&l_op)?;
            let s_op = system.evolve(&system.spin_observable(m, lambda), t)?;
            total += x_op.matrix() * s_op.matrix();
        }
    }
    OperatorMatrix::with_spin(total, system.rep.clone(), system.spin_dim())
}

/// ‖Y_{mλ}(t)‖ on the safe subblock together with its bound
/// h·Q_t(χ_t B_{m,x_λ})^{1/2}.
pub fn photon_flux_remainder_check(
    system: &QedSystem,
    t: f64,
    margin: usize,
) -> Result<Vec<(f64, f64)>> {
    let u_red = system.reduced_propagator(t)?;
    let qt = system.qt_form(t)?;
    let mut out = Vec::new();
    for pos in &system.register.positions {
        for m in 0..3 {
            let b_t = system.modes.field_phase_vector(m, pos, t)?;
            let l_op = system.generator(&b_t)?;
            let comm = l_op.commutator(&u_red)?;
            let y = u_red.adjoint().mul(&comm)?;
            let set = y.safe_set(margin);
            let norm = crate::quantize::operator_norm(&select_submatrix(y.matrix(), &set));
            let bound = system.h * qt.form.value(&b_t.flat()).max(0.0).sqrt();
            out.push((norm, bound));
        }
    }
    Ok(out)
}
