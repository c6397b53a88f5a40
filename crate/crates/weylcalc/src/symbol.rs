//! Phase-space symbols: evaluators, derivative oracles, heat smoothing, and
//! seminorm estimation.
//!
//! A symbol is a function on R^{2d}. Structured kinds (constant, linear,
//! quadratic, trigonometric, Gaussian) carry closed-form derivatives and heat
//! transforms; `Custom` symbols fall back to finite differences and
//! quadrature. The declared kind also drives the quantization route: symbols
//! with per-mode tensor structure are quantized mode by mode.

use crate::error::{Result, WeylError};
use crate::exec;
use crate::phase::QuadraticForm;
use crate::{C64, RMatrix, RVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

/// One term c·cos(a·Z + φ).
#[derive(Debug, Clone)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub freq: RVector,
    pub phase: f64,
}

/// Evaluator closure type for custom symbols.
pub type EvalFn = Arc<dyn Fn(&RVector) -> C64 + Send + Sync>;

#[derive(Clone)]
pub enum SymbolKind {
    /// F ≡ c.
    Constant(C64),
    /// F(Z) = a·Z.
    Linear { a: RVector },
    /// F(Z) = ⟨MZ, Z⟩ + c.
    Quadratic { m: RMatrix, c: f64 },
    /// F(Z) = Σ_t c_t cos(a_t·Z + φ_t).
    Trig { terms: Vec<TrigTerm> },
    /// F(Z) = amp·e^{−rate·|Z − center|²}.
    GaussianPeak {
        amplitude: f64,
        rate: f64,
        center: RVector,
    },
    /// Opaque evaluator; derivatives by finite differences unless a closed
    /// form is supplied through `Symbol::with_derivative`.
    Custom(EvalFn),
}

impl std::fmt::Debug for SymbolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SymbolKind::Constant(c) => write!(f, "Constant({c})"),
            SymbolKind::Linear { .. } => write!(f, "Linear"),
            SymbolKind::Quadratic { .. } => write!(f, "Quadratic"),
            SymbolKind::Trig { terms } => write!(f, "Trig({} terms)", terms.len()),
            SymbolKind::GaussianPeak { .. } => write!(f, "GaussianPeak"),
            SymbolKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Directional-derivative closure: (Z, directions) ↦ d^m F(Z)(U₁..U_m).
pub type DerivFn = Arc<dyn Fn(&RVector, &[RVector]) -> C64 + Send + Sync>;

/// An evaluable symbol on phase space R^{2d}.
#[derive(Clone)]
pub struct Symbol {
    kind: SymbolKind,
    /// Phase-space dimension d (arguments are flat 2d-vectors).
    d: usize,
    custom_derivative: Option<DerivFn>,
}

impl std::fmt::Debug for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Symbol(d = {}, kind = {:?})", self.d, self.kind)
    }
}

impl Symbol {
    pub fn constant(d: usize, c: C64) -> Self {
        Self {
            kind: SymbolKind::Constant(c),
            d,
            custom_derivative: None,
        }
    }

    pub fn linear(a: RVector) -> Self {
        let d = a.len() / 2;
        Self {
            kind: SymbolKind::Linear { a },
            d,
            custom_derivative: None,
        }
    }

    pub fn quadratic(m: RMatrix, c: f64) -> Self {
        let d = m.nrows() / 2;
        let m = (&m + m.transpose()) * 0.5;
        Self {
            kind: SymbolKind::Quadratic { m, c },
            d,
            custom_derivative: None,
        }
    }

    /// |Z|² on R^{2d}.
    pub fn norm_squared(d: usize) -> Self {
        Self::quadratic(RMatrix::identity(2 * d, 2 * d), 0.0)
    }

    pub fn trig(d: usize, terms: Vec<TrigTerm>) -> Self {
        debug_assert!(terms.iter().all(|t| t.freq.len() == 2 * d));
        Self {
            kind: SymbolKind::Trig { terms },
            d,
            custom_derivative: None,
        }
    }

    pub fn cosine(a: RVector, phase: f64) -> Self {
        let d = a.len() / 2;
        Self::trig(
            d,
            vec![TrigTerm {
                amplitude: 1.0,
                freq: a,
                phase,
            }],
        )
    }

    pub fn gaussian_peak(amplitude: f64, rate: f64, center: RVector) -> Self {
        let d = center.len() / 2;
        Self {
            kind: SymbolKind::GaussianPeak {
                amplitude,
                rate,
                center,
            },
            d,
            custom_derivative: None,
        }
    }

    pub fn custom(d: usize, eval: EvalFn) -> Self {
        Self {
            kind: SymbolKind::Custom(eval),
            d,
            custom_derivative: None,
        }
    }

    pub fn with_derivative(mut self, deriv: DerivFn) -> Self {
        self.custom_derivative = Some(deriv);
        self
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Evaluate at a flat phase point Z ∈ R^{2d}.
    pub fn eval(&self, z: &RVector) -> C64 {
        match &self.kind {
            SymbolKind::Constant(c) => *c,
            SymbolKind::Linear { a } => C64::new(a.dot(z), 0.0),
            SymbolKind::Quadratic { m, c } => C64::new((m * z).dot(z) + c, 0.0),
            SymbolKind::Trig { terms } => C64::new(
                terms
                    .iter()
                    .map(|t| t.amplitude * (t.freq.dot(z) + t.phase).cos())
                    .sum(),
                0.0,
            ),
            SymbolKind::GaussianPeak {
                amplitude,
                rate,
                center,
            } => {
                let diff = z - center;
                C64::new(amplitude * (-rate * diff.norm_squared()).exp(), 0.0)
            }
            SymbolKind::Custom(f) => f(z),
        }
    }

    /// Directional derivative d^m F(Z)(U₁..U_m); `dirs` empty returns F(Z).
    pub fn derivative(&self, z: &RVector, dirs: &[RVector]) -> C64 {
        if dirs.is_empty() {
            return self.eval(z);
        }
        if let Some(cd) = &self.custom_derivative {
            return cd(z, dirs);
        }
        let m = dirs.len();
        match &self.kind {
            SymbolKind::Constant(_) => C64::new(0.0, 0.0),
            SymbolKind::Linear { a } => {
                if m == 1 {
                    C64::new(a.dot(&dirs[0]), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            SymbolKind::Quadratic { m: mat, .. } => match m {
                1 => C64::new(2.0 * (mat * z).dot(&dirs[0]), 0.0),
                2 => C64::new(2.0 * (mat * &dirs[0]).dot(&dirs[1]), 0.0),
                _ => C64::new(0.0, 0.0),
            },
            SymbolKind::Trig { terms } => {
                let mut total = 0.0;
                for t in terms {
                    let prod: f64 = dirs.iter().map(|u| t.freq.dot(u)).product();
                    let arg = t.freq.dot(z) + t.phase + m as f64 * std::f64::consts::FRAC_PI_2;
                    total += t.amplitude * prod * arg.cos();
                }
                C64::new(total, 0.0)
            }
            SymbolKind::GaussianPeak { .. } => self.finite_difference(z, dirs),
            SymbolKind::Custom(_) => self.finite_difference(z, dirs),
        }
    }

    /// Central finite differences, nested per direction.
    pub fn finite_difference(&self, z: &RVector, dirs: &[RVector]) -> C64 {
        fn fd(sym: &Symbol, z: &RVector, dirs: &[RVector], step: f64) -> C64 {
            if dirs.is_empty() {
                return sym.eval(z);
            }
            let (u, rest) = dirs.split_last().unwrap();
            let zp = z + u * step;
            let zm = z - u * step;
            (fd(sym, &zp, rest, step) - fd(sym, &zm, rest, step)) / C64::new(2.0 * step, 0.0)
        }
        // Richardson: combine steps e and e/2 for O(e⁴).
        let e = 1e-3;
        let c1 = fd(self, z, dirs, e);
        let c2 = fd(self, z, dirs, e / 2.0);
        (c2 * 4.0 - c1) / 3.0
    }

    /// Frequency vectors that characterize the symbol (used to adapt
    /// sampling directions in the seminorm estimator).
    pub fn characteristic_directions(&self) -> Vec<RVector> {
        match &self.kind {
            SymbolKind::Linear { a } => vec![a.clone()],
            SymbolKind::Trig { terms } => terms.iter().map(|t| t.freq.clone()).collect(),
            _ => Vec::new(),
        }
    }

    /// Sup-norm when available in closed form, else a sampling estimate.
    pub fn sup_norm_estimate(&self, seed: u64) -> f64 {
        match &self.kind {
            SymbolKind::Constant(c) => c.norm(),
            SymbolKind::GaussianPeak { amplitude, .. } => amplitude.abs(),
            SymbolKind::Trig { terms } => {
                // dense directional sampling plus local refinement
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = 2 * self.d;
                let mut best = 0.0f64;
                let mut best_z = RVector::zeros(n);
                for _ in 0..4000 {
                    let z = RVector::from_fn(n, |_, _| {
                        let g: f64 = rng.sample(StandardNormal);
                        g * 3.0
                    });
                    let v = self.eval(&z).norm();
                    if v > best {
                        best = v;
                        best_z = z;
                    }
                }
                // coordinate refinement
                let mut step = 0.5;
                for _ in 0..40 {
                    let mut improved = false;
                    for k in 0..n {
                        for sgn in [-1.0, 1.0] {
                            let mut z = best_z.clone();
                            z[k] += sgn * step;
                            let v = self.eval(&z).norm();
                            if v > best {
                                best = v;
                                best_z = z;
                                improved = true;
                            }
                        }
                    }
                    if !improved {
                        step *= 0.5;
                    }
                    if step < 1e-6 {
                        break;
                    }
                }
                best.max(
                    terms
                        .iter()
                        .map(|t| if t.freq.norm() < 1e-14 { t.amplitude.abs() } else { 0.0 })
                        .sum(),
                )
            }
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = 2 * self.d;
                (0..4000)
                    .map(|_| {
                        let z = RVector::from_fn(n, |_, _| {
                            let g: f64 = rng.sample(StandardNormal);
                            g * 3.0
                        });
                        self.eval(&z).norm()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Pullback F∘χ under a linear map of phase space.
    pub fn compose_linear(&self, chi: &RMatrix) -> Symbol {
        let d = chi.nrows() / 2;
        match &self.kind {
            SymbolKind::Constant(c) => Symbol::constant(d, *c),
            SymbolKind::Linear { a } => Symbol::linear(chi.transpose() * a),
            SymbolKind::Quadratic { m, c } => {
                Symbol::quadratic(chi.transpose() * m * chi, *c)
            }
            SymbolKind::Trig { terms } => Symbol::trig(
                d,
                terms
                    .iter()
                    .map(|t| TrigTerm {
                        amplitude: t.amplitude,
                        freq: chi.transpose() * &t.freq,
                        phase: t.phase,
                    })
                    .collect(),
            ),
            SymbolKind::GaussianPeak { .. } => {
                let inner = self.clone();
                let chi = chi.clone();
                Symbol::custom(d, Arc::new(move |z: &RVector| inner.eval(&(&chi * z))))
            }
            SymbolKind::Custom(f) => {
                let f = f.clone();
                let chi = chi.clone();
                Symbol::custom(d, Arc::new(move |z: &RVector| f(&(&chi * z))))
            }
        }
    }

    /// Translate F(· + shift).
    pub fn translate(&self, shift: &RVector) -> Symbol {
        let inner = self.clone();
        let shift = shift.clone();
        match &self.kind {
            SymbolKind::Trig { terms } => Symbol::trig(
                self.d,
                terms
                    .iter()
                    .map(|t| TrigTerm {
                        amplitude: t.amplitude,
                        freq: t.freq.clone(),
                        phase: t.phase + t.freq.dot(&shift),
                    })
                    .collect(),
            ),
            _ => Symbol::custom(
                self.d,
                Arc::new(move |z: &RVector| inner.eval(&(z + &shift))),
            ),
        }
    }
}

/// Gaussian smoothing (H_t F)(X) = ∫ F(X+Y) dμ_t(Y) over the full phase
/// space or the span of an orthonormal `frame`.
///
/// Structured kinds transform in closed form; `Custom` symbols are smoothed
/// by Gauss–Hermite quadrature at every evaluation.
pub fn heat_apply(f: &Symbol, t: f64, frame: Option<&[RVector]>) -> Result<Symbol> {
    if t < 0.0 {
        return Err(WeylError::InvalidArgument(
            "heat time must be nonnegative".into(),
        ));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let d = f.dim();
    let n = 2 * d;
    let project = |a: &RVector| -> f64 {
        match frame {
            None => a.norm_squared(),
            Some(fr) => fr.iter().map(|v| a.dot(v).powi(2)).sum(),
        }
    };
    Ok(match f.kind() {
        SymbolKind::Constant(c) => Symbol::constant(d, *c),
        SymbolKind::Linear { a } => Symbol::linear(a.clone()),
        SymbolKind::Quadratic { m, c } => {
            let tr = match frame {
                None => m.trace(),
                Some(fr) => fr.iter().map(|v| (m * v).dot(v)).sum(),
            };
            Symbol::quadratic(m.clone(), c + t * tr)
        }
        SymbolKind::Trig { terms } => Symbol::trig(
            d,
            terms
                .iter()
                .map(|term| TrigTerm {
                    amplitude: term.amplitude * (-t * project(&term.freq) / 2.0).exp(),
                    freq: term.freq.clone(),
                    phase: term.phase,
                })
                .collect(),
        ),
        SymbolKind::GaussianPeak {
            amplitude,
            rate,
            center,
        } => match frame {
            None => {
                let shrink = 1.0 + 2.0 * rate * t;
                Symbol::gaussian_peak(
                    amplitude / shrink.powf(n as f64 / 2.0),
                    rate / shrink,
                    center.clone(),
                )
            }
            Some(fr) => heat_by_quadrature(f, t, Some(fr.to_vec())),
        },
        SymbolKind::Custom(_) => heat_by_quadrature(f, t, frame.map(|fr| fr.to_vec())),
    })
}

fn heat_by_quadrature(f: &Symbol, t: f64, frame: Option<Vec<RVector>>) -> Symbol {
    let d = f.dim();
    let n = 2 * d;
    let dirs: Vec<RVector> = match frame {
        Some(fr) => fr,
        None => (0..n)
            .map(|k| RVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))
            .collect(),
    };
    let inner = f.clone();
    let (nodes, weights) = crate::rep::gauss_hermite_normal(24);
    let s = t.sqrt();
    Symbol::custom(
        d,
        Arc::new(move |z: &RVector| {
            // tensor quadrature over the frame directions
            let k = dirs.len();
            let mut total = C64::new(0.0, 0.0);
            let mut idx = vec![0usize; k];
            'outer: loop {
                let mut y = z.clone();
                let mut w = 1.0;
                for (ax, &i) in idx.iter().enumerate() {
                    y += &dirs[ax] * (s * nodes[i]);
                    w *= weights[i];
                }
                total += inner.eval(&y) * C64::new(w, 0.0);
                // advance multi-index
                for ax in 0..k {
                    idx[ax] += 1;
                    if idx[ax] < nodes.len() {
                        continue 'outer;
                    }
                    idx[ax] = 0;
                }
                break;
            }
            total
        }),
    )
}

/// Plan for sampling the seminorm sup: how many base points and direction
/// tuples to draw.
#[derive(Debug, Clone)]
pub struct SeminormBudget {
    pub points: usize,
    pub tuples: usize,
}

impl SeminormBudget {
    pub fn from_samples(samples: usize) -> Self {
        let points = (samples / 8).clamp(16, 4096);
        Self {
            points,
            tuples: (samples / points).max(4),
        }
    }
}

/// Monte-Carlo/grid estimate of the order-m seminorm
/// sup |d^m F(X)(U₁..U_m)| / ∏ Q_A(U_i)^{1/2}.
///
/// A lower estimate of the true sup: base points are a Gaussian cloud, and
/// directions mix Q_A-eigendirections, the symbol's own frequency directions
/// mapped through A⁻¹, and random draws.
pub fn symbol_seminorm(
    f: &Symbol,
    m: usize,
    a: &QuadraticForm,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    if f.dim() != a.dim() {
        return Err(WeylError::DimensionMismatch(format!(
            "symbol on R^{} vs form on R^{}",
            2 * f.dim(),
            2 * a.dim()
        )));
    }
    if m == 0 {
        return Ok(f.sup_norm_estimate(seed));
    }
    let n = 2 * f.dim();
    let plan = SeminormBudget::from_samples(budget);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Candidate directions, Q_A-normalized.
    let mut dirs: Vec<RVector> = Vec::new();
    let push_dir = |v: RVector, dirs: &mut Vec<RVector>| {
        let q = a.value(&v);
        if q > 1e-14 {
            dirs.push(v / q.sqrt());
        }
    };
    for k in 0..n {
        let col: RVector = a.eigenvectors().column(k).into_owned();
        push_dir(col, &mut dirs);
    }
    for freq in f.characteristic_directions() {
        push_dir(a.pinv_apply(&freq), &mut dirs);
    }
    for _ in 0..plan.tuples {
        let v = RVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        push_dir(v, &mut dirs);
    }
    if dirs.is_empty() {
        // Q_A ≡ 0: class contains only constants; any derivative must vanish.
        return Ok(0.0);
    }

    // Base points: Gaussian cloud at a few scales, plus the origin.
    let mut points: Vec<RVector> = vec![RVector::zeros(n)];
    for _ in 0..plan.points {
        let scale = *[0.5, 1.0, 2.0, 4.0].choose(&mut rng).unwrap();
        points.push(RVector::from_fn(n, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * scale
        }));
    }

    // Direction tuples: same-direction tuples for every candidate, plus
    // random mixtures.
    let mut tuples: Vec<Vec<usize>> = dirs.iter().enumerate().map(|(i, _)| vec![i; m]).collect();
    for _ in 0..plan.tuples {
        tuples.push((0..m).map(|_| rng.random_range(0..dirs.len())).collect());
    }

    let best = exec::map_slice(&points, |z| {
        let mut local = 0.0f64;
        for tuple in &tuples {
            let ds: Vec<RVector> = tuple.iter().map(|&i| dirs[i].clone()).collect();
            let v = f.derivative(z, &ds).norm();
            if v > local {
                local = v;
            }
        }
        local
    })
    .into_iter()
    .fold(0.0f64, f64::max);
    Ok(best)
}

/// max over orders k ≤ p of the order-k seminorm estimate — the S_p class
/// constant used by the operator-norm bounds.
pub fn symbol_seminorm_class(
    f: &Symbol,
    p: usize,
    a: &QuadraticForm,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    let mut best = 0.0f64;
    for m in 0..=p {
        best = best.max(symbol_seminorm(f, m, a, budget, seed.wrapping_add(m as u64))?);
    }
    Ok(best)
}
