//! The verification suites behind `weylcli run <suite>`.
//!
//! Every suite draws its corpus from seeded ChaCha streams (split per item
//! from the master seed), evaluates the bound or identity it is named
//! after, and emits three-valued check rows.

use crate::config::ExperimentConfig;
use crate::record::{CheckRow, RunRecord};
use anyhow::{Result, anyhow, bail};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::Instant;
use weylcalc::beals::{ReconstructionConfig, beals_seminorm_estimate, reconstruct_symbol};
use weylcalc::metaplectic::{dilation_matrix, shear_matrix, u_of, u_rotation, u_shear, u_dilate};
use weylcalc::phase::{
    CV_CONSTANT, PhaseVector, QuadraticForm, SymplecticMap, cv_bound_factor,
    cv_bound_factor_from_lambdas, f_matrix, symplectic_normal_form,
};
use weylcalc::quantize::{
    operator_norm, select_submatrix, weyl_quantize, weyl_translate, wick_symbol,
};
use weylcalc::rep::GaussianRep;
use weylcalc::stochastic::{axis_plan, stochastic_cauchy_check};
use weylcalc::symbol::{Symbol, TrigTerm, heat_apply, symbol_seminorm_class};
use weylcalc::qed::{
    CutoffProfile, ModeSet, ObservableKind, QedSystem, SpinRegister, observable_evolution,
    photon_flux_remainder_check, photon_number_identity_residual,
};
use weylcalc::{RMatrix, RVector};

pub const SUITES: &[&str] = &[
    "cv-bound",
    "wick-heat",
    "covariance",
    "beals",
    "compose",
    "stochastic",
    "qed",
    "dim-scaling",
];

pub fn run_suite(name: &str, cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate().map_err(|e| anyhow!("invalid config: {e}"))?;
    let start = Instant::now();
    let checks = match name {
        "cv-bound" => cv_bound_checks(cfg)?,
        "wick-heat" => wick_heat_checks(cfg)?,
        "covariance" => covariance_checks(cfg)?,
        "beals" => beals_checks(cfg)?,
        "compose" => compose_checks(cfg)?,
        "stochastic" => stochastic_checks(cfg)?,
        "qed" => qed_checks(cfg)?,
        "dim-scaling" => dim_scaling_checks(cfg)?,
        other => bail!("unknown suite '{other}' (see list-suites)"),
    };
    Ok(RunRecord::assemble(
        name,
        cfg.seed,
        &cfg.canonical_json(),
        checks,
        start.elapsed().as_secs_f64(),
    ))
}

/// Seeded RNG stream for corpus item `index` of a suite.
fn stream(cfg: &ExperimentConfig, salt: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15) ^ index)
}

/// Random trigonometric symbol Σ c_k cos(a_k·Z + φ_k) with ≤ max_terms terms
/// and |a_k| ≤ max_frequency.
pub fn random_trig_symbol(d: usize, rng: &mut ChaCha8Rng, max_terms: usize, max_freq: f64) -> Symbol {
    let n_terms = rng.random_range(1..=max_terms.max(1));
    let terms = (0..n_terms)
        .map(|_| {
            let mut freq = RVector::from_fn(2 * d, |_, _| rng.random_range(-1.0..1.0));
            let target = rng.random_range(0.2..max_freq);
            if freq.norm() > 1e-9 {
                freq *= target / freq.norm();
            }
            TrigTerm {
                amplitude: rng.random_range(-1.0..1.0),
                freq,
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect();
    Symbol::trig(d, terms)
}

/// Random nonnegative form with geometric symplectic spectrum, mixed by a
/// random symplectic congruence.
pub fn random_geometric_form(d: usize, rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> QuadraticForm {
    let mut diag = RVector::zeros(2 * d);
    for j in 0..d {
        let lam = cfg.form.eigenvalue_max * cfg.form.eigenvalue_ratio.powi(j as i32);
        diag[j] = lam;
        diag[d + j] = lam;
    }
    let base = RMatrix::from_diagonal(&diag);
    let chi = random_symplectic(d, rng, cfg.form.symplectic_mixing);
    QuadraticForm::new(chi.matrix().transpose() * base * chi.matrix())
        .expect("congruence preserves nonnegativity")
}

pub fn random_symplectic(d: usize, rng: &mut ChaCha8Rng, scale: f64) -> SymplecticMap {
    let n = 2 * d;
    let mut s = RMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-scale..scale);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    SymplecticMap::new((f_matrix(d) * s).exp()).expect("exp of hamiltonian matrix is symplectic")
}

/// Truncation certificate of a trig quantization: the worst per-term
/// displacement tail.
fn trig_tail_certificate(f: &Symbol, rep: &GaussianRep) -> f64 {
    let d = rep.dim();
    let mut worst = 0.0f64;
    if let weylcalc::symbol::SymbolKind::Trig { terms } = f.kind() {
        for t in terms {
            let shift = f_matrix(d) * &t.freq * rep.h();
            let pv = PhaseVector::from_flat(&shift);
            let alphas = rep.coherent_alpha(&pv);
            for a in alphas {
                let (_, tail) =
                    weylcalc::displacement::coherent_coefficients(a, rep.mode_dim());
                worst = worst.max(tail);
            }
        }
    }
    worst
}

fn cv_bound_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for &d in &cfg.corpus.dimensions {
        for idx in 0..cfg.corpus.symbol_count {
            let mut rng = stream(cfg, 0xC4, (d * 1000 + idx) as u64);
            let f = random_trig_symbol(d, &mut rng, cfg.corpus.max_terms, cfg.corpus.max_frequency);
            let a = random_geometric_form(d, &mut rng, cfg);
            let semi = symbol_seminorm_class(
                &f,
                4 * d,
                &a,
                cfg.corpus.seminorm_budget,
                cfg.seed ^ idx as u64,
            )?;
            for &h in &cfg.corpus.h_values {
                let rep = Arc::new(GaussianRep::new(d, cfg.corpus.truncation, h)?);
                let op = weyl_quantize(&f, &rep)?;
                let (norm, _) = op.weyl_norm(cfg.corpus.margin);
                let factor = cv_bound_factor(&a, h, CV_CONSTANT)?;
                let cert = trig_tail_certificate(&f, &rep);
                rows.push(CheckRow::resolve(
                    format!("cv-d{d}-sym{idx}"),
                    h,
                    norm,
                    semi * factor,
                    cert,
                    cfg.tolerances.certificate_ceiling,
                ));
            }
        }
    }
    Ok(rows)
}

fn wick_heat_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for &d in &cfg.corpus.dimensions {
        for idx in 0..cfg.corpus.symbol_count {
            let mut rng = stream(cfg, 0x17, (d * 1000 + idx) as u64);
            let f = random_trig_symbol(d, &mut rng, cfg.corpus.max_terms, cfg.corpus.max_frequency);
            let sup = f.sup_norm_estimate(cfg.seed ^ idx as u64);
            for &h in &cfg.corpus.h_values {
                let rep = Arc::new(GaussianRep::new(d, cfg.corpus.truncation, h)?);
                let op = weyl_quantize(&f, &rep)?;
                let wick = wick_symbol(&op)?;
                let heated = heat_apply(&f, h / 2.0, None)?;
                let mut dev = 0.0f64;
                let mut cert = 0.0f64;
                for p in 0..20 {
                    let mut prng = stream(cfg, 0x18, (d * 10_000 + idx * 100 + p) as u64);
                    let z = RVector::from_fn(2 * d, |_, _| {
                        prng.random_range(-1.0..1.0) * 1.5 * h.sqrt()
                    });
                    let x = PhaseVector::from_flat(&z);
                    cert = cert.max(rep.coherent(&x, f64::INFINITY)?.truncation_error);
                    dev = dev.max((wick.eval(&z) - heated.eval(&z)).norm());
                }
                rows.push(CheckRow::resolve(
                    format!("wick-heat-d{d}-sym{idx}"),
                    h,
                    dev,
                    cfg.tolerances.wick_heat * (1.0 + sup),
                    cert,
                    cfg.tolerances.certificate_ceiling,
                ));
            }
        }
    }
    Ok(rows)
}

fn covariance_residual(
    u: &weylcalc::metaplectic::MetaplecticOperator,
    chi: &RMatrix,
    rep: &Arc<GaussianRep>,
    f: &Symbol,
    margin: usize,
) -> Result<f64> {
    let lhs = u
        .op
        .adjoint()
        .mul(&weyl_quantize(f, rep)?)?
        .mul(&u.op)?;
    let rhs = weyl_quantize(&f.compose_linear(chi), rep)?;
    let set = lhs.safe_set(margin);
    Ok((select_submatrix(lhs.matrix(), &set) - select_submatrix(rhs.matrix(), &set)).norm())
}

fn covariance_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let mc = &cfg.metaplectic;
    let tol = cfg.tolerances.covariance;
    let ceiling = cfg.tolerances.certificate_ceiling;

    // generators, d = 1
    let rep = Arc::new(GaussianRep::new(1, mc.truncation_d1.max(30), 1.0)?);
    let probe = Symbol::cosine(RVector::from_column_slice(&[0.8, -0.35]), 0.3);
    let theta: f64 = 0.7;
    let rot = SymplecticMap::new(RMatrix::from_row_slice(
        2,
        2,
        &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
    ))
    .expect("rotation is symplectic");
    let u1 = u_rotation(&rot, &rep)?;
    rows.push(CheckRow::resolve(
        "generator-rotation",
        theta,
        covariance_residual(&u1, rot.matrix(), &rep, &probe, mc.margin_d1)?,
        tol,
        0.0,
        ceiling,
    ));
    let s = RMatrix::from_row_slice(1, 1, &[0.25]);
    let u2 = u_shear(&s, &rep)?;
    rows.push(CheckRow::resolve(
        "generator-shear",
        0.25,
        covariance_residual(&u2, &shear_matrix(&s), &rep, &probe, mc.margin_d1)?,
        tol,
        0.0,
        ceiling,
    ));
    let t = RMatrix::from_row_slice(1, 1, &[1.15]);
    let u3 = u_dilate(&t, &rep)?;
    rows.push(CheckRow::resolve(
        "generator-dilation",
        1.15,
        covariance_residual(&u3, &dilation_matrix(&t)?, &rep, &probe, mc.margin_d1)?,
        tol,
        0.0,
        ceiling,
    ));

    // random composites in d = 1 and d = 2, plus the projective law
    for d in [1usize, 2] {
        let (level, margin, scale) = if d == 1 {
            (mc.truncation_d1, mc.margin_d1, mc.generator_scale_d1)
        } else {
            (mc.truncation_d2, mc.margin_d2, mc.generator_scale_d2)
        };
        let rep = Arc::new(GaussianRep::new(d, level, 1.0)?);
        let probe = Symbol::cosine(
            RVector::from_fn(2 * d, |i, _| 0.8 - 0.3 * i as f64),
            0.2,
        );
        let count = mc.composite_count.div_ceil(2);
        for i in 0..count {
            let mut rng = stream(cfg, 0xC0, (d * 100 + i) as u64);
            let chi = random_symplectic(d, &mut rng, scale);
            let u = u_of(&chi, &rep)?;
            rows.push(CheckRow::resolve(
                format!("composite-d{d}-{i}"),
                i as f64,
                covariance_residual(&u, chi.matrix(), &rep, &probe, margin)?,
                tol,
                0.0,
                ceiling,
            ));
            // projective composition law
            let chi2 = random_symplectic(d, &mut rng, scale);
            let u2 = u_of(&chi2, &rep)?;
            let u12 = u_of(&chi.compose(&chi2)?, &rep)?;
            let prod = u.op.mul(&u2.op)?;
            let set = prod.safe_set(margin);
            let m1 = select_submatrix(u12.op.matrix(), &set);
            let m2 = select_submatrix(prod.matrix(), &set);
            let c = m1[(0, 0)] / m2[(0, 0)];
            let law_resid = (&m1 - &m2 * c).norm();
            rows.push(CheckRow::resolve(
                format!("projective-modulus-d{d}-{i}"),
                i as f64,
                (c.norm() - 1.0).abs(),
                tol,
                law_resid,
                ceiling,
            ));
        }
    }
    Ok(rows)
}

fn beals_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let bc = &cfg.beals;
    let h = bc.h;
    let ceiling = cfg.tolerances.certificate_ceiling;

    // trig corpus: probe distance to the true symbol
    let rep = Arc::new(GaussianRep::new(1, bc.truncation_probe, h)?);
    let probe_cfg = ReconstructionConfig {
        probes_only: true,
        probe_radius: 2.0,
        ..Default::default()
    };
    for i in 0..bc.trig_count {
        let mut rng = stream(cfg, 0xBE, i as u64);
        let freq = {
            let mut v = RVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let target = rng.random_range(0.6..1.2);
            v *= target / v.norm();
            v
        };
        let f = Symbol::cosine(freq, rng.random_range(0.0..std::f64::consts::TAU));
        let op = weyl_quantize(&f, &rep)?;
        let rec = reconstruct_symbol(&op, &rep, &probe_cfg)?;
        let dist = rec
            .probes
            .iter()
            .map(|(z, v)| (*v - f.eval(z)).norm())
            .fold(0.0, f64::max);
        rows.push(CheckRow::resolve(
            format!("beals-probe-{i}"),
            i as f64,
            dist,
            cfg.tolerances.beals_probe,
            rec.tail_change,
            ceiling,
        ));
    }

    // translations: re-quantization distance on the deep safe subblock
    let level = bc.truncation_requant;
    let rep_rq = Arc::new(GaussianRep::new(1, level, h)?);
    let rq_cfg = ReconstructionConfig {
        t_radius: bc.t_radius_requant,
        t_radius_outer: bc.t_radius_requant + 1.5,
        ..Default::default()
    };
    for i in 0..bc.translation_count {
        let mut rng = stream(cfg, 0xBF, i as u64);
        let x0 = PhaseVector::from_slice(&[
            rng.random_range(-0.5..0.5) * h.sqrt(),
            rng.random_range(-0.5..0.5) * h.sqrt(),
        ]);
        let v = weyl_translate(&x0, &rep_rq, 1e-10)?;
        let rec = reconstruct_symbol(&v, &rep_rq, &rq_cfg)?;
        let requant = rec.quantize(&rep_rq)?;
        let set = v.safe_set(level - bc.requant_degree);
        let dist = (select_submatrix(requant.matrix(), &set)
            - select_submatrix(v.matrix(), &set))
        .norm();
        rows.push(CheckRow::resolve(
            format!("beals-requant-{i}"),
            i as f64,
            dist,
            cfg.tolerances.beals_requant,
            rec.tail_change,
            ceiling,
        ));
    }
    Ok(rows)
}

fn compose_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let h = cfg.beals.h;
    let level = cfg.beals.compose_truncation;
    let rep = Arc::new(GaussianRep::new(1, level, h)?);
    let rc = ReconstructionConfig {
        t_radius: 7.5,
        t_radius_outer: 9.0,
        ..Default::default()
    };
    let ceiling = cfg.tolerances.certificate_ceiling;
    let a = QuadraticForm::identity(1);
    let a4 = a.scaled(4.0)?;
    for i in 0..cfg.beals.trig_count {
        let mut rng = stream(cfg, 0xC5, i as u64);
        let mk = |rng: &mut ChaCha8Rng| {
            let mut v = RVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let target = rng.random_range(0.5..1.0);
            v *= target / v.norm();
            Symbol::cosine(v, rng.random_range(0.0..std::f64::consts::TAU))
        };
        let f = mk(&mut rng);
        let g = mk(&mut rng);
        let res =
            weylcalc::beals::compose_symbols(&f, &g, &rep, &rc, level - cfg.beals.requant_degree)?;
        rows.push(CheckRow::resolve(
            format!("compose-requant-{i}"),
            i as f64,
            res.requantization_distance,
            cfg.tolerances.compose,
            res.symbol.tail_change,
            ceiling,
        ));
        // Beals class bound of the product wrt 4Q
        let op_f = weyl_quantize(&f, &rep)?;
        let op_g = weyl_quantize(&g, &rep)?;
        let prod = op_f.mul(&op_g)?;
        let p_prod = beals_seminorm_estimate(&prod, &a4, 2, 16, 8, cfg.seed ^ i as u64)?;
        let p_f = beals_seminorm_estimate(&op_f, &a, 2, 16, 8, cfg.seed ^ i as u64)?;
        let p_g = beals_seminorm_estimate(&op_g, &a, 2, 16, 8, cfg.seed ^ i as u64)?;
        rows.push(CheckRow::resolve(
            format!("compose-class-bound-{i}"),
            i as f64,
            p_prod.class_norm(),
            p_f.class_norm() * p_g.class_norm() * 1.1,
            0.0,
            ceiling,
        ));
    }
    Ok(rows)
}

fn stochastic_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let sc = &cfg.stochastic;
    let ceiling = cfg.tolerances.certificate_ceiling;
    for (li, ladder) in sc.ladders.iter().enumerate() {
        let [m, n] = *ladder;
        if m >= n {
            bail!("ladder {li}: coarse dimension must be below fine");
        }
        let ambient_d = n.div_ceil(2).max(1);
        let dim = 2 * ambient_d;
        let a = QuadraticForm::new(RMatrix::from_diagonal(&RVector::from_fn(dim, |i, _| {
            0.9f64.max(0.0) * 0.6f64.powi(i as i32)
        })))?;
        let plan = axis_plan(ambient_d, m, n, sc.samples, sc.p, sc.h);
        for (kind, f) in corpus_for_stochastic(dim, cfg, li) {
            let order = if sc.p >= 2.0 { 2 } else { 2 };
            let semi = symbol_seminorm_class(&f, order, &a, 3000, cfg.seed ^ li as u64)?;
            let report = stochastic_cauchy_check(&f, &plan, &a, semi, cfg.seed ^ (li as u64) << 8)?;
            let cert = (report.upper_confidence - report.measured)
                / report.bound.max(1e-300);
            rows.push(CheckRow::resolve(
                format!("stochastic-{kind}-ladder{li}"),
                sc.p,
                report.upper_confidence,
                report.bound,
                cert,
                ceiling.max(0.05),
            ));
        }
    }
    Ok(rows)
}

fn corpus_for_stochastic(
    dim: usize,
    cfg: &ExperimentConfig,
    salt: usize,
) -> Vec<(&'static str, Symbol)> {
    let mut rng = stream(cfg, 0x57, salt as u64);
    let lin = Symbol::linear(RVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)));
    let mut freq = RVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    freq *= rng.random_range(0.5..1.5) / freq.norm();
    let trig = Symbol::cosine(freq, rng.random_range(0.0..std::f64::consts::TAU));
    vec![("linear", lin), ("trig", trig)]
}

fn qed_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let qc = &cfg.qed;
    let ceiling = cfg.tolerances.certificate_ceiling;
    let slack = 1.0 + cfg.tolerances.qed_slack;
    let kpoints: Vec<([f64; 3], f64)> = qc
        .modes
        .iter()
        .zip(qc.mode_weights.iter())
        .map(|(k, w)| (*k, *w))
        .collect();
    let modes = ModeSet::new(
        &kpoints,
        CutoffProfile {
            gaussian_scale: qc.cutoff_scale,
            infrared_min: qc.infrared_min,
            vanishing: false,
        },
    )?;
    let register = SpinRegister::new(qc.particles.clone(), qc.beta)?;
    let system = QedSystem::new(modes, register, qc.n_max, qc.h, qc.dimension_ceiling)?;
    let t = qc.time;
    let mut rows = Vec::new();

    // (a) photon-number derivative identity
    let resid = photon_number_identity_residual(&system, t, 1e-4)?;
    rows.push(CheckRow::resolve(
        "photon-number-identity",
        t,
        resid,
        cfg.tolerances.qed_identity,
        0.0,
        ceiling,
    ));
    for (i, (norm, bound)) in photon_flux_remainder_check(&system, t, 1)?.iter().enumerate() {
        rows.push(CheckRow::resolve(
            format!("photon-flux-remainder-{i}"),
            t,
            *norm,
            bound * slack,
            0.0,
            ceiling,
        ));
    }

    // (b) commutator bound for random directions
    let np = system.modes.field_dims();
    let hfree = system.h_int_free(t)?;
    for i in 0..qc.commutator_directions {
        let mut rng = stream(cfg, 0x9D, i as u64);
        let v = PhaseVector::from_flat(&RVector::from_fn(2 * np, |_, _| {
            rng.random_range(-1.0..1.0)
        }));
        let l = system.generator(&v)?;
        let comm = l.commutator(&hfree)?;
        let set = comm.safe_set(2);
        let norm = operator_norm(&select_submatrix(comm.matrix(), &set));
        rows.push(CheckRow::resolve(
            format!("field-commutator-{i}"),
            t,
            norm,
            system.h * system.n_t(&v, t)? * slack,
            0.0,
            ceiling,
        ));
    }

    // (c) magnetic and electric difference bounds
    let x = qc.particles[0];
    for j in 0..3 {
        for electric in [false, true] {
            let kind = if electric {
                ObservableKind::Electric { j, x }
            } else {
                ObservableKind::Magnetic { j, x }
            };
            let rep = observable_evolution(&system, &kind, t, 1)?;
            if let Some(bound) = rep.bound {
                rows.push(CheckRow::resolve(
                    rep.kind.clone(),
                    t,
                    rep.measured,
                    bound * slack + 1e-12,
                    0.0,
                    ceiling,
                ));
            }
        }
    }

    // (d) Q_t: PSD, Q_0 = 0, trace vs the Riemann oracle
    let q0 = system.qt_form(0.0)?;
    rows.push(CheckRow::resolve(
        "qt-zero-at-origin",
        0.0,
        q0.form.matrix().norm(),
        1e-14,
        0.0,
        ceiling,
    ));
    let qt = system.qt_form(t)?;
    let min_eig = qt
        .form
        .eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    rows.push(CheckRow::resolve(
        "qt-psd",
        t,
        (-min_eig).max(0.0),
        1e-10,
        0.0,
        ceiling,
    ));
    let oracle = system.qt_form_riemann(t, 10_000)?;
    rows.push(CheckRow::resolve(
        "qt-trace-oracle",
        t,
        (qt.form.trace() - oracle.trace()).abs(),
        1e-6 * oracle.trace().max(1.0),
        0.0,
        ceiling,
    ));

    // (e) spin evolution norms
    for lambda in 0..system.register.count() {
        for j in 0..3 {
            let rep = observable_evolution(&system, &ObservableKind::Spin { j, lambda }, t, 0)?;
            rows.push(CheckRow::resolve(
                format!("spin-norm-{j}-{lambda}"),
                t,
                (rep.measured - 1.0).abs(),
                1e-10,
                0.0,
                ceiling,
            ));
        }
    }
    Ok(rows)
}

fn dim_scaling_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let ds = &cfg.dim_scaling;
    let ceiling = cfg.tolerances.certificate_ceiling;
    let h = ds.h;
    let mut rows = Vec::new();

    // symplectic spectra λ_j = ratio^j, d = 1..max
    let lambdas: Vec<f64> = (1..=ds.max_dimension)
        .map(|j| ds.lambda_ratio.powi(j as i32))
        .collect();
    let factor_at = |d: usize| cv_bound_factor_from_lambdas(&lambdas[..d], h, CV_CONSTANT);
    let f_max = factor_at(ds.max_dimension);

    // the fixed symbol acts on the first phase plane; the measured norm of
    // Op(F)⊗I over d modes equals the single-mode safe norm exactly (the
    // vacuum sector of the other modes embeds the full block)
    let rep1 = Arc::new(GaussianRep::new(1, ds.truncation, h)?);
    let f1 = Symbol::cosine(RVector::from_column_slice(&[0.9, -0.5]), 0.4);
    let op1 = weyl_quantize(&f1, &rep1)?;
    let (norm1, _) = op1.weyl_norm(4);

    let mut prev_factor = 0.0;
    let mut monotone_violation = 0.0f64;
    for d in 1..=ds.max_dimension {
        let factor = factor_at(d);
        rows.push(CheckRow::resolve(
            format!("cv-factor-d{d}"),
            d as f64,
            factor,
            f_max + 1e-6,
            0.0,
            ceiling,
        ));
        rows.push(CheckRow::resolve(
            format!("norm-d{d}"),
            d as f64,
            norm1,
            norm1 + 1e-6,
            0.0,
            ceiling,
        ));
        monotone_violation = monotone_violation.max(prev_factor - factor);
        prev_factor = factor;
        // spot-check against the full normal-form route at small d
        if d <= 3 {
            let mut diag = RVector::zeros(2 * d);
            for j in 0..d {
                diag[j] = lambdas[j];
                diag[d + j] = lambdas[j];
            }
            let a = QuadraticForm::new(RMatrix::from_diagonal(&diag))?;
            let nf = symplectic_normal_form(&a)?;
            let via_form = cv_bound_factor_from_lambdas(&nf.lambdas, h, CV_CONSTANT);
            rows.push(CheckRow::resolve(
                format!("cv-factor-normal-form-d{d}"),
                d as f64,
                (via_form - factor).abs(),
                1e-9,
                0.0,
                ceiling,
            ));
        }
    }
    rows.push(CheckRow::resolve(
        "cv-factor-monotone",
        0.0,
        monotone_violation,
        1e-12,
        0.0,
        ceiling,
    ));
    Ok(rows)
}
