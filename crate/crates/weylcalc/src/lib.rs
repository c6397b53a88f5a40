//! Finite-dimensional engine for a semiclassical Weyl calculus on Gaussian
//! L² spaces.
//!
//! The quantum state space is L²(Rᵈ, μ_{h/2}) with μ_{h/2} the centered
//! Gaussian measure of variance h/2, realized in a truncated Hermite basis
//! ([`rep::GaussianRep`]). Phase-space functions ([`symbol::Symbol`]) are
//! quantized through the Wigner pairing ([`quantize::weyl_quantize`]), and the
//! calculus is equipped with
//!
//! - Fredholm-determinant operator-norm bounds driven by the symplectic
//!   spectrum of a nonnegative quadratic form ([`phase`]),
//! - metaplectic (Bogoliubov) covariance for the three generator families
//!   ([`metaplectic`]),
//! - a Beals-type commutator characterization with a constructive symbol
//!   reconstruction ([`beals`]),
//! - Monte-Carlo verification of stochastic-extension bounds
//!   ([`stochastic`]),
//! - a truncated spin-boson model of fixed spin-1/2 particles coupled to a
//!   quantized transverse field ([`qed`]).
//!
//! Dense kernels (quadrature sums, corpus sweeps, lattice evaluations) are
//! data-parallel through [`exec`]; disabling the `parallel` feature (or
//! calling [`exec::force_sequential`]) selects the sequential fallback.

pub mod beals;
pub mod displacement;
pub mod error;
pub mod exec;
pub mod metaplectic;
pub mod phase;
pub mod qed;
pub mod quantize;
pub mod rep;
pub mod stochastic;
pub mod symbol;

pub use error::WeylError;

/// Dense complex matrix used throughout.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;
/// Dense real matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type RVector = nalgebra::DVector<f64>;
/// Complex scalar.
pub type C64 = num_complex::Complex64;
