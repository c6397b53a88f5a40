//! Batch experiment runner for the Weyl-calculus suites.
//!
//! A run takes a TOML configuration (strict schema, unknown keys rejected),
//! a master seed, and a suite name; it produces a [`record::RunRecord`] with
//! one three-valued check row per verification (pass / fail / inconclusive)
//! plus a payload hash that is identical for identical config + seed. Checks
//! whose truncation certificates exceed their tolerances are reported
//! inconclusive, never pass.

pub mod config;
pub mod record;
pub mod suites;

pub use config::ExperimentConfig;
pub use record::{CheckOutcome, CheckRow, RunRecord};
