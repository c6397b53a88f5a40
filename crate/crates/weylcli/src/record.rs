//! Run records: per-check outcomes with a deterministic payload hash.
//!
//! The hash covers everything that must be reproducible for identical
//! config + seed (schema version, suite, config hash, seed, check rows);
//! wall time and toolchain versions ride along unhashed.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckOutcome {
    Pass,
    Fail,
    /// The truncation-error certificate exceeded its tolerance: the check
    /// resolves neither way.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRow {
    pub id: String,
    /// Sweep parameter (h, t, dimension index, …) when one applies.
    pub parameter: f64,
    pub measured: f64,
    pub bound: f64,
    /// bound − measured (negative means violation).
    pub margin: f64,
    pub outcome: CheckOutcome,
    /// Truncation/convergence certificate attached to the check.
    pub certificate: f64,
}

impl CheckRow {
    /// Three-valued verdict: fail-closed on bad certificates.
    pub fn resolve(
        id: impl Into<String>,
        parameter: f64,
        measured: f64,
        bound: f64,
        certificate: f64,
        certificate_ceiling: f64,
    ) -> Self {
        let ok = measured <= bound;
        let outcome = if certificate > certificate_ceiling {
            CheckOutcome::Inconclusive
        } else if ok {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        };
        Self {
            id: id.into(),
            parameter,
            measured,
            bound,
            margin: bound - measured,
            outcome,
            certificate,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub suite: String,
    pub seed: u64,
    pub config_hash: String,
    pub checks: Vec<CheckRow>,
    /// SHA-256 over the deterministic payload.
    pub payload_hash: String,
    /// Not hashed.
    pub wall_time_secs: f64,
    pub package_version: String,
}

impl RunRecord {
    pub fn assemble(
        suite: &str,
        seed: u64,
        config_canonical: &str,
        checks: Vec<CheckRow>,
        wall_time_secs: f64,
    ) -> Self {
        let config_hash = hex_digest(config_canonical.as_bytes());
        let payload = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "suite": suite,
            "seed": seed,
            "config_hash": config_hash,
            "checks": checks,
        });
        let payload_hash = hex_digest(payload.to_string().as_bytes());
        Self {
            schema_version: SCHEMA_VERSION,
            suite: suite.to_string(),
            seed,
            config_hash,
            checks,
            payload_hash,
            wall_time_secs,
            package_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn n_failed(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.outcome == CheckOutcome::Fail)
            .count()
    }

    pub fn n_inconclusive(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.outcome == CheckOutcome::Inconclusive)
            .count()
    }

    /// Process exit code: 0 pass, 1 any fail, 2 inconclusive-only.
    pub fn exit_code(&self) -> i32 {
        if self.n_failed() > 0 {
            1
        } else if self.n_inconclusive() > 0 {
            2
        } else {
            0
        }
    }

    /// Long-format table for external plotting; stable column order.
    pub fn plot_rows(&self, kind: &str) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        match kind {
            "margins" => {
                let header = vec!["check-id", "parameter", "measured", "bound", "margin", "outcome"];
                let rows = self
                    .checks
                    .iter()
                    .map(|c| {
                        vec![
                            c.id.clone(),
                            format!("{:.12e}", c.parameter),
                            format!("{:.12e}", c.measured),
                            format!("{:.12e}", c.bound),
                            format!("{:.12e}", c.margin),
                            format!("{:?}", c.outcome).to_lowercase(),
                        ]
                    })
                    .collect();
                Some((header, rows))
            }
            "qed" => {
                let header = vec!["t", "observable", "measured", "bound", "residual"];
                let rows = self
                    .checks
                    .iter()
                    .map(|c| {
                        vec![
                            format!("{:.12e}", c.parameter),
                            c.id.clone(),
                            format!("{:.12e}", c.measured),
                            format!("{:.12e}", c.bound),
                            format!("{:.12e}", c.certificate),
                        ]
                    })
                    .collect();
                Some((header, rows))
            }
            _ => None,
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_excludes_wall_time() {
        let rows = vec![CheckRow::resolve("a", 1.0, 0.5, 1.0, 0.0, 1.0)];
        let r1 = RunRecord::assemble("suite", 7, "cfg", rows.clone(), 1.0);
        let r2 = RunRecord::assemble("suite", 7, "cfg", rows, 99.0);
        assert_eq!(r1.payload_hash, r2.payload_hash);
    }

    #[test]
    fn fail_closed_on_certificates() {
        let row = CheckRow::resolve("x", 0.0, 0.1, 1.0, 0.5, 0.01);
        assert_eq!(row.outcome, CheckOutcome::Inconclusive);
        let row = CheckRow::resolve("x", 0.0, 2.0, 1.0, 0.0, 0.01);
        assert_eq!(row.outcome, CheckOutcome::Fail);
        let row = CheckRow::resolve("x", 0.0, 0.1, 1.0, 0.0, 0.01);
        assert_eq!(row.outcome, CheckOutcome::Pass);
    }

    #[test]
    fn exit_codes() {
        let pass = CheckRow::resolve("a", 0.0, 0.0, 1.0, 0.0, 1.0);
        let fail = CheckRow::resolve("b", 0.0, 2.0, 1.0, 0.0, 1.0);
        let inc = CheckRow::resolve("c", 0.0, 0.0, 1.0, 2.0, 1.0);
        assert_eq!(
            RunRecord::assemble("s", 0, "c", vec![pass.clone()], 0.0).exit_code(),
            0
        );
        assert_eq!(
            RunRecord::assemble("s", 0, "c", vec![pass.clone(), fail], 0.0).exit_code(),
            1
        );
        assert_eq!(
            RunRecord::assemble("s", 0, "c", vec![pass, inc], 0.0).exit_code(),
            2
        );
    }

    #[test]
    fn plot_rows_schema() {
        let rows = vec![CheckRow::resolve("sym-0", 0.5, 0.9, 1.5, 0.0, 1.0)];
        let rec = RunRecord::assemble("cv-bound", 1, "c", rows, 0.0);
        let (header, rows) = rec.plot_rows("margins").unwrap();
        assert_eq!(header[0], "check-id");
        assert_eq!(rows.len(), 1);
        assert!(rec.plot_rows("unknown-kind").is_none());
        // empty record → header-only
        let rec = RunRecord::assemble("cv-bound", 1, "c", vec![], 0.0);
        let (_, rows) = rec.plot_rows("margins").unwrap();
        assert!(rows.is_empty());
    }
}
