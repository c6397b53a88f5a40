//! Strict experiment configuration: a single nested TOML file per run.
//! Unknown keys are rejected and numeric fields are range-checked.

use anyhow::{Context, Result, bail};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed for all RNG streams (split per corpus item).
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory override.
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub form: FormConfig,
    #[serde(default)]
    pub metaplectic: MetaplecticConfig,
    #[serde(default)]
    pub beals: BealsConfig,
    #[serde(default)]
    pub stochastic: StochasticConfig,
    #[serde(default)]
    pub qed: QedConfig,
    #[serde(default)]
    pub dim_scaling: DimScalingConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

fn default_seed() -> u64 {
    42
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Phase-space dimensions to sweep.
    pub dimensions: Vec<usize>,
    /// Per-coordinate Hermite truncation.
    pub truncation: usize,
    pub h_values: Vec<f64>,
    /// Symbols per dimension.
    pub symbol_count: usize,
    pub max_terms: usize,
    pub max_frequency: f64,
    /// Safe-subblock margin for norms.
    pub margin: usize,
    /// Sample budget of the seminorm estimator.
    pub seminorm_budget: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            dimensions: vec![1],
            truncation: 30,
            h_values: vec![0.5],
            symbol_count: 8,
            max_terms: 3,
            max_frequency: 2.0,
            margin: 4,
            seminorm_budget: 4000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormConfig {
    /// Geometric eigenvalue profile: λ_j = max · ratio^{j-1}.
    pub eigenvalue_max: f64,
    pub eigenvalue_ratio: f64,
    /// Conjugate by a random symplectic map of this magnitude.
    pub symplectic_mixing: f64,
}

impl Default for FormConfig {
    fn default() -> Self {
        Self {
            eigenvalue_max: 1.0,
            eigenvalue_ratio: 0.5,
            symplectic_mixing: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaplecticConfig {
    pub composite_count: usize,
    pub generator_scale_d1: f64,
    pub generator_scale_d2: f64,
    pub truncation_d1: usize,
    pub truncation_d2: usize,
    pub margin_d1: usize,
    pub margin_d2: usize,
}

impl Default for MetaplecticConfig {
    fn default() -> Self {
        Self {
            composite_count: 6,
            generator_scale_d1: 0.2,
            generator_scale_d2: 0.12,
            truncation_d1: 40,
            truncation_d2: 20,
            margin_d1: 24,
            margin_d2: 13,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BealsConfig {
    pub h: f64,
    /// Truncation for probe-accuracy (trig) reconstructions.
    pub truncation_probe: usize,
    /// Truncation for re-quantization (translation) reconstructions.
    pub truncation_requant: usize,
    pub trig_count: usize,
    pub translation_count: usize,
    /// Safe degree K of the re-quantization block (margin = N − K).
    pub requant_degree: usize,
    pub t_radius_requant: f64,
    /// Truncation for composition round trips.
    pub compose_truncation: usize,
}

impl Default for BealsConfig {
    fn default() -> Self {
        Self {
            h: 0.5,
            truncation_probe: 24,
            truncation_requant: 40,
            trig_count: 3,
            translation_count: 1,
            requant_degree: 6,
            t_radius_requant: 7.5,
            compose_truncation: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StochasticConfig {
    pub samples: usize,
    pub h: f64,
    pub p: f64,
    /// Nested ladders (coarse_dim, fine_dim) in an ambient R^{2·fine…}.
    pub ladders: Vec<[usize; 2]>,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            h: 0.5,
            p: 2.0,
            ladders: vec![[1, 2], [2, 4], [1, 4]],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QedConfig {
    pub modes: Vec<[f64; 3]>,
    pub mode_weights: Vec<f64>,
    pub n_max: usize,
    pub particles: Vec<[f64; 3]>,
    pub beta: [f64; 3],
    pub time: f64,
    pub cutoff_scale: f64,
    pub infrared_min: Option<f64>,
    pub h: f64,
    pub dimension_ceiling: usize,
    pub commutator_directions: usize,
}

impl Default for QedConfig {
    fn default() -> Self {
        Self {
            modes: vec![[0.0, 0.0, 1.0]],
            mode_weights: vec![1.0],
            n_max: 3,
            particles: vec![[0.0, 0.0, 0.0]],
            beta: [0.2, 0.1, 0.4],
            time: 0.5,
            cutoff_scale: 1.0,
            infrared_min: None,
            h: 0.5,
            dimension_ceiling: 4096,
            commutator_directions: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimScalingConfig {
    pub max_dimension: usize,
    pub lambda_ratio: f64,
    pub h: f64,
    pub truncation: usize,
}

impl Default for DimScalingConfig {
    fn default() -> Self {
        Self {
            max_dimension: 8,
            lambda_ratio: 0.25,
            h: 1.0,
            truncation: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub wick_heat: f64,
    pub covariance: f64,
    pub beals_probe: f64,
    pub beals_requant: f64,
    pub compose: f64,
    pub qed_identity: f64,
    pub qed_slack: f64,
    /// Truncation-certificate ceiling: checks exceeding it go inconclusive.
    pub certificate_ceiling: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            wick_heat: 1e-6,
            covariance: 1e-6,
            beals_probe: 1e-3,
            beals_requant: 1e-4,
            compose: 1e-3,
            qed_identity: 1e-6,
            qed_slack: 0.05,
            certificate_ceiling: 1e-2,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.truncation == 0 || self.corpus.truncation > 120 {
            bail!("corpus.truncation must be in 1..=120");
        }
        for &d in &self.corpus.dimensions {
            if d == 0 || d > 4 {
                bail!("corpus.dimensions entries must be in 1..=4");
            }
        }
        for &h in &self.corpus.h_values {
            if h <= 0.0 || h > 10.0 {
                bail!("corpus.h_values must be in (0, 10]");
            }
        }
        if self.corpus.max_frequency <= 0.0 || self.corpus.max_frequency > 8.0 {
            bail!("corpus.max_frequency must be in (0, 8]");
        }
        if !(0.0..=1.0).contains(&self.form.eigenvalue_ratio) || self.form.eigenvalue_ratio == 0.0
        {
            bail!("form.eigenvalue_ratio must be in (0, 1]");
        }
        if self.form.eigenvalue_max <= 0.0 {
            bail!("form.eigenvalue_max must be positive");
        }
        if self.stochastic.p < 1.0 {
            bail!("stochastic.p must be ≥ 1");
        }
        if self.stochastic.samples == 0 {
            bail!("stochastic.samples must be positive");
        }
        if self.qed.modes.len() != self.qed.mode_weights.len() {
            bail!("qed.modes and qed.mode_weights must align");
        }
        if self.qed.particles.is_empty() {
            bail!("qed.particles must be nonempty");
        }
        if self.qed.h <= 0.0 || self.beals.h <= 0.0 || self.stochastic.h <= 0.0 {
            bail!("variance parameters must be positive");
        }
        if self.dim_scaling.max_dimension == 0 || self.dim_scaling.max_dimension > 16 {
            bail!("dim_scaling.max_dimension must be in 1..=16");
        }
        Ok(())
    }

    /// Canonical serialization used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
