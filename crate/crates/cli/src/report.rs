//! Report bundle: the single structured artifact every verb emits.
//!
//! Every numeric outcome carries its tolerance and pass flag. All
//! wall-clock data lives in the dedicated `timestamps` field, so two runs of
//! the same configuration and seed produce bundles that are byte-identical
//! after that one field is normalized (see [`deterministic_bytes`]).

use std::path::Path;

use envar_core::bn::WeakStrongReport;
use envar_core::defect::{DefectCurve, Selection};
use envar_core::verifier::{AprioriReport, ResidualReport};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: &str = "1";
/// Version of the map from implemented checks to the write-up's numbered
/// statements; bundles embed it so reports stay citable across revisions.
pub const REF_MAP_VERSION: &str = "envar-refmap-1";

/// Wall-clock data, quarantined from the deterministic payload.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub elapsed_ms: u128,
}

/// One asserted numeric check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckOutcome {
    /// Pass iff `value <= tolerance`.
    pub fn le(name: &str, value: f64, tolerance: f64) -> Self {
        CheckOutcome { name: name.into(), value, tolerance, pass: value <= tolerance }
    }

    /// Pass iff `value` is true; recorded as 1/0 against tolerance 1.
    pub fn flag(name: &str, value: bool) -> Self {
        CheckOutcome { name: name.into(), value: if value { 1.0 } else { 0.0 }, tolerance: 1.0, pass: value }
    }
}

/// Convexity-probe outcomes (both shipped lemma probes fit this shape).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub name: String,
    pub worst_violation: f64,
    pub verdict_convex: bool,
    /// Present when a midpoint-convexity violation witness was found.
    pub witness: Option<serde_json::Value>,
}

/// The single structured artifact of a verb invocation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: String,
    pub ref_map_version: String,
    pub verb: String,
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<ResidualReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apriori: Option<AprioriReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect: Option<DefectCurve<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection<f64>>,
    /// Candidate labels for a selection run, index-aligned with the scan.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub selection_candidates: Vec<String>,
    /// Per-candidate functional values (the proof-of-minimality scan).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub selection_values: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub probes: Vec<ProbeRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_strong: Option<WeakStrongReport<f64>>,
    pub timestamps: Timestamps,
}

impl ReportBundle {
    pub fn new(verb: &str, config_hash: &str, seed: u64) -> Self {
        ReportBundle {
            schema_version: REPORT_SCHEMA_VERSION.into(),
            ref_map_version: REF_MAP_VERSION.into(),
            verb: verb.into(),
            config_hash: config_hash.into(),
            seed,
            checks: Vec::new(),
            residual: None,
            apriori: None,
            defect: None,
            selection: None,
            selection_candidates: Vec::new(),
            selection_values: Vec::new(),
            probes: Vec::new(),
            weak_strong: None,
            timestamps: Timestamps::default(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("bundle serializes"))
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }
}

/// Serialization with the timestamps normalized to zero: the determinism
/// contract is equality of these bytes across same-seed runs.
pub fn deterministic_bytes(bundle: &ReportBundle) -> Vec<u8> {
    let mut clean = bundle.clone();
    clean.timestamps = Timestamps::default();
    serde_json::to_vec_pretty(&clean).expect("bundle serializes")
}

pub fn now_unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}
