//! Trajectory persistence with bit-exact payloads and a config-hash manifest.
//!
//! Times, states, and auxiliary energies are stored as hex bit patterns so a
//! save/load round trip reproduces every float exactly. The embedded config
//! hash ties the file to the configuration that produced it; a consumer run
//! under a different configuration is refused unless forced.

use std::path::Path;

use envar_core::framework::{Provenance, StepCertificate, Trajectory};
use serde::{Deserialize, Serialize};

use crate::hexfloat;

pub const TRAJECTORY_SCHEMA_VERSION: &str = "1";

/// One step certificate with the gap in hex form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub gap_estimate: String,
    pub certifying_dual: Vec<String>,
    pub iterations: usize,
    pub converged: bool,
}

/// On-disk trajectory format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub schema_version: String,
    pub config_hash: String,
    pub provenance: Provenance,
    pub times: Vec<String>,
    pub states: Vec<Vec<String>>,
    pub aux_energy: Vec<String>,
    pub certificates: Vec<CertificateRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed trajectory file {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("config hash mismatch in {path}: file has {found}, expected {expected} (use --force to override)")]
    HashMismatch { path: String, found: String, expected: String },
}

pub fn save_trajectory(
    path: &Path,
    traj: &Trajectory<f64>,
    config_hash: &str,
) -> Result<(), ArtifactError> {
    let file = TrajectoryFile {
        schema_version: TRAJECTORY_SCHEMA_VERSION.into(),
        config_hash: config_hash.into(),
        provenance: traj.provenance.clone(),
        times: hexfloat::encode_vec(&traj.times),
        states: traj.states.iter().map(|s| hexfloat::encode_vec(s)).collect(),
        aux_energy: hexfloat::encode_vec(&traj.aux_energy),
        certificates: traj
            .certificates
            .iter()
            .map(|c| CertificateRecord {
                gap_estimate: hexfloat::encode(c.gap_estimate),
                certifying_dual: hexfloat::encode_vec(&c.certifying_dual),
                iterations: c.iterations,
                converged: c.converged,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("trajectory serializes");
    std::fs::write(path, text)
        .map_err(|e| ArtifactError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Load and decode; refuses a config-hash mismatch unless `force`.
pub fn load_trajectory(
    path: &Path,
    expected_hash: &str,
    force: bool,
) -> Result<Trajectory<f64>, ArtifactError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ArtifactError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let p = || path.display().to_string();
    let file: TrajectoryFile = serde_json::from_str(&text)
        .map_err(|e| ArtifactError::Malformed { path: p(), message: e.to_string() })?;
    if file.schema_version != TRAJECTORY_SCHEMA_VERSION {
        return Err(ArtifactError::Malformed {
            path: p(),
            message: format!("unsupported schema version {}", file.schema_version),
        });
    }
    if !force && file.config_hash != expected_hash {
        return Err(ArtifactError::HashMismatch {
            path: p(),
            found: file.config_hash,
            expected: expected_hash.into(),
        });
    }
    let dec = |v: &[String]| {
        hexfloat::decode_vec(v).map_err(|e| ArtifactError::Malformed { path: p(), message: e })
    };
    Ok(Trajectory {
        times: dec(&file.times)?,
        states: file.states.iter().map(|s| dec(s)).collect::<Result<_, _>>()?,
        aux_energy: dec(&file.aux_energy)?,
        provenance: file.provenance,
        certificates: file
            .certificates
            .iter()
            .map(|c| {
                Ok(StepCertificate {
                    gap_estimate: hexfloat::decode(&c.gap_estimate)
                        .map_err(|e| ArtifactError::Malformed { path: p(), message: e })?,
                    certifying_dual: dec(&c.certifying_dual)?,
                    iterations: c.iterations,
                    converged: c.converged,
                })
            })
            .collect::<Result<_, _>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory<f64> {
        Trajectory {
            times: vec![0.0, 0.1 + 0.2, 1.0 / 3.0],
            states: vec![vec![1.0, -0.0], vec![f64::MIN_POSITIVE / 2.0, 2.0], vec![3.0, 4.0]],
            aux_energy: vec![2.0, 1.5, 1.25],
            provenance: Provenance { system: "test".into(), tau: 0.1, ..Default::default() },
            certificates: vec![StepCertificate {
                gap_estimate: 1e-9,
                certifying_dual: vec![0.25, -0.5],
                iterations: 12,
                converged: true,
            }],
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.json");
        let traj = sample();
        save_trajectory(&path, &traj, "abc").unwrap();
        let back = load_trajectory(&path, "abc", false).unwrap();
        assert_eq!(traj.times.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   back.times.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        for (a, b) in traj.states.iter().zip(&back.states) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.certificates[0].iterations, 12);
        // Saving the loaded copy reproduces the file byte for byte.
        let path2 = dir.path().join("traj2.json");
        save_trajectory(&path2, &back, "abc").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn edited_manifest_is_refused_unless_forced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.json");
        save_trajectory(&path, &sample(), "good-hash").unwrap();
        let edited = std::fs::read_to_string(&path).unwrap().replace("good-hash", "evil-hash");
        std::fs::write(&path, edited).unwrap();
        assert!(matches!(
            load_trajectory(&path, "good-hash", false),
            Err(ArtifactError::HashMismatch { .. })
        ));
        assert!(load_trajectory(&path, "good-hash", true).is_ok());
    }

    #[test]
    fn malformed_payload_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.json");
        save_trajectory(&path, &sample(), "h").unwrap();
        let broken = std::fs::read_to_string(&path).unwrap().replacen("0x", "0y", 1);
        std::fs::write(&path, broken).unwrap();
        assert!(matches!(load_trajectory(&path, "h", false), Err(ArtifactError::Malformed { .. })));
    }
}
