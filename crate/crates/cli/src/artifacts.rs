//! Artifact plumbing: run manifests, round checkpoints, and the CSV layouts
//! shared by the commands.
//!
//! Every writer here is deterministic: JSON fields serialize in struct
//! order, floats print in shortest round-trip form, and nothing embeds wall
//! clock state. Rerunning a command with the same config and seed rewrites
//! every file with identical bytes.

use std::path::{Path, PathBuf};

use lsgd_core::residue::ResidueReport;
use lsgd_core::spectral::{soe_contribution, zero_eig_threshold, SpectralReport};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_text(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Identifies a run: which command produced the artifacts, from which
/// config bytes, under which seed and library versions.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_file: String,
    pub config_sha256: &'a str,
    pub seed: u64,
    pub deterministic: bool,
    pub versions: Versions,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub cli: &'static str,
    pub core: &'static str,
}

pub fn versions() -> Versions {
    Versions {
        cli: env!("CARGO_PKG_VERSION"),
        core: lsgd_core::VERSION,
    }
}

/// The saved state of one training round: the iterate entering the round
/// and the aggregated update applied to it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub loss: f64,
    pub x: Vec<f64>,
    pub delta: Vec<f64>,
}

pub fn checkpoint_path(out_dir: &Path, round: usize) -> PathBuf {
    out_dir.join(format!("checkpoints/round_{round}.json"))
}

pub fn write_checkpoint(out_dir: &Path, ck: &Checkpoint) -> CliResult<()> {
    ensure_dir(&out_dir.join("checkpoints"))?;
    write_json(&checkpoint_path(out_dir, ck.round), ck)
}

pub fn read_checkpoint(out_dir: &Path, round: usize) -> CliResult<Checkpoint> {
    let path = checkpoint_path(out_dir, round);
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CliError::Config(format!(
            "missing checkpoint for round {round}: {} (run `lsgd train` with this round listed first)",
            path.display()
        ))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("corrupt checkpoint {}: {e}", path.display())))
}

impl Checkpoint {
    pub fn x_array(&self) -> Array1<f64> {
        Array1::from_vec(self.x.clone())
    }

    pub fn delta_array(&self) -> Array1<f64> {
        Array1::from_vec(self.delta.clone())
    }
}

/// CPDF curve of one analyzed round.
pub fn cpdf_csv(report: &SpectralReport) -> String {
    let mut out = String::from("threshold,cpdf_gradient,cpdf_update\n");
    for p in &report.cpdf {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.gradient, p.update));
    }
    out
}

/// Per-direction table of one analyzed round: eigenvalue, gradient energy,
/// and the predicted second-order loss contribution.
pub fn soe_csv(report: &SpectralReport) -> String {
    let mut out = String::from("lambda,gradient_energy,update_energy,soe_contribution\n");
    let zero_tol = zero_eig_threshold(&report.eigenvalues);
    for ((lambda, ge), ue) in report
        .eigenvalues
        .iter()
        .zip(&report.gradient_energies)
        .zip(&report.update_energies)
    {
        let lam = if lambda.abs() <= zero_tol { 0.0 } else { *lambda };
        let s = soe_contribution(*ge, lam, report.learning_rate, report.local_steps);
        out.push_str(&format!("{lambda},{ge},{ue},{s}\n"));
    }
    out
}

/// Spectrum extent per analyzed round.
pub fn eigenvalue_range_csv(rows: &[(usize, f64, f64)]) -> String {
    let mut out = String::from("round,lambda_min,lambda_max\n");
    for (round, lo, hi) in rows {
        out.push_str(&format!("{round},{lo},{hi}\n"));
    }
    out
}

/// Residue table: one row per (anchor round, trajectory depth).
pub fn residue_csv(rows: &[ResidueReport]) -> String {
    let mut out = String::from("round,k,trials,grad_norm,residue_norm,ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.round, r.local_steps, r.trials, r.grad_norm, r.residue_norm, r.ratio
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use lsgd_core::residue::TrialStats;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn checkpoint_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let ck = Checkpoint {
            round: 3,
            loss: 0.25,
            x: vec![1.0, -2.0],
            delta: vec![0.5, 0.125],
        };
        write_checkpoint(dir.path(), &ck).unwrap();
        let back = read_checkpoint(dir.path(), 3).unwrap();
        assert_eq!(back.round, 3);
        assert_eq!(back.x, ck.x);
        assert_eq!(back.delta, ck.delta);
    }

    #[test]
    fn missing_checkpoint_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_checkpoint(dir.path(), 7).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);
        assert!(err.to_string().contains("round 7"), "{err}");
    }

    #[test]
    fn residue_csv_prints_infinite_ratio_as_inf() {
        let report = ResidueReport {
            round: 10,
            local_steps: 30,
            trials: 8,
            excluded: 0,
            grad_norm: 1.5,
            residue_norm: 0.0,
            ratio: f64::INFINITY,
            trial_norms: TrialStats {
                mean: 0.0,
                std: 0.0,
                min: 0.0,
                max: 0.0,
            },
        };
        let csv = residue_csv(&[report]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "round,k,trials,grad_norm,residue_norm,ratio");
        assert_eq!(lines.next().unwrap(), "10,30,8,1.5,0,inf");
    }

    #[test]
    fn residue_json_carries_inf_sentinel_as_string() {
        let report = ResidueReport {
            round: 0,
            local_steps: 5,
            trials: 2,
            excluded: 0,
            grad_norm: 1.0,
            residue_norm: 0.0,
            ratio: f64::INFINITY,
            trial_norms: TrialStats {
                mean: 0.0,
                std: 0.0,
                min: 0.0,
                max: 0.0,
            },
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"ratio\":\"inf\""), "{json}");
    }

    #[test]
    fn eigenvalue_range_layout() {
        let csv = eigenvalue_range_csv(&[(10, -4.869e-10, 1.558)]);
        assert_eq!(
            csv,
            "round,lambda_min,lambda_max\n10,-0.0000000004869,1.558\n"
        );
    }
}
