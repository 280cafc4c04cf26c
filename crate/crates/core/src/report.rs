//! File formats: field CSV dumps, trajectory summaries, slope tables,
//! optimizer reports and the run manifest.
//!
//! All numeric output goes through the shortest round-trip float formatting,
//! so identical inputs produce byte-identical files.

use crate::optimizer::{IterRecord, OptimStatus};
use crate::sensitivity::SlopeTable;
use crate::spectral::{BasisTable, SpectralField, Tables};
use crate::state::{ControlTrajectory, EnergyLedger, SolverConfig, Trajectory};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

pub type IoResult<T> = std::io::Result<T>;

/// Side-car descriptor written next to every field CSV.
#[derive(Debug, Clone, Serialize)]
pub struct FieldDescriptor {
    #[serde(rename = "K")]
    pub k_trunc: usize,
    pub alpha: f64,
    pub normalization: &'static str,
}

impl FieldDescriptor {
    pub fn new(basis: &BasisTable) -> Self {
        Self {
            k_trunc: basis.k_trunc(),
            alpha: basis.alpha(),
            normalization: "L2-orthonormal",
        }
    }
}

/// Writes a field as `k,m,coeff` rows plus the JSON side-car descriptor.
pub fn write_field_csv(path: &Path, basis: &BasisTable, f: &SpectralField) -> IoResult<()> {
    let mut out = String::from("k,m,coeff\n");
    for (idx, c) in f.coeff().iter().enumerate() {
        let mode = basis.mode(idx);
        out.push_str(&format!("{},{},{}\n", mode.k, mode.m, c));
    }
    std::fs::write(path, out)?;
    let descriptor = FieldDescriptor::new(basis);
    let side = path.with_extension("json");
    std::fs::write(side, serde_json::to_string_pretty(&descriptor)?)?;
    Ok(())
}

/// Reads a `k,m,coeff` CSV back into a field.
pub fn read_field_csv(path: &Path, k_trunc: usize) -> IoResult<SpectralField> {
    let text = std::fs::read_to_string(path)?;
    let mut f = SpectralField::zeros(k_trunc);
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> IoResult<f64> {
            s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad field row at line {}", ln + 1),
                )
            })
        };
        let k = parse(parts.next())? as usize;
        let m = parse(parts.next())? as usize;
        let c = parse(parts.next())?;
        if k < 1 || k > k_trunc || m < 1 || m > k_trunc {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("mode ({k},{m}) outside truncation {k_trunc}"),
            ));
        }
        f.coeff_mut()[(k - 1) * k_trunc + (m - 1)] = c;
    }
    Ok(f)
}

/// Writes the per-interval control dump: `interval,k,m,coeff` rows.
pub fn write_control_csv(
    path: &Path,
    basis: &BasisTable,
    u: &ControlTrajectory,
) -> IoResult<()> {
    let mut out = String::from("interval,k,m,coeff\n");
    for (i, field) in u.values().iter().enumerate() {
        for (idx, c) in field.coeff().iter().enumerate() {
            let mode = basis.mode(idx);
            out.push_str(&format!("{},{},{},{}\n", i, mode.k, mode.m, c));
        }
    }
    std::fs::write(path, out)?;
    #[derive(Serialize)]
    struct ControlDescriptor {
        #[serde(rename = "K")]
        k_trunc: usize,
        alpha: f64,
        normalization: &'static str,
        n_intervals: usize,
        #[serde(rename = "T")]
        t_final: f64,
    }
    let side = path.with_extension("json");
    std::fs::write(
        side,
        serde_json::to_string_pretty(&ControlDescriptor {
            k_trunc: basis.k_trunc(),
            alpha: basis.alpha(),
            normalization: "L2-orthonormal",
            n_intervals: u.n_intervals(),
            t_final: u.t_final(),
        })?,
    )?;
    Ok(())
}

/// Trajectory summary rows: `t, E, Dnorm2, curl_sigma_norm, energy_residual`.
///
/// `residuals` holds one energy-identity residual per step (the appropriate
/// identity depends on which equation the trajectory solves); row n carries
/// the residual of the step ending at n, with 0 on the initial row.
pub fn write_summary_csv(
    path: &Path,
    tables: &Tables,
    traj: &Trajectory,
    residuals: &[f64],
) -> IoResult<()> {
    let mut out = String::from("t,E,Dnorm2,curl_sigma_norm,energy_residual\n");
    for (n, snap) in traj.snapshots().iter().enumerate() {
        let norms = crate::spectral::norms(tables.basis(), snap);
        let res = if n == 0 { 0.0 } else { residuals[n - 1] };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            traj.time(n),
            crate::state::energy(tables, snap),
            norms.dnorm * norms.dnorm,
            norms.curl_sigma_norm,
            res
        ));
    }
    std::fs::write(path, out)
}

/// Slope-table rows: `rho, J_perturbed, remainder, remainder_over_rho`.
pub fn write_slope_csv(path: &Path, table: &SlopeTable) -> IoResult<()> {
    let mut out = String::from("rho,J_perturbed,remainder,remainder_over_rho\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.rho, row.j_perturbed, row.remainder, row.remainder_over_rho
        ));
    }
    std::fs::write(path, out)
}

/// Duality report: {gap, gap_half_dt, ratio}.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub gap: f64,
    pub gap_half_dt: f64,
    pub ratio: f64,
}

/// Optimizer report as serialized to JSON.
#[derive(Debug, Clone, Serialize)]
pub struct OptimReportFile {
    pub status: OptimStatus,
    pub iters: Vec<IterRecord>,
    #[serde(rename = "finalControlFile")]
    pub final_control_file: String,
}

/// Manifest describing one run: echoed config, seed, version, outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    #[serde(rename = "configEcho")]
    pub config_echo: serde_json::Value,
    pub seed: u64,
    #[serde(rename = "artifactVersion")]
    pub artifact_version: String,
    pub outputs: Vec<OutputDigest>,
    #[serde(rename = "startedAtEpochMs")]
    pub started_at_epoch_ms: u128,
    #[serde(
        rename = "finishedAtEpochMs",
        skip_serializing_if = "Option::is_none"
    )]
    pub finished_at_epoch_ms: Option<u128>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

fn now_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    /// Opens the manifest and writes the pre-run version to disk.
    pub fn begin(
        dir: &Path,
        config_echo: serde_json::Value,
        seed: u64,
    ) -> IoResult<(Self, PathBuf)> {
        let manifest = RunManifest {
            config_echo,
            seed,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            started_at_epoch_ms: now_ms(),
            finished_at_epoch_ms: None,
        };
        let path = dir.join("manifest.json");
        manifest.write(&path)?;
        Ok((manifest, path))
    }

    /// Records a produced file and its digest.
    pub fn record(&mut self, dir: &Path, path: &Path) -> IoResult<()> {
        let bytes = std::fs::read(path)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let rel = path
            .strip_prefix(dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.outputs.push(OutputDigest {
            path: rel,
            sha256: hex_string(&hasher.finalize()),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Finalizes and rewrites the manifest.
    pub fn finish(mut self, path: &Path) -> IoResult<()> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.finished_at_epoch_ms = Some(now_ms());
        self.write(path)
    }

    fn write(&self, path: &Path) -> IoResult<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        file.write_all(b"\n")
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes trajectory snapshot dumps every `every` steps.
pub fn dump_snapshots(
    dir: &Path,
    tables: &Tables,
    traj: &Trajectory,
    every: usize,
    prefix: &str,
) -> IoResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    if every == 0 {
        return Ok(written);
    }
    let mut n = 0;
    while n <= traj.n_steps() {
        let path = dir.join(format!("{prefix}_{n:06}.csv"));
        write_field_csv(&path, tables.basis(), traj.snapshot(n))?;
        written.push(path.clone());
        written.push(path.with_extension("json"));
        n += every;
    }
    Ok(written)
}

/// Summary used by `simulate`-style drivers and the Python bindings.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub t_final: f64,
    pub n_steps: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub max_energy_residual: f64,
}

pub fn summarize(cfg: &SolverConfig, traj: &Trajectory, ledger: &EnergyLedger) -> SimulationSummary {
    SimulationSummary {
        t_final: cfg.t_final,
        n_steps: traj.n_steps(),
        initial_energy: ledger.energy[0],
        final_energy: *ledger.energy.last().unwrap(),
        max_energy_residual: ledger.max_abs_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randfield::{random_field, rng_from_seed};

    #[test]
    fn field_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("sgflow-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let tables = Tables::new(3, 0.5, None).unwrap();
        let mut rng = rng_from_seed(1);
        let f = random_field(tables.basis(), &mut rng, 1.0);
        let path = dir.join("field.csv");
        write_field_csv(&path, tables.basis(), &f).unwrap();
        let back = read_field_csv(&path, 3).unwrap();
        assert_eq!(f.coeff(), back.coeff());
        let side = std::fs::read_to_string(path.with_extension("json")).unwrap();
        assert!(side.contains("L2-orthonormal"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn manifest_digests_match_files() {
        let dir = std::env::temp_dir().join(format!("sgflow-man-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("data.csv");
        std::fs::write(&file, "k,m,coeff\n1,1,0.5\n").unwrap();
        let (mut manifest, path) =
            RunManifest::begin(&dir, serde_json::json!({"K": 2}), 7).unwrap();
        manifest.record(&dir, &file).unwrap();
        let digest = manifest.outputs[0].sha256.clone();
        manifest.finish(&path).unwrap();
        let written: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(written["outputs"][0]["sha256"], serde_json::json!(digest));
        assert_eq!(written["seed"], serde_json::json!(7));
        std::fs::remove_dir_all(&dir).ok();
    }
}
