//! CSV tables, control files and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pgld_core::skeleton::ControlPath;
use pgld_core::stepper::Trajectory;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, HarnessError, Result};

/// Named values written to `summary.json`.
pub type Summary = BTreeMap<String, serde_json::Value>;

fn csv_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Csv { path: path.to_path_buf(), message: e.to_string() }
}

/// Writes serialisable rows with a header derived from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub l2sq: f64,
    pub v2sq: f64,
    pub iterations: usize,
    pub noise_work: f64,
    pub control_sq: f64,
}

/// One row per step, preceded by the initial state at step 0.
pub fn monitor_rows(traj: &Trajectory) -> Vec<MonitorRow> {
    let mut rows = vec![MonitorRow {
        step: 0,
        t: traj.times[0],
        dt: 0.0,
        l2sq: traj.initial_l2sq,
        v2sq: traj.initial_v2sq,
        iterations: 0,
        noise_work: 0.0,
        control_sq: 0.0,
    }];
    rows.extend(traj.monitors.iter().enumerate().map(|(k, m)| MonitorRow {
        step: k + 1,
        t: m.t,
        dt: m.dt,
        l2sq: m.l2sq,
        v2sq: m.v2sq,
        iterations: m.iterations,
        noise_work: m.noise_work,
        control_sq: m.control_sq,
    }));
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ControlRow {
    interval: usize,
    t_start: f64,
    t_end: f64,
    mode: usize,
    value: f64,
}

/// Long format: one row per interval and mode.
pub fn write_control_csv(path: &Path, chi: &ControlPath) -> Result<()> {
    let mut rows = Vec::with_capacity(chi.values.len() * chi.q.len());
    for (p, v) in chi.values.iter().enumerate() {
        for (j, value) in v.iter().enumerate() {
            rows.push(ControlRow { interval: p, t_start: chi.knots[p], t_end: chi.knots[p + 1], mode: j, value: *value });
        }
    }
    write_rows(path, &rows)
}

/// Reads a control written by [`write_control_csv`]; `q` fixes the noise dimension.
pub fn read_control_csv(path: &Path, q: &[f64]) -> Result<ControlPath> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut knots = vec![0.0];
    let mut values: Vec<Vec<f64>> = Vec::new();
    for row in r.deserialize() {
        let row: ControlRow = row.map_err(|e| csv_err(path, e))?;
        if row.mode >= q.len() {
            return Err(csv_err(path, format!("mode {} outside {} noise modes", row.mode, q.len())));
        }
        if row.interval == values.len() {
            if row.t_start != *knots.last().unwrap() {
                return Err(csv_err(path, format!("interval {} does not start at the previous end", row.interval)));
            }
            knots.push(row.t_end);
            values.push(vec![f64::NAN; q.len()]);
        } else if row.interval + 1 != values.len() {
            return Err(csv_err(path, format!("interval {} out of order", row.interval)));
        } else if row.t_end != knots[row.interval + 1] {
            return Err(csv_err(path, format!("interval {} has inconsistent knots", row.interval)));
        }
        values[row.interval][row.mode] = row.value;
    }
    if values.iter().flatten().any(|v| v.is_nan()) {
        return Err(csv_err(path, "missing or non-numeric control values"));
    }
    ControlPath::new(knots, values, q.to_vec()).map_err(config_err)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Digest of the normalised configuration, after command-line overrides.
    pub config_digest: String,
    pub master_seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return v;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn digest_file(path: &Path, label: String) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(FileDigest { path: label, bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) })
}

/// Collects the files a subcommand wrote, relative to its output directory.
pub struct OutputSet {
    pub dir: PathBuf,
    files: Vec<String>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<OutputSet> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(OutputSet { dir: dir.to_path_buf(), files: Vec::new() })
    }

    /// Registers `rel` (slash-separated) and returns its full path, creating parents.
    pub fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let p = self.path(rel)?;
        let text = serde_json::to_string_pretty(value).expect("serialisable value");
        fs::write(&p, text + "\n").map_err(|e| HarnessError::io(&p, e))
    }

    pub fn finish(
        mut self,
        subcommand: &str,
        config_digest: String,
        master_seed: u64,
        inputs: &[PathBuf],
        started: u64,
    ) -> Result<RunManifest> {
        self.files.sort();
        self.files.dedup();
        let outputs =
            self.files.iter().map(|f| digest_file(&self.dir.join(f), f.clone())).collect::<Result<Vec<_>>>()?;
        let inputs = inputs
            .iter()
            .map(|p| {
                let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                digest_file(p, name)
            })
            .collect::<Result<Vec<_>>>()?;
        let m = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_digest,
            master_seed,
            started_unix: started,
            finished_unix: timestamp(),
            inputs,
            outputs,
        };
        let p = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&m).expect("serialisable manifest");
        fs::write(&p, text + "\n").map_err(|e| HarnessError::io(&p, e))?;
        Ok(m)
    }
}
