//! Run provenance and the CSV and sidecar writers that stamp it onto
//! every output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Version of the CSV and sidecar layouts.
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Columns appended to every CSV row.
pub const PROVENANCE_COLUMNS: [&str; 3] = ["seed", "config_digest", "format_version"];

/// Identity of one command run: its effective configuration and a digest
/// of it.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub format_version: u32,
    pub seed: u64,
    pub config_digest: String,
    pub config: Value,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        let canonical = serde_json::to_string(&config).expect("JSON values always serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        let config_digest = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Self {
            command: command.to_string(),
            format_version: REPORT_FORMAT_VERSION,
            seed,
            config_digest,
            config,
        }
    }

    fn columns(&self) -> [String; 3] {
        [
            self.seed.to_string(),
            self.config_digest.clone(),
            self.format_version.to_string(),
        ]
    }

    /// Writes `<path>.meta.json` describing the run that produced `path`.
    pub fn write_sidecar(&self, path: &Path) -> Result<PathBuf> {
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.json");
        let side = PathBuf::from(name);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&side, text).with_context(|| format!("cannot write {}", side.display()))?;
        Ok(side)
    }
}

/// Writes a CSV with `header` plus the provenance columns, and its sidecar.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>], prov: &Provenance) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header.iter().copied().chain(PROVENANCE_COLUMNS))?;
    let extra = prov.columns();
    for row in rows {
        anyhow::ensure!(row.len() == header.len(), "row width {} does not match header {}", row.len(), header.len());
        w.write_record(row.iter().map(String::as_str).chain(extra.iter().map(String::as_str)))?;
    }
    w.flush()?;
    prov.write_sidecar(path)?;
    Ok(())
}

/// Shortest round-trip rendering of a float, so reruns print identical
/// text.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
