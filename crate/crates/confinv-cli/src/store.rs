//! Content-addressed run records.

use std::fs;
use std::path::{Path, PathBuf};

use confinv::identities::VerificationReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub tool_version: String,
    pub settings: Settings,
    pub report: VerificationReport,
}

pub const HASH_PREFIX: usize = 16;

/// SHA-256 over the settings and the tool version.
pub fn config_hash(settings: &Settings) -> String {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(settings).expect("settings serialise"));
    hex::encode(h.finalize())
}

impl RunRecord {
    pub fn new(settings: Settings, report: VerificationReport) -> Self {
        RunRecord {
            config_hash: config_hash(&settings),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            settings,
            report,
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.json", &self.config_hash[..HASH_PREFIX])
    }
}

/// Writes the record under its hash prefix. An existing record for the same
/// configuration is left untouched, so repeated identical runs keep one file.
pub fn persist(record: &RunRecord, dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(record.file_name());
    if path.exists() {
        return Ok(path);
    }
    let tmp = dir.join(format!(".{}.tmp", record.file_name()));
    let text = serde_json::to_string_pretty(record).expect("record serialises");
    fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Every record in `dir`, oldest first.
pub fn list(dir: &Path) -> Result<Vec<(PathBuf, RunRecord)>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_none_or(|x| x != "json") || path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')) {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let rec: RunRecord = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        out.push((path, rec));
    }
    out.sort_by(|a, b| (&a.1.timestamp, &a.0).cmp(&(&b.1.timestamp, &b.0)));
    Ok(out)
}
