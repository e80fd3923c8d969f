//! Dataset manifest: JSON array of scan records referencing HBV1 files.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{ScanLabel, Timepoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub scan_id: String,
    pub patient_id: String,
    pub timepoint: Timepoint,
    /// Volume file path relative to the manifest location.
    pub file: String,
    pub label: ScanLabel,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, entries)
        .map_err(|e| Error::Format(format!("manifest write: {e}")))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let r = BufReader::new(File::open(path)?);
    let entries: Vec<ManifestEntry> =
        serde_json::from_reader(r).map_err(|e| Error::Format(format!("manifest read: {e}")))?;
    for e in &entries {
        e.label.validate()?;
    }
    Ok(entries)
}
