//! On-disk layout shared by the commands: dataset directory, split file,
//! checkpoints, per-epoch CSV, and the long-format ratings CSV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hemiscan_core::formats::{read_hbv, read_manifest, write_hbv, write_manifest, ManifestEntry};
use hemiscan_core::metrics::RatingsMatrix;
use hemiscan_core::model::{prepare_scan, EpochLog, PreparedScan};
use hemiscan_core::phantom::GeneratedScan;
use hemiscan_core::pipeline::{PipelineConfig, Volume};
use hemiscan_core::{Error, Result};

pub fn dataset_dir(out: &Path) -> PathBuf {
    out.join("dataset")
}

pub fn manifest_path(out: &Path) -> PathBuf {
    dataset_dir(out).join("manifest.json")
}

pub fn split_path(out: &Path) -> PathBuf {
    out.join("split.json")
}

pub fn checkpoint_path(out: &Path, stage: &str) -> PathBuf {
    out.join("checkpoints").join(format!("{stage}.ckpt"))
}

/// Missing upstream artifacts are dependency errors naming the file.
pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Dependency(path.display().to_string()))
    }
}

/// Write generated scans as HBV1 volumes plus a JSON manifest.
pub fn save_dataset(out: &Path, scans: &[GeneratedScan]) -> Result<()> {
    let dir = dataset_dir(out);
    fs::create_dir_all(dir.join("volumes"))?;
    let mut entries = Vec::with_capacity(scans.len());
    for g in scans {
        let v = &g.volume;
        let rel = format!("volumes/{}.hbv", v.scan_id);
        write_hbv(&dir.join(&rel), v.slices, v.height, v.width, &v.voxels)?;
        entries.push(ManifestEntry {
            scan_id: v.scan_id.clone(),
            patient_id: v.patient_id.clone(),
            timepoint: v.timepoint,
            file: rel,
            label: g.label.clone(),
        });
    }
    write_manifest(&manifest_path(out), &entries)
}

/// Load the dataset and standardize every scan for the model.
pub fn load_dataset(out: &Path, pipe: &PipelineConfig) -> Result<Vec<PreparedScan>> {
    let path = manifest_path(out);
    require(&path)?;
    let entries = read_manifest(&path)?;
    let dir = dataset_dir(out);
    entries
        .iter()
        .map(|e| {
            let vol_path = dir.join(&e.file);
            require(&vol_path)?;
            let (s, h, w, voxels) = read_hbv(&vol_path)?;
            let v = Volume::new(
                s,
                h,
                w,
                voxels,
                e.patient_id.clone(),
                e.scan_id.clone(),
                e.timepoint,
            )?;
            prepare_scan(&v, &e.label, pipe)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    /// Scan ids in manifest order; indices below refer to this list.
    pub scan_ids: Vec<String>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn save_split(out: &Path, split: &SplitFile) -> Result<()> {
    let text = serde_json::to_string_pretty(split)
        .map_err(|e| Error::Format(format!("serializing split: {e}")))?;
    fs::write(split_path(out), text + "\n")?;
    Ok(())
}

/// Load the split and check it still matches the dataset.
pub fn load_split(out: &Path, scans: &[PreparedScan]) -> Result<SplitFile> {
    let path = split_path(out);
    require(&path)?;
    let text = fs::read_to_string(&path)?;
    let split: SplitFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if split.scan_ids.len() != scans.len()
        || split.scan_ids.iter().zip(scans).any(|(id, s)| *id != s.scan_id)
    {
        return Err(Error::Config(format!(
            "{} does not match the dataset manifest; re-run split",
            path.display()
        )));
    }
    Ok(split)
}

/// Per-epoch training CSV: epoch, stage, lr, train_loss, val_loss, val_acc.
pub fn write_epoch_csv(path: &Path, logs: &[EpochLog]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = String::from("epoch,stage,lr,train_loss,val_loss,val_acc\n");
    for l in logs {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.epoch, l.stage, l.lr, l.train_loss, l.val_loss, l.val_acc
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Parse a long-format ratings CSV (`unit,rater,category`, categories in
/// {L, R, B, N}) into a units x raters matrix. Units and raters keep their
/// order of first appearance.
pub fn parse_ratings_csv(text: &str) -> Result<RatingsMatrix> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("unit,rater,category") => {}
        other => {
            return Err(Error::Format(format!(
                "ratings CSV must start with 'unit,rater,category', got {other:?}"
            )))
        }
    }
    let mut units: Vec<String> = Vec::new();
    let mut raters: Vec<String> = Vec::new();
    let mut triples: Vec<(usize, usize, String)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (unit, rater, cat) = match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(r), Some(c)) => (u.trim(), r.trim(), c.trim()),
            _ => {
                return Err(Error::Format(format!(
                    "ratings CSV line {}: expected 3 fields, got '{line}'",
                    lineno + 2
                )))
            }
        };
        if !matches!(cat, "L" | "R" | "B" | "N") {
            return Err(Error::Format(format!(
                "ratings CSV line {}: category '{cat}' not in {{L, R, B, N}}",
                lineno + 2
            )));
        }
        let u = units.iter().position(|x| x == unit).unwrap_or_else(|| {
            units.push(unit.to_string());
            units.len() - 1
        });
        let r = raters.iter().position(|x| x == rater).unwrap_or_else(|| {
            raters.push(rater.to_string());
            raters.len() - 1
        });
        triples.push((u, r, cat.to_string()));
    }
    let mut values: Vec<Option<String>> = vec![None; units.len() * raters.len()];
    for (u, r, cat) in triples {
        let cell = &mut values[u * raters.len() + r];
        if cell.is_some() {
            return Err(Error::Format(format!(
                "duplicate rating for unit '{}' by rater '{}'",
                units[u], raters[r]
            )));
        }
        *cell = Some(cat);
    }
    RatingsMatrix::new(raters, values)
}
