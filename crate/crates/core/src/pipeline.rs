//! Volume standardization and half-brain splitting: slice sampling, intensity
//! windowing, the sagittal midline split with canonical orientation, and the
//! patient-grouped dataset split.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timepoint {
    Baseline,
    Followup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Both,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hemisphere {
    Left,
    Right,
}

impl Hemisphere {
    pub fn opposite(self) -> Hemisphere {
        match self {
            Hemisphere::Left => Hemisphere::Right,
            Hemisphere::Right => Hemisphere::Left,
        }
    }
}

/// The seven lesion-location categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Mca,
    Aca,
    Pca,
    Lacunar,
    BorderZone,
    Cerebellar,
    Brainstem,
}

impl Region {
    pub const ALL: [Region; 7] = [
        Region::Mca,
        Region::Aca,
        Region::Pca,
        Region::Lacunar,
        Region::BorderZone,
        Region::Cerebellar,
        Region::Brainstem,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Atrophy,
    Leukoaraiosis,
    OldStroke,
    NonStrokeLesion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub region: Region,
    pub side: Hemisphere,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanLabel {
    pub presence: bool,
    pub side: Side,
    pub locations: BTreeSet<Location>,
    pub size_grade: u8,
    pub background: BTreeSet<Background>,
}

impl ScanLabel {
    pub fn negative(background: BTreeSet<Background>) -> Self {
        ScanLabel {
            presence: false,
            side: Side::None,
            locations: BTreeSet::new(),
            size_grade: 0,
            background,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let side_present = self.side != Side::None;
        if self.presence != side_present || self.presence != !self.locations.is_empty() {
            return Err(Error::Config(
                "label inconsistency: presence, side, and locations must agree".into(),
            ));
        }
        if (self.size_grade == 0) != !self.presence {
            return Err(Error::Config("size_grade must be 0 iff presence is false".into()));
        }
        if self.size_grade > 4 {
            return Err(Error::Config(format!("size_grade {} out of range", self.size_grade)));
        }
        Ok(())
    }

    /// Four-class target: none / left / right / both.
    pub fn four_class(&self) -> Side {
        self.side
    }

    /// Whether any lesion lies on the given anatomical side.
    pub fn has_lesion_on(&self, hemi: Hemisphere) -> bool {
        self.locations.iter().any(|l| l.side == hemi)
    }
}

/// A brain volume: `voxels[s][h][w]` row-major, synthetic Hounsfield-like
/// intensities before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub voxels: Vec<f32>,
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    pub patient_id: String,
    pub scan_id: String,
    pub timepoint: Timepoint,
}

impl Volume {
    pub fn new(
        slices: usize,
        height: usize,
        width: usize,
        voxels: Vec<f32>,
        patient_id: impl Into<String>,
        scan_id: impl Into<String>,
        timepoint: Timepoint,
    ) -> Result<Self> {
        if voxels.len() != slices * height * width {
            return Err(Error::Dimension(format!(
                "{slices}x{height}x{width} volume needs {} voxels, got {}",
                slices * height * width,
                voxels.len()
            )));
        }
        if slices < 1 || height < 16 || width < 16 {
            return Err(Error::Dimension(format!(
                "volume shape {slices}x{height}x{width} below minimum 1x16x16"
            )));
        }
        if !voxels.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite voxel intensities".into()));
        }
        Ok(Volume {
            voxels,
            slices,
            height,
            width,
            patient_id: patient_id.into(),
            scan_id: scan_id.into(),
            timepoint,
        })
    }

    #[inline]
    pub fn idx(&self, s: usize, h: usize, w: usize) -> usize {
        (s * self.height + h) * self.width + w
    }

    /// Flip about the sagittal axis (reverse the width dimension).
    pub fn mirrored(&self) -> Volume {
        let mut out = self.clone();
        for s in 0..self.slices {
            for h in 0..self.height {
                for w in 0..self.width {
                    out.voxels[self.idx(s, h, w)] = self.voxels[self.idx(s, h, self.width - 1 - w)];
                }
            }
        }
        out
    }
}

/// Canonical-orientation halves: column 0 of each half is the midline.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfPair {
    pub left: Vec<f32>,
    pub right: Vec<f32>,
    pub slices: usize,
    pub height: usize,
    pub half_width: usize,
    pub patient_id: String,
    pub scan_id: String,
    pub timepoint: Timepoint,
}

/// Slice indices i_k = round(k (S-1)/(target-1)), half away from zero.
pub fn sample_slice_indices(s: usize, target: usize) -> Vec<usize> {
    if target == 1 {
        return vec![0];
    }
    (0..target)
        .map(|k| {
            let x = k as f64 * (s as f64 - 1.0) / (target as f64 - 1.0);
            x.round() as usize
        })
        .collect()
}

pub fn sample_slices(v: &Volume, target: usize) -> Volume {
    let indices = sample_slice_indices(v.slices, target);
    let plane = v.height * v.width;
    let mut voxels = Vec::with_capacity(indices.len() * plane);
    for &i in &indices {
        voxels.extend_from_slice(&v.voxels[i * plane..(i + 1) * plane]);
    }
    Volume {
        voxels,
        slices: indices.len(),
        ..v.clone()
    }
}

/// Clip to [lo, hi] and map affinely onto [0, 1].
pub fn normalize(v: &Volume, window: [f32; 2]) -> Result<Volume> {
    let [lo, hi] = window;
    if !(lo < hi) {
        return Err(Error::Config(format!("window [{lo}, {hi}] requires lo < hi")));
    }
    let span = hi - lo;
    let mut out = v.clone();
    for x in &mut out.voxels {
        *x = ((*x).clamp(lo, hi) - lo) / span;
    }
    Ok(out)
}

pub fn split_midline(v: &Volume) -> Result<HalfPair> {
    if v.width % 2 != 0 {
        return Err(Error::Dimension(format!("midline split needs even width, got {}", v.width)));
    }
    let hw = v.width / 2;
    let n = v.slices * v.height * hw;
    let mut left = vec![0.0f32; n];
    let mut right = vec![0.0f32; n];
    for s in 0..v.slices {
        for h in 0..v.height {
            for j in 0..hw {
                let o = (s * v.height + h) * hw + j;
                // canonical: column 0 sits on the midline for both halves
                left[o] = v.voxels[v.idx(s, h, hw - 1 - j)];
                right[o] = v.voxels[v.idx(s, h, hw + j)];
            }
        }
    }
    Ok(HalfPair {
        left,
        right,
        slices: v.slices,
        height: v.height,
        half_width: hw,
        patient_id: v.patient_id.clone(),
        scan_id: v.scan_id.clone(),
        timepoint: v.timepoint,
    })
}

/// Inverse of [`split_midline`]; bit-exact round trip.
pub fn unsplit(pair: &HalfPair) -> Volume {
    let w = pair.half_width * 2;
    let mut voxels = vec![0.0f32; pair.slices * pair.height * w];
    for s in 0..pair.slices {
        for h in 0..pair.height {
            for j in 0..pair.half_width {
                let o = (s * pair.height + h) * pair.half_width + j;
                voxels[(s * pair.height + h) * w + (pair.half_width - 1 - j)] = pair.left[o];
                voxels[(s * pair.height + h) * w + (pair.half_width + j)] = pair.right[o];
            }
        }
    }
    Volume {
        voxels,
        slices: pair.slices,
        height: pair.height,
        width: w,
        patient_id: pair.patient_id.clone(),
        scan_id: pair.scan_id.clone(),
        timepoint: pair.timepoint,
    }
}

impl HalfPair {
    /// Swap the two halves (the split of the mirrored volume).
    pub fn swapped(mut self) -> HalfPair {
        std::mem::swap(&mut self.left, &mut self.right);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub target_slices: usize,
    pub window: [f32; 2],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            target_slices: 11,
            window: [0.0, 80.0],
        }
    }
}

/// Slice-sample and intensity-normalize one volume.
pub fn standardize(v: &Volume, cfg: &PipelineConfig) -> Result<Volume> {
    let sampled = sample_slices(v, cfg.target_slices);
    normalize(&sampled, cfg.window)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition scan indices by patient with target scan-count ratios.
/// Patients are shuffled by seed, then each is assigned greedily to the split
/// with the largest remaining scan deficit.
pub fn patient_split(
    patient_ids: &[String],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Split> {
    let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, pid) in patient_ids.iter().enumerate() {
        by_patient.entry(pid.as_str()).or_default().push(i);
    }
    if by_patient.len() < 3 {
        return Err(Error::Config(format!(
            "patient split needs at least 3 patients, got {}",
            by_patient.len()
        )));
    }
    let total = patient_ids.len() as f64;
    let targets = [ratios.0 * total, ratios.1 * total, ratios.2 * total];
    let mut patients: Vec<&str> = by_patient.keys().cloned().collect();
    let mut rng = rng::stream(seed, "patient_split", 0);
    patients.shuffle(&mut rng);

    let mut assigned = [0usize; 3];
    let mut splits: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for pid in patients {
        let scans = &by_patient[pid];
        let mut best = 0usize;
        let mut best_deficit = f64::NEG_INFINITY;
        for k in 0..3 {
            let deficit = targets[k] - assigned[k] as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = k;
            }
        }
        assigned[best] += scans.len();
        splits[best].extend_from_slice(scans);
    }
    for s in &mut splits {
        s.sort_unstable();
    }
    let [train, val, test] = splits;
    Ok(Split { train, val, test })
}
