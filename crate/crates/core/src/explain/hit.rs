//! Saliency hit/miss score: S = hits / (hits + misses). A hit is counted when
//! the attribution map's maximal voxel lies inside the labeled region's atlas
//! mask. Only single-region MCA/ACA/PCA positives are scored; everything else
//! is excluded and counted.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::phantom::RegionAtlas;
use crate::pipeline::{Region, ScanLabel};

use super::counterfactual::AttributionMap;

const SCORED_REGIONS: [Region; 3] = [Region::Mca, Region::Aca, Region::Pca];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HitReport {
    pub score: f64,
    pub hits: usize,
    pub misses: usize,
    pub excluded: usize,
}

/// Whether a label belongs to one of the six scored classes
/// (MCA/ACA/PCA x left/right, exactly one lesion region).
pub fn scoreable(label: &ScanLabel) -> bool {
    label.presence
        && label.locations.len() == 1
        && label
            .locations
            .iter()
            .all(|l| SCORED_REGIONS.contains(&l.region))
}

/// Score attribution maps against their labels. Order-independent; scans
/// outside the six scored classes are excluded and counted.
pub fn hit_score(
    attributions: &[AttributionMap],
    labels: &[ScanLabel],
    atlas: &RegionAtlas,
) -> Result<HitReport> {
    if attributions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} attribution maps vs {} labels",
            attributions.len(),
            labels.len()
        )));
    }
    let mut hits = 0usize;
    let mut misses = 0usize;
    let mut excluded = 0usize;
    for (map, label) in attributions.iter().zip(labels) {
        if !scoreable(label) {
            excluded += 1;
            continue;
        }
        if map.slices != atlas.slices || map.height != atlas.height || map.width != atlas.width {
            return Err(Error::Dimension(format!(
                "attribution shape {}x{}x{} does not match atlas {}x{}x{}",
                map.slices, map.height, map.width, atlas.slices, atlas.height, atlas.width
            )));
        }
        let loc = *label.locations.iter().next().expect("single location");
        if atlas.mask(loc)[map.argmax()] {
            hits += 1;
        } else {
            misses += 1;
        }
    }
    if hits + misses == 0 {
        return Err(Error::Undefined(
            "hit score undefined: no scoreable scans".into(),
        ));
    }
    Ok(HitReport {
        score: hits as f64 / (hits + misses) as f64,
        hits,
        misses,
        excluded,
    })
}
