//! Synthetic region atlas. All predicates depend on |w - midline| only, so
//! left and right masks are exact mirror images by construction, and voxels
//! are assigned to at most one region (first matching predicate wins).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pipeline::{Hemisphere, Location, Region};

#[derive(Debug, Clone)]
pub struct RegionAtlas {
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    masks: BTreeMap<Location, Vec<bool>>,
    brain: Vec<bool>,
}

impl RegionAtlas {
    pub fn mask(&self, loc: Location) -> &[bool] {
        &self.masks[&loc]
    }

    pub fn brain(&self) -> &[bool] {
        &self.brain
    }

    pub fn locations(&self) -> impl Iterator<Item = Location> + '_ {
        self.masks.keys().copied()
    }

    #[inline]
    pub fn idx(&self, s: usize, h: usize, w: usize) -> usize {
        (s * self.height + h) * self.width + w
    }

    /// Voxel indices of a region mask.
    pub fn mask_voxels(&self, loc: Location) -> Vec<usize> {
        self.mask(loc)
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

/// Whether a voxel lies inside the brain ellipse of its slice.
fn in_brain(hn: f64, dwn: f64, lower: bool) -> bool {
    let scale = if lower { 0.80 } else { 1.0 };
    let a = 0.92 * scale; // semi-axis in normalized h units (hn in [-1,1])
    let b = 0.92 * scale;
    (hn / a).powi(2) + (dwn / b).powi(2) <= 1.0
}

pub fn build_atlas(slices: usize, height: usize, width: usize) -> Result<RegionAtlas> {
    if height < 32 || width < 32 {
        return Err(Error::Config(format!(
            "atlas needs at least 32x32 in-plane, got {height}x{width}"
        )));
    }
    if slices < 5 {
        return Err(Error::Config(format!("atlas needs at least 5 slices, got {slices}")));
    }
    if width % 2 != 0 {
        return Err(Error::Config(format!("atlas width must be even, got {width}")));
    }

    let n = slices * height * width;
    let mut masks: BTreeMap<Location, Vec<bool>> = BTreeMap::new();
    for region in Region::ALL {
        for hemi in [Hemisphere::Left, Hemisphere::Right] {
            masks.insert(Location { region, side: hemi }, vec![false; n]);
        }
    }
    let mut brain = vec![false; n];

    let ch = (height as f64 - 1.0) / 2.0;
    let cw = (width as f64 - 1.0) / 2.0;
    let lower_slices = 3usize; // cerebellum / brainstem live here
    let upper_start = (slices as f64 * 0.55) as usize; // PCA visible in upper slices
    let lacunar_lo = (slices as f64 * 0.4) as usize;
    let lacunar_hi = (slices as f64 * 0.7) as usize;

    for s in 0..slices {
        let lower = s < lower_slices;
        for h in 0..height {
            // hn in [-1, 1], anterior at -1
            let hn = (h as f64 - ch) / ch;
            // forward-normalized position in [0, 1], anterior at 0
            let hf = h as f64 / (height as f64 - 1.0);
            for w in 0..width {
                let dw = w as f64 - cw;
                // |distance from midline| normalized to [0, 1]
                let wn = dw.abs() / (width as f64 / 2.0);
                if !in_brain(hn, dw / cw, lower) {
                    continue;
                }
                let i = (s * height + h) * width + w;
                brain[i] = true;
                let hemi = if dw < 0.0 { Hemisphere::Left } else { Hemisphere::Right };

                let region = if lower {
                    if hf >= 0.55 {
                        Some(Region::Cerebellar)
                    } else if hf >= 0.30 && wn < 0.25 {
                        Some(Region::Brainstem)
                    } else {
                        None
                    }
                } else if hf < 0.33 && wn < 0.30 {
                    Some(Region::Aca)
                } else if (0.33..0.72).contains(&hf) && wn > 0.45 {
                    Some(Region::Mca)
                } else if hf >= 0.75 && s >= upper_start {
                    Some(Region::Pca)
                } else if (0.33..0.72).contains(&hf) && (0.36..=0.43).contains(&wn) {
                    Some(Region::BorderZone)
                } else if (0.72..0.75).contains(&hf) && wn > 0.45 {
                    Some(Region::BorderZone)
                } else if (lacunar_lo..=lacunar_hi).contains(&s)
                    && ((hf - 0.5) / 0.09).powi(2) + ((wn - 0.18) / 0.09).powi(2) <= 1.0
                {
                    Some(Region::Lacunar)
                } else {
                    None
                };

                if let Some(r) = region {
                    masks
                        .get_mut(&Location { region: r, side: hemi })
                        .expect("all locations pre-inserted")[i] = true;
                }
            }
        }
    }

    for (loc, mask) in &masks {
        if !mask.iter().any(|&m| m) {
            return Err(Error::Config(format!(
                "atlas shape {slices}x{height}x{width} too small: region {loc:?} is empty"
            )));
        }
    }

    Ok(RegionAtlas {
        slices,
        height,
        width,
        masks,
        brain,
    })
}
