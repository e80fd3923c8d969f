//! Labeled synthetic brain-like volumes: graded hypodense lesions inside
//! atlas regions, timepoint-dependent conspicuity, and chronic background
//! confounders. Deterministic per seed; every patient and every noise field
//! draws from its own derived RNG stream.

mod atlas;

pub use atlas::{build_atlas, RegionAtlas};

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Background, Hemisphere, Location, Region, ScanLabel, Side, Timepoint, Volume};
use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub n_scans: usize,
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    /// Fraction of patients with no acute lesion.
    pub negative_fraction: f64,
    pub region_weights: BTreeMap<Region, f64>,
    /// Probability of a second lesion on the same side.
    pub multi_lesion_prob: f64,
    /// Probability that a positive patient has lesions on both sides.
    pub both_sides_prob: f64,
    /// Relative frequency of size grades 1..4.
    pub size_weights: [f64; 4],
    /// Blob radius as a fraction of in-plane width, per grade 1..4.
    pub size_radius_frac: [f64; 4],
    /// Lesion intensity delta (negative, hypodense) at baseline / follow-up.
    pub baseline_delta: f64,
    pub followup_delta: f64,
    /// Multiplier on the acute-lesion deltas; geometry is unaffected.
    pub contrast_scale: f64,
    pub background_probs: BTreeMap<Background, f64>,
    pub noise_sigma: f64,
    /// Mirror every volume and swap the label sides.
    pub side_swap: bool,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        let mut region_weights = BTreeMap::new();
        region_weights.insert(Region::Mca, 0.40);
        region_weights.insert(Region::Aca, 0.15);
        region_weights.insert(Region::Pca, 0.15);
        region_weights.insert(Region::Lacunar, 0.10);
        region_weights.insert(Region::BorderZone, 0.10);
        region_weights.insert(Region::Cerebellar, 0.05);
        region_weights.insert(Region::Brainstem, 0.05);
        let mut background_probs = BTreeMap::new();
        background_probs.insert(Background::Atrophy, 0.35);
        background_probs.insert(Background::Leukoaraiosis, 0.30);
        background_probs.insert(Background::OldStroke, 0.15);
        background_probs.insert(Background::NonStrokeLesion, 0.06);
        PhantomConfig {
            n_scans: 600,
            slices: 11,
            height: 64,
            width: 64,
            negative_fraction: 0.45,
            region_weights,
            multi_lesion_prob: 0.08,
            both_sides_prob: 0.02,
            size_weights: [0.15, 0.25, 0.30, 0.30],
            size_radius_frac: [0.06, 0.09, 0.13, 0.20],
            baseline_delta: -6.0,
            followup_delta: -14.0,
            contrast_scale: 1.0,
            background_probs,
            noise_sigma: 3.0,
            side_swap: false,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scans == 0 {
            return Err(Error::Config("n_scans must be positive".into()));
        }
        for (name, p) in [
            ("negative_fraction", self.negative_fraction),
            ("multi_lesion_prob", self.multi_lesion_prob),
            ("both_sides_prob", self.both_sides_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (b, p) in &self.background_probs {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!("background prob for {b:?} outside [0, 1]")));
            }
        }
        if self.followup_delta.abs() < self.baseline_delta.abs() {
            return Err(Error::Config(
                "follow-up delta magnitude must be >= baseline delta magnitude".into(),
            ));
        }
        if self.region_weights.values().any(|&w| w < 0.0)
            || self.region_weights.values().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("region weights must be non-negative with positive sum".into()));
        }
        if self.size_weights.iter().any(|&w| w < 0.0) || self.size_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("size weights must be non-negative with positive sum".into()));
        }
        Ok(())
    }
}

/// One injected lesion: where, how big, which voxels it touched.
#[derive(Debug, Clone)]
pub struct InjectedLesion {
    pub location: Location,
    pub grade: u8,
    pub center: (usize, usize, usize),
    pub radius: f64,
    /// Voxel indices (at the standard shape) the blob actually modified.
    pub voxels: Vec<usize>,
}

/// A generated scan plus its construction audit trail.
#[derive(Debug, Clone)]
pub struct GeneratedScan {
    pub volume: Volume,
    pub label: ScanLabel,
    pub lesions: Vec<InjectedLesion>,
}

const TISSUE: f32 = 40.0;
const VENTRICLE: f32 = 14.0;

struct PatientPlan {
    lesions: Vec<(Location, u8, usize)>, // location, grade, center voxel index
    background: BTreeSet<Background>,
    old_stroke_geom: Option<(Hemisphere, f64, usize)>, // hemisphere, start angle, slice
    non_stroke_geom: Option<usize>,                    // center voxel index
}

fn weighted_choice<T: Copy>(items: &[(T, f64)], rng: &mut rng::Rng) -> T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut x = rng.gen::<f64>() * total;
    for &(item, w) in items {
        if x < w {
            return item;
        }
        x -= w;
    }
    items.last().expect("non-empty weighted choice").0
}

/// Generate the corpus with full audit information.
pub fn generate_detailed(cfg: &PhantomConfig, seed: u64) -> Result<Vec<GeneratedScan>> {
    cfg.validate()?;
    let atlas = build_atlas(cfg.slices, cfg.height, cfg.width)?;
    for (region, &w) in &cfg.region_weights {
        if w > 0.0 {
            let loc = Location {
                region: *region,
                side: Hemisphere::Left,
            };
            if atlas.mask(loc).iter().all(|&m| !m) {
                return Err(Error::Config(format!("region {region:?} absent from atlas")));
            }
        }
    }

    // two scans per patient: baseline then follow-up
    let n_patients = cfg.n_scans.div_ceil(2);
    let mut out = Vec::with_capacity(cfg.n_scans);

    for p in 0..n_patients {
        let mut prng = rng::stream(seed, "phantom_patient", p as u64);
        let plan = plan_patient(cfg, &atlas, &mut prng);
        let patient_id = format!("p{p:04}");

        for (t, tag) in [(Timepoint::Baseline, "b"), (Timepoint::Followup, "f")] {
            if out.len() >= cfg.n_scans {
                break;
            }
            let scan_index = out.len() as u64;
            let scan_id = format!("{patient_id}_{tag}");
            let scan = render_scan(cfg, &atlas, &plan, &patient_id, &scan_id, t, seed, scan_index)?;
            out.push(scan);
        }
    }
    Ok(out)
}

/// Generate the corpus: (volume, label) pairs, deterministic per seed.
pub fn generate(cfg: &PhantomConfig, seed: u64) -> Result<Vec<(Volume, ScanLabel)>> {
    Ok(generate_detailed(cfg, seed)?
        .into_iter()
        .map(|g| (g.volume, g.label))
        .collect())
}

fn plan_patient(cfg: &PhantomConfig, atlas: &RegionAtlas, rng: &mut rng::Rng) -> PatientPlan {
    let regions: Vec<(Region, f64)> = cfg
        .region_weights
        .iter()
        .filter(|(_, &w)| w > 0.0)
        .map(|(&r, &w)| (r, w))
        .collect();

    let positive = rng.gen::<f64>() >= cfg.negative_fraction;
    let mut lesions = Vec::new();
    if positive {
        let both = rng.gen::<f64>() < cfg.both_sides_prob;
        let first_side = if rng.gen::<f64>() < 0.5 {
            Hemisphere::Left
        } else {
            Hemisphere::Right
        };
        let mut sides = vec![first_side];
        if both {
            sides.push(first_side.opposite());
        }
        for side in sides {
            let mut region = weighted_choice(&regions, rng);
            let grade = weighted_choice(
                &[
                    (1u8, cfg.size_weights[0]),
                    (2, cfg.size_weights[1]),
                    (3, cfg.size_weights[2]),
                    (4, cfg.size_weights[3]),
                ],
                rng,
            );
            let center = pick_center(atlas, Location { region, side }, rng);
            lesions.push((Location { region, side }, grade, center));
            if rng.gen::<f64>() < cfg.multi_lesion_prob {
                // second lesion, same side, different region when possible
                for _ in 0..8 {
                    let r2 = weighted_choice(&regions, rng);
                    if r2 != region {
                        region = r2;
                        break;
                    }
                }
                let grade2 = weighted_choice(
                    &[
                        (1u8, cfg.size_weights[0]),
                        (2, cfg.size_weights[1]),
                        (3, cfg.size_weights[2]),
                        (4, cfg.size_weights[3]),
                    ],
                    rng,
                );
                let loc2 = Location { region, side };
                if lesions.iter().all(|(l, _, _)| *l != loc2) {
                    let center2 = pick_center(atlas, loc2, rng);
                    lesions.push((loc2, grade2, center2));
                }
            }
        }
    }

    let mut background = BTreeSet::new();
    // fixed iteration order (BTreeMap) keeps the stream stable
    for (&b, &p) in &cfg.background_probs {
        if rng.gen::<f64>() < p {
            background.insert(b);
        }
    }
    let old_stroke_geom = background.contains(&Background::OldStroke).then(|| {
        let hemi = if rng.gen::<f64>() < 0.5 {
            Hemisphere::Left
        } else {
            Hemisphere::Right
        };
        let angle = rng.gen::<f64>() * std::f64::consts::PI;
        let slice = 3 + rng.gen_range(0..atlas.slices.saturating_sub(3).max(1));
        (hemi, angle, slice.min(atlas.slices - 1))
    });
    let non_stroke_geom = background.contains(&Background::NonStrokeLesion).then(|| {
        let brain: Vec<usize> = atlas
            .brain()
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        brain[rng.gen_range(0..brain.len())]
    });

    PatientPlan {
        lesions,
        background,
        old_stroke_geom,
        non_stroke_geom,
    }
}

fn pick_center(atlas: &RegionAtlas, loc: Location, rng: &mut rng::Rng) -> usize {
    let voxels = atlas.mask_voxels(loc);
    voxels[rng.gen_range(0..voxels.len())]
}

#[allow(clippy::too_many_arguments)]
fn render_scan(
    cfg: &PhantomConfig,
    atlas: &RegionAtlas,
    plan: &PatientPlan,
    patient_id: &str,
    scan_id: &str,
    timepoint: Timepoint,
    seed: u64,
    scan_index: u64,
) -> Result<GeneratedScan> {
    let (s_dim, h_dim, w_dim) = (cfg.slices, cfg.height, cfg.width);
    let n = s_dim * h_dim * w_dim;
    let ch = (h_dim as f64 - 1.0) / 2.0;
    let cw = (w_dim as f64 - 1.0) / 2.0;

    // base anatomy: tissue + central ventricle (enlarged under atrophy)
    let mut vox = vec![0.0f32; n];
    let atrophy = plan.background.contains(&Background::Atrophy);
    let leuko = plan.background.contains(&Background::Leukoaraiosis);
    let vent_scale = if atrophy { 1.7 } else { 1.0 };
    for s in 0..s_dim {
        for h in 0..h_dim {
            let hf = h as f64 / (h_dim as f64 - 1.0);
            for w in 0..w_dim {
                let i = (s * h_dim + h) * w_dim + w;
                if !atlas.brain()[i] {
                    continue;
                }
                vox[i] = TISSUE;
                if s >= 3 {
                    let wn = (w as f64 - cw).abs() / (w_dim as f64 / 2.0);
                    let vent = ((hf - 0.5) / (0.10 * vent_scale)).powi(2)
                        + (wn / (0.14 * vent_scale)).powi(2);
                    if vent <= 1.0 {
                        vox[i] = VENTRICLE;
                    } else if leuko && vent <= 2.8 {
                        // periventricular diffuse dimming, smooth falloff
                        let fall = (2.8 - vent) / 1.8;
                        vox[i] -= (5.0 * fall) as f32;
                    }
                }
            }
        }
    }

    // old stroke: sharply darker wedge, darker than acute lesions
    if let Some((hemi, angle0, slice)) = plan.old_stroke_geom {
        for ds in 0..2usize {
            let s = (slice + ds).min(s_dim - 1);
            for h in 0..h_dim {
                for w in 0..w_dim {
                    let i = (s * h_dim + h) * w_dim + w;
                    if !atlas.brain()[i] {
                        continue;
                    }
                    let dw = w as f64 - cw;
                    let on_side = match hemi {
                        Hemisphere::Left => dw < 0.0,
                        Hemisphere::Right => dw >= 0.0,
                    };
                    if !on_side {
                        continue;
                    }
                    let r = ((h as f64 - ch).powi(2) + dw.powi(2)).sqrt() / (w_dim as f64 / 2.0);
                    let theta = (h as f64 - ch).atan2(dw.abs());
                    let ang = theta + std::f64::consts::FRAC_PI_2; // [0, pi]
                    if (0.30..0.95).contains(&r) && ang >= angle0 && ang < angle0 + 0.6 {
                        vox[i] = TISSUE - 20.0;
                    }
                }
            }
        }
    }

    // non-stroke lesion: hyperdense blob
    if let Some(center) = plan.non_stroke_geom {
        stamp_blob(&mut vox, s_dim, h_dim, w_dim, center, 0.06 * w_dim as f64, 12.0, None);
    }

    // acute lesions: smooth hypodense blobs clipped to their region mask
    let delta = match timepoint {
        Timepoint::Baseline => cfg.baseline_delta,
        Timepoint::Followup => cfg.followup_delta,
    } * cfg.contrast_scale;
    let mut lesions = Vec::new();
    for &(loc, grade, center) in &plan.lesions {
        let radius = cfg.size_radius_frac[grade as usize - 1] * w_dim as f64;
        let voxels = stamp_blob(
            &mut vox,
            s_dim,
            h_dim,
            w_dim,
            center,
            radius,
            delta,
            Some(atlas.mask(loc)),
        );
        let cs = center / (h_dim * w_dim);
        let chh = (center / w_dim) % h_dim;
        let cww = center % w_dim;
        lesions.push(InjectedLesion {
            location: loc,
            grade,
            center: (cs, chh, cww),
            radius,
            voxels,
        });
    }

    // seeded noise, then clamp to the synthetic intensity range
    let mut nrng = rng::stream(seed, "phantom_noise", scan_index);
    for v in &mut vox {
        *v = (*v + (rng::normal(&mut nrng) * cfg.noise_sigma) as f32).clamp(0.0, 100.0);
    }

    // label exactly records what was injected
    let label = if plan.lesions.is_empty() {
        ScanLabel::negative(plan.background.clone())
    } else {
        let mut locations = BTreeSet::new();
        let mut has_left = false;
        let mut has_right = false;
        let mut max_grade = 0u8;
        for l in &lesions {
            locations.insert(l.location);
            match l.location.side {
                Hemisphere::Left => has_left = true,
                Hemisphere::Right => has_right = true,
            }
            max_grade = max_grade.max(l.grade);
        }
        let side = match (has_left, has_right) {
            (true, true) => Side::Both,
            (true, false) => Side::Left,
            (false, true) => Side::Right,
            (false, false) => unreachable!("positive plan with no sides"),
        };
        ScanLabel {
            presence: true,
            side,
            locations,
            size_grade: max_grade,
            background: plan.background.clone(),
        }
    };
    label.validate()?;

    let mut volume = Volume::new(s_dim, h_dim, w_dim, vox, patient_id, scan_id, timepoint)?;
    let mut label = label;
    let mut lesions = lesions;
    if cfg.side_swap {
        volume = volume.mirrored();
        volume.patient_id = patient_id.to_string();
        volume.scan_id = scan_id.to_string();
        label = swap_label(&label);
        for l in &mut lesions {
            l.location.side = l.location.side.opposite();
            l.center.2 = w_dim - 1 - l.center.2;
            for v in &mut l.voxels {
                let w = *v % w_dim;
                *v = *v - w + (w_dim - 1 - w);
            }
        }
    }

    Ok(GeneratedScan {
        volume,
        label,
        lesions,
    })
}

fn swap_label(label: &ScanLabel) -> ScanLabel {
    let mut out = label.clone();
    out.side = match label.side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
        other => other,
    };
    out.locations = label
        .locations
        .iter()
        .map(|l| Location {
            region: l.region,
            side: l.side.opposite(),
        })
        .collect();
    out
}

/// Add a Gaussian-profile blob of the given signed delta. When `mask` is
/// given, only mask voxels are touched, so the blob stays inside its region.
/// Returns the modified voxel indices.
fn stamp_blob(
    vox: &mut [f32],
    s_dim: usize,
    h_dim: usize,
    w_dim: usize,
    center: usize,
    radius: f64,
    delta: f64,
    mask: Option<&[bool]>,
) -> Vec<usize> {
    let cs = (center / (h_dim * w_dim)) as f64;
    let chh = ((center / w_dim) % h_dim) as f64;
    let cww = (center % w_dim) as f64;
    // slices are thick: scale slice distance so blobs stay mostly in-plane
    let z_scale = (h_dim as f64 / s_dim as f64).max(1.0);
    let sigma = radius;
    let mut touched = Vec::new();
    let s_lo = ((cs - radius / z_scale).floor().max(0.0)) as usize;
    let s_hi = ((cs + radius / z_scale).ceil() as usize).min(s_dim - 1);
    let h_lo = ((chh - radius).floor().max(0.0)) as usize;
    let h_hi = ((chh + radius).ceil() as usize).min(h_dim - 1);
    let w_lo = ((cww - radius).floor().max(0.0)) as usize;
    let w_hi = ((cww + radius).ceil() as usize).min(w_dim - 1);
    for s in s_lo..=s_hi {
        for h in h_lo..=h_hi {
            for w in w_lo..=w_hi {
                let d2 = ((s as f64 - cs) * z_scale).powi(2)
                    + (h as f64 - chh).powi(2)
                    + (w as f64 - cww).powi(2);
                if d2 > radius * radius {
                    continue;
                }
                let i = (s * h_dim + h) * w_dim + w;
                if let Some(m) = mask {
                    if !m[i] {
                        continue;
                    }
                }
                vox[i] += (delta * (-d2 / (2.0 * sigma * sigma)).exp()) as f32;
                touched.push(i);
            }
        }
    }
    touched
}
