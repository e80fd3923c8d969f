//! Subgroup accuracy tables: lesion location, lesion count and combination,
//! infarct size band by timepoint, and error rate by background condition.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::pipeline::{Background, Region, Timepoint};

use super::ScanOutcome;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupRow {
    pub key: String,
    /// None = all timepoints pooled.
    pub timepoint: Option<Timepoint>,
    pub n: usize,
    pub correct: usize,
    /// correct/n for accuracy tables, wrong/n for the background table;
    /// None when n = 0.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubgroupReport {
    /// Accuracy by region, split baseline / follow-up / all (positives with
    /// location labels only; a scan counts once per affected region).
    pub by_region: Vec<SubgroupRow>,
    /// Accuracy by lesion count and region combination (positives only).
    pub by_lesion_count: Vec<SubgroupRow>,
    /// Accuracy by size band {0, 1-2, 3-4}, split by timepoint.
    pub by_size: Vec<SubgroupRow>,
    /// Error rate by background condition (rows are non-exclusive).
    pub by_background: Vec<SubgroupRow>,
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Mca => "MCA",
        Region::Aca => "ACA",
        Region::Pca => "PCA",
        Region::Lacunar => "Lacunar",
        Region::BorderZone => "Border zone",
        Region::Cerebellar => "Cerebellar",
        Region::Brainstem => "Brainstem",
    }
}

fn background_name(b: Background) -> &'static str {
    match b {
        Background::Atrophy => "Atrophy",
        Background::Leukoaraiosis => "Leukoaraiosis",
        Background::OldStroke => "Old stroke lesion",
        Background::NonStrokeLesion => "Non-stroke lesion",
    }
}

fn timepoint_rows(
    key: &str,
    outcomes: &[&ScanOutcome],
    is_correct: impl Fn(&ScanOutcome) -> bool,
) -> Vec<SubgroupRow> {
    let mut rows = Vec::new();
    for tp in [Some(Timepoint::Baseline), Some(Timepoint::Followup), None] {
        let subset: Vec<&&ScanOutcome> = outcomes
            .iter()
            .filter(|o| tp.is_none() || Some(o.timepoint) == tp)
            .collect();
        let n = subset.len();
        let correct = subset.iter().filter(|o| is_correct(o)).count();
        rows.push(SubgroupRow {
            key: key.to_string(),
            timepoint: tp,
            n,
            correct,
            rate: (n > 0).then(|| correct as f64 / n as f64),
        });
    }
    rows
}

pub fn subgroup_tables(outcomes: &[ScanOutcome]) -> SubgroupReport {
    let correct4 = |o: &ScanOutcome| o.pred == o.label.side;

    // (a) by region: positives, counted in every affected region
    let mut by_region = Vec::new();
    for region in Region::ALL {
        let subset: Vec<&ScanOutcome> = outcomes
            .iter()
            .filter(|o| o.label.presence && o.label.locations.iter().any(|l| l.region == region))
            .collect();
        by_region.extend(timepoint_rows(region_name(region), &subset, correct4));
    }

    // (b) by lesion count and combination of distinct regions
    let mut combos: BTreeMap<(usize, String), Vec<&ScanOutcome>> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.label.presence) {
        let mut regions: Vec<Region> = Region::ALL
            .iter()
            .copied()
            .filter(|r| o.label.locations.iter().any(|l| l.region == *r))
            .collect();
        regions.dedup();
        let key = regions
            .iter()
            .map(|r| region_name(*r))
            .collect::<Vec<_>>()
            .join("+");
        combos.entry((regions.len(), key)).or_default().push(o);
    }
    let mut by_lesion_count = Vec::new();
    for ((count, key), subset) in combos {
        let n = subset.len();
        let correct = subset.iter().filter(|o| correct4(o)).count();
        by_lesion_count.push(SubgroupRow {
            key: format!("{count} lesion(s): {key}"),
            timepoint: None,
            n,
            correct,
            rate: (n > 0).then(|| correct as f64 / n as f64),
        });
    }

    // (c) by size band, split by timepoint
    let mut by_size = Vec::new();
    for (key, lo, hi) in [("Size 0", 0u8, 0u8), ("Size 1-2", 1, 2), ("Size 3-4", 3, 4)] {
        let subset: Vec<&ScanOutcome> = outcomes
            .iter()
            .filter(|o| (lo..=hi).contains(&o.label.size_grade))
            .collect();
        by_size.extend(timepoint_rows(key, &subset, correct4));
    }

    // (d) error rate by background condition (non-exclusive rows)
    let mut by_background = Vec::new();
    for b in [
        Background::Atrophy,
        Background::Leukoaraiosis,
        Background::OldStroke,
        Background::NonStrokeLesion,
    ] {
        let subset: Vec<&ScanOutcome> = outcomes
            .iter()
            .filter(|o| o.label.background.contains(&b))
            .collect();
        let n = subset.len();
        let wrong = subset.iter().filter(|o| !correct4(o)).count();
        by_background.push(SubgroupRow {
            key: background_name(b).to_string(),
            timepoint: None,
            n,
            correct: n - wrong,
            rate: (n > 0).then(|| wrong as f64 / n as f64),
        });
    }

    SubgroupReport {
        by_region,
        by_lesion_count,
        by_size,
        by_background,
    }
}
