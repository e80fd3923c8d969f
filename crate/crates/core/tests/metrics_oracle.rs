//! Brute-force oracles for the evaluation mathematics: classification and
//! subgroup counts recomputed by independent filter-and-count passes, and
//! Krippendorff alpha hand cases and invariances.

use std::collections::BTreeSet;

use hemiscan_core::metrics::{
    classify_metrics, kalpha, kalpha_bootstrap, subgroup_tables, RatingsMatrix, ScanOutcome,
};
use hemiscan_core::pipeline::{
    Background, Hemisphere, Location, Region, ScanLabel, Side, Timepoint,
};
use hemiscan_core::{rng, Result};
use rand::Rng as _;

fn random_outcomes(n: usize, seed: u64) -> Vec<ScanOutcome> {
    let mut r = rng::stream(seed, "metrics_oracle", 0);
    let sides = [Side::Left, Side::Right, Side::Both, Side::None];
    let regions = Region::ALL;
    let backgrounds = [
        Background::Atrophy,
        Background::Leukoaraiosis,
        Background::OldStroke,
        Background::NonStrokeLesion,
    ];
    (0..n)
        .map(|i| {
            let side = sides[r.gen_range(0..4)];
            let mut locations = BTreeSet::new();
            if side != Side::None {
                let hemis: Vec<Hemisphere> = match side {
                    Side::Left => vec![Hemisphere::Left],
                    Side::Right => vec![Hemisphere::Right],
                    Side::Both => vec![Hemisphere::Left, Hemisphere::Right],
                    Side::None => vec![],
                };
                for h in hemis {
                    for _ in 0..r.gen_range(1..3usize) {
                        locations.insert(Location {
                            region: regions[r.gen_range(0..regions.len())],
                            side: h,
                        });
                    }
                }
            }
            let mut background = BTreeSet::new();
            for b in backgrounds {
                if r.gen_range(0..3) == 0 {
                    background.insert(b);
                }
            }
            let label = ScanLabel {
                presence: side != Side::None,
                side,
                size_grade: if side == Side::None { 0 } else { r.gen_range(1..5) as u8 },
                locations,
                background,
            };
            label.validate().expect("generated label is consistent");
            ScanOutcome {
                scan_id: format!("s{i}"),
                pred: sides[r.gen_range(0..4)],
                label,
                timepoint: if r.gen_range(0..2) == 0 {
                    Timepoint::Baseline
                } else {
                    Timepoint::Followup
                },
            }
        })
        .collect()
}

fn brute_acc4(subset: &[&ScanOutcome]) -> Option<f64> {
    if subset.is_empty() {
        return None;
    }
    let c = subset.iter().filter(|o| o.pred == o.label.side).count();
    Some(c as f64 / subset.len() as f64)
}

#[test]
fn classify_metrics_match_brute_force() -> Result<()> {
    for seed in 0..5u64 {
        let outcomes = random_outcomes(200, seed);
        let got = classify_metrics(&outcomes)?;
        for (name, subset) in [
            ("overall", outcomes.iter().collect::<Vec<_>>()),
            (
                "baseline",
                outcomes.iter().filter(|o| o.timepoint == Timepoint::Baseline).collect(),
            ),
            (
                "followup",
                outcomes.iter().filter(|o| o.timepoint == Timepoint::Followup).collect(),
            ),
        ] {
            let set = match name {
                "overall" => &got.overall,
                "baseline" => &got.by_timepoint[&Timepoint::Baseline],
                _ => &got.by_timepoint[&Timepoint::Followup],
            };
            assert_eq!(set.n, subset.len());
            assert_eq!(set.acc4, brute_acc4(&subset), "{name} acc4");

            let tp = subset.iter().filter(|o| o.label.presence && o.pred != Side::None).count();
            let fneg = subset.iter().filter(|o| o.label.presence && o.pred == Side::None).count();
            let fp = subset.iter().filter(|o| !o.label.presence && o.pred != Side::None).count();
            let tn = subset.iter().filter(|o| !o.label.presence && o.pred == Side::None).count();
            assert_eq!((set.true_pos, set.false_neg, set.false_pos, set.true_neg), (tp, fneg, fp, tn));
            assert_eq!(set.acc_task1, Some((tp + tn) as f64 / subset.len() as f64));
            // sensitivity/specificity reproduce from the confusion matrix exactly
            assert_eq!(set.sensitivity, (tp + fneg > 0).then(|| tp as f64 / (tp + fneg) as f64));
            assert_eq!(set.specificity, (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64));

            let t2: Vec<_> = subset
                .iter()
                .filter(|o| o.label.presence && o.pred != Side::None)
                .collect();
            let t2c = t2.iter().filter(|o| o.pred == o.label.side).count();
            assert_eq!(
                set.acc_task2_on_positives,
                (!t2.is_empty()).then(|| t2c as f64 / t2.len() as f64),
                "{name} task2"
            );
        }
    }
    Ok(())
}

#[test]
fn subgroup_tables_match_brute_force() {
    for seed in 5..8u64 {
        let outcomes = random_outcomes(250, seed);
        let report = subgroup_tables(&outcomes);

        // by-region rows: positives touching the region, per timepoint split
        for row in &report.by_region {
            let region = Region::ALL
                .into_iter()
                .find(|r| format!("{r:?}").eq_ignore_ascii_case(&row.key.replace(' ', "")))
                .or(match row.key.as_str() {
                    "Border zone" => Some(Region::BorderZone),
                    _ => None,
                })
                .unwrap_or_else(|| panic!("unknown region key {}", row.key));
            let subset: Vec<&ScanOutcome> = outcomes
                .iter()
                .filter(|o| o.label.presence && o.label.locations.iter().any(|l| l.region == region))
                .filter(|o| row.timepoint.is_none() || Some(o.timepoint) == row.timepoint)
                .collect();
            assert_eq!(row.n, subset.len(), "region {} n", row.key);
            assert_eq!(
                row.correct,
                subset.iter().filter(|o| o.pred == o.label.side).count(),
                "region {} correct",
                row.key
            );
        }

        // size bands partition positives + negatives by grade
        for row in &report.by_size {
            let (lo, hi) = match row.key.as_str() {
                "Size 0" => (0u8, 0u8),
                "Size 1-2" => (1, 2),
                "Size 3-4" => (3, 4),
                other => panic!("unknown size key {other}"),
            };
            let subset: Vec<&ScanOutcome> = outcomes
                .iter()
                .filter(|o| (lo..=hi).contains(&o.label.size_grade))
                .filter(|o| row.timepoint.is_none() || Some(o.timepoint) == row.timepoint)
                .collect();
            assert_eq!(row.n, subset.len());
            assert_eq!(row.correct, subset.iter().filter(|o| o.pred == o.label.side).count());
        }

        // background rows report error rates over non-exclusive subsets
        for row in &report.by_background {
            let b = match row.key.as_str() {
                "Atrophy" => Background::Atrophy,
                "Leukoaraiosis" => Background::Leukoaraiosis,
                "Old stroke lesion" => Background::OldStroke,
                "Non-stroke lesion" => Background::NonStrokeLesion,
                other => panic!("unknown background key {other}"),
            };
            let subset: Vec<&ScanOutcome> =
                outcomes.iter().filter(|o| o.label.background.contains(&b)).collect();
            let wrong = subset.iter().filter(|o| o.pred != o.label.side).count();
            assert_eq!(row.n, subset.len());
            assert_eq!(row.rate, (row.n > 0).then(|| wrong as f64 / row.n as f64));
        }

        // lesion-count rows partition the positives exactly once
        let total: usize = report.by_lesion_count.iter().map(|r| r.n).sum();
        assert_eq!(total, outcomes.iter().filter(|o| o.label.presence).count());
    }
}

fn matrix(raters: &[&str], cells: &[Option<&str>]) -> RatingsMatrix {
    RatingsMatrix::new(
        raters.iter().map(|r| r.to_string()).collect(),
        cells.iter().map(|c| c.map(str::to_string)).collect(),
    )
    .expect("valid matrix")
}

#[test]
fn kalpha_hand_cases() -> Result<()> {
    // perfect agreement
    let m = matrix(
        &["r1", "r2"],
        &[Some("L"), Some("L"), Some("R"), Some("R"), Some("N"), Some("N")],
    );
    let a = kalpha(&m)?;
    assert!((a.value - 1.0).abs() < 1e-12);

    // two units, systematic swap: coincidences (A,B) = (B,A) = 2, n = 4;
    // D_o = 4, D_e = (2*2 + 2*2)/3; alpha = 1 - 4/(8/3) = -0.5
    let m = matrix(&["r1", "r2"], &[Some("A"), Some("B"), Some("B"), Some("A")]);
    let a = kalpha(&m)?;
    assert!((a.value - (-0.5)).abs() < 1e-12, "got {}", a.value);

    // degenerate: one category only
    let m = matrix(&["r1", "r2"], &[Some("L"), Some("L"), Some("L"), Some("L")]);
    let a = kalpha(&m)?;
    assert!(a.degenerate && a.value == 1.0);

    // all units unpairable -> undefined
    let m = matrix(&["r1", "r2"], &[Some("L"), None, None, Some("R")]);
    assert!(kalpha(&m).is_err());

    // missing values: only pairable units count
    let m = matrix(
        &["r1", "r2", "r3"],
        &[
            Some("L"), Some("L"), None,
            Some("L"), Some("R"), Some("R"),
            None, Some("R"), Some("R"),
        ],
    );
    // coincidence oracle by hand:
    //   unit1 {L,L}, w=1: (L,L) += 2
    //   unit2 {L,R,R}, w=1/2: (L,R) += 1, (R,L) += 1, (R,R) += 1
    //   unit3 {R,R}, w=1: (R,R) += 2
    // totals: n_L = 3, n_R = 4, n = 7; D_o = 2; D_e = 2*3*4/6 = 4
    let want = 1.0 - 2.0 / 4.0;
    let a = kalpha(&m)?;
    assert!((a.value - want).abs() < 1e-12, "{} vs {want}", a.value);
    Ok(())
}

#[test]
fn kalpha_invariances() -> Result<()> {
    let m = matrix(
        &["r1", "r2", "r3"],
        &[
            Some("L"), Some("L"), Some("R"),
            Some("R"), Some("R"), Some("R"),
            Some("N"), Some("L"), Some("N"),
            Some("B"), Some("B"), Some("N"),
            Some("L"), Some("R"), Some("L"),
        ],
    );
    let base = kalpha(&m)?.value;

    // category relabeling (nominal metric)
    let relabeled = RatingsMatrix::new(
        m.raters.clone(),
        m.values
            .iter()
            .map(|v| {
                v.as_ref().map(|s| {
                    match s.as_str() {
                        "L" => "x1",
                        "R" => "x2",
                        "B" => "x3",
                        _ => "x4",
                    }
                    .to_string()
                })
            })
            .collect(),
    )?;
    assert!((kalpha(&relabeled)?.value - base).abs() < 1e-12);

    // unit permutation
    let r = m.raters.len();
    let perm = [3usize, 0, 4, 1, 2];
    let mut values = Vec::new();
    for &u in &perm {
        values.extend_from_slice(&m.values[u * r..(u + 1) * r]);
    }
    let permuted = RatingsMatrix::new(m.raters.clone(), values)?;
    assert!((kalpha(&permuted)?.value - base).abs() < 1e-12);

    // removing a perfectly-agreed unit never increases alpha
    let mut values = m.values.clone();
    values.drain(r..2 * r); // unit 1 is (R, R, R)
    let reduced = RatingsMatrix::new(m.raters.clone(), values)?;
    assert!(kalpha(&reduced)?.value <= base + 1e-12);
    Ok(())
}

#[test]
fn kalpha_bootstrap_is_deterministic_and_covers_point() -> Result<()> {
    let mut r = rng::stream(99, "boot", 0);
    let cats = ["L", "R", "B", "N"];
    let values: Vec<Option<String>> = (0..60)
        .map(|_| Some(cats[r.gen_range(0..4)].to_string()))
        .collect();
    let m = RatingsMatrix::new(vec!["a".into(), "b".into()], values)?;
    let b1 = kalpha_bootstrap(&m, 1000, 42)?;
    let b2 = kalpha_bootstrap(&m, 1000, 42)?;
    assert_eq!(b1.ci95, b2.ci95);
    assert!(b1.ci95[0] <= b1.alpha && b1.alpha <= b1.ci95[1]);
    assert!(kalpha_bootstrap(&m, 50, 42).is_err(), "n_boot < 100 rejected");

    // perfect agreement: CI collapses to [1, 1]
    let values: Vec<Option<String>> = (0..20)
        .flat_map(|i| {
            let c = cats[i % 4].to_string();
            [Some(c.clone()), Some(c)]
        })
        .collect();
    let m = RatingsMatrix::new(vec!["a".into(), "b".into()], values)?;
    let b = kalpha_bootstrap(&m, 200, 1)?;
    assert_eq!(b.ci95, [1.0, 1.0]);
    Ok(())
}
