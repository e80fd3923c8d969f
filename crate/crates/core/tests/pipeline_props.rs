//! Preprocessing invariants: slice sampling, windowing, the midline split's
//! mirror algebra, and the patient-grouped split.

use std::collections::BTreeSet;

use hemiscan_core::pipeline::{
    normalize, patient_split, sample_slice_indices, sample_slices, split_midline, unsplit,
    Timepoint, Volume,
};
use hemiscan_core::{rng, Result};
use proptest::prelude::*;
use rand::Rng as _;

fn rand_volume(seed: u64, idx: u64, slices: usize, height: usize, width: usize) -> Volume {
    let mut r = rng::stream(seed, "pipeline_tests", idx);
    let voxels: Vec<f32> = (0..slices * height * width)
        .map(|_| r.gen_range(0.0f32..100.0))
        .collect();
    Volume::new(slices, height, width, voxels, "p0", format!("s{idx}"), Timepoint::Baseline)
        .expect("valid volume")
}

#[test]
fn slice_indices_hand_case_and_properties() {
    // 23 slices down to 11: k * 22/10 rounded half away from zero
    assert_eq!(
        sample_slice_indices(23, 11),
        vec![0, 2, 4, 7, 9, 11, 13, 15, 18, 20, 22]
    );
    assert_eq!(sample_slice_indices(11, 11), (0..11).collect::<Vec<_>>());
    assert_eq!(sample_slice_indices(5, 1), vec![0]);
    // upsampling repeats: 3 -> 5
    assert_eq!(sample_slice_indices(3, 5), vec![0, 1, 1, 2, 2]);
    for (s, t) in [(40usize, 11usize), (12, 11), (7, 11), (100, 3)] {
        let idx = sample_slice_indices(s, t);
        assert_eq!(idx.len(), t);
        assert_eq!(idx[0], 0);
        assert_eq!(*idx.last().expect("non-empty"), s - 1);
        assert!(idx.windows(2).all(|w| w[0] <= w[1]), "monotone for {s}->{t}");
    }
}

#[test]
fn sampling_preserves_selected_planes() {
    let v = rand_volume(81, 0, 23, 16, 16);
    let out = sample_slices(&v, 11);
    assert_eq!(out.slices, 11);
    let plane = v.height * v.width;
    for (k, &src) in sample_slice_indices(23, 11).iter().enumerate() {
        assert_eq!(
            out.voxels[k * plane..(k + 1) * plane],
            v.voxels[src * plane..(src + 1) * plane]
        );
    }
}

#[test]
fn normalize_windows_to_unit_interval() -> Result<()> {
    let v = Volume::new(
        1,
        16,
        16,
        (0..256).map(|i| i as f32 - 50.0).collect(),
        "p0",
        "s0",
        Timepoint::Baseline,
    )?;
    let out = normalize(&v, [0.0, 80.0])?;
    assert!(out.voxels.iter().all(|&x| (0.0..=1.0).contains(&x)));
    // below window clips to 0, above to 1, inside is affine
    assert_eq!(out.voxels[0], 0.0);
    assert_eq!(out.voxels[255], 1.0);
    assert!((out.voxels[90] - 0.5).abs() < 1e-6); // raw 40.0
    assert!(normalize(&v, [5.0, 5.0]).is_err());
    Ok(())
}

#[test]
fn mirror_algebra_is_bit_exact_on_100_random_volumes() {
    for i in 0..100u64 {
        let v = rand_volume(82, i, 5, 16, 20);
        let direct = split_midline(&v.mirrored()).expect("even width");
        let swapped = split_midline(&v).expect("even width").swapped();
        assert_eq!(direct.left, swapped.left, "volume {i}");
        assert_eq!(direct.right, swapped.right, "volume {i}");
    }
}

#[test]
fn split_columns_are_canonical() -> Result<()> {
    // width 4: left half columns {1, 0} reversed, right half columns {2, 3}
    let v = Volume::new(
        1,
        16,
        16,
        (0..256).map(|i| i as f32).collect(),
        "p0",
        "s0",
        Timepoint::Baseline,
    )?;
    let pair = split_midline(&v)?;
    // column 0 of each half must sit on the midline
    for h in 0..16 {
        assert_eq!(pair.left[h * 8], v.voxels[h * 16 + 7]);
        assert_eq!(pair.right[h * 8], v.voxels[h * 16 + 8]);
        assert_eq!(pair.left[h * 8 + 7], v.voxels[h * 16]);
        assert_eq!(pair.right[h * 8 + 7], v.voxels[h * 16 + 15]);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn unsplit_roundtrips_bit_exactly(seed in 0u64..1000) {
        let v = rand_volume(83, seed, 3, 16, 18);
        let back = unsplit(&split_midline(&v).expect("even width"));
        prop_assert_eq!(back.voxels, v.voxels);
    }

    #[test]
    fn mirror_is_involutive(seed in 0u64..1000) {
        let v = rand_volume(84, seed, 2, 16, 16);
        prop_assert_eq!(v.mirrored().mirrored().voxels, v.voxels);
    }
}

#[test]
fn patient_split_groups_and_ratios() -> Result<()> {
    // 100 patients x 2 scans
    let ids: Vec<String> = (0..200).map(|i| format!("p{:03}", i / 2)).collect();
    let split = patient_split(&ids, (0.7, 0.15, 0.15), 9)?;
    let all: Vec<usize> = split
        .train
        .iter()
        .chain(&split.val)
        .chain(&split.test)
        .copied()
        .collect();
    assert_eq!(all.len(), 200);
    assert_eq!(all.iter().copied().collect::<BTreeSet<_>>().len(), 200);

    // no patient straddles two splits
    let pats = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect::<BTreeSet<_>>();
    let (tr, va, te) = (pats(&split.train), pats(&split.val), pats(&split.test));
    assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));

    // ratios hold to within one patient's worth of scans
    assert!((split.train.len() as f64 - 140.0).abs() <= 2.0);
    assert!((split.val.len() as f64 - 30.0).abs() <= 2.0);
    assert!((split.test.len() as f64 - 30.0).abs() <= 2.0);

    // deterministic per seed, different across seeds
    assert_eq!(patient_split(&ids, (0.7, 0.15, 0.15), 9)?, split);
    assert_ne!(patient_split(&ids, (0.7, 0.15, 0.15), 10)?, split);

    // 3 patients is the minimum; 2 is rejected
    assert!(patient_split(&ids[..6], (0.4, 0.3, 0.3), 0).is_ok());
    assert!(patient_split(&ids[..4], (0.4, 0.3, 0.3), 0).is_err());
    Ok(())
}
