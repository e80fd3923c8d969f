//! Counterfactual machinery invariants: autoencoder shape contracts and
//! reconstruction quality, line-search behavior against analytic probe
//! classifiers, attribution mask semantics, classifier gradient checks, and
//! the hit/miss score.

use std::collections::BTreeSet;

use hemiscan_core::explain::{
    ae_train, counterfactual, hit_score, scoreable, AttributionMap, Autoencoder,
    CounterfactualOptions, LesionClassifier,
};
use hemiscan_core::model::{prepare_scan, BaselineModel, ModelConfig, MtlModel, PreparedScan};
use hemiscan_core::nn::mse_loss;
use hemiscan_core::phantom::{build_atlas, generate, PhantomConfig};
use hemiscan_core::pipeline::{
    Hemisphere, Location, PipelineConfig, Region, ScanLabel, Side, Timepoint, Volume,
};
use hemiscan_core::{rng, Error, Result, Tensor};
use rand::Rng as _;

fn pipe_cfg(slices: usize) -> PipelineConfig {
    PipelineConfig {
        target_slices: slices,
        window: [0.0, 80.0],
    }
}

fn rand_scan(slices: usize, hw: usize, seed: u64, idx: u64) -> PreparedScan {
    let mut r = rng::stream(seed, "explain_tests", idx);
    let voxels: Vec<f32> = (0..slices * hw * hw).map(|_| r.gen_range(0.0f32..80.0)).collect();
    let v = Volume::new(
        slices,
        hw,
        hw,
        voxels,
        format!("p{idx}"),
        format!("s{idx}"),
        Timepoint::Baseline,
    )
    .expect("valid volume");
    prepare_scan(&v, &ScanLabel::negative(BTreeSet::new()), &pipe_cfg(slices)).expect("prepared")
}

#[test]
fn autoencoder_shape_contracts() -> Result<()> {
    let mut ae = Autoencoder::new(32, 32, &mut rng::stream(1, "ae", 0))?;
    let x = Tensor::from_vec(&[3, 1, 32, 32], vec![0.25; 3 * 32 * 32])?;
    let z = ae.encode(&x, false)?;
    assert_eq!(z.shape(), &[3, 32, 2, 2]);
    let recon = ae.decode(&z, false)?;
    assert_eq!(recon.shape(), &[3, 1, 32, 32]);
    // non-divisible inputs and wrong latent shapes are rejected
    assert!(Autoencoder::new(30, 32, &mut rng::stream(1, "ae", 1)).is_err());
    assert!(ae.decode(&Tensor::zeros(&[1, 32, 4, 4]), false).is_err());
    assert!(ae.encode(&Tensor::zeros(&[1, 1, 16, 16]), false).is_err());
    Ok(())
}

#[test]
fn autoencoder_reconstructs_held_out_scans() -> Result<()> {
    let cfg = PhantomConfig {
        n_scans: 24,
        slices: 5,
        height: 32,
        width: 32,
        ..PhantomConfig::default()
    };
    let pipe = pipe_cfg(5);
    let scans: Vec<PreparedScan> = generate(&cfg, 31)?
        .iter()
        .map(|(v, l)| prepare_scan(v, l, &pipe))
        .collect::<Result<_>>()?;
    let train_idx: Vec<usize> = (0..20).collect();
    let (mut ae, logs) = ae_train(&scans, &train_idx, 20, 16, 1e-3, 31)?;
    assert!(logs.last().expect("logged").train_mse < logs[0].train_mse);

    // held-out scans reconstruct to within 0.01 mean squared error
    let mut worst = 0.0f64;
    for s in &scans[20..] {
        let v = &s.volume;
        let x = Tensor::from_vec(&[v.slices, 1, v.height, v.width], v.voxels.clone())?;
        let z = ae.encode(&x, false)?;
        let recon = ae.decode(&z, false)?;
        let (mse, _) = mse_loss(&recon, &x)?;
        worst = worst.max(mse);
    }
    assert!(worst <= 0.01, "held-out reconstruction mse {worst}");
    Ok(())
}

#[test]
fn attribution_mask_is_exact_top_fraction_with_index_ties() -> Result<()> {
    let n = 4 * 10 * 10;
    // strictly ranked values: mask must be exactly the top ceil(0.01 * 400) = 4
    let values: Vec<f32> = (0..n).map(|i| i as f32).collect();
    let map = AttributionMap::from_values(values, 4, 10, 10, 0.01)?;
    assert_eq!(map.mask.iter().filter(|&&m| m).count(), 4);
    for i in 0..n {
        assert_eq!(map.mask[i], i >= n - 4);
    }
    assert_eq!(map.argmax(), n - 1);

    // all-equal values: ties broken by index, argmax is the first voxel
    let map = AttributionMap::from_values(vec![1.0; n], 4, 10, 10, 0.01)?;
    for i in 0..n {
        assert_eq!(map.mask[i], i < 4, "tie-break at {i}");
    }
    assert_eq!(map.argmax(), 0);

    // ceil, not round: 0.001 * 400 = 0.4 still keeps one voxel
    let map = AttributionMap::from_values(vec![1.0; n], 4, 10, 10, 0.001)?;
    assert_eq!(map.mask.iter().filter(|&&m| m).count(), 1);

    assert!(AttributionMap::from_values(vec![1.0; n], 4, 10, 10, 1.5).is_err());
    assert!(AttributionMap::from_values(vec![1.0; 7], 4, 10, 10, 0.01).is_err());
    Ok(())
}

/// Analytic probe: p = sigmoid(a * mean(x) + b). Smooth everywhere, with an
/// exact gradient, so the line search can be tested without training.
struct MeanProbe {
    a: f64,
    b: f64,
}

impl LesionClassifier for MeanProbe {
    fn p_lesion(&mut self, x: &Tensor, _template: &Volume) -> Result<f64> {
        let m: f64 = x.data().iter().map(|&v| v as f64).sum::<f64>() / x.len() as f64;
        Ok(1.0 / (1.0 + (-(self.a * m + self.b)).exp()))
    }

    fn p_lesion_grad(&mut self, x: &Tensor, template: &Volume) -> Result<(f64, Tensor)> {
        let p = self.p_lesion(x, template)?;
        let g = (p * (1.0 - p) * self.a / x.len() as f64) as f32;
        Ok((p, Tensor::full(x.shape(), g)))
    }
}

/// Constant probability, zero gradient: saturation.
struct FlatProbe;

impl LesionClassifier for FlatProbe {
    fn p_lesion(&mut self, _x: &Tensor, _template: &Volume) -> Result<f64> {
        Ok(0.9)
    }

    fn p_lesion_grad(&mut self, x: &Tensor, _template: &Volume) -> Result<(f64, Tensor)> {
        Ok((0.9, Tensor::zeros(x.shape())))
    }
}

#[test]
fn counterfactual_line_search_converges_and_never_increases_p() -> Result<()> {
    let scan = rand_scan(2, 32, 51, 0);
    let mut ae = Autoencoder::new(32, 32, &mut rng::stream(51, "ae", 0))?;
    let mut clf = MeanProbe { a: 10.0, b: -2.0 };
    let opts = CounterfactualOptions::default();
    let cf = counterfactual(&mut clf, &mut ae, &scan, &opts)?;
    assert!(cf.p_input > 0.5);
    assert!(cf.converged, "p_final {}", cf.p_final);
    assert!(cf.p_final < opts.target_p);
    assert!(cf.p_final <= cf.p_initial);
    assert!(cf.steps >= 1 && cf.steps <= opts.max_steps);
    assert_eq!(cf.volume.voxels.len(), scan.volume.voxels.len());
    assert_eq!(
        cf.attribution.mask.iter().filter(|&&m| m).count(),
        (0.01f64 * (2.0 * 32.0 * 32.0)).ceil() as usize
    );

    // deterministic: same inputs, same trajectory
    let cf2 = counterfactual(&mut clf, &mut ae, &scan, &opts)?;
    assert_eq!(cf.p_final, cf2.p_final);
    assert_eq!(cf.steps, cf2.steps);
    assert_eq!(cf.attribution.values, cf2.attribution.values);
    Ok(())
}

#[test]
fn counterfactual_edge_cases() -> Result<()> {
    let scan = rand_scan(2, 32, 52, 0);
    let mut ae = Autoencoder::new(32, 32, &mut rng::stream(52, "ae", 0))?;

    // p <= 0.5 on the input violates the precondition
    let mut negative = MeanProbe { a: 10.0, b: -100.0 };
    assert!(counterfactual(&mut negative, &mut ae, &scan, &CounterfactualOptions::default()).is_err());

    // vanished gradient is a saturation error, not silent failure
    let err = counterfactual(&mut FlatProbe, &mut ae, &scan, &CounterfactualOptions::default())
        .expect_err("flat classifier must saturate");
    assert!(matches!(err, Error::Saturation(_)), "got {err:?}");

    // degenerate target: already below it, zero traversal, residual attribution
    let mut clf = MeanProbe { a: 10.0, b: -2.0 };
    let opts = CounterfactualOptions {
        target_p: 1.0,
        ..CounterfactualOptions::default()
    };
    let cf = counterfactual(&mut clf, &mut ae, &scan, &opts)?;
    assert_eq!(cf.steps, 0);
    assert!(cf.converged);
    assert_eq!(cf.p_initial, cf.p_final);

    // option validation
    for bad in [
        CounterfactualOptions { max_steps: 0, ..CounterfactualOptions::default() },
        CounterfactualOptions { target_p: 0.0, ..CounterfactualOptions::default() },
        CounterfactualOptions { lambda_init: 0.0, ..CounterfactualOptions::default() },
    ] {
        assert!(counterfactual(&mut clf, &mut ae, &scan, &bad).is_err());
    }
    Ok(())
}

#[test]
fn model_classifier_probabilities_and_gradients() -> Result<()> {
    let cfg = ModelConfig {
        filters: vec![4, 4],
        fc_nodes: 8,
        slices: 2,
        height: 16,
        width: 16,
    };
    let scan = rand_scan(2, 16, 53, 0);
    let v = &scan.volume;
    let x = Tensor::from_vec(&[v.slices, 1, v.height, v.width], v.voxels.clone())?;

    let mut mtl = MtlModel::new(&cfg, &mut rng::stream(53, "init", 0))?;
    // the trait's probability must agree with the prediction path exactly
    let p_trait = mtl.p_lesion(&x, v)?;
    assert_eq!(p_trait, mtl.predict(&scan)?.p_lesion);

    let mut baseline = BaselineModel::new(&cfg, &mut rng::stream(54, "init", 0))?;
    let p_base = baseline.p_lesion(&x, v)?;
    assert!((0.0..=1.0).contains(&p_base));

    // finite-difference spot check of dp/dx on a few voxels
    let h = 1e-2f32;
    let coords = [0usize, 17, 100, 255, 300, 511];
    for (name, clf) in [
        ("mtl", &mut mtl as &mut dyn LesionClassifier),
        ("baseline", &mut baseline as &mut dyn LesionClassifier),
    ] {
        let (_, dx) = clf.p_lesion_grad(&x, v)?;
        assert_eq!(dx.shape(), x.shape());
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &i in &coords {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let pp = clf.p_lesion(&xp, v)?;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let pm = clf.p_lesion(&xm, v)?;
            analytic.push(dx.data()[i]);
            numeric.push((pp - pm) / (2.0 * h as f64));
        }
        let err = hemiscan_core::nn::gradcheck::l2_rel_err(&analytic, &numeric);
        assert!(err <= 5e-2, "{name} input-gradient rel err {err}");
    }
    Ok(())
}

fn peak_map(atlas_shape: (usize, usize, usize), peak: usize) -> AttributionMap {
    let (s, h, w) = atlas_shape;
    let mut values = vec![0.0f32; s * h * w];
    values[peak] = 1.0;
    AttributionMap::from_values(values, s, h, w, 0.01).expect("valid map")
}

#[test]
fn hit_score_counts_hits_misses_and_exclusions() -> Result<()> {
    let atlas = build_atlas(5, 32, 32)?;
    let shape = (atlas.slices, atlas.height, atlas.width);
    let mca_l = Location { region: Region::Mca, side: Hemisphere::Left };
    let mca_r = Location { region: Region::Mca, side: Hemisphere::Right };

    let label_for = |locs: &[Location]| ScanLabel {
        presence: !locs.is_empty(),
        side: match (
            locs.iter().any(|l| l.side == Hemisphere::Left),
            locs.iter().any(|l| l.side == Hemisphere::Right),
        ) {
            (true, true) => Side::Both,
            (true, false) => Side::Left,
            (false, true) => Side::Right,
            (false, false) => Side::None,
        },
        locations: locs.iter().copied().collect(),
        size_grade: if locs.is_empty() { 0 } else { 2 },
        background: BTreeSet::new(),
    };

    let inside = atlas.mask_voxels(mca_l)[0];
    let outside = atlas.mask_voxels(mca_r)[0];
    let lacunar = Location { region: Region::Lacunar, side: Hemisphere::Left };

    let maps = vec![
        peak_map(shape, inside),  // hit
        peak_map(shape, outside), // miss
        peak_map(shape, inside),  // excluded: negative
        peak_map(shape, inside),  // excluded: two locations
        peak_map(shape, inside),  // excluded: unscored region
    ];
    let labels = vec![
        label_for(&[mca_l]),
        label_for(&[mca_l]),
        label_for(&[]),
        label_for(&[mca_l, mca_r]),
        label_for(&[lacunar]),
    ];
    assert!(scoreable(&labels[0]) && !scoreable(&labels[2]) && !scoreable(&labels[4]));

    let report = hit_score(&maps, &labels, &atlas)?;
    assert_eq!((report.hits, report.misses, report.excluded), (1, 1, 3));
    assert!((report.score - 0.5).abs() < 1e-12);

    // order independence
    let perm = [4usize, 2, 0, 3, 1];
    let maps_p: Vec<AttributionMap> = perm.iter().map(|&i| maps[i].clone()).collect();
    let labels_p: Vec<ScanLabel> = perm.iter().map(|&i| labels[i].clone()).collect();
    let rp = hit_score(&maps_p, &labels_p, &atlas)?;
    assert_eq!((rp.hits, rp.misses, rp.excluded), (1, 1, 3));

    // nothing scoreable -> undefined, not zero
    assert!(hit_score(&maps[2..3], &labels[2..3], &atlas).is_err());
    // length and shape mismatches are errors
    assert!(hit_score(&maps[..2], &labels[..1], &atlas).is_err());
    let small = AttributionMap::from_values(vec![0.0; 16], 1, 4, 4, 0.01)?;
    assert!(hit_score(&[small], &labels[..1].to_vec(), &atlas).is_err());
    Ok(())
}

#[test]
fn random_peaks_hit_at_the_region_volume_fraction() -> Result<()> {
    let atlas = build_atlas(5, 32, 32)?;
    let shape = (atlas.slices, atlas.height, atlas.width);
    let total = atlas.slices * atlas.height * atlas.width;
    let loc = Location { region: Region::Mca, side: Hemisphere::Left };
    let expect = atlas.mask_voxels(loc).len() as f64 / total as f64;

    let label = ScanLabel {
        presence: true,
        side: Side::Left,
        locations: [loc].into_iter().collect(),
        size_grade: 2,
        background: BTreeSet::new(),
    };
    let mut r = rng::stream(99, "peaks", 0);
    let n = 400;
    let maps: Vec<AttributionMap> = (0..n).map(|_| peak_map(shape, r.gen_range(0..total))).collect();
    let labels = vec![label; n];
    let report = hit_score(&maps, &labels, &atlas)?;
    assert_eq!(report.hits + report.misses, n);
    let tol = 4.0 * (expect * (1.0 - expect) / n as f64).sqrt();
    assert!(
        (report.score - expect).abs() <= tol,
        "score {} vs volume fraction {expect}",
        report.score
    );
    Ok(())
}
