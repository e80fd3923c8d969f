//! The seven subcommands. Each one writes its resolved configuration next to
//! its outputs and fails with a dependency error when an upstream artifact is
//! missing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::Serialize;

use hemiscan_core::explain::{
    ae_train, counterfactual, hit_score, AeEpochLog, Autoencoder, Counterfactual, HitReport,
    LesionClassifier,
};
use hemiscan_core::formats::{write_hbv, write_pgm, Checkpoint};
use hemiscan_core::metrics::{
    classify_metrics, kalpha, subgroup_tables, ClassifyMetrics, MetricSet, RatingsMatrix,
    SubgroupReport,
};
use hemiscan_core::model::{
    baseline_train, evaluate_baseline, evaluate_mtl, layer_sweep, stage1_train, stage2_train,
    BaselineModel, MtlModel, PreparedScan, Stage1Model,
};
use hemiscan_core::phantom::build_atlas;
use hemiscan_core::pipeline::{patient_split, Side, Timepoint};
use hemiscan_core::{rng, Error, Result};

use crate::artifacts::{
    checkpoint_path, load_dataset, load_split, parse_ratings_csv, require, save_dataset,
    save_split, split_path, write_epoch_csv, write_json, SplitFile,
};
use crate::config::RunConfig;

const TABLE3_RATINGS: &str = include_str!("../fixtures/table3_ratings.csv");
const REFERENCE_ALPHAS: &str = include_str!("../fixtures/table2_reference.csv");

/// The bundled 14-patient expert ratings.
pub fn bundled_ratings() -> Result<RatingsMatrix> {
    parse_ratings_csv(TABLE3_RATINGS)
}

/// Published model-vs-expert alphas the bundled ratings reproduce.
pub fn bundled_reference() -> Result<BTreeMap<String, f64>> {
    reference_alphas()
}

pub fn gen(cfg: &RunConfig) -> Result<()> {
    cfg.write_resolved("gen")?;
    let scans = hemiscan_core::phantom::generate_detailed(&cfg.phantom, cfg.seed)?;
    save_dataset(&cfg.out, &scans)?;
    let positives = scans.iter().filter(|s| s.label.presence).count();
    println!(
        "gen: wrote {} scans ({} positive) to {}",
        scans.len(),
        positives,
        cfg.out.join("dataset").display()
    );
    Ok(())
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    cfg.write_resolved("split")?;
    let scans = load_dataset(&cfg.out, &cfg.pipeline.core())?;
    let r = cfg.pipeline.ratios;
    let patient_ids: Vec<String> = scans.iter().map(|s| s.patient_id.clone()).collect();
    let parts = patient_split(&patient_ids, (r[0], r[1], r[2]), cfg.seed)?;
    let file = SplitFile {
        scan_ids: scans.iter().map(|s| s.scan_id.clone()).collect(),
        train: parts.train,
        val: parts.val,
        test: parts.test,
    };
    save_split(&cfg.out, &file)?;
    println!(
        "split: {} train / {} val / {} test scans -> {}",
        file.train.len(),
        file.val.len(),
        file.test.len(),
        split_path(&cfg.out).display()
    );
    Ok(())
}

fn save_model_checkpoint(
    out: &Path,
    stage: &str,
    epoch: usize,
    params: BTreeMap<String, hemiscan_core::Tensor>,
) -> Result<PathBuf> {
    let path = checkpoint_path(out, stage);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Checkpoint {
        stage: stage.to_string(),
        epoch: epoch as u32,
        params,
        adam: None,
    }
    .save(&path)?;
    Ok(path)
}

fn load_stage1(cfg: &RunConfig) -> Result<Stage1Model> {
    let path = checkpoint_path(&cfg.out, "stage1");
    require(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    let mut init = rng::stream(0, "checkpoint_init", 0);
    let mut model = Stage1Model::new(&cfg.model.arch, &mut init)?;
    model.import_state(&ckpt.params)?;
    Ok(model)
}

pub fn load_mtl(cfg: &RunConfig) -> Result<MtlModel> {
    let path = checkpoint_path(&cfg.out, "stage2");
    require(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    let mut init = rng::stream(0, "checkpoint_init", 0);
    let mut model = MtlModel::new(&cfg.model.arch, &mut init)?;
    model.import_state(&ckpt.params)?;
    Ok(model)
}

pub fn load_baseline(cfg: &RunConfig) -> Result<BaselineModel> {
    let path = checkpoint_path(&cfg.out, "baseline");
    require(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    let mut init = rng::stream(0, "checkpoint_init", 0);
    let mut model = BaselineModel::new(&cfg.model.arch, &mut init)?;
    model.import_state(&ckpt.params)?;
    Ok(model)
}

pub fn load_autoencoder(cfg: &RunConfig) -> Result<Autoencoder> {
    let path = checkpoint_path(&cfg.out, "ae");
    require(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    let mut init = rng::stream(0, "checkpoint_init", 0);
    let mut ae = Autoencoder::new(cfg.model.arch.height, cfg.model.arch.width, &mut init)?;
    ae.import_state(&ckpt.params)?;
    Ok(ae)
}

fn write_ae_csv(path: &Path, logs: &[AeEpochLog]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = String::from("epoch,stage,lr,train_loss,val_loss,val_acc\n");
    for l in logs {
        text.push_str(&format!("{},ae,{},{},,\n", l.epoch, l.lr, l.train_mse));
    }
    fs::write(path, text)?;
    Ok(())
}

fn train_stage1(cfg: &RunConfig, scans: &[PreparedScan], split: &SplitFile) -> Result<Stage1Model> {
    let (model, logs) =
        stage1_train(scans, &split.train, &split.val, &cfg.model.arch, &cfg.model.train)?;
    write_epoch_csv(&cfg.out.join("metrics/train_stage1.csv"), &logs)?;
    save_model_checkpoint(&cfg.out, "stage1", cfg.model.train.stage1_epochs, model.export_state())?;
    let best = logs.iter().map(|l| l.val_acc).fold(0.0, f64::max);
    println!("train stage 1: best half-presence val acc {best:.4}");
    Ok(model)
}

fn train_stage2(cfg: &RunConfig, scans: &[PreparedScan], split: &SplitFile, stage1: Stage1Model) -> Result<()> {
    let (model, logs) = stage2_train(stage1, scans, &split.train, &split.val, &cfg.model.train)?;
    write_epoch_csv(&cfg.out.join("metrics/train_stage2.csv"), &logs)?;
    let epochs = cfg.model.train.stage2a_epochs + cfg.model.train.stage2b_epochs;
    save_model_checkpoint(&cfg.out, "stage2", epochs, model.export_state())?;
    let best = logs.iter().map(|l| l.val_acc).fold(0.0, f64::max);
    println!("train stage 2: best four-class val acc {best:.4}");
    Ok(())
}

fn train_baseline(cfg: &RunConfig, scans: &[PreparedScan], split: &SplitFile) -> Result<()> {
    let (model, logs) =
        baseline_train(scans, &split.train, &split.val, &cfg.model.arch, &cfg.model.train)?;
    write_epoch_csv(&cfg.out.join("metrics/train_baseline.csv"), &logs)?;
    save_model_checkpoint(&cfg.out, "baseline", cfg.model.train.baseline_epochs, model.export_state())?;
    let best = logs.iter().map(|l| l.val_acc).fold(0.0, f64::max);
    println!("train baseline: best four-class val acc {best:.4}");
    Ok(())
}

fn train_ae(cfg: &RunConfig, scans: &[PreparedScan], split: &SplitFile) -> Result<()> {
    let e = &cfg.explain;
    let (ae, logs) = ae_train(scans, &split.train, e.ae_epochs, e.ae_batch_slices, e.ae_lr, cfg.seed)?;
    write_ae_csv(&cfg.out.join("metrics/train_ae.csv"), &logs)?;
    save_model_checkpoint(&cfg.out, "ae", e.ae_epochs, ae.export_state())?;
    let last = logs.last().map(|l| l.train_mse).unwrap_or(f64::NAN);
    println!("train autoencoder: final train mse {last:.6}");
    Ok(())
}

pub fn train(cfg: &RunConfig, stage: &str) -> Result<()> {
    cfg.write_resolved(&format!("train_{stage}"))?;
    let scans = load_dataset(&cfg.out, &cfg.pipeline.core())?;
    let split = load_split(&cfg.out, &scans)?;
    match stage {
        "1" => {
            train_stage1(cfg, &scans, &split)?;
        }
        "2" => {
            let stage1 = load_stage1(cfg)?;
            train_stage2(cfg, &scans, &split, stage1)?;
        }
        "baseline" => train_baseline(cfg, &scans, &split)?,
        "ae" => train_ae(cfg, &scans, &split)?,
        "all" => {
            let stage1 = train_stage1(cfg, &scans, &split)?;
            train_stage2(cfg, &scans, &split, stage1)?;
            train_baseline(cfg, &scans, &split)?;
            train_ae(cfg, &scans, &split)?;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown training stage '{other}' (expected 1, 2, baseline, or all)"
            )))
        }
    }
    Ok(())
}

fn metric_row(scope: &str, m: &MetricSet) -> String {
    fn opt(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    format!(
        "{scope},{},{},{},{},{},{},{},{},{},{}\n",
        m.n,
        opt(m.acc4),
        opt(m.acc_task1),
        opt(m.acc_task2_on_positives),
        opt(m.sensitivity),
        opt(m.specificity),
        m.true_pos,
        m.false_pos,
        m.true_neg,
        m.false_neg
    )
}

fn timepoint_name(t: Timepoint) -> &'static str {
    match t {
        Timepoint::Baseline => "baseline",
        Timepoint::Followup => "followup",
    }
}

fn write_metrics_csv(path: &Path, m: &ClassifyMetrics) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = String::from(
        "scope,n,acc4,acc_task1,acc_task2_on_positives,sensitivity,specificity,tp,fp,tn,fn\n",
    );
    text.push_str(&metric_row("overall", &m.overall));
    for (tp, set) in &m.by_timepoint {
        text.push_str(&metric_row(timepoint_name(*tp), set));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_subgroups_csv(path: &Path, report: &SubgroupReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = String::from("table,key,timepoint,n,correct,rate\n");
    for (table, rows) in [
        ("region", &report.by_region),
        ("lesion_count", &report.by_lesion_count),
        ("size", &report.by_size),
        ("background", &report.by_background),
    ] {
        for r in rows {
            let tp = r.timepoint.map(timepoint_name).unwrap_or("");
            let rate = r.rate.map(|v| v.to_string()).unwrap_or_default();
            text.push_str(&format!(
                "{table},{},{tp},{},{},{rate}\n",
                r.key, r.n, r.correct
            ));
        }
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct BaselinePrediction {
    scan_id: String,
    four_class: Side,
}

fn split_indices<'a>(split: &'a SplitFile, which: &str) -> Result<&'a [usize]> {
    match which {
        "train" => Ok(&split.train),
        "val" => Ok(&split.val),
        "test" => Ok(&split.test),
        other => Err(Error::Config(format!(
            "unknown split '{other}' (expected train, val, or test)"
        ))),
    }
}

pub fn eval(cfg: &RunConfig, model_kind: &str, which: &str) -> Result<()> {
    cfg.write_resolved(&format!("eval_{model_kind}"))?;
    let scans = load_dataset(&cfg.out, &cfg.pipeline.core())?;
    let split = load_split(&cfg.out, &scans)?;
    let idx = split_indices(&split, which)?;

    let outcomes = match model_kind {
        "mtl" => {
            let mut model = load_mtl(cfg)?;
            let preds: Vec<_> = idx
                .iter()
                .map(|&i| model.predict(&scans[i]))
                .collect::<Result<_>>()?;
            write_json(&cfg.out.join("eval/predictions_mtl.json"), &preds)?;
            evaluate_mtl(&mut model, &scans, idx)?
        }
        "baseline" => {
            let mut model = load_baseline(cfg)?;
            let outcomes = evaluate_baseline(&mut model, &scans, idx)?;
            let preds: Vec<BaselinePrediction> = outcomes
                .iter()
                .map(|o| BaselinePrediction {
                    scan_id: o.scan_id.clone(),
                    four_class: o.pred,
                })
                .collect();
            write_json(&cfg.out.join("eval/predictions_baseline.json"), &preds)?;
            outcomes
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model '{other}' (expected mtl or baseline)"
            )))
        }
    };

    let metrics = classify_metrics(&outcomes)?;
    let subgroups = subgroup_tables(&outcomes);
    write_metrics_csv(&cfg.out.join(format!("eval/metrics_{model_kind}.csv")), &metrics)?;
    write_subgroups_csv(&cfg.out.join(format!("eval/subgroups_{model_kind}.csv")), &subgroups)?;
    println!(
        "eval {model_kind} on {which}: n = {}, four-class acc = {}",
        metrics.overall.n,
        metrics
            .overall
            .acc4
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

#[derive(Serialize)]
struct ExplainEntry {
    scan_id: String,
    p_input: f64,
    p_initial: f64,
    p_final: f64,
    steps: usize,
    converged: bool,
    /// Whether the attribution peak fell inside the labelled region; absent
    /// for scans outside the six scored classes or saturated traversals.
    hit: Option<bool>,
    error: Option<String>,
}

#[derive(Serialize)]
struct ExplainSummary {
    model: String,
    n_candidates: usize,
    n_explained: usize,
    hit_report: Option<HitReport>,
    scans: Vec<ExplainEntry>,
}

pub fn explain(cfg: &RunConfig, model_kind: &str) -> Result<()> {
    cfg.write_resolved(&format!("explain_{model_kind}"))?;
    let scans = load_dataset(&cfg.out, &cfg.pipeline.core())?;
    let split = load_split(&cfg.out, &scans)?;
    let mut ae = load_autoencoder(cfg)?;
    let mut mtl;
    let mut base;
    let clf: &mut dyn LesionClassifier = match model_kind {
        "mtl" => {
            mtl = load_mtl(cfg)?;
            &mut mtl
        }
        "baseline" => {
            base = load_baseline(cfg)?;
            &mut base
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model '{other}' (expected mtl or baseline)"
            )))
        }
    };

    let dir = cfg.out.join("explain").join(model_kind);
    fs::create_dir_all(&dir)?;
    let mut entries = Vec::new();
    let mut attributions = Vec::new();
    let mut labels = Vec::new();
    let mut candidates = 0usize;
    for &i in &split.test {
        let scan = &scans[i];
        let v = &scan.volume;
        let x = hemiscan_core::Tensor::from_vec(
            &[v.slices, 1, v.height, v.width],
            v.voxels.clone(),
        )?;
        if clf.p_lesion(&x, v)? <= 0.5 {
            continue; // only explain scans the model calls lesioned
        }
        candidates += 1;
        match counterfactual(clf, &mut ae, scan, &cfg.explain.options) {
            Ok(cf) => {
                save_attribution(&dir, scan, &cf)?;
                let hit = hemiscan_core::explain::scoreable(&scan.label).then(|| {
                    let atlas = build_atlas(v.slices, v.height, v.width)?;
                    let loc = *scan.label.locations.iter().next().expect("scoreable");
                    Ok::<bool, Error>(atlas.mask(loc)[cf.attribution.argmax()])
                });
                let hit = match hit {
                    Some(h) => Some(h?),
                    None => None,
                };
                entries.push(ExplainEntry {
                    scan_id: scan.scan_id.clone(),
                    p_input: cf.p_input,
                    p_initial: cf.p_initial,
                    p_final: cf.p_final,
                    steps: cf.steps,
                    converged: cf.converged,
                    hit,
                    error: None,
                });
                attributions.push(cf.attribution);
                labels.push(scan.label.clone());
            }
            Err(Error::Saturation(msg)) => {
                entries.push(ExplainEntry {
                    scan_id: scan.scan_id.clone(),
                    p_input: f64::NAN,
                    p_initial: f64::NAN,
                    p_final: f64::NAN,
                    steps: 0,
                    converged: false,
                    hit: None,
                    error: Some(msg),
                });
            }
            Err(e) => return Err(e),
        }
    }

    let hit_report = if attributions.is_empty() {
        None
    } else {
        let m = &attributions[0];
        let atlas = build_atlas(m.slices, m.height, m.width)?;
        match hit_score(&attributions, &labels, &atlas) {
            Ok(r) => Some(r),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e),
        }
    };
    let summary = ExplainSummary {
        model: model_kind.to_string(),
        n_candidates: candidates,
        n_explained: attributions.len(),
        hit_report,
        scans: entries,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    match &summary.hit_report {
        Some(r) => println!(
            "explain {model_kind}: {} scans, hit score {:.4} ({} hits / {} misses, {} excluded)",
            summary.n_explained, r.score, r.hits, r.misses, r.excluded
        ),
        None => println!(
            "explain {model_kind}: {} scans, hit score undefined",
            summary.n_explained
        ),
    }
    Ok(())
}

/// Save the attribution field as a volume plus a grayscale render of the
/// slice containing the attribution peak.
fn save_attribution(dir: &Path, scan: &PreparedScan, cf: &Counterfactual) -> Result<()> {
    let a = &cf.attribution;
    write_hbv(
        &dir.join(format!("{}.attr.hbv", scan.scan_id)),
        a.slices,
        a.height,
        a.width,
        &a.values,
    )?;
    let peak_slice = a.argmax() / (a.height * a.width);
    let start = peak_slice * a.height * a.width;
    write_pgm(
        &dir.join(format!("{}.attr.pgm", scan.scan_id)),
        a.width,
        a.height,
        &a.values[start..start + a.height * a.width],
    )
}

#[derive(Serialize)]
struct PairwiseAlpha {
    rater: String,
    alpha: f64,
    reference: Option<f64>,
}

#[derive(Serialize)]
struct AgreeReport {
    reference_rater: String,
    excluded: Vec<String>,
    pairwise: Vec<PairwiseAlpha>,
    average: f64,
    reference_average: Option<f64>,
    ci95: [f64; 2],
    n_boot: usize,
    skipped: usize,
}

fn reference_alphas() -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for line in REFERENCE_ALPHAS.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (rater, alpha) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::Format(format!("bad reference line '{line}'")))?;
        let alpha: f64 = alpha
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad reference alpha '{alpha}'")))?;
        out.insert(rater.trim().to_string(), alpha);
    }
    Ok(out)
}

/// Drop raters by name, keeping unit rows intact.
fn drop_raters(m: &RatingsMatrix, exclude: &[String]) -> Result<RatingsMatrix> {
    let keep: Vec<usize> = (0..m.raters.len())
        .filter(|&r| !exclude.contains(&m.raters[r]))
        .collect();
    let raters: Vec<String> = keep.iter().map(|&r| m.raters[r].clone()).collect();
    let mut values = Vec::with_capacity(m.n_units() * keep.len());
    for u in 0..m.n_units() {
        let row = m.unit(u);
        for &r in &keep {
            values.push(row[r].clone());
        }
    }
    RatingsMatrix::new(raters, values)
}

/// Average pairwise alpha of the reference column against every other column.
fn pairwise_average(m: &RatingsMatrix, reference: usize) -> Result<(Vec<f64>, f64)> {
    let mut alphas = Vec::new();
    for r in 0..m.raters.len() {
        if r == reference {
            continue;
        }
        alphas.push(kalpha(&m.pair(reference, r))?.value);
    }
    let avg = alphas.iter().sum::<f64>() / alphas.len() as f64;
    Ok((alphas, avg))
}

pub fn agree(
    cfg: &RunConfig,
    ratings_path: Option<&Path>,
    reference: &str,
    exclude: &[String],
) -> Result<()> {
    cfg.write_resolved("agree")?;
    let text = match ratings_path {
        Some(p) => {
            require(p)?;
            fs::read_to_string(p)?
        }
        None => TABLE3_RATINGS.to_string(),
    };
    let full = parse_ratings_csv(&text)?;
    let m = drop_raters(&full, exclude)?;
    let ref_idx = m
        .raters
        .iter()
        .position(|r| r == reference)
        .ok_or_else(|| Error::Config(format!("reference rater '{reference}' not in ratings")))?;

    let (alphas, average) = pairwise_average(&m, ref_idx)?;

    // Bootstrap the average pairwise alpha by resampling units.
    if cfg.metrics.n_boot < 100 {
        return Err(Error::Config(format!(
            "n_boot must be >= 100, got {}",
            cfg.metrics.n_boot
        )));
    }
    let n_units = m.n_units();
    let n_raters = m.raters.len();
    let mut brng = rng::stream(cfg.seed, "agree_bootstrap", 0);
    let mut samples = Vec::with_capacity(cfg.metrics.n_boot);
    let mut skipped = 0usize;
    for _ in 0..cfg.metrics.n_boot {
        let mut values = Vec::with_capacity(n_units * n_raters);
        for _ in 0..n_units {
            let u = brng.gen_range(0..n_units);
            values.extend_from_slice(m.unit(u));
        }
        let resampled = RatingsMatrix::new(m.raters.clone(), values)?;
        match pairwise_average(&resampled, ref_idx) {
            Ok((_, avg)) => samples.push(avg),
            Err(_) => skipped += 1,
        }
    }
    if samples.is_empty() {
        return Err(Error::Undefined(
            "agreement bootstrap: alpha undefined on every resample".into(),
        ));
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite alphas"));
    let ci95 = [percentile(&samples, 2.5), percentile(&samples, 97.5)];

    let refs = reference_alphas()?;
    let mut pairwise = Vec::new();
    let mut k = 0usize;
    for (r, rater) in m.raters.iter().enumerate() {
        if r == ref_idx {
            continue;
        }
        pairwise.push(PairwiseAlpha {
            rater: rater.clone(),
            alpha: alphas[k],
            reference: refs.get(rater).copied(),
        });
        k += 1;
    }
    let report = AgreeReport {
        reference_rater: reference.to_string(),
        excluded: exclude.to_vec(),
        pairwise,
        average,
        reference_average: refs.get("Average").copied(),
        ci95,
        n_boot: cfg.metrics.n_boot,
        skipped,
    };
    write_json(&cfg.out.join("agree.json"), &report)?;

    println!("pairwise alpha vs {reference}:");
    println!("{:<12} {:>10} {:>10}", "rater", "computed", "reference");
    for p in &report.pairwise {
        let r = p
            .reference
            .map(|v| format!("{v:>10.4}"))
            .unwrap_or_else(|| format!("{:>10}", "-"));
        println!("{:<12} {:>10.4} {r}", p.rater, p.alpha);
    }
    let ravg = report
        .reference_average
        .map(|v| format!("{v:>10.4}"))
        .unwrap_or_else(|| format!("{:>10}", "-"));
    println!("{:<12} {:>10.4} {ravg}", "Average", report.average);
    println!(
        "95% CI [{:.4}, {:.4}] from {} resamples ({} skipped)",
        report.ci95[0], report.ci95[1], report.n_boot, report.skipped
    );
    Ok(())
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn sweep(cfg: &RunConfig, depths: &[usize]) -> Result<()> {
    cfg.write_resolved("sweep")?;
    let scans = load_dataset(&cfg.out, &cfg.pipeline.core())?;
    let split = load_split(&cfg.out, &scans)?;
    let points = layer_sweep(
        &scans,
        &split.train,
        &split.val,
        &cfg.model.arch,
        &cfg.model.train,
        depths,
    )?;
    let mut text = String::from("depth,filters,val_acc\n");
    for p in &points {
        let filters: Vec<String> = p.filters.iter().map(|f| f.to_string()).collect();
        text.push_str(&format!("{},{},{}\n", p.depth, filters.join("|"), p.val_acc));
        println!("depth {}: val acc {:.4}", p.depth, p.val_acc);
    }
    fs::write(cfg.out.join("sweep.csv"), text)?;
    Ok(())
}
