//! Training loops: stage-1 half-brain pretraining, two-phase stage-2
//! multi-task fine-tuning, and the full-brain baseline. Every loop is
//! deterministic per seed and retains the best-validation weights.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::ScanOutcome;
use crate::nn::{softmax_cross_entropy, Adam, AdamConfig, CosineSchedule, Mode};
use crate::pipeline::Hemisphere;
use crate::rng;
use crate::tensor::Tensor;

use super::baseline::side4_index;
use super::{batch_halves, batch_volumes, BaselineModel, ModelConfig, MtlModel, PreparedScan, Stage1Model};

/// Epoch budgets and learning rates for every training stage.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainPlan {
    pub stage1_epochs: usize,
    pub stage2a_epochs: usize,
    pub stage2b_epochs: usize,
    pub baseline_epochs: usize,
    pub batch_size: usize,
    pub lr_stage1: f32,
    pub lr_stage2a: f32,
    pub lr_stage2b: f32,
    pub lr_baseline: f32,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            stage1_epochs: 8,
            stage2a_epochs: 40,
            stage2b_epochs: 1,
            baseline_epochs: 6,
            batch_size: 8,
            lr_stage1: 1e-3,
            lr_stage2a: 1e-3,
            lr_stage2b: 1e-5,
            lr_baseline: 1e-3,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        for (name, lr) in [
            ("lr_stage1", self.lr_stage1),
            ("lr_stage2a", self.lr_stage2a),
            ("lr_stage2b", self.lr_stage2b),
            ("lr_baseline", self.lr_baseline),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub stage: String,
    pub epoch: usize,
    pub lr: f32,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

fn gather<'a>(scans: &'a [PreparedScan], idx: &[usize]) -> Result<Vec<&'a PreparedScan>> {
    idx.iter()
        .map(|&i| {
            scans
                .get(i)
                .ok_or_else(|| Error::Config(format!("scan index {i} out of range ({} scans)", scans.len())))
        })
        .collect()
}

fn check_split(train: &[usize], val: &[usize]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    Ok(())
}

/// Presence targets per half row: [2i] = left hemisphere, [2i+1] = right.
fn half_targets(batch: &[&PreparedScan]) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch.len() * 2);
    for s in batch {
        out.push(s.label.has_lesion_on(Hemisphere::Left) as usize);
        out.push(s.label.has_lesion_on(Hemisphere::Right) as usize);
    }
    out
}

/// Stage 1: train encoder + auxiliary presence head on individual halves.
pub fn stage1_train(
    scans: &[PreparedScan],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &ModelConfig,
    plan: &TrainPlan,
) -> Result<(Stage1Model, Vec<EpochLog>)> {
    plan.validate()?;
    check_split(train_idx, val_idx)?;
    let train = gather(scans, train_idx)?;
    let val = gather(scans, val_idx)?;
    let classes: std::collections::BTreeSet<usize> = half_targets(&train).into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::Config(
            "stage-1 training halves contain only one presence class".into(),
        ));
    }

    let mut rng = rng::stream(plan.seed, "stage1_init", 0);
    let mut model = Stage1Model::new(cfg, &mut rng)?;
    let mut adam = Adam::new(plan.adam);
    let sched = CosineSchedule::new(plan.lr_stage1, plan.stage1_epochs);
    let mut logs = Vec::new();
    let mut best = (f64::NEG_INFINITY, model.export_state());

    for epoch in 0..plan.stage1_epochs {
        let lr = sched.lr(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(plan.seed, "stage1_shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(plan.batch_size) {
            let batch: Vec<&PreparedScan> = chunk.iter().map(|&i| train[i]).collect();
            let x = batch_halves(&batch, cfg)?;
            let logits = model.forward_halves(&x, Mode::Train, true)?;
            let targets = half_targets(&batch);
            let (loss, dlogits) = softmax_cross_entropy(&logits, &targets, None)?;
            for (_, p) in model.params_mut() {
                p.zero_grad();
            }
            model.backward(&dlogits)?;
            adam.step(lr, &mut model.params_mut())?;
            loss_sum += loss;
            batches += 1;
        }
        let (val_loss, val_acc) = stage1_val(&mut model, &val, cfg)?;
        if val_acc > best.0 {
            best = (val_acc, model.export_state());
        }
        logs.push(EpochLog {
            stage: "stage1".into(),
            epoch,
            lr,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss,
            val_acc,
        });
    }
    model.import_state(&best.1)?;
    Ok((model, logs))
}

/// (mean cross-entropy, half-presence accuracy) on the validation halves.
fn stage1_val(model: &mut Stage1Model, val: &[&PreparedScan], cfg: &ModelConfig) -> Result<(f64, f64)> {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut loss_sum = 0.0;
    for chunk in val.chunks(16) {
        let x = batch_halves(chunk, cfg)?;
        let logits = model.forward_halves(&x, Mode::Eval, false)?;
        let targets = half_targets(chunk);
        let (loss, _) = softmax_cross_entropy(&logits, &targets, None)?;
        loss_sum += loss * targets.len() as f64;
        let ls = logits.data();
        for (i, &t) in targets.iter().enumerate() {
            let pred = (ls[i * 2 + 1] > ls[i * 2]) as usize;
            correct += (pred == t) as usize;
            total += 1;
        }
    }
    Ok((loss_sum / total.max(1) as f64, correct as f64 / total.max(1) as f64))
}

/// Multi-task targets: task-1 presence index and task-2 side index with a
/// presence mask (negatives contribute nothing to the side loss).
fn mtl_targets(batch: &[&PreparedScan]) -> (Vec<usize>, Vec<usize>, Vec<f32>) {
    let mut t1 = Vec::with_capacity(batch.len());
    let mut t2 = Vec::with_capacity(batch.len());
    let mut w2 = Vec::with_capacity(batch.len());
    for s in batch {
        t1.push(s.label.presence as usize);
        // side index within the 3-way head; masked out when absent
        t2.push(match s.label.side {
            crate::pipeline::Side::Left => 0,
            crate::pipeline::Side::Right => 1,
            crate::pipeline::Side::Both => 2,
            crate::pipeline::Side::None => 0,
        });
        w2.push(s.label.presence as u8 as f32);
    }
    (t1, t2, w2)
}

/// (mean task loss, four-class accuracy) on the validation scans.
/// Validation on pre-computed frozen-encoder features: while the encoder is
/// frozen (phase A) its eval-mode features are constant, so only the heads
/// need to run per epoch.
fn mtl_val_cached(model: &mut MtlModel, feats: &Tensor, val: &[&PreparedScan]) -> Result<(f64, f64)> {
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    let idx: Vec<usize> = (0..val.len()).collect();
    for chunk in idx.chunks(16) {
        let scans: Vec<&PreparedScan> = chunk.iter().map(|&i| val[i]).collect();
        let x = select_rows(feats, chunk)?;
        let (l1, l2) = model.forward_heads(&x, false)?;
        let p1 = crate::nn::softmax_rows(&l1)?;
        let p2 = crate::nn::softmax_rows(&l2)?;
        for (row, s) in scans.iter().enumerate() {
            let p_lesion = p1.data()[row * 2 + 1] as f64;
            let side_probs = [
                p2.data()[row * 3] as f64,
                p2.data()[row * 3 + 1] as f64,
                p2.data()[row * 3 + 2] as f64,
            ];
            let decided = super::four_class_decision(p_lesion, &side_probs);
            correct += (decided == s.label.four_class()) as usize;
        }
        let (t1, t2, w2) = mtl_targets(&scans);
        let (loss1, _) = softmax_cross_entropy(&l1, &t1, None)?;
        let (loss2, _) = softmax_cross_entropy(&l2, &t2, Some(&w2))?;
        loss_sum += (loss1 + loss2) * chunk.len() as f64;
    }
    Ok((loss_sum / val.len().max(1) as f64, correct as f64 / val.len().max(1) as f64))
}

fn mtl_val(model: &mut MtlModel, val: &[&PreparedScan]) -> Result<(f64, f64)> {
    let mut correct = 0usize;
    for s in val {
        let pred = model.predict(s)?;
        correct += (pred.four_class == s.label.four_class()) as usize;
    }
    let cfg = model.cfg.clone();
    let mut loss_sum = 0.0;
    for chunk in val.chunks(16) {
        let x = batch_halves(chunk, &cfg)?;
        let (l1, l2) = model.forward(&x, Mode::Eval, false)?;
        let (t1, t2, w2) = mtl_targets(chunk);
        let (loss1, _) = softmax_cross_entropy(&l1, &t1, None)?;
        let (loss2, _) = softmax_cross_entropy(&l2, &t2, Some(&w2))?;
        loss_sum += (loss1 + loss2) * chunk.len() as f64;
    }
    Ok((loss_sum / val.len().max(1) as f64, correct as f64 / val.len().max(1) as f64))
}

/// Stage 2: phase A trains the two heads on cached frozen-encoder features,
/// phase B fine-tunes everything end to end at a low learning rate.
pub fn stage2_train(
    stage1: Stage1Model,
    scans: &[PreparedScan],
    train_idx: &[usize],
    val_idx: &[usize],
    plan: &TrainPlan,
) -> Result<(MtlModel, Vec<EpochLog>)> {
    plan.validate()?;
    check_split(train_idx, val_idx)?;
    let cfg = stage1.cfg.clone();
    let train = gather(scans, train_idx)?;
    let val = gather(scans, val_idx)?;
    if !train.iter().any(|s| s.label.presence) || !train.iter().any(|s| !s.label.presence) {
        return Err(Error::Config(
            "stage-2 training needs both positive and negative scans".into(),
        ));
    }

    let mut rng = rng::stream(plan.seed, "stage2_init", 0);
    let mut model = MtlModel::from_stage1(stage1, &mut rng)?;
    let mut logs = Vec::new();

    // Phase A: encoder frozen, heads trained on features computed once.
    model.encoder.set_track_running_stats(false);
    let mut cached = Vec::with_capacity(train.len());
    for chunk in train.chunks(16) {
        let x = batch_halves(chunk, &cfg)?;
        cached.push(model.features(&x, Mode::Eval, false)?);
    }
    let feats = concat_rows(&cached)?;
    let mut cached_val = Vec::with_capacity(val.len());
    for chunk in val.chunks(16) {
        let x = batch_halves(chunk, &cfg)?;
        cached_val.push(model.features(&x, Mode::Eval, false)?);
    }
    let val_feats = concat_rows(&cached_val)?;
    let mut adam = Adam::new(plan.adam);
    let sched = CosineSchedule::new(plan.lr_stage2a, plan.stage2a_epochs);
    let mut best = (f64::NEG_INFINITY, model.export_state());
    for epoch in 0..plan.stage2a_epochs {
        let lr = sched.lr(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(plan.seed, "stage2a_shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(plan.batch_size) {
            let batch: Vec<&PreparedScan> = chunk.iter().map(|&i| train[i]).collect();
            let x = select_rows(&feats, chunk)?;
            let (l1, l2) = model.forward_heads(&x, true)?;
            let (t1, t2, w2) = mtl_targets(&batch);
            let (loss1, d1) = softmax_cross_entropy(&l1, &t1, None)?;
            let (loss2, d2) = softmax_cross_entropy(&l2, &t2, Some(&w2))?;
            for (_, p) in model.head_params_mut() {
                p.zero_grad();
            }
            model.backward_heads(&d1, &d2)?;
            adam.step(lr, &mut model.head_params_mut())?;
            loss_sum += loss1 + loss2;
            batches += 1;
        }
        let (val_loss, val_acc) = mtl_val_cached(&mut model, &val_feats, &val)?;
        if val_acc > best.0 {
            best = (val_acc, model.export_state());
        }
        logs.push(EpochLog {
            stage: "stage2a".into(),
            epoch,
            lr,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss,
            val_acc,
        });
    }
    model.import_state(&best.1)?;

    // Phase B: unfreeze and fine-tune end to end.
    model.encoder.set_track_running_stats(true);
    let mut adam = Adam::new(plan.adam);
    let sched = CosineSchedule::new(plan.lr_stage2b, plan.stage2b_epochs);
    let mut best = (mtl_val(&mut model, &val)?.1, model.export_state());
    for epoch in 0..plan.stage2b_epochs {
        let lr = sched.lr(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(plan.seed, "stage2b_shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(plan.batch_size) {
            let batch: Vec<&PreparedScan> = chunk.iter().map(|&i| train[i]).collect();
            let x = batch_halves(&batch, &cfg)?;
            let (l1, l2) = model.forward(&x, Mode::Train, true)?;
            let (t1, t2, w2) = mtl_targets(&batch);
            let (loss1, d1) = softmax_cross_entropy(&l1, &t1, None)?;
            let (loss2, d2) = softmax_cross_entropy(&l2, &t2, Some(&w2))?;
            for (_, p) in model.params_mut() {
                p.zero_grad();
            }
            model.backward(&d1, &d2)?;
            adam.step(lr, &mut model.params_mut())?;
            loss_sum += loss1 + loss2;
            batches += 1;
        }
        let (val_loss, val_acc) = mtl_val(&mut model, &val)?;
        if val_acc > best.0 {
            best = (val_acc, model.export_state());
        }
        logs.push(EpochLog {
            stage: "stage2b".into(),
            epoch,
            lr,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss,
            val_acc,
        });
    }
    model.import_state(&best.1)?;
    Ok((model, logs))
}

/// Full-brain 4-class baseline, trained end to end from scratch.
pub fn baseline_train(
    scans: &[PreparedScan],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &ModelConfig,
    plan: &TrainPlan,
) -> Result<(BaselineModel, Vec<EpochLog>)> {
    plan.validate()?;
    check_split(train_idx, val_idx)?;
    let train = gather(scans, train_idx)?;
    let val = gather(scans, val_idx)?;
    let classes: std::collections::BTreeSet<usize> =
        train.iter().map(|s| side4_index(s.label.side)).collect();
    if classes.len() < 2 {
        return Err(Error::Config("baseline training split has only one class".into()));
    }

    let mut rng = rng::stream(plan.seed, "baseline_init", 0);
    let mut model = BaselineModel::new(cfg, &mut rng)?;
    let mut adam = Adam::new(plan.adam);
    let sched = CosineSchedule::new(plan.lr_baseline, plan.baseline_epochs);
    let mut logs = Vec::new();
    let mut best = (f64::NEG_INFINITY, model.export_state());
    for epoch in 0..plan.baseline_epochs {
        let lr = sched.lr(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(plan.seed, "baseline_shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(plan.batch_size) {
            let batch: Vec<&PreparedScan> = chunk.iter().map(|&i| train[i]).collect();
            let x = batch_volumes(&batch, cfg)?;
            let logits = model.forward(&x, Mode::Train, true)?;
            let targets: Vec<usize> = batch.iter().map(|s| side4_index(s.label.side)).collect();
            let (loss, dlogits) = softmax_cross_entropy(&logits, &targets, None)?;
            for (_, p) in model.params_mut() {
                p.zero_grad();
            }
            model.backward(&dlogits)?;
            adam.step(lr, &mut model.params_mut())?;
            loss_sum += loss;
            batches += 1;
        }
        let mut correct = 0usize;
        for s in &val {
            correct += (model.predict(s)? == s.label.side) as usize;
        }
        let val_acc = correct as f64 / val.len() as f64;
        let mut vloss_sum = 0.0;
        for chunk in val.chunks(16) {
            let x = batch_volumes(chunk, cfg)?;
            let logits = model.forward(&x, Mode::Eval, false)?;
            let targets: Vec<usize> = chunk.iter().map(|s| side4_index(s.label.side)).collect();
            let (loss, _) = softmax_cross_entropy(&logits, &targets, None)?;
            vloss_sum += loss * chunk.len() as f64;
        }
        if val_acc > best.0 {
            best = (val_acc, model.export_state());
        }
        logs.push(EpochLog {
            stage: "baseline".into(),
            epoch,
            lr,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss: vloss_sum / val.len() as f64,
            val_acc,
        });
    }
    model.import_state(&best.1)?;
    Ok((model, logs))
}

pub fn evaluate_mtl(
    model: &mut MtlModel,
    scans: &[PreparedScan],
    idx: &[usize],
) -> Result<Vec<ScanOutcome>> {
    let subset = gather(scans, idx)?;
    subset
        .iter()
        .map(|s| {
            let pred = model.predict(s)?;
            Ok(ScanOutcome {
                scan_id: s.scan_id.clone(),
                pred: pred.four_class,
                label: s.label.clone(),
                timepoint: s.timepoint,
            })
        })
        .collect()
}

pub fn evaluate_baseline(
    model: &mut BaselineModel,
    scans: &[PreparedScan],
    idx: &[usize],
) -> Result<Vec<ScanOutcome>> {
    let subset = gather(scans, idx)?;
    subset
        .iter()
        .map(|s| {
            Ok(ScanOutcome {
                scan_id: s.scan_id.clone(),
                pred: model.predict(s)?,
                label: s.label.clone(),
                timepoint: s.timepoint,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub depth: usize,
    pub filters: Vec<usize>,
    pub val_acc: f64,
}

/// Encoder-depth sweep: retrain stage 1 at each depth, report half-presence
/// validation accuracy.
pub fn layer_sweep(
    scans: &[PreparedScan],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &ModelConfig,
    plan: &TrainPlan,
    depths: &[usize],
) -> Result<Vec<SweepPoint>> {
    if depths.is_empty() {
        return Err(Error::Config("sweep needs at least one depth".into()));
    }
    let mut out = Vec::with_capacity(depths.len());
    for &d in depths {
        if d == 0 || d > cfg.filters.len() {
            return Err(Error::Config(format!(
                "sweep depth {d} out of range 1..={}",
                cfg.filters.len()
            )));
        }
        let mut dcfg = cfg.clone();
        dcfg.filters = cfg.filters[..d].to_vec();
        let (_, logs) = stage1_train(scans, train_idx, val_idx, &dcfg, plan)?;
        let val_acc = logs
            .iter()
            .map(|l| l.val_acc)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(SweepPoint {
            depth: d,
            filters: dcfg.filters,
            val_acc,
        });
    }
    Ok(out)
}

/// Stack cached feature batches into one matrix.
fn concat_rows(batches: &[Tensor]) -> Result<Tensor> {
    let f = match batches.first().map(|t| t.shape()) {
        Some([_, f]) => *f,
        _ => return Err(Error::Dimension("no cached feature batches".into())),
    };
    let mut data = Vec::new();
    let mut n = 0usize;
    for b in batches {
        match b.shape() {
            [rows, cols] if *cols == f => {
                n += rows;
                data.extend_from_slice(b.data());
            }
            s => return Err(Error::Dimension(format!("feature batch shape {s:?} mismatch"))),
        }
    }
    Tensor::from_vec(&[n, f], data)
}

/// Gather rows by index into a new matrix.
fn select_rows(feats: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let (n, f) = match feats.shape() {
        [n, f] => (*n, *f),
        s => return Err(Error::Dimension(format!("expected 2-d features, got {s:?}"))),
    };
    let xs = feats.data();
    let mut data = Vec::with_capacity(rows.len() * f);
    for &r in rows {
        if r >= n {
            return Err(Error::Dimension(format!("row {r} out of range ({n} rows)")));
        }
        data.extend_from_slice(&xs[r * f..(r + 1) * f]);
    }
    Tensor::from_vec(&[rows.len(), f], data)
}
