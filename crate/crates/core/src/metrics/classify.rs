//! Four-class, per-task, and presence confusion-matrix metrics. Empty
//! denominators yield `None` (undefined), never zero.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{ScanLabel, Side, Timepoint};

/// One evaluated scan: prediction against ground truth.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub scan_id: String,
    pub pred: Side,
    pub label: ScanLabel,
    pub timepoint: Timepoint,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct MetricSet {
    pub n: usize,
    pub acc4: Option<f64>,
    pub acc_task1: Option<f64>,
    /// Side accuracy on scans with true presence AND predicted presence.
    pub acc_task2_on_positives: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyMetrics {
    pub overall: MetricSet,
    pub by_timepoint: BTreeMap<Timepoint, MetricSet>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn metric_set(outcomes: &[&ScanOutcome]) -> MetricSet {
    let n = outcomes.len();
    let mut correct4 = 0usize;
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    let mut task2_n = 0usize;
    let mut task2_correct = 0usize;
    for o in outcomes {
        let pred_presence = o.pred != Side::None;
        if o.pred == o.label.side {
            correct4 += 1;
        }
        match (o.label.presence, pred_presence) {
            (true, true) => tp += 1,
            (true, false) => fneg += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
        if o.label.presence && pred_presence {
            task2_n += 1;
            if o.pred == o.label.side {
                task2_correct += 1;
            }
        }
    }
    MetricSet {
        n,
        acc4: ratio(correct4, n),
        acc_task1: ratio(tp + tn, n),
        acc_task2_on_positives: ratio(task2_correct, task2_n),
        sensitivity: ratio(tp, tp + fneg),
        specificity: ratio(tn, tn + fp),
        true_pos: tp,
        false_pos: fp,
        true_neg: tn,
        false_neg: fneg,
    }
}

pub fn classify_metrics(outcomes: &[ScanOutcome]) -> Result<ClassifyMetrics> {
    if outcomes.is_empty() {
        return Err(Error::Config("classify_metrics needs at least one scan".into()));
    }
    let all: Vec<&ScanOutcome> = outcomes.iter().collect();
    let mut by_timepoint = BTreeMap::new();
    for t in [Timepoint::Baseline, Timepoint::Followup] {
        let subset: Vec<&ScanOutcome> = outcomes.iter().filter(|o| o.timepoint == t).collect();
        if !subset.is_empty() {
            by_timepoint.insert(t, metric_set(&subset));
        }
    }
    Ok(ClassifyMetrics {
        overall: metric_set(&all),
        by_timepoint,
    })
}
