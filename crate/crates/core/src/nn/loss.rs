//! Losses. Scalars accumulate in f64.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let (n, k) = match logits.shape() {
        [n, k] => (*n, *k),
        s => return Err(Error::Dimension(format!("softmax input must be 2-d, got {s:?}"))),
    };
    let xs = logits.data();
    let mut out = Tensor::zeros(&[n, k]);
    let os = out.data_mut();
    for i in 0..n {
        let row = &xs[i * k..(i + 1) * k];
        let mx = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for j in 0..k {
            let e = ((row[j] - mx) as f64).exp();
            os[i * k + j] = e as f32;
            sum += e;
        }
        for j in 0..k {
            os[i * k + j] = (os[i * k + j] as f64 / sum) as f32;
        }
    }
    out.check_finite("softmax")?;
    Ok(out)
}

/// Weighted-mean softmax cross-entropy. `weights` defaults to all ones; with
/// total weight zero the loss and gradient are exactly zero (the Task-2 mask
/// on an all-negative batch).
pub fn softmax_cross_entropy(
    logits: &Tensor,
    targets: &[usize],
    weights: Option<&[f32]>,
) -> Result<(f64, Tensor)> {
    let (n, k) = match logits.shape() {
        [n, k] => (*n, *k),
        s => return Err(Error::Dimension(format!("logits must be 2-d, got {s:?}"))),
    };
    if targets.len() != n {
        return Err(Error::Dimension(format!("{n} logit rows vs {} targets", targets.len())));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension(format!("{n} logit rows vs {} weights", w.len())));
        }
    }
    let probs = softmax_rows(logits)?;
    let total: f64 = match weights {
        Some(w) => w.iter().map(|&v| v as f64).sum(),
        None => n as f64,
    };
    let mut dlogits = Tensor::zeros(&[n, k]);
    if total == 0.0 {
        return Ok((0.0, dlogits));
    }
    let ps = probs.data();
    let ds = dlogits.data_mut();
    let mut loss = 0.0f64;
    for i in 0..n {
        let t = targets[i];
        if t >= k {
            return Err(Error::Dimension(format!("target {t} out of range for {k} classes")));
        }
        let wi = weights.map_or(1.0, |w| w[i] as f64);
        if wi == 0.0 {
            continue;
        }
        let p = (ps[i * k + t] as f64).max(1e-12);
        loss += wi * -p.ln();
        for j in 0..k {
            let ind = if j == t { 1.0 } else { 0.0 };
            ds[i * k + j] = (wi * (ps[i * k + j] as f64 - ind) / total) as f32;
        }
    }
    Ok((loss / total, dlogits))
}

/// Mean squared error over all elements.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if !pred.same_shape(target) {
        return Err(Error::Dimension(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let mut dpred = Tensor::zeros(pred.shape());
    let ds = dpred.data_mut();
    let mut loss = 0.0f64;
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let diff = p as f64 - t as f64;
        loss += diff * diff;
        ds[i] = (2.0 * diff / n) as f32;
    }
    Ok((loss / n, dpred))
}
