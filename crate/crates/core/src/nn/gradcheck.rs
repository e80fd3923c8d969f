//! Finite-difference gradient checking. Central differences with 64-bit
//! arithmetic on the scalar loss; agreement is measured as an L2 relative
//! error over each tensor so isolated rounding noise cannot dominate.

use crate::error::Result;
use crate::tensor::Tensor;

/// ||a - n||2 / max(||a||2, ||n||2, eps).
pub fn l2_rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut diff = 0.0f64;
    let mut na = 0.0f64;
    let mut nn = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let a = a as f64;
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-8)
}

/// Central-difference gradient of `loss` w.r.t. every element of the tensor
/// returned by `param`. The closure owns the whole forward computation, so
/// stateful layers re-run from scratch at each probe.
pub fn numeric_grad<M>(
    model: &mut M,
    param: impl Fn(&mut M) -> &mut Tensor,
    mut loss: impl FnMut(&mut M) -> Result<f64>,
    h: f64,
) -> Result<Vec<f64>> {
    let n = param(model).len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let old = param(model).data()[i];
        param(model).data_mut()[i] = (old as f64 + h) as f32;
        let lp = loss(model)?;
        param(model).data_mut()[i] = (old as f64 - h) as f32;
        let lm = loss(model)?;
        param(model).data_mut()[i] = old;
        out.push((lp - lm) / (2.0 * h));
    }
    Ok(out)
}
