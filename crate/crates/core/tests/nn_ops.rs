//! Independent oracles for the nn ops: a naive 6-loop convolution, hand
//! batch-norm statistics, a scalar Adam recurrence, and schedule endpoints.

use hemiscan_core::nn::{
    conv2d_forward, softmax_cross_entropy, softmax_rows, Adam, AdamConfig, BatchNorm2d, ConvSpec,
    CosineSchedule, Mode, Param,
};
use hemiscan_core::{rng, Result, Tensor};
use rand::Rng as _;

fn rand_tensor(shape: &[usize], seed: u64, idx: u64) -> Tensor {
    let mut r = rng::stream(seed, "ops", idx);
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| r.gen_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}

/// Direct definition of cross-correlation, no layout tricks.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, spec: &ConvSpec) -> Tensor {
    let (n_b, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let f = w.shape()[0];
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let ho = (h + 2 * p - k) / s + 1;
    let wo = (wd + 2 * p - k) / s + 1;
    let mut out = Tensor::zeros(&[n_b, f, ho, wo]);
    for n in 0..n_b {
        for fo in 0..f {
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = b.data()[fo] as f64;
                    for c in 0..ci {
                        for ki in 0..k {
                            for kj in 0..k {
                                let ih = (oh * s + ki) as isize - p as isize;
                                let iw = (ow * s + kj) as isize - p as isize;
                                if ih < 0 || iw < 0 || ih >= h as isize || iw >= wd as isize {
                                    continue;
                                }
                                let xi = ((n * ci + c) * h + ih as usize) * wd + iw as usize;
                                let wi = ((fo * ci + c) * k + ki) * k + kj;
                                acc += x.data()[xi] as f64 * w.data()[wi] as f64;
                            }
                        }
                    }
                    out.data_mut()[((n * f + fo) * ho + oh) * wo + ow] = acc as f32;
                }
            }
        }
    }
    out
}

#[test]
fn conv_forward_matches_naive_oracle() -> Result<()> {
    for case in 0..10u64 {
        let mut r = rng::stream(61, "conv_oracle", case);
        let spec = ConvSpec {
            kernel: r.gen_range(1..4usize),
            stride: r.gen_range(1..3usize),
            padding: r.gen_range(0..2usize),
        };
        let (n, ci, f) = (r.gen_range(1..3usize), r.gen_range(1..3usize), r.gen_range(1..4usize));
        let h = r.gen_range(spec.kernel.max(3)..9usize);
        let wd = r.gen_range(spec.kernel.max(3)..9usize);
        let x = rand_tensor(&[n, ci, h, wd], 62, case);
        let w = rand_tensor(&[f, ci, spec.kernel, spec.kernel], 63, case);
        let b = rand_tensor(&[f], 64, case);
        let got = conv2d_forward(&x, &w, &b, &spec)?;
        let want = naive_conv(&x, &w, &b, &spec);
        assert_eq!(got.shape(), want.shape());
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-4, "conv mismatch: {g} vs {w} ({spec:?})");
        }
    }
    Ok(())
}

#[test]
fn batchnorm_statistics_match_hand_computation() -> Result<()> {
    let (n, c, h, w) = (3usize, 2usize, 2usize, 3usize);
    let x = rand_tensor(&[n, c, h, w], 71, 0);
    let mut bn = BatchNorm2d::new(c);
    let y = bn.forward(&x, Mode::Train, false)?;

    let plane = h * w;
    let count = (n * plane) as f64;
    for ch in 0..c {
        let mut vals = Vec::new();
        for b in 0..n {
            for i in 0..plane {
                vals.push(x.data()[(b * c + ch) * plane + i] as f64);
            }
        }
        let mean = vals.iter().sum::<f64>() / count;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        // normalized output reproduces (x - mean)/sqrt(var + eps)
        for b in 0..n {
            for i in 0..plane {
                let idx = (b * c + ch) * plane + i;
                let want = (x.data()[idx] as f64 - mean) / (var + 1e-5).sqrt();
                assert!((y.data()[idx] as f64 - want).abs() < 1e-5);
            }
        }
        // running stats: one momentum-0.1 update from (0, 1), unbiased var
        let unbiased = var * count / (count - 1.0);
        assert!((bn.running_mean[ch] as f64 - 0.1 * mean).abs() < 1e-6);
        assert!((bn.running_var[ch] as f64 - (0.9 + 0.1 * unbiased)).abs() < 1e-6);
    }

    // eval mode ignores batch statistics entirely
    let mut bn_eval = BatchNorm2d::new(1);
    bn_eval.running_mean[0] = 2.0;
    bn_eval.running_var[0] = 4.0;
    let xe = Tensor::from_vec(&[1, 1, 1, 2], vec![2.0, 6.0])?;
    let ye = bn_eval.forward(&xe, Mode::Eval, false)?;
    assert!((ye.data()[0] - 0.0).abs() < 1e-5);
    assert!((ye.data()[1] - 4.0 / (4.0f32 + 1e-5).sqrt()).abs() < 1e-5);

    // train mode with a single sample is rejected
    let bad = Tensor::zeros(&[1, 1, 2, 2]);
    assert!(BatchNorm2d::new(1).forward(&bad, Mode::Train, false).is_err());
    Ok(())
}

#[test]
fn adam_matches_scalar_hand_recurrence() -> Result<()> {
    // single scalar parameter, fixed gradient sequence, wd = 0
    let cfg = AdamConfig {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.0,
    };
    let mut adam = Adam::new(cfg);
    let mut p = Param::new(Tensor::from_vec(&[1], vec![0.5])?);
    let grads = [0.3f64, -0.2, 0.1];
    let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.5f64);
    let lr = 0.01f64;
    for (t, &g) in grads.iter().enumerate() {
        p.grad.data_mut()[0] = g as f32;
        adam.step(lr as f32, &mut [("p".into(), &mut p)])?;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mhat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
        let vhat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
        x -= lr * mhat / (vhat.sqrt() + 1e-8);
        assert!(
            (p.value.data()[0] as f64 - x).abs() < 1e-6,
            "step {t}: {} vs {x}",
            p.value.data()[0]
        );
    }

    // coupled weight decay enters the gradient, not the update directly
    let cfg = AdamConfig {
        weight_decay: 0.1,
        ..cfg
    };
    let mut adam = Adam::new(cfg);
    let mut p = Param::new(Tensor::from_vec(&[1], vec![2.0])?);
    p.grad.data_mut()[0] = 0.0;
    adam.step(0.01, &mut [("p".into(), &mut p)])?;
    let g: f64 = 0.1 * 2.0; // wd * value
    let mhat = 0.1 * g / (1.0 - 0.9);
    let vhat = 0.001 * g * g / (1.0 - 0.999);
    let want = 2.0 - 0.01 * mhat / (vhat.sqrt() + 1e-8);
    assert!((p.value.data()[0] as f64 - want).abs() < 1e-5);

    // non-finite gradients are rejected before any mutation
    let mut p = Param::new(Tensor::from_vec(&[1], vec![1.0])?);
    p.grad.data_mut()[0] = f32::NAN;
    assert!(Adam::new(cfg).step(0.01, &mut [("p".into(), &mut p)]).is_err());
    assert_eq!(p.value.data()[0], 1.0);
    Ok(())
}

#[test]
fn cosine_schedule_endpoints_and_midpoint() {
    let s = CosineSchedule::new(1e-3, 200);
    assert!((s.lr(0) - 1e-3).abs() < 1e-9);
    assert!((s.lr(100) - 5e-4).abs() < 1e-9);
    assert!(s.lr(200) < 1e-9);
    // monotone non-increasing
    let mut prev = f32::INFINITY;
    for t in 0..=200 {
        let lr = s.lr(t);
        assert!(lr <= prev + 1e-12);
        prev = lr;
    }
}

#[test]
fn softmax_and_cross_entropy_hand_values() -> Result<()> {
    let logits = Tensor::from_vec(&[1, 2], vec![0.0, (2.0f32).ln()])?;
    let p = softmax_rows(&logits)?;
    assert!((p.data()[0] - 1.0 / 3.0).abs() < 1e-6);
    assert!((p.data()[1] - 2.0 / 3.0).abs() < 1e-6);

    let (loss, _) = softmax_cross_entropy(&logits, &[1], None)?;
    assert!((loss - (1.5f64).ln()).abs() < 1e-6);

    // zero total weight: loss and gradient exactly zero
    let (loss, grad) = softmax_cross_entropy(&logits, &[1], Some(&[0.0]))?;
    assert_eq!(loss, 0.0);
    assert!(grad.data().iter().all(|&g| g == 0.0));

    // extreme logits stay finite (max subtraction)
    let big = Tensor::from_vec(&[1, 2], vec![1000.0, -1000.0])?;
    let p = softmax_rows(&big)?;
    assert!((p.data()[0] - 1.0).abs() < 1e-6);
    Ok(())
}

#[test]
fn kaiming_init_statistics() {
    // std ~ sqrt(2 / fan_in), loose statistical bounds
    let mut r = rng::root(7);
    let w = hemiscan_core::nn::kaiming_conv(64, 32, 3, &mut r);
    let fan_in: f64 = 32.0 * 9.0;
    let want = (2.0 / fan_in).sqrt();
    let n = w.len() as f64;
    let mean: f64 = w.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var: f64 = w.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.1 * want);
    assert!((var.sqrt() - want).abs() < 0.05 * want, "{} vs {want}", var.sqrt());
}
