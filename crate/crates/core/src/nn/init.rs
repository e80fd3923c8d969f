//! Seeded Kaiming-style fan-in initialization (Box-Muller normal draws so the
//! byte stream is fully under our control).

use rand::RngCore;

use crate::rng::Rng;
use crate::tensor::Tensor;

fn normal(rng: &mut Rng) -> f64 {
    // Box-Muller; u1 in (0,1]
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gaussian_tensor(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| (normal(rng) * std) as f32).collect();
    Tensor::from_vec(shape, data).expect("shape/product always consistent")
}

/// Conv weight [F, C, k, k] with std = sqrt(2 / (C k^2)).
pub fn kaiming_conv(f: usize, c: usize, k: usize, rng: &mut Rng) -> Tensor {
    let fan_in = (c * k * k) as f64;
    gaussian_tensor(&[f, c, k, k], (2.0 / fan_in).sqrt(), rng)
}

/// Linear weight [D, M] with std = sqrt(2 / D).
pub fn kaiming_linear(d: usize, m: usize, rng: &mut Rng) -> Tensor {
    gaussian_tensor(&[d, m], (2.0 / d as f64).sqrt(), rng)
}
