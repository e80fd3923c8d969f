//! Krippendorff's alpha for nominal ratings, via the coincidence-matrix
//! formulation with the finite-sample expected-disagreement correction, plus
//! a unit-resampling bootstrap for confidence intervals.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

/// Units x raters nominal ratings; `None` marks a missing rating.
#[derive(Debug, Clone)]
pub struct RatingsMatrix {
    pub raters: Vec<String>,
    /// Row-major `values[unit * raters.len() + rater]`.
    pub values: Vec<Option<String>>,
}

impl RatingsMatrix {
    pub fn new(raters: Vec<String>, values: Vec<Option<String>>) -> Result<Self> {
        if raters.len() < 2 {
            return Err(Error::Config("ratings matrix needs at least 2 raters".into()));
        }
        if values.len() % raters.len() != 0 {
            return Err(Error::Dimension(format!(
                "{} values do not tile {} raters",
                values.len(),
                raters.len()
            )));
        }
        let m = Self { raters, values };
        if m.n_units() < 2 {
            return Err(Error::Config("ratings matrix needs at least 2 units".into()));
        }
        Ok(m)
    }

    pub fn n_units(&self) -> usize {
        self.values.len() / self.raters.len()
    }

    pub fn unit(&self, u: usize) -> &[Option<String>] {
        let r = self.raters.len();
        &self.values[u * r..(u + 1) * r]
    }

    /// Restrict to two raters by index (pairwise agreement).
    pub fn pair(&self, a: usize, b: usize) -> RatingsMatrix {
        let r = self.raters.len();
        let mut values = Vec::with_capacity(self.n_units() * 2);
        for u in 0..self.n_units() {
            values.push(self.values[u * r + a].clone());
            values.push(self.values[u * r + b].clone());
        }
        RatingsMatrix {
            raters: vec![self.raters[a].clone(), self.raters[b].clone()],
            values,
        }
    }

    fn resample_units(&self, indices: &[usize]) -> RatingsMatrix {
        let r = self.raters.len();
        let mut values = Vec::with_capacity(indices.len() * r);
        for &u in indices {
            values.extend_from_slice(&self.values[u * r..(u + 1) * r]);
        }
        RatingsMatrix {
            raters: self.raters.clone(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KAlpha {
    pub value: f64,
    /// True when expected disagreement was zero (all pairable ratings in one
    /// category); alpha is then defined as 1.0.
    pub degenerate: bool,
}

/// alpha = 1 - D_o/D_e over the coincidence matrix of pairable values.
pub fn kalpha(ratings: &RatingsMatrix) -> Result<KAlpha> {
    let mut coincidence: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut any_pairable = false;
    for u in 0..ratings.n_units() {
        let vals: Vec<&String> = ratings.unit(u).iter().flatten().collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        any_pairable = true;
        let w = 1.0 / (m as f64 - 1.0);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    *coincidence
                        .entry((vals[i].clone(), vals[j].clone()))
                        .or_insert(0.0) += w;
                }
            }
        }
    }
    if !any_pairable {
        return Err(Error::Undefined(
            "alpha undefined: every unit has fewer than 2 ratings".into(),
        ));
    }

    let mut totals: BTreeMap<&String, f64> = BTreeMap::new();
    for ((c, _), &v) in &coincidence {
        *totals.entry(c).or_insert(0.0) += v;
    }
    let n: f64 = totals.values().sum();
    let observed: f64 = coincidence
        .iter()
        .filter(|((c, k), _)| c != k)
        .map(|(_, &v)| v)
        .sum();
    let expected: f64 = {
        let mut e = 0.0;
        for (&c, &nc) in &totals {
            for (&k, &nk) in &totals {
                if c != k {
                    e += nc * nk;
                }
            }
        }
        e / (n - 1.0)
    };
    if expected == 0.0 {
        return Ok(KAlpha {
            value: 1.0,
            degenerate: true,
        });
    }
    // D_o/D_e = (observed/n) / (expected/n); the 1/n cancels
    Ok(KAlpha {
        value: 1.0 - observed / expected,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapAlpha {
    pub alpha: f64,
    pub ci95: [f64; 2],
    pub n_boot: usize,
    /// Resamples skipped because alpha was undefined on them.
    pub skipped: usize,
}

/// Percentile bootstrap over units, deterministic per seed.
pub fn kalpha_bootstrap(ratings: &RatingsMatrix, n_boot: usize, seed: u64) -> Result<BootstrapAlpha> {
    if n_boot < 100 {
        return Err(Error::Config(format!("n_boot must be >= 100, got {n_boot}")));
    }
    let point = kalpha(ratings)?;
    let n_units = ratings.n_units();
    let mut rng = rng::stream(seed, "kalpha_bootstrap", 0);
    let mut samples = Vec::with_capacity(n_boot);
    let mut skipped = 0usize;
    for _ in 0..n_boot {
        let indices: Vec<usize> = (0..n_units).map(|_| rng.gen_range(0..n_units)).collect();
        match kalpha(&ratings.resample_units(&indices)) {
            Ok(a) => samples.push(a.value),
            Err(_) => skipped += 1,
        }
    }
    if samples.is_empty() {
        return Err(Error::Undefined("all bootstrap resamples degenerate".into()));
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("alpha values are finite"));
    Ok(BootstrapAlpha {
        alpha: point.value,
        ci95: [percentile(&samples, 2.5), percentile(&samples, 97.5)],
        n_boot,
        skipped,
    })
}

/// Linear-interpolation percentile of a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi.min(n - 1)] * frac
}
