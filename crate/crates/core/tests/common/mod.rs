//! Brute-force double-loop oracles. Deliberately naive: no anchoring, no
//! weight tables, no carried sums.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seqcv::Kernel;

pub fn k(kernel: &Kernel, z: f64) -> f64 {
    kernel.eval(z).unwrap()
}

/// `h⁻¹ Σ_{j<=i} K((i-j)/h) Y_j`, 1-based `i`.
pub fn raw(y: &[f64], kernel: &Kernel, h: f64, i: usize) -> f64 {
    let mut acc = 0.0;
    for j in 1..=i {
        acc += k(kernel, (i - j) as f64 / h) * y[j - 1];
    }
    acc / h
}

pub fn normed(y: &[f64], kernel: &Kernel, h: f64, i: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 1..=i {
        let w = k(kernel, (i - j) as f64 / h);
        num += w * y[j - 1];
        den += w;
    }
    num / den
}

pub fn loo(y: &[f64], kernel: &Kernel, h: f64, i: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 1..i {
        let w = k(kernel, (i - j) as f64 / h);
        num += w * y[j - 1];
        den += w;
    }
    num / den
}

pub fn last(t: usize, s: f64) -> usize {
    (t as f64 * s + 1e-9).floor() as usize
}

pub fn cv(y: &[f64], kernel: &Kernel, h: f64, s: f64) -> f64 {
    let t = y.len();
    let mut acc = 0.0;
    for i in 2..=last(t, s) {
        let e = y[i - 1] - loo(y, kernel, h, i);
        acc += e * e;
    }
    acc / t as f64
}

pub fn objective(y: &[f64], kernel: &Kernel, xi: f64, s: f64) -> f64 {
    let t = y.len();
    let h = t as f64 / xi;
    let mut acc = 0.0;
    for i in 2..=last(t, s) {
        let m = loo(y, kernel, h, i);
        acc += m * m - 2.0 * y[i - 1] * m;
    }
    acc / t as f64
}

pub fn sum_sq(y: &[f64], s: f64) -> f64 {
    let t = y.len();
    (2..=last(t, s)).map(|i| y[i - 1] * y[i - 1]).sum::<f64>() / t as f64
}

/// Seeded series with a smooth trend, a level shift and gaussian noise.
pub fn seeded_series(seed: u64, t: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let level: f64 = rng.random_range(-5.0..5.0);
    let slope: f64 = rng.random_range(-3.0..3.0);
    let sigma: f64 = rng.random_range(0.1..2.0);
    let shift_at = rng.random_range(t / 4..t);
    (1..=t)
        .map(|i| {
            let u = i as f64 / t as f64;
            let shift = if i >= shift_at { 1.5 } else { 0.0 };
            let e: f64 = rng.sample(StandardNormal);
            level + slope * u + shift + sigma * e
        })
        .collect()
}

pub fn builtin_kernels() -> Vec<Kernel> {
    vec![
        Kernel::uniform(),
        Kernel::epanechnikov(),
        Kernel::gaussian(),
        Kernel::exponential(),
    ]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}
