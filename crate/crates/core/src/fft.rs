//! Two-dimensional FFTs on stacks of N×N periodic levels.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

fn transpose_levels(n: usize, buf: &mut [Complex64]) {
    for level in buf.chunks_mut(n * n) {
        for i in 0..n {
            for j in (i + 1)..n {
                level.swap(i * n + j, j * n + i);
            }
        }
    }
}

fn run(n: usize, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    plan.process_with_scratch(buf, &mut scratch);
    transpose_levels(n, buf);
    plan.process_with_scratch(buf, &mut scratch);
    transpose_levels(n, buf);
}

/// Unnormalized forward transform of every N×N level in `data`.
pub(crate) fn forward(n: usize, data: &[f64]) -> Vec<Complex64> {
    debug_assert_eq!(data.len() % (n * n), 0);
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let (fwd, _) = plans(n);
    run(n, &mut buf, &fwd);
    buf
}

/// Inverse transform (normalized by 1/N²) returning the real part.
pub(crate) fn inverse(n: usize, mut spec: Vec<Complex64>) -> Vec<f64> {
    let (_, inv) = plans(n);
    run(n, &mut spec, &inv);
    let scale = 1.0 / (n * n) as f64;
    spec.iter().map(|c| c.re * scale).collect()
}

/// Integer wavenumber of index `i`; the Nyquist index maps to −N/2.
#[inline]
pub(crate) fn wavenumber(n: usize, i: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Wavenumber used for odd derivatives: the Nyquist mode is dropped.
#[inline]
pub(crate) fn deriv_wavenumber(n: usize, i: usize) -> f64 {
    if 2 * i == n {
        0.0
    } else {
        wavenumber(n, i) as f64
    }
}

/// |k|² with the Nyquist frequency counted as N/2.
#[inline]
pub(crate) fn k_squared(n: usize, i1: usize, i2: usize) -> f64 {
    let a = wavenumber(n, i1) as f64;
    let b = wavenumber(n, i2) as f64;
    a * a + b * b
}

/// Horizontal modes whose derivative wavenumbers both vanish.
#[inline]
pub(crate) fn is_flat_mode(n: usize, i1: usize, i2: usize) -> bool {
    (i1 == 0 || 2 * i1 == n) && (i2 == 0 || 2 * i2 == n)
}

/// First horizontal derivatives of every level: returns (∂₁, ∂₂).
pub(crate) fn gradient_levels(n: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let spec = forward(n, data);
    let mut d1 = spec.clone();
    let mut d2 = spec;
    let nn = n * n;
    for level in 0..d1.len() / nn {
        for i2 in 0..n {
            let k2 = deriv_wavenumber(n, i2);
            for i1 in 0..n {
                let k1 = deriv_wavenumber(n, i1);
                let idx = level * nn + i2 * n + i1;
                let c = d1[idx];
                d1[idx] = Complex64::new(-k1 * c.im, k1 * c.re);
                let c = d2[idx];
                d2[idx] = Complex64::new(-k2 * c.im, k2 * c.re);
            }
        }
    }
    (inverse(n, d1), inverse(n, d2))
}

/// ∂₁a + ∂₂b for every level.
pub(crate) fn divergence_levels(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let sa = forward(n, a);
    let sb = forward(n, b);
    let nn = n * n;
    let mut out = sa;
    for level in 0..out.len() / nn {
        for i2 in 0..n {
            let k2 = deriv_wavenumber(n, i2);
            for i1 in 0..n {
                let k1 = deriv_wavenumber(n, i1);
                let idx = level * nn + i2 * n + i1;
                let (ca, cb) = (out[idx], sb[idx]);
                let re = -k1 * ca.im - k2 * cb.im;
                let im = k1 * ca.re + k2 * cb.re;
                out[idx] = Complex64::new(re, im);
            }
        }
    }
    inverse(n, out)
}

/// Applies a real multiplier depending on (i1, i2) to every level.
pub(crate) fn apply_multiplier(
    n: usize,
    data: &[f64],
    mult: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let mut spec = forward(n, data);
    let nn = n * n;
    for level in 0..spec.len() / nn {
        for i2 in 0..n {
            for i1 in 0..n {
                spec[level * nn + i2 * n + i1] *= mult(i1, i2);
            }
        }
    }
    inverse(n, spec)
}
