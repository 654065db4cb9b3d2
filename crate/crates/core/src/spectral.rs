//! Periodic fields on T² = [0, 2π)² and their Fourier calculus.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// A real scalar sampled on the uniform N×N grid, stored row-major in x₂
/// (index `i2 * n + i1`, with xₐ = 2π iₐ / N).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceField {
    n: usize,
    values: Vec<f64>,
}

impl InterfaceField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(Error::GridMismatch(format!(
                "expected {} values for N = {n}, got {}",
                n * n,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at index {bad}")));
        }
        Ok(Self { n, values })
    }

    pub(crate) fn from_vec_unchecked(n: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * n);
        Self { n, values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { n, values: vec![c; n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = 2.0 * PI / n as f64;
        let mut values = Vec::with_capacity(n * n);
        for i2 in 0..n {
            for i1 in 0..n {
                values.push(f(h * i1 as f64, h * i2 as f64));
            }
        }
        Self { n, values }
    }

    /// Samples `f` after checking that it is 2π-periodic in both variables.
    pub fn from_periodic_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let field = Self::from_fn(n, &f);
        let h = 2.0 * PI / n as f64;
        let scale = field.max_abs().max(1.0);
        for i in 0..n {
            let t = h * i as f64;
            let gaps = [
                f(0.0, t) - f(2.0 * PI, t),
                f(t, 0.0) - f(t, 2.0 * PI),
            ];
            if gaps.iter().any(|g| !(g.abs() <= 1e-12 * scale)) {
                return Err(Error::InvalidField("function is not periodic on the torus".into()));
            }
        }
        if field.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite sample".into()));
        }
        Ok(field)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i1: usize, i2: usize) -> f64 {
        self.values[i2 * self.n + i1]
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::InvalidField(format!("non-finite value at index {i}"))),
            None => Ok(()),
        }
    }

    /// Average over the torus (the zero Fourier coefficient divided by N²).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// ∫_{T²} g dx′ by the trapezoid rule.
    pub fn integral(&self) -> f64 {
        self.mean() * 4.0 * PI * PI
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.n, other.n, "grid size mismatch");
        Self {
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// self + c·other
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// Weighted sum Σ cᵢ·fieldᵢ of fields on a common grid.
    pub fn combination(terms: &[(f64, &Self)]) -> Self {
        let n = terms[0].1.n;
        let mut values = vec![0.0; n * n];
        for (c, field) in terms {
            assert_eq!(field.n, n, "grid size mismatch");
            for (v, x) in values.iter_mut().zip(&field.values) {
                *v += c * x;
            }
        }
        Self { n, values }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// L²(T²) inner product by the trapezoid rule.
    pub fn inner(&self, other: &Self) -> f64 {
        let h = 2.0 * PI / self.n as f64;
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * h * h
    }
}

/// Resolution and regularity parameters shared by the spectral operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSettings {
    pub n: usize,
    pub dealias_fraction: f64,
    pub s: u32,
}

impl SpectralSettings {
    pub fn new(n: usize, s: u32) -> Result<Self> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::GridMismatch(format!("N = {n} must be a power of two ≥ 4")));
        }
        if s < 3 {
            return Err(Error::InvalidField(format!("Sobolev index s = {s} must be at least 3")));
        }
        Ok(Self { n, dealias_fraction: 2.0 / 3.0, s })
    }

    pub fn s(&self) -> f64 {
        self.s as f64
    }
}

/// Spectral derivative ∂ₐ^order of `g` along `axis` ∈ {1, 2}.
///
/// Odd orders drop the Nyquist mode, which keeps mixed derivatives
/// commuting and the result real.
pub fn fourier_derivative(g: &InterfaceField, axis: usize, order: u32) -> Result<InterfaceField> {
    g.check_finite()?;
    if !(axis == 1 || axis == 2) || order > 4 {
        return Err(Error::InvalidField(format!("unsupported derivative axis {axis} order {order}")));
    }
    if order == 0 {
        return Ok(g.clone());
    }
    let n = g.n;
    let mut spec = fft::forward(n, &g.values);
    for i2 in 0..n {
        for i1 in 0..n {
            let i = if axis == 1 { i1 } else { i2 };
            let k = if order % 2 == 1 {
                fft::deriv_wavenumber(n, i)
            } else {
                fft::wavenumber(n, i) as f64
            };
            let c = &mut spec[i2 * n + i1];
            // (ik)^order
            let factor = match order % 4 {
                0 => rustfft::num_complex::Complex64::new(k.powi(order as i32), 0.0),
                1 => rustfft::num_complex::Complex64::new(0.0, k.powi(order as i32)),
                2 => rustfft::num_complex::Complex64::new(-k.powi(order as i32), 0.0),
                _ => rustfft::num_complex::Complex64::new(0.0, -k.powi(order as i32)),
            };
            *c *= factor;
        }
    }
    Ok(InterfaceField::from_vec_unchecked(n, fft::inverse(n, spec)))
}

/// Both first derivatives (∂₁g, ∂₂g) from one forward transform.
pub fn gradient(g: &InterfaceField) -> (InterfaceField, InterfaceField) {
    let (a, b) = fft::gradient_levels(g.n, &g.values);
    (InterfaceField::from_vec_unchecked(g.n, a), InterfaceField::from_vec_unchecked(g.n, b))
}

/// The three second derivatives (∂₁₁g, ∂₁₂g, ∂₂₂g).
pub fn hessian(g: &InterfaceField) -> [InterfaceField; 3] {
    let n = g.n;
    let spec = fft::forward(n, &g.values);
    let mut out: [Vec<rustfft::num_complex::Complex64>; 3] = [spec.clone(), spec.clone(), spec];
    for i2 in 0..n {
        for i1 in 0..n {
            let idx = i2 * n + i1;
            let k1 = fft::wavenumber(n, i1) as f64;
            let k2 = fft::wavenumber(n, i2) as f64;
            let (q1, q2) = (fft::deriv_wavenumber(n, i1), fft::deriv_wavenumber(n, i2));
            out[0][idx] *= -k1 * k1;
            out[1][idx] *= -q1 * q2;
            out[2][idx] *= -k2 * k2;
        }
    }
    out.map(|s| InterfaceField::from_vec_unchecked(n, fft::inverse(n, s)))
}

/// Fourier multiplier (1+|k|²)^{σ/2}.
pub fn sobolev_weight(g: &InterfaceField, sigma: f64) -> Result<InterfaceField> {
    g.check_finite()?;
    let n = g.n;
    let values =
        fft::apply_multiplier(n, &g.values, |i1, i2| (1.0 + fft::k_squared(n, i1, i2)).powf(0.5 * sigma));
    Ok(InterfaceField::from_vec_unchecked(n, values))
}

/// Discrete H^σ(T²) norm, computed through Parseval.
pub fn hs_norm(g: &InterfaceField, sigma: f64) -> f64 {
    let n = g.n;
    let spec = fft::forward(n, &g.values);
    let mut acc = 0.0;
    for i2 in 0..n {
        for i1 in 0..n {
            let w = (1.0 + fft::k_squared(n, i1, i2)).powf(sigma);
            acc += w * spec[i2 * n + i1].norm_sqr();
        }
    }
    let h = 2.0 * PI / n as f64;
    (acc * h * h / (n * n) as f64).sqrt()
}

/// a·⟨∇⟩^σ u − ⟨∇⟩^σ(a·u) with dealiased products.
pub fn commutator_lambda_s(
    a: &InterfaceField,
    u: &InterfaceField,
    sigma: f64,
    settings: &SpectralSettings,
) -> Result<InterfaceField> {
    a.check_finite()?;
    u.check_finite()?;
    let lu = sobolev_weight(u, sigma)?;
    let first = dealias(&a.mul(&lu), settings);
    let second = sobolev_weight(&dealias(&a.mul(u), settings), sigma)?;
    Ok(first.sub(&second))
}

/// g − ⟨g⟩ with the mean removed exactly.
pub fn mean_project(g: &InterfaceField) -> InterfaceField {
    let n = g.n;
    let mut spec = fft::forward(n, &g.values);
    spec[0] = rustfft::num_complex::Complex64::new(0.0, 0.0);
    InterfaceField::from_vec_unchecked(n, fft::inverse(n, spec))
}

/// Largest retained |k| per axis under the dealiasing rule.
pub fn dealias_cutoff(n: usize, fraction: f64) -> f64 {
    fraction * n as f64 / 2.0
}

pub(crate) fn dealias_keep(n: usize, fraction: f64, i1: usize, i2: usize) -> bool {
    let cut = dealias_cutoff(n, fraction) + 1e-12;
    let k1 = fft::wavenumber(n, i1).unsigned_abs() as f64;
    let k2 = fft::wavenumber(n, i2).unsigned_abs() as f64;
    k1.max(k2) <= cut
}

/// Zeroes all modes with max(|k₁|,|k₂|) above the dealiasing cutoff.
pub fn dealias(g: &InterfaceField, settings: &SpectralSettings) -> InterfaceField {
    let n = g.n;
    let f = settings.dealias_fraction;
    let values = fft::apply_multiplier(n, &g.values, |i1, i2| if dealias_keep(n, f, i1, i2) { 1.0 } else { 0.0 });
    InterfaceField::from_vec_unchecked(n, values)
}

/// Horizontal grid coordinate 2πi/N.
pub fn grid_coordinate(n: usize, i: usize) -> f64 {
    2.0 * PI * i as f64 / n as f64
}
