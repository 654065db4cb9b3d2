//! Interfaces, mapped strips and the differential operators they carry.
//!
//! Both fluid regions are discretized on a reference strip with
//! horizontal coordinates ξ = (ξ₁, ξ₂) ∈ T² and a vertical Chebyshev
//! coordinate s ∈ [−1, 1].  A map sends (ξ, s) to the physical point
//! (ξ₁, ξ₂, Z(ξ, s)); only the height Z varies between maps, because the
//! horizontal components of a harmonic coordinate map with identity
//! boundary data are the identity.
//!
//! Bulk arrays are level-major: index `k * N * N + i2 * N + i1`, where
//! level k sits at s = cos(πk/M).  In the plasma region level 0 is the
//! interface and level M the bottom wall x₃ = −1; in the vacuum region
//! level 0 is the top wall x₃ = 1 and level M the interface.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::chebyshev::{chebyshev, Chebyshev};
use crate::elliptic::{self, Bc, EllipticProblem};
use crate::error::{Error, Result};
use crate::fft;
use crate::spectral::{self, InterfaceField};

/// Smallest accepted ratio between physical and reference cell heights.
pub const JACOBIAN_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    /// The plasma region below the interface, −1 < x₃ < f.
    Plasma,
    /// The vacuum region above the interface, f < x₃ < 1.
    Vacuum,
}

impl Side {
    pub fn interface_level(self, m: usize) -> usize {
        match self {
            Side::Plasma => 0,
            Side::Vacuum => m,
        }
    }

    pub fn wall_level(self, m: usize) -> usize {
        match self {
            Side::Plasma => m,
            Side::Vacuum => 0,
        }
    }

    pub fn wall_height(self) -> f64 {
        match self {
            Side::Plasma => -1.0,
            Side::Vacuum => 1.0,
        }
    }

    /// Sign turning the upward conormal derivative into the D-N value.
    pub fn dn_sign(self) -> f64 {
        match self {
            Side::Plasma => 1.0,
            Side::Vacuum => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BulkField {
    n: usize,
    m: usize,
    side: Side,
    values: Vec<f64>,
}

impl BulkField {
    pub fn new(n: usize, m: usize, side: Side, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n * (m + 1) {
            return Err(Error::GridMismatch(format!(
                "bulk field needs {} values, got {}",
                n * n * (m + 1),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite bulk value at index {i}")));
        }
        Ok(Self { n, m, side, values })
    }

    pub(crate) fn from_vec(n: usize, m: usize, side: Side, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * n * (m + 1));
        Self { n, m, side, values }
    }

    pub fn zeros(n: usize, m: usize, side: Side) -> Self {
        Self::from_vec(n, m, side, vec![0.0; n * n * (m + 1)])
    }

    /// Samples a physical function at the node positions of `map`.
    pub fn from_fn(map: &CoordinateMap, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let (n, m) = (map.n(), map.m());
        let nn = n * n;
        let mut values = vec![0.0; nn * (m + 1)];
        for k in 0..=m {
            for i2 in 0..n {
                for i1 in 0..n {
                    let idx = k * nn + i2 * n + i1;
                    values[idx] = f(
                        spectral::grid_coordinate(n, i1),
                        spectral::grid_coordinate(n, i2),
                        map.height[idx],
                    );
                }
            }
        }
        Self::from_vec(n, m, map.side(), values)
    }

    /// Constant extension of an interface field along every column.
    pub fn from_columns(g: &InterfaceField, m: usize, side: Side) -> Self {
        let mut values = Vec::with_capacity(g.values().len() * (m + 1));
        for _ in 0..=m {
            values.extend_from_slice(g.values());
        }
        Self::from_vec(g.n(), m, side, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn side(&self) -> Side {
        self.side
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

    pub fn level(&self, k: usize) -> InterfaceField {
        let nn = self.n * self.n;
        InterfaceField::from_vec_unchecked(self.n, self.values[k * nn..(k + 1) * nn].to_vec())
    }

    pub fn set_level(&mut self, k: usize, g: &InterfaceField) {
        let nn = self.n * self.n;
        self.values[k * nn..(k + 1) * nn].copy_from_slice(g.values());
    }

    pub fn interface_trace(&self) -> InterfaceField {
        self.level(self.side.interface_level(self.m))
    }

    pub fn wall_trace(&self) -> InterfaceField {
        self.level(self.side.wall_level(self.m))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    /// Largest |value| over the interior levels only.
    pub fn interior_max_abs(&self) -> f64 {
        let nn = self.n * self.n;
        self.values[nn..self.m * nn].iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        Self { n: self.n, m: self.m, side: self.side, values }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.values.len(), other.values.len(), "bulk grid mismatch");
        Self {
            n: self.n,
            m: self.m,
            side: self.side,
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

    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn combination(terms: &[(f64, &Self)]) -> Self {
        let first = terms[0].1;
        let mut values = vec![0.0; first.values.len()];
        for (c, field) in terms {
            assert_eq!(field.values.len(), values.len(), "bulk grid mismatch");
            for (v, x) in values.iter_mut().zip(&field.values) {
                *v += c * x;
            }
        }
        Self { n: first.n, m: first.m, side: first.side, values }
    }

    /// Zeroes horizontal modes above the dealiasing cutoff on every level.
    pub fn dealias(&self, fraction: f64) -> Self {
        let n = self.n;
        let values = fft::apply_multiplier(n, &self.values, |i1, i2| {
            if spectral::dealias_keep(n, fraction, i1, i2) {
                1.0
            } else {
                0.0
            }
        });
        self.with_values(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BulkVector {
    pub components: [BulkField; 3],
}

impl BulkVector {
    pub fn new(components: [BulkField; 3]) -> Self {
        Self { components }
    }

    pub fn zeros(n: usize, m: usize, side: Side) -> Self {
        let z = BulkField::zeros(n, m, side);
        Self { components: [z.clone(), z.clone(), z] }
    }

    pub fn from_fn(map: &CoordinateMap, f: impl Fn(f64, f64, f64) -> [f64; 3]) -> Self {
        Self {
            components: [
                BulkField::from_fn(map, |a, b, c| f(a, b, c)[0]),
                BulkField::from_fn(map, |a, b, c| f(a, b, c)[1]),
                BulkField::from_fn(map, |a, b, c| f(a, b, c)[2]),
            ],
        }
    }

    pub fn constant(map: &CoordinateMap, v: [f64; 3]) -> Self {
        Self::from_fn(map, |_, _, _| v)
    }

    pub fn n(&self) -> usize {
        self.components[0].n
    }

    pub fn m(&self) -> usize {
        self.components[0].m
    }

    pub fn side(&self) -> Side {
        self.components[0].side
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(BulkField::max_abs).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { components: std::array::from_fn(|i| self.components[i].add(&other.components[i])) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { components: std::array::from_fn(|i| self.components[i].sub(&other.components[i])) }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { components: std::array::from_fn(|i| self.components[i].scale(c)) }
    }

    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        Self { components: std::array::from_fn(|i| self.components[i].axpy(c, &other.components[i])) }
    }

    pub fn combination(terms: &[(f64, &Self)]) -> Self {
        Self {
            components: std::array::from_fn(|i| {
                let parts: Vec<(f64, &BulkField)> = terms.iter().map(|(c, v)| (*c, &v.components[i])).collect();
                BulkField::combination(&parts)
            }),
        }
    }

    pub fn interface_trace(&self) -> [InterfaceField; 3] {
        std::array::from_fn(|i| self.components[i].interface_trace())
    }

    pub fn wall_trace(&self) -> [InterfaceField; 3] {
        std::array::from_fn(|i| self.components[i].wall_trace())
    }

    pub fn dealias(&self, fraction: f64) -> Self {
        Self { components: std::array::from_fn(|i| self.components[i].dealias(fraction)) }
    }

    /// Pointwise |v|².
    pub fn norm_sq(&self) -> BulkField {
        let [a, b, c] = &self.components;
        let values = (0..a.values.len())
            .map(|i| a.values[i] * a.values[i] + b.values[i] * b.values[i] + c.values[i] * c.values[i])
            .collect();
        a.with_values(values)
    }
}

/// The graph x₃ = f(x′) together with its non-unit normal (−∂₁f, −∂₂f, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub f: InterfaceField,
    pub normal: [InterfaceField; 3],
}

impl Interface {
    pub fn n(&self) -> usize {
        self.f.n()
    }

    /// v·N for a vector of interface traces.
    pub fn dot_normal(&self, v: &[InterfaceField; 3]) -> InterfaceField {
        InterfaceField::combination(&[(1.0, &v[0].mul(&self.normal[0])), (1.0, &v[1].mul(&self.normal[1])), (1.0, &v[2])])
    }
}

/// Builds Γ_f with spectrally computed normals, rejecting interfaces that
/// come within c₀ of a wall.
pub fn build_interface(f: &InterfaceField, c0: f64) -> Result<Interface> {
    f.check_finite()?;
    let limit = 1.0 - c0;
    let max_abs = f.max_abs();
    if max_abs > limit {
        return Err(Error::GapViolation { max_abs, limit });
    }
    Ok(interface_unchecked(f))
}

pub(crate) fn interface_unchecked(f: &InterfaceField) -> Interface {
    let (d1, d2) = spectral::gradient(f);
    Interface {
        f: f.clone(),
        normal: [d1.scale(-1.0), d2.scale(-1.0), InterfaceField::constant(f.n(), 1.0)],
    }
}

/// Height derivatives of a mapped strip and the operators built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct MapMetric {
    pub side: Side,
    pub n: usize,
    pub m: usize,
    /// ∂Z/∂ξ₁, ∂Z/∂ξ₂, ∂Z/∂s at every node.
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub zs: Vec<f64>,
}

impl MapMetric {
    pub fn from_height(side: Side, n: usize, m: usize, height: &[f64]) -> Self {
        let cheb = chebyshev(m);
        let (z1, z2) = fft::gradient_levels(n, height);
        let zs = cheb.differentiate(n * n, height);
        Self { side, n, m, z1, z2, zs }
    }

    pub fn cheb(&self) -> Arc<Chebyshev> {
        chebyshev(self.m)
    }

    pub fn len(&self) -> usize {
        self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zs.is_empty()
    }

    /// Linear combination of metrics (heights enter linearly).
    pub fn combination(terms: &[(f64, &MapMetric)]) -> Self {
        let first = terms[0].1;
        let mut z1 = vec![0.0; first.len()];
        let mut z2 = vec![0.0; first.len()];
        let mut zs = vec![0.0; first.len()];
        for (c, g) in terms {
            for i in 0..z1.len() {
                z1[i] += c * g.z1[i];
                z2[i] += c * g.z2[i];
                zs[i] += c * g.zs[i];
            }
        }
        Self { side: first.side, n: first.n, m: first.m, z1, z2, zs }
    }

    fn wrap(&self, values: Vec<f64>) -> BulkField {
        BulkField::from_vec(self.n, self.m, self.side, values)
    }

    pub(crate) fn gradient_raw(&self, u: &[f64]) -> [Vec<f64>; 3] {
        let (mut g1, mut g2) = fft::gradient_levels(self.n, u);
        let dus = self.cheb().differentiate(self.n * self.n, u);
        let mut g3 = dus;
        for i in 0..g3.len() {
            let inv = 1.0 / self.zs[i];
            g1[i] -= self.z1[i] * inv * g3[i];
            g2[i] -= self.z2[i] * inv * g3[i];
            g3[i] *= inv;
        }
        [g1, g2, g3]
    }

    pub(crate) fn divergence_raw(&self, v: [&[f64]; 3]) -> Vec<f64> {
        let len = self.len();
        let mut f1 = vec![0.0; len];
        let mut f2 = vec![0.0; len];
        let mut f3 = vec![0.0; len];
        for i in 0..len {
            f1[i] = self.zs[i] * v[0][i];
            f2[i] = self.zs[i] * v[1][i];
            f3[i] = v[2][i] - self.z1[i] * v[0][i] - self.z2[i] * v[1][i];
        }
        let mut out = fft::divergence_levels(self.n, &f1, &f2);
        let ds = self.cheb().differentiate(self.n * self.n, &f3);
        for i in 0..len {
            out[i] = (out[i] + ds[i]) / self.zs[i];
        }
        out
    }

    pub(crate) fn curl_raw(&self, v: [&[f64]; 3]) -> [Vec<f64>; 3] {
        let len = self.len();
        let nn = self.n * self.n;
        let mut c1 = vec![0.0; len];
        let mut c2 = vec![0.0; len];
        let mut c3 = vec![0.0; len];
        for i in 0..len {
            c1[i] = v[0][i] + self.z1[i] * v[2][i];
            c2[i] = v[1][i] + self.z2[i] * v[2][i];
            c3[i] = self.zs[i] * v[2][i];
        }
        let (d1c3, d2c3) = fft::gradient_levels(self.n, &c3);
        let neg_c1: Vec<f64> = c1.iter().map(|x| -x).collect();
        let vert = fft::divergence_levels(self.n, &c2, &neg_c1);
        let cheb = self.cheb();
        let dsc1 = cheb.differentiate(nn, &c1);
        let dsc2 = cheb.differentiate(nn, &c2);
        let mut w1 = vec![0.0; len];
        let mut w2 = vec![0.0; len];
        let mut w3 = vec![0.0; len];
        for i in 0..len {
            let inv = 1.0 / self.zs[i];
            let a = (d2c3[i] - dsc2[i]) * inv;
            let b = (dsc1[i] - d1c3[i]) * inv;
            let c = vert[i] * inv;
            w1[i] = a;
            w2[i] = b;
            w3[i] = self.z1[i] * a + self.z2[i] * b + self.zs[i] * c;
        }
        [w1, w2, w3]
    }

    /// Physical gradient ∇u.
    pub fn gradient(&self, u: &BulkField) -> BulkVector {
        BulkVector { components: self.gradient_raw(&u.values).map(|v| self.wrap(v)) }
    }

    /// Physical divergence in conservative form.
    pub fn divergence(&self, v: &BulkVector) -> BulkField {
        let [a, b, c] = &v.components;
        self.wrap(self.divergence_raw([&a.values, &b.values, &c.values]))
    }

    /// Physical curl, built from covariant components so that
    /// curl∘gradient and divergence∘curl vanish to rounding.
    pub fn curl(&self, v: &BulkVector) -> BulkVector {
        let [a, b, c] = &v.components;
        BulkVector { components: self.curl_raw([&a.values, &b.values, &c.values]).map(|w| self.wrap(w)) }
    }

    pub fn laplacian(&self, u: &BulkField) -> BulkField {
        let g = self.gradient_raw(&u.values);
        self.wrap(self.divergence_raw([&g[0], &g[1], &g[2]]))
    }

    /// Upward conormal derivative (−∂₁Z, −∂₂Z, 1)·∇u on level `k`.
    pub fn conormal_derivative(&self, u: &BulkField, k: usize) -> InterfaceField {
        let g = self.gradient_raw(&u.values);
        self.conormal_from_gradient(&g, k)
    }

    pub(crate) fn conormal_from_gradient(&self, g: &[Vec<f64>; 3], k: usize) -> InterfaceField {
        let nn = self.n * self.n;
        let values = (k * nn..(k + 1) * nn)
            .map(|i| -self.z1[i] * g[0][i] - self.z2[i] * g[1][i] + g[2][i])
            .collect();
        InterfaceField::from_vec_unchecked(self.n, values)
    }

    /// (v·∇)w for vectors given on the same strip.
    pub fn advect(&self, v: &BulkVector, w: &BulkVector) -> BulkVector {
        let grads = w.components.iter().map(|c| self.gradient_raw(&c.values)).collect::<Vec<_>>();
        let [a, b, c] = &v.components;
        BulkVector {
            components: std::array::from_fn(|i| {
                let g = &grads[i];
                let values = (0..self.len())
                    .map(|p| a.values[p] * g[0][p] + b.values[p] * g[1][p] + c.values[p] * g[2][p])
                    .collect();
                self.wrap(values)
            }),
        }
    }

    /// Volume quadrature weights (Clenshaw–Curtis × trapezoid × ∂Z/∂s).
    pub fn volume_weights(&self) -> Vec<f64> {
        let cheb = self.cheb();
        let nn = self.n * self.n;
        let h = 2.0 * PI / self.n as f64;
        (0..self.len()).map(|i| cheb.weights[i / nn] * h * h * self.zs[i]).collect()
    }

    /// ∫ u dx over the physical region.
    pub fn integrate(&self, u: &BulkField) -> f64 {
        self.volume_weights().iter().zip(&u.values).map(|(w, v)| w * v).sum()
    }

    /// Discrete L² norm over the physical region.
    pub fn l2_norm(&self, u: &BulkField) -> f64 {
        self.volume_weights().iter().zip(&u.values).map(|(w, v)| w * v * v).sum::<f64>().sqrt()
    }

    pub fn l2_norm_vec(&self, v: &BulkVector) -> f64 {
        v.components.iter().map(|c| self.l2_norm(c).powi(2)).sum::<f64>().sqrt()
    }
}

/// A discrete map from the reference strip onto one fluid region.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    metric: MapMetric,
    height: Vec<f64>,
    ref_height: Vec<f64>,
    ref_zs: Vec<f64>,
    interface: Interface,
    pub solve_residual: f64,
    pub solve_iterations: usize,
}

impl CoordinateMap {
    /// The algebraic map that stretches each column linearly between the
    /// wall and the graph; used for reference strips and initial guesses.
    pub fn sigma(interface: &Interface, side: Side, m: usize) -> Self {
        let height = sigma_height(&interface.f, side, m);
        let n = interface.n();
        let metric = MapMetric::from_height(side, n, m, &height);
        let ref_zs = metric.zs.clone();
        Self {
            metric,
            ref_height: height.clone(),
            height,
            ref_zs,
            interface: interface.clone(),
            solve_residual: 0.0,
            solve_iterations: 0,
        }
    }

    /// Flat region between the wall and the plane x₃ = level.
    pub fn flat(n: usize, m: usize, side: Side, level: f64) -> Self {
        let f = InterfaceField::constant(n, level);
        Self::sigma(&interface_unchecked(&f), side, m)
    }

    pub(crate) fn over_reference(
        reference: &CoordinateMap,
        interface: Interface,
        height: Vec<f64>,
        residual: f64,
        iterations: usize,
    ) -> Self {
        let metric = MapMetric::from_height(reference.side(), reference.n(), reference.m(), &height);
        Self {
            metric,
            height,
            ref_height: reference.height.clone(),
            ref_zs: reference.metric.zs.clone(),
            interface,
            solve_residual: residual,
            solve_iterations: iterations,
        }
    }

    pub fn metric(&self) -> &MapMetric {
        &self.metric
    }

    pub fn side(&self) -> Side {
        self.metric.side
    }

    pub fn n(&self) -> usize {
        self.metric.n
    }

    pub fn m(&self) -> usize {
        self.metric.m
    }

    pub fn interface(&self) -> &Interface {
        &self.interface
    }

    pub fn interface_level(&self) -> usize {
        self.side().interface_level(self.m())
    }

    pub fn wall_level(&self) -> usize {
        self.side().wall_level(self.m())
    }

    /// Physical x₃ of every node (the third map component Φ³).
    pub fn height(&self) -> BulkField {
        self.metric.wrap(self.height.clone())
    }

    /// The map components (Φ¹, Φ², Φ³) at every node.
    pub fn components(&self) -> [BulkField; 3] {
        let x1 = BulkField::from_fn(self, |a, _, _| a);
        let x2 = BulkField::from_fn(self, |_, b, _| b);
        [x1, x2, self.height()]
    }

    /// det ∂Φ/∂y relative to the reference strip.
    pub fn jac_det(&self) -> BulkField {
        self.metric.wrap(self.metric.zs.iter().zip(&self.ref_zs).map(|(a, b)| a / b).collect())
    }

    /// Jacobian ∂Φᵃ/∂yᵇ (row-major) relative to the reference strip.
    pub fn jacobian(&self) -> [BulkField; 9] {
        let len = self.metric.len();
        let zero = self.metric.wrap(vec![0.0; len]);
        let one = self.metric.wrap(vec![1.0; len]);
        let (rz1, rz2) = fft::gradient_levels(self.n(), &self.ref_height);
        let mut a1 = vec![0.0; len];
        let mut a2 = vec![0.0; len];
        for i in 0..len {
            let ratio = self.metric.zs[i] / self.ref_zs[i];
            a1[i] = self.metric.z1[i] - rz1[i] * ratio;
            a2[i] = self.metric.z2[i] - rz2[i] * ratio;
        }
        [
            one.clone(),
            zero.clone(),
            zero.clone(),
            zero.clone(),
            one,
            zero,
            self.metric.wrap(a1),
            self.metric.wrap(a2),
            self.jac_det(),
        ]
    }

    /// Symmetric inverse metric gⁱʲ of the computational coordinates
    /// (ξ₁, ξ₂, s), ordered (11, 12, 13, 22, 23, 33).
    pub fn inv_metric(&self) -> [BulkField; 6] {
        let len = self.metric.len();
        let mut g13 = vec![0.0; len];
        let mut g23 = vec![0.0; len];
        let mut g33 = vec![0.0; len];
        for i in 0..len {
            let b = 1.0 / self.metric.zs[i];
            let a1 = -self.metric.z1[i] * b;
            let a2 = -self.metric.z2[i] * b;
            g13[i] = a1;
            g23[i] = a2;
            g33[i] = a1 * a1 + a2 * a2 + b * b;
        }
        let one = self.metric.wrap(vec![1.0; len]);
        let zero = self.metric.wrap(vec![0.0; len]);
        [one.clone(), zero, self.metric.wrap(g13), one, self.metric.wrap(g23), self.metric.wrap(g33)]
    }

    pub fn gradient(&self, u: &BulkField) -> BulkVector {
        self.metric.gradient(u)
    }

    pub fn divergence(&self, v: &BulkVector) -> BulkField {
        self.metric.divergence(v)
    }

    pub fn curl(&self, v: &BulkVector) -> BulkVector {
        self.metric.curl(v)
    }

    pub fn laplacian(&self, u: &BulkField) -> BulkField {
        self.metric.laplacian(u)
    }

    /// N_f·∇u on the interface face.
    pub fn interface_conormal(&self, u: &BulkField) -> InterfaceField {
        self.metric.conormal_derivative(u, self.interface_level())
    }

    /// ∂₃u on the wall face.
    pub fn wall_normal_derivative(&self, u: &BulkField) -> InterfaceField {
        self.metric.conormal_derivative(u, self.wall_level())
    }

    pub fn integrate(&self, u: &BulkField) -> f64 {
        self.metric.integrate(u)
    }

    pub fn l2_norm(&self, u: &BulkField) -> f64 {
        self.metric.l2_norm(u)
    }

    pub fn l2_norm_vec(&self, v: &BulkVector) -> f64 {
        self.metric.l2_norm_vec(v)
    }

    /// Mean depth of the region (mean top height minus mean bottom height).
    pub fn mean_depth(&self) -> f64 {
        match self.side() {
            Side::Plasma => self.interface.f.mean() + 1.0,
            Side::Vacuum => 1.0 - self.interface.f.mean(),
        }
    }
}

pub(crate) fn sigma_height(f: &InterfaceField, side: Side, m: usize) -> Vec<f64> {
    let cheb = chebyshev(m);
    let nn = f.n() * f.n();
    let mut height = vec![0.0; nn * (m + 1)];
    for (k, &s) in cheb.nodes.iter().enumerate() {
        let t = 0.5 * (1.0 + s);
        for p in 0..nn {
            let fp = f.values()[p];
            height[k * nn + p] = match side {
                Side::Plasma => -1.0 + t * (fp + 1.0),
                Side::Vacuum => fp + t * (1.0 - fp),
            };
        }
    }
    // Exact face values.
    for p in 0..nn {
        height[side.interface_level(m) * nn + p] = f.values()[p];
        height[side.wall_level(m) * nn + p] = side.wall_height();
    }
    height
}

/// Harmonic coordinate map of Ω_f over the reference strip Ω_{f*}: the
/// vertical component solves Δ_y Φ³ = 0 with Φ³ = f on the interface and
/// the wall height on the wall.
pub fn harmonic_coordinate_map(
    f: &Interface,
    f_star: &Interface,
    side: Side,
    m: usize,
    tol: f64,
) -> Result<CoordinateMap> {
    let reference = CoordinateMap::sigma(f_star, side, m);
    let n = f.n();
    let guess = BulkField::from_vec(n, m, side, sigma_height(&f.f, side, m));
    let problem = EllipticProblem {
        map: &reference,
        rhs: BulkField::zeros(n, m, side),
        interface: Bc::Dirichlet(f.f.clone()),
        wall: Bc::Dirichlet(InterfaceField::constant(n, side.wall_height())),
    };
    let sol = elliptic::solve_with_guess(&problem, tol, Some(&guess))?;
    let mut height = sol.field.into_values();
    let nn = n * n;
    let il = side.interface_level(m);
    let wl = side.wall_level(m);
    height[il * nn..(il + 1) * nn].copy_from_slice(f.f.values());
    height[wl * nn..(wl + 1) * nn].iter_mut().for_each(|v| *v = side.wall_height());
    let map = CoordinateMap::over_reference(&reference, f.clone(), height, sol.residual_norm, sol.iterations);
    let min_jac = map.jac_det().values().iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_jac >= JACOBIAN_FLOOR) {
        return Err(Error::DegenerateMap { min_jac, floor: JACOBIAN_FLOOR });
    }
    Ok(map)
}

/// Physical gradient of `v` through `map`.
pub fn transform_gradient(v: &BulkField, map: &CoordinateMap) -> Result<BulkVector> {
    let min = map.metric.zs.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::DegenerateMap { min_jac: min, floor: 0.0 });
    }
    Ok(map.gradient(v))
}

/// Restriction of `v` to the interface face of its side.
pub fn trace_on_interface(v: &BulkField) -> InterfaceField {
    v.interface_trace()
}

/// Resamples a field given on the nodes of `from` at the physical node
/// positions of `to` (both maps must share the horizontal grid).  Each
/// target height is located in its column by Newton iteration on the
/// Chebyshev interpolant of the source heights.
pub fn transfer(field: &BulkField, from: &CoordinateMap, to: &CoordinateMap) -> Result<BulkField> {
    if from.n() != to.n() || from.m() != to.m() || from.side() != to.side() || field.values.len() != from.metric.len() {
        return Err(Error::GridMismatch("transfer needs matching grids".into()));
    }
    let (n, m) = (from.n(), from.m());
    let nn = n * n;
    let cheb = chebyshev(m);
    let mut out = vec![0.0; nn * (m + 1)];
    let mut col_z = vec![0.0; m + 1];
    let mut col_zs = vec![0.0; m + 1];
    let mut col_v = vec![0.0; m + 1];
    for p in 0..nn {
        for k in 0..=m {
            col_z[k] = from.height[k * nn + p];
            col_zs[k] = from.metric.zs[k * nn + p];
            col_v[k] = field.values[k * nn + p];
        }
        for k in 0..=m {
            let target = to.height[k * nn + p];
            let mut s = cheb.nodes[k];
            for _ in 0..60 {
                let (z, dz) = cheb.interpolate_with_derivative(&col_z, &col_zs, s);
                let step = (z - target) / dz;
                s -= step;
                if step.abs() < 1e-14 {
                    break;
                }
            }
            let residual = (cheb.interpolate(&col_z, s) - target).abs();
            if !(residual <= 1e-10) {
                return Err(Error::DegenerateMap { min_jac: f64::NAN, floor: JACOBIAN_FLOOR });
            }
            out[k * nn + p] = cheb.interpolate(&col_v, s);
        }
    }
    Ok(BulkField::from_vec(n, m, from.side(), out))
}
