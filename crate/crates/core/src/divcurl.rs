//! Div-curl solvers for the two fluid regions and the divergence-free
//! projector of the plasma region.
//!
//! A field with prescribed curl is first lifted by vertical integration of
//! the curl density in computational coordinates.  Divergence, normal
//! data and wall means are then corrected by a scalar potential.

use rustfft::num_complex::Complex64;

use crate::elliptic::{self, Bc, EllipticProblem};
use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{BulkField, BulkVector, CoordinateMap};
use crate::spectral::InterfaceField;

/// Absolute tolerance of the compatibility validators.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Tolerance of the internal potential solves; face divergences amplify
/// the algebraic error by the square of the vertical resolution.
pub const SOLVE_TOL: f64 = 1e-11;

const AREA: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Data of the plasma-region problem: div v = g, curl v = ω,
/// v·N_f = θ on Γ_f, v₃ = 0 and ∫_Γ vᵢ dx′ = αᵢ on the wall.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasmaDivCurlData {
    pub g: BulkField,
    pub omega: BulkVector,
    pub theta: InterfaceField,
    pub alpha: [f64; 2],
}

/// Data of the vacuum-region problem: div ĥ = ĝ, curl ĥ = ω̂,
/// ĥ·N_f = θ̂ on Γ_f and ĥ×e₃ = (Ĵ₁, Ĵ₂, 0) on the top wall.
#[derive(Debug, Clone, PartialEq)]
pub struct VacuumDivCurlData {
    pub g: BulkField,
    pub omega: BulkVector,
    pub theta: InterfaceField,
    pub current: [InterfaceField; 2],
}

impl PlasmaDivCurlData {
    pub fn zeros(n: usize, m: usize) -> Self {
        let side = crate::geometry::Side::Plasma;
        Self {
            g: BulkField::zeros(n, m, side),
            omega: BulkVector::zeros(n, m, side),
            theta: InterfaceField::zeros(n),
            alpha: [0.0; 2],
        }
    }
}

impl VacuumDivCurlData {
    pub fn zeros(n: usize, m: usize) -> Self {
        let side = crate::geometry::Side::Vacuum;
        Self {
            g: BulkField::zeros(n, m, side),
            omega: BulkVector::zeros(n, m, side),
            theta: InterfaceField::zeros(n),
            current: [InterfaceField::zeros(n), InterfaceField::zeros(n)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    pub residuals: Vec<(&'static str, f64)>,
    pub tolerance: f64,
}

impl CompatibilityReport {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|(_, r)| *r <= self.tolerance)
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            return Ok(());
        }
        let failing: Vec<String> = self
            .residuals
            .iter()
            .filter(|(_, r)| !(*r <= self.tolerance))
            .map(|(name, r)| format!("{name} = {r:e}"))
            .collect();
        Err(Error::CompatibilityError(failing.join(", ")))
    }
}

fn check_grid(map: &CoordinateMap, fields: &[&BulkField], traces: &[&InterfaceField]) -> Result<()> {
    let (n, m, side) = (map.n(), map.m(), map.side());
    if fields.iter().any(|f| f.n() != n || f.m() != m || f.side() != side) || traces.iter().any(|t| t.n() != n) {
        return Err(Error::GridMismatch("div-curl data does not match the map".into()));
    }
    Ok(())
}

fn finite_or_nan(x: f64, fields: &[&BulkField], traces: &[&InterfaceField]) -> f64 {
    let ok = fields.iter().all(|f| f.values().iter().all(|v| v.is_finite()))
        && traces.iter().all(|t| t.values().iter().all(|v| v.is_finite()));
    if ok {
        x
    } else {
        f64::NAN
    }
}

/// Residuals of div ω = 0, ∫_Γ ω₃ = 0 and ∫ g = ∫ θ.
pub fn validate_plasma(data: &PlasmaDivCurlData, map: &CoordinateMap) -> Result<CompatibilityReport> {
    let [o1, o2, o3] = &data.omega.components;
    let fields = [&data.g, o1, o2, o3];
    check_grid(map, &fields, &[&data.theta])?;
    let div = map.divergence(&data.omega).max_abs();
    let wall = data.omega.components[2].wall_trace().integral().abs();
    let volume = (map.integrate(&data.g) - data.theta.integral()).abs();
    let finite = |x| finite_or_nan(x, &fields, &[&data.theta]);
    Ok(CompatibilityReport {
        residuals: vec![("div omega", finite(div)), ("wall flux of omega", finite(wall)), ("volume balance", finite(volume))],
        tolerance: COMPATIBILITY_TOL,
    })
}

/// Residuals of div ω̂ = 0 and ∂₁Ĵ₁ + ∂₂Ĵ₂ = ω̂₃ on the top wall.
pub fn validate_vacuum(data: &VacuumDivCurlData, map: &CoordinateMap) -> Result<CompatibilityReport> {
    let [o1, o2, o3] = &data.omega.components;
    let fields = [&data.g, o1, o2, o3];
    let traces = [&data.theta, &data.current[0], &data.current[1]];
    check_grid(map, &fields, &traces)?;
    let div = map.divergence(&data.omega).max_abs();
    let n = map.n();
    let surface = fft::divergence_levels(n, data.current[0].values(), data.current[1].values());
    let surface = InterfaceField::from_vec_unchecked(n, surface);
    let current = surface.max_abs_diff(&data.omega.components[2].wall_trace());
    let finite = |x| finite_or_nan(x, &fields, &traces);
    Ok(CompatibilityReport {
        residuals: vec![("div omega", finite(div)), ("surface current", finite(current))],
        tolerance: COMPATIBILITY_TOL,
    })
}

/// Solves Δ′χ = q on the torus with the derivative symbols used by the
/// horizontal operators; flat modes of χ are zero.
fn torus_poisson(n: usize, q: &[f64]) -> Vec<f64> {
    let mut spec = fft::forward(n, q);
    for i2 in 0..n {
        let k2 = fft::deriv_wavenumber(n, i2);
        for i1 in 0..n {
            let k1 = fft::deriv_wavenumber(n, i1);
            let kk = k1 * k1 + k2 * k2;
            spec[i2 * n + i1] = if kk == 0.0 { Complex64::new(0.0, 0.0) } else { spec[i2 * n + i1] / -kk };
        }
    }
    fft::inverse(n, spec)
}

/// A field w = (w₁, w₂, 0) with curl w = ω.  Its covariant vertical
/// component vanishes, so the curl density reduces to vertical integrals
/// plus a wall stream function carrying ω₃.
fn curl_lift(omega: &BulkVector, map: &CoordinateMap) -> BulkVector {
    let metric = map.metric();
    let (n, m) = (map.n(), map.m());
    let nn = n * n;
    let len = metric.len();
    let [o1, o2, o3] = omega.components.each_ref().map(|c| c.values());
    let mut dens1 = vec![0.0; len];
    let mut dens2 = vec![0.0; len];
    for i in 0..len {
        dens1[i] = metric.zs[i] * o1[i];
        dens2[i] = metric.zs[i] * o2[i];
    }
    let cheb = metric.cheb();
    let wall = map.wall_level();
    let mut w1 = cheb.apply(&cheb.integrate_from_bottom, nn, &dens2);
    let mut w2 = cheb.apply(&cheb.integrate_from_bottom, nn, &dens1);
    // Integrate from the wall rather than from s = −1.
    let w1_wall = w1[wall * nn..(wall + 1) * nn].to_vec();
    let w2_wall = w2[wall * nn..(wall + 1) * nn].to_vec();
    // Ω₃ on the wall is ω₃ since the wall is flat.
    let wall_o3: Vec<f64> = o3[wall * nn..(wall + 1) * nn].to_vec();
    let chi = torus_poisson(n, &wall_o3);
    let (d1chi, d2chi) = fft::gradient_levels(n, &chi);
    for k in 0..=m {
        for p in 0..nn {
            let i = k * nn + p;
            w1[i] = w1[i] - w1_wall[p] - d2chi[p];
            w2[i] = -(w2[i] - w2_wall[p]) + d1chi[p];
        }
    }
    let side = map.side();
    BulkVector::new([
        BulkField::new(n, m, side, w1).expect("finite lift"),
        BulkField::new(n, m, side, w2).expect("finite lift"),
        BulkField::zeros(n, m, side),
    ])
}

fn wall_means(v: &BulkVector) -> [f64; 2] {
    [v.components[0].wall_trace().integral(), v.components[1].wall_trace().integral()]
}

/// Core construction shared by both regions: v = w + c + ∇φ with a
/// pure-Neumann potential φ.
pub(crate) fn div_curl_core(
    map: &CoordinateMap,
    g: &BulkField,
    omega: &BulkVector,
    theta: &InterfaceField,
    alpha: [f64; 2],
    tol: f64,
    guess: Option<&BulkField>,
) -> Result<BulkVector> {
    let w = curl_lift(omega, map);
    let means = wall_means(&w);
    let c = [(alpha[0] - means[0]) / AREA, (alpha[1] - means[1]) / AREA];
    let w = BulkVector::new([w.components[0].map(|x| x + c[0]), w.components[1].map(|x| x + c[1]), w.components[2].clone()]);
    let rhs = g.sub(&map.divergence(&w));
    let normal = map.interface().dot_normal(&w.interface_trace());
    let problem = EllipticProblem {
        map,
        rhs,
        interface: Bc::Neumann(theta.sub(&normal)),
        wall: Bc::Neumann(w.components[2].wall_trace().scale(-1.0)),
    };
    let phi = elliptic::solve_with_guess(&problem, tol, guess)?.field;
    Ok(w.add(&map.gradient(&phi)))
}

/// The unique field with the given divergence, curl, interface normal
/// component, vanishing wall normal component and wall means.
pub fn solve_plasma(data: &PlasmaDivCurlData, map: &CoordinateMap) -> Result<BulkVector> {
    solve_plasma_with(data, map, SOLVE_TOL, None)
}

/// As [`solve_plasma`] with an explicit solver tolerance and an initial
/// guess for the internal scalar potential.
pub fn solve_plasma_with(
    data: &PlasmaDivCurlData,
    map: &CoordinateMap,
    tol: f64,
    guess: Option<&BulkField>,
) -> Result<BulkVector> {
    validate_plasma(data, map)?.into_result()?;
    div_curl_core(map, &data.g, &data.omega, &data.theta, data.alpha, tol, guess)
}

/// The vacuum construction h̃ + ∇j̃ − ∇φ.
pub fn solve_vacuum(data: &VacuumDivCurlData, map: &CoordinateMap) -> Result<BulkVector> {
    solve_vacuum_with(data, map, SOLVE_TOL, None)
}

pub fn solve_vacuum_with(
    data: &VacuumDivCurlData,
    map: &CoordinateMap,
    tol: f64,
    guess: Option<&BulkField>,
) -> Result<BulkVector> {
    validate_vacuum(data, map)?.into_result()?;
    let (n, m, side) = (map.n(), map.m(), map.side());
    let nn = n * n;
    let [j1, j2] = &data.current;

    // Curl lift with zero divergence and normal data; its wall means are
    // those required of ĥ so that the stream function below is periodic.
    let alpha = [-j2.integral(), j1.integral()];
    let zero_g = BulkField::zeros(n, m, side);
    let zero_theta = InterfaceField::zeros(n);
    let h_tilde = div_curl_core(map, &zero_g, &data.omega, &zero_theta, alpha, tol, None)?;

    // Stream function on the wall: ∂₂ĵ = Ĵ₁ − h̃₂, ∂₁ĵ = −(Ĵ₂ + h̃₁).
    let [ht1, ht2, _] = h_tilde.wall_trace();
    let a = j1.sub(&ht2);
    let b = j2.add(&ht1).scale(-1.0);
    let div_ab = fft::divergence_levels(n, b.values(), a.values());
    let j_hat = torus_poisson(n, &div_ab);

    // Extension by a vertical cutoff that vanishes below the midline
    // between the highest interface point and the wall.
    let top = side.wall_height();
    let mid = 0.5 * (top + map.interface().f.max());
    let height = map.height();
    let mut j_tilde = vec![0.0; nn * (m + 1)];
    for (i, (jt, z)) in j_tilde.iter_mut().zip(height.values()).enumerate() {
        let t = ((z - mid) / (top - mid)).clamp(0.0, 1.0);
        *jt = smootherstep(t) * j_hat[i % nn];
    }
    let j_tilde = BulkField::new(n, m, side, j_tilde)?;
    let grad_j = map.gradient(&j_tilde);

    // Mixed problem: Δφ = div(h̃ + ∇j̃) − ĝ, N_f·∇φ = (h̃ + ∇j̃)·N_f − θ̂,
    // φ = 0 on the top wall.
    let partial = h_tilde.add(&grad_j);
    let rhs = map.divergence(&partial).sub(&data.g);
    let normal = map.interface().dot_normal(&partial.interface_trace());
    let problem = EllipticProblem {
        map,
        rhs,
        interface: Bc::Neumann(normal.sub(&data.theta)),
        wall: Bc::Dirichlet(InterfaceField::zeros(n)),
    };
    let phi = elliptic::solve_with_guess(&problem, tol, guess)?.field;
    Ok(partial.sub(&map.gradient(&phi)))
}

/// 6t⁵ − 15t⁴ + 10t³: C² step from 0 to 1 on [0, 1].
fn smootherstep(t: f64) -> f64 {
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// w − ∇φ with Δφ = div w, φ = 0 on Γ_f and ∂₃φ = 0 on the wall.
pub fn div_free_project(w: &BulkVector, map: &CoordinateMap) -> Result<BulkVector> {
    let [a, b, c] = &w.components;
    check_grid(map, &[a, b, c], &[])?;
    let n = map.n();
    let problem = EllipticProblem {
        map,
        rhs: map.divergence(w),
        interface: Bc::Dirichlet(InterfaceField::zeros(n)),
        wall: Bc::Neumann(InterfaceField::zeros(n)),
    };
    let phi = elliptic::solve(&problem, SOLVE_TOL)?.field;
    Ok(w.sub(&map.gradient(&phi)))
}

/// Residuals of the plasma-region conditions for a candidate v.
pub fn plasma_residuals(v: &BulkVector, data: &PlasmaDivCurlData, map: &CoordinateMap) -> [f64; 5] {
    let div = map.divergence(v).max_abs_diff(&data.g);
    let curl = map.curl(v).max_abs_diff(&data.omega);
    let normal = map.interface().dot_normal(&v.interface_trace()).max_abs_diff(&data.theta);
    let wall_normal = v.components[2].wall_trace().max_abs();
    let means = wall_means(v);
    let mean = (means[0] - data.alpha[0]).abs().max((means[1] - data.alpha[1]).abs());
    [div, curl, normal, wall_normal, mean]
}

/// Residuals of the five vacuum conditions (divergence, curl, interface
/// normal data and both tangential wall components) for a candidate ĥ.
pub fn vacuum_residuals(h: &BulkVector, data: &VacuumDivCurlData, map: &CoordinateMap) -> [f64; 5] {
    let div = map.divergence(h).max_abs_diff(&data.g);
    let curl = map.curl(h).max_abs_diff(&data.omega);
    let normal = map.interface().dot_normal(&h.interface_trace()).max_abs_diff(&data.theta);
    let [w1, w2, _] = h.wall_trace();
    let t1 = w2.max_abs_diff(&data.current[0]);
    let t2 = w1.scale(-1.0).max_abs_diff(&data.current[1]);
    [div, curl, normal, t1, t2]
}
