//! Stability monitor, energy functionals and residual checks.

use serde::{Deserialize, Serialize};

use crate::dynamics::CoefficientFreeze;
use crate::error::{Error, Result};
use crate::geometry::{BulkField, BulkVector, CoordinateMap};
use crate::spectral::{self, hs_norm, sobolev_weight, InterfaceField};
use crate::state::{assemble_pressure, compute_theta, PlasmaVacuumState, RecoveredFields, Setup};

/// Pointwise smallest eigenvalue of hhᵀ + ĥĥᵀ (2×2, tangential parts)
/// and its grid minimum.
pub fn stability_lambda(h: &[InterfaceField; 2], h_hat: &[InterfaceField; 2]) -> (InterfaceField, f64) {
    let n = h[0].n();
    let values: Vec<f64> = (0..n * n)
        .map(|p| {
            let (a1, a2) = (h[0].values()[p], h[1].values()[p]);
            let (b1, b2) = (h_hat[0].values()[p], h_hat[1].values()[p]);
            lambda_pair([a1, a2], [b1, b2]).0
        })
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (InterfaceField::new(n, values).unwrap_or_else(|_| InterfaceField::constant(n, f64::NAN)), min)
}

/// (λ_min, λ_max) of aaᵀ + bbᵀ.  The determinant is (a₁b₂ − a₂b₁)², which
/// gives λ_min without cancellation.
pub(crate) fn lambda_pair(a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let m11 = a[0] * a[0] + b[0] * b[0];
    let m12 = a[0] * a[1] + b[0] * b[1];
    let m22 = a[1] * a[1] + b[1] * b[1];
    let half_trace = 0.5 * (m11 + m22);
    let max = half_trace + (0.25 * (m11 - m22).powi(2) + m12 * m12).sqrt();
    let det = (a[0] * b[1] - a[1] * b[0]).powi(2);
    let min = if max > 0.0 { det / max } else { 0.0 };
    (min, max)
}

/// E_s: ‖(∂ₜ + uᵢ∂ᵢ)Dₛf̄‖² + ½‖hᵢ∂ᵢDₛf̄‖² + ½‖ĥᵢ∂ᵢDₛf̄‖² with Dₛ = ⟨∇⟩^{s−1/2}.
pub fn energy_es(f: &InterfaceField, f_dot: &InterfaceField, frozen: &CoefficientFreeze, s: f64) -> Result<f64> {
    let sigma = s - 0.5;
    let df = sobolev_weight(f, sigma)?;
    let ddot = sobolev_weight(f_dot, sigma)?;
    let (d1, d2) = spectral::gradient(&df);
    let along = |a: &[InterfaceField; 2]| a[0].mul(&d1).add(&a[1].mul(&d2));
    let transport = ddot.add(&along(&frozen.u));
    let sq = |g: &InterfaceField| hs_norm(g, 0.0).powi(2);
    Ok(sq(&transport) + 0.5 * sq(&along(&frozen.h)) + 0.5 * sq(&along(&frozen.h_hat)))
}

/// 𝓔_s = ‖f̄‖²_{H^{s+1/2}} + ‖∂ₜf̄‖²_{H^{s−1/2}}.
pub fn energy_std(f: &InterfaceField, f_dot: &InterfaceField, s: f64) -> f64 {
    hs_norm(f, s + 0.5).powi(2) + hs_norm(f_dot, s - 0.5).powi(2)
}

/// Residuals of the momentum and induction equations at the middle of
/// three samples, with the boundary conditions they inherit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitResiduals {
    pub time: f64,
    /// L² norms of w = ∂ₜu + u·∇u − h·∇h + ∇p and b = ∂ₜh − h·∇u + u·∇h.
    pub w_norm: f64,
    pub b_norm: f64,
    /// max |w·N_f| on Γ_f, max |w₃| on the wall, |∫_Γ w₁| + |∫_Γ w₂|.
    pub w_bc: [f64; 3],
    pub b_bc: [f64; 3],
}

/// Centered three-point weights for the derivative at t₁.
fn centered_weights(t: [f64; 3]) -> [f64; 3] {
    let (a, b) = (t[1] - t[0], t[2] - t[1]);
    [-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b))]
}

/// Time derivative at fixed physical points: the nodal difference minus
/// V∂₃v, where V is the nodal rate of the map height.
fn eulerian_rate(samples: [&BulkVector; 3], heights: [&BulkField; 3], w: [f64; 3], map: &CoordinateMap) -> BulkVector {
    let v = BulkField::combination(&[(w[0], heights[0]), (w[1], heights[1]), (w[2], heights[2])]);
    let nodal = BulkVector::combination(&[(w[0], samples[0]), (w[1], samples[1]), (w[2], samples[2])]);
    let d3: [BulkField; 3] = std::array::from_fn(|i| map.gradient(&samples[1].components[i]).components[2].mul(&v));
    nodal.sub(&BulkVector::new(d3))
}

fn boundary_report(w: &BulkVector, map: &CoordinateMap) -> [f64; 3] {
    let normal = map.interface().dot_normal(&w.interface_trace()).max_abs();
    let [w1, w2, w3] = w.wall_trace();
    [normal, w3.max_abs(), w1.integral().abs() + w2.integral().abs()]
}

/// w and b from the last three samples (time, recovered fields).
pub fn limit_residuals(history: &[(f64, &RecoveredFields)]) -> Result<LimitResiduals> {
    if history.len() < 3 {
        return Err(Error::InsufficientHistory { have: history.len(), need: 3 });
    }
    let last = &history[history.len() - 3..];
    let (n, m) = (last[1].1.u.n(), last[1].1.u.m());
    if last.iter().any(|(_, r)| r.u.n() != n || r.u.m() != m) {
        return Err(Error::GridMismatch("history samples use different grids".into()));
    }
    let t = [last[0].0, last[1].0, last[2].0];
    if !(t[0] < t[1] && t[1] < t[2]) {
        return Err(Error::InvalidField(format!("sample times must increase: {t:?}")));
    }
    let weights = centered_weights(t);
    let mid = last[1].1;
    let map = &mid.maps.plasma;
    let heights: Vec<BulkField> = last.iter().map(|(_, r)| r.maps.plasma.height()).collect();
    let heights = [&heights[0], &heights[1], &heights[2]];
    let du = eulerian_rate([&last[0].1.u, &mid.u, &last[2].1.u], heights, weights, map);
    let dh = eulerian_rate([&last[0].1.h, &mid.h, &last[2].1.h], heights, weights, map);
    let p = assemble_pressure(&mid.u, &mid.h, &mid.h_hat, &mid.maps)?;
    let grad_p = map.gradient(&p);
    let w = BulkVector::combination(&[
        (1.0, &du),
        (1.0, &map.metric().advect(&mid.u, &mid.u)),
        (-1.0, &map.metric().advect(&mid.h, &mid.h)),
        (1.0, &grad_p),
    ]);
    let b = BulkVector::combination(&[
        (1.0, &dh),
        (-1.0, &map.metric().advect(&mid.h, &mid.u)),
        (1.0, &map.metric().advect(&mid.u, &mid.h)),
    ]);
    Ok(LimitResiduals {
        time: t[1],
        w_norm: map.l2_norm_vec(&w),
        b_norm: map.l2_norm_vec(&b),
        w_bc: boundary_report(&w, map),
        b_bc: boundary_report(&b, map),
    })
}

/// max |div ω| and max |div j| over the plasma grid.
pub fn divergence_persistence(omega: &BulkVector, j: &BulkVector, map: &CoordinateMap) -> (f64, f64) {
    (map.divergence(omega).max_abs(), map.divergence(j).max_abs())
}

/// max |curl u − ω̃| and max |curl h − j̃|.
pub fn curl_mismatch(rec: &RecoveredFields) -> (f64, f64) {
    let map = &rec.maps.plasma;
    (map.curl(&rec.u).max_abs_diff(&rec.omega_tilde), map.curl(&rec.h).max_abs_diff(&rec.j_tilde))
}

/// Interface conditions, as max-norm trace residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceResiduals {
    /// p − ½|ĥ|² on Γ_f.
    pub pressure_balance: f64,
    pub h_normal: f64,
    pub h_hat_normal: f64,
    /// θ − u·N_f, with θ standing for ∂ₜf.
    pub kinematic: f64,
}

pub fn interface_residuals(state: &PlasmaVacuumState, rec: &RecoveredFields) -> Result<InterfaceResiduals> {
    let interface = rec.maps.interface();
    let p = assemble_pressure(&rec.u, &rec.h, &rec.h_hat, &rec.maps)?;
    let [k1, k2, k3] = rec.h_hat.interface_trace();
    let magnetic = InterfaceField::combination(&[(0.5, &k1.mul(&k1)), (0.5, &k2.mul(&k2)), (0.5, &k3.mul(&k3))]);
    Ok(InterfaceResiduals {
        pressure_balance: p.interface_trace().max_abs_diff(&magnetic),
        h_normal: interface.dot_normal(&rec.h.interface_trace()).max_abs(),
        h_hat_normal: interface.dot_normal(&rec.h_hat.interface_trace()).max_abs(),
        kinematic: state.theta.max_abs_diff(&compute_theta(&rec.u, interface)),
    })
}

/// One line of the diagnostics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub lambda_min: f64,
    pub e_s: f64,
    pub e_std: f64,
    pub mean_f_drift: f64,
    pub mean_theta: f64,
    pub hn_residual: f64,
    pub h_hat_n_residual: f64,
    pub pressure_balance_residual: f64,
    pub kinematic_residual: f64,
    /// Filled once the neighbouring samples are known; null at the ends.
    pub w_norm: Option<f64>,
    pub b_norm: Option<f64>,
    pub div_residuals: [f64; 2],
}

impl DiagnosticsRecord {
    /// Everything that depends on a single sample.  The energies use
    /// f − f_* and θ with the sample's own coefficients.
    pub fn from_sample(
        step: usize,
        state: &PlasmaVacuumState,
        rec: &RecoveredFields,
        setup: &Setup,
        mean_f0: f64,
    ) -> Result<Self> {
        let frozen = CoefficientFreeze::from_recovered(rec, InterfaceField::zeros(state.n()));
        let f_bar = state.f.sub(&setup.reference().f);
        let residuals = interface_residuals(state, rec)?;
        let (div_omega, div_j) = divergence_persistence(&rec.omega_tilde, &rec.j_tilde, &rec.maps.plasma);
        Ok(Self {
            step,
            t: state.time,
            lambda_min: frozen.lambda_min(),
            e_s: energy_es(&f_bar, &state.theta, &frozen, setup.s())?,
            e_std: energy_std(&f_bar, &state.theta, setup.s()),
            mean_f_drift: (state.f.mean() - mean_f0).abs(),
            mean_theta: state.theta.mean().abs(),
            hn_residual: residuals.h_normal,
            h_hat_n_residual: residuals.h_hat_normal,
            pressure_balance_residual: residuals.pressure_balance,
            kinematic_residual: residuals.kinematic,
            w_norm: None,
            b_norm: None,
            div_residuals: [div_omega, div_j],
        })
    }

    pub fn with_limit(mut self, limit: &LimitResiduals) -> Self {
        self.w_norm = Some(limit.w_norm);
        self.b_norm = Some(limit.b_norm);
        self
    }

    pub fn is_finite(&self) -> bool {
        let opt = |x: Option<f64>| x.is_none_or(f64::is_finite);
        [
            self.t,
            self.lambda_min,
            self.e_s,
            self.e_std,
            self.mean_f_drift,
            self.mean_theta,
            self.hn_residual,
            self.h_hat_n_residual,
            self.pressure_balance_residual,
            self.kinematic_residual,
            self.div_residuals[0],
            self.div_residuals[1],
        ]
        .iter()
        .all(|x| x.is_finite())
            && opt(self.w_norm)
            && opt(self.b_norm)
    }
}
