//! Right-hand sides of the evolution and explicit time stepping.
//!
//! The canonical mode advances the limit system directly: every stage
//! recovers u, h, ĥ from the current unknowns.  Vorticity and current are
//! stored on the reference nodes, so their rates carry the mesh term
//! V ∂₃ω with V = ∂ₜΦ³ the harmonic extension of ∂ₜf.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{lambda_pair, stability_lambda};
use crate::elliptic::{self, Bc, EllipticProblem, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::geometry::{BulkField, BulkVector, CoordinateMap, MapMetric, Side};
use crate::spectral::{self, InterfaceField};
use crate::state::{recover, MapPair, PlasmaVacuumState, RecoveredFields, Setup};

/// Interface traces of u, h, ĥ (tangential parts) and the source 𝔤,
/// frozen as coefficients of the linearized interface equation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFreeze {
    pub u: [InterfaceField; 2],
    pub h: [InterfaceField; 2],
    pub h_hat: [InterfaceField; 2],
    pub g: InterfaceField,
}

impl CoefficientFreeze {
    pub fn from_recovered(rec: &RecoveredFields, g: InterfaceField) -> Self {
        let [u1, u2, _] = rec.u.interface_trace();
        let [h1, h2, _] = rec.h.interface_trace();
        let [k1, k2, _] = rec.h_hat.interface_trace();
        Self { u: [u1, u2], h: [h1, h2], h_hat: [k1, k2], g }
    }

    /// Spatially constant coefficients.
    pub fn constant(n: usize, u: [f64; 2], h: [f64; 2], h_hat: [f64; 2], g: f64) -> Self {
        let c = |v: [f64; 2]| [InterfaceField::constant(n, v[0]), InterfaceField::constant(n, v[1])];
        Self { u: c(u), h: c(h), h_hat: c(h_hat), g: InterfaceField::constant(n, g) }
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn lambda_min(&self) -> f64 {
        stability_lambda(&self.h, &self.h_hat).1
    }

    pub fn combination(terms: &[(f64, &Self)]) -> Self {
        let pick = |sel: &dyn Fn(&Self) -> &InterfaceField| {
            let parts: Vec<(f64, &InterfaceField)> = terms.iter().map(|(c, x)| (*c, sel(x))).collect();
            InterfaceField::combination(&parts)
        };
        Self {
            u: [pick(&|x| &x.u[0]), pick(&|x| &x.u[1])],
            h: [pick(&|x| &x.h[0]), pick(&|x| &x.h[1])],
            h_hat: [pick(&|x| &x.h_hat[0]), pick(&|x| &x.h_hat[1])],
            g: pick(&|x| &x.g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepConfig {
    /// Fixed step; `None` selects the CFL step.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub integrator: Integrator,
}

impl Default for TimeStepConfig {
    fn default() -> Self {
        Self { dt: None, cfl: 0.4, dt_max: 0.05, t_end: 1.0, integrator: Integrator::Rk4 }
    }
}

impl TimeStepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |x: f64| !(x.is_finite() && x > 0.0);
        if self.dt.is_some_and(bad) || bad(self.cfl) || bad(self.dt_max) || !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidField(format!("invalid time-step configuration {self:?}")));
        }
        Ok(())
    }
}

/// Time derivative of every unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate {
    pub f: InterfaceField,
    pub theta: InterfaceField,
    pub omega: BulkVector,
    pub j: BulkVector,
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
}

impl StateRate {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            f: InterfaceField::zeros(n),
            theta: InterfaceField::zeros(n),
            omega: BulkVector::zeros(n, m, Side::Plasma),
            j: BulkVector::zeros(n, m, Side::Plasma),
            beta: [0.0; 2],
            gamma: [0.0; 2],
        }
    }
}

/// state + Σ cᵢ rateᵢ, with the time advanced by `dt`.
pub fn advance(state: &PlasmaVacuumState, dt: f64, terms: &[(f64, &StateRate)]) -> PlasmaVacuumState {
    let mut f = vec![(1.0, &state.f)];
    let mut theta = vec![(1.0, &state.theta)];
    let mut omega = vec![(1.0, &state.omega)];
    let mut j = vec![(1.0, &state.j)];
    let mut beta = state.beta;
    let mut gamma = state.gamma;
    for &(c, r) in terms {
        f.push((c, &r.f));
        theta.push((c, &r.theta));
        omega.push((c, &r.omega));
        j.push((c, &r.j));
        for i in 0..2 {
            beta[i] += c * r.beta[i];
            gamma[i] += c * r.gamma[i];
        }
    }
    PlasmaVacuumState {
        f: InterfaceField::combination(&f),
        theta: InterfaceField::combination(&theta),
        omega: BulkVector::combination(&omega),
        j: BulkVector::combination(&j),
        beta,
        gamma,
        time: state.time + dt,
    }
}

/// 𝔤 = −N_f·∇(p_{u,u} − p_{h,h})|_Γ − ½N_f·∇(|ĥ|² − Ĥ_f⁺|ĥ|²)|_Γ + ½N̄_f|ĥ|².
pub fn g_source(u: &BulkVector, h: &BulkVector, h_hat: &BulkVector, maps: &MapPair) -> Result<InterfaceField> {
    let (pm, vm) = (&maps.plasma, &maps.vacuum);
    let q = h_hat.norm_sq();
    let (puh, (ext, bar)) = rayon::join(
        || {
            let source = elliptic::pressure_source(u, u, pm).sub(&elliptic::pressure_source(h, h, pm));
            elliptic::solve_pressure_source(source, pm)
        },
        || rayon::join(|| elliptic::harmonic_extension_hat(&q, vm), || elliptic::dn_bar(&q, vm, pm)),
    );
    let first = pm.interface_conormal(&puh?);
    let second = vm.interface_conormal(&q.sub(&ext?));
    Ok(InterfaceField::combination(&[(-1.0, &first), (-0.5, &second), (0.5, &bar?)]))
}

/// −2(u₁∂₁θ + u₂∂₂θ) − Σᵢⱼ(uᵢuⱼ − hᵢhⱼ − ĥᵢĥⱼ)∂ᵢ∂ⱼf + 𝔤, dealiased.
fn interface_rhs(theta: &InterfaceField, f: &InterfaceField, c: &CoefficientFreeze, fraction: f64) -> InterfaceField {
    let (t1, t2) = spectral::gradient(theta);
    let [f11, f12, f22] = spectral::hessian(f);
    let [u1, u2] = &c.u;
    let [h1, h2] = &c.h;
    let [k1, k2] = &c.h_hat;
    let a11 = InterfaceField::combination(&[(1.0, &u1.mul(u1)), (-1.0, &h1.mul(h1)), (-1.0, &k1.mul(k1))]);
    let a12 = InterfaceField::combination(&[(1.0, &u1.mul(u2)), (-1.0, &h1.mul(h2)), (-1.0, &k1.mul(k2))]);
    let a22 = InterfaceField::combination(&[(1.0, &u2.mul(u2)), (-1.0, &h2.mul(h2)), (-1.0, &k2.mul(k2))]);
    let rhs = InterfaceField::combination(&[
        (-2.0, &u1.mul(&t1)),
        (-2.0, &u2.mul(&t2)),
        (-1.0, &a11.mul(&f11)),
        (-2.0, &a12.mul(&f12)),
        (-1.0, &a22.mul(&f22)),
        (1.0, &c.g),
    ]);
    let settings = spectral::SpectralSettings { n: theta.n(), dealias_fraction: fraction, s: 3 };
    spectral::dealias(&rhs, &settings)
}

fn check_hyperbolic(c: &CoefficientFreeze, c1: Option<f64>) -> Result<()> {
    if let Some(c1) = c1 {
        let lambda_min = c.lambda_min();
        if !(lambda_min >= c1) {
            return Err(Error::StabilityError { lambda_min, threshold: c1 });
        }
    }
    Ok(())
}

/// ∂ₜθ of the nonlinear interface equation with the traces of the
/// recovered fields and a precomputed 𝔤.
pub fn theta_rhs(
    state: &PlasmaVacuumState,
    rec: &RecoveredFields,
    g: &InterfaceField,
    setup: &Setup,
) -> Result<InterfaceField> {
    let frozen = CoefficientFreeze::from_recovered(rec, g.clone());
    check_hyperbolic(&frozen, setup.enforce_stability.then_some(setup.c1))?;
    Ok(interface_rhs(&state.theta, &state.f, &frozen, setup.settings.dealias_fraction))
}

/// (∂ₜf̄, ∂ₜθ̄) = (θ̄, −2uᵢ∂ᵢθ̄ + Σ(−uᵢuⱼ + hᵢhⱼ + ĥᵢĥⱼ)∂ᵢ∂ⱼf̄ + 𝔤).  With
/// `c1` given, frozen coefficients with Λ < c₁ are rejected.
pub fn linearized_rhs(
    f: &InterfaceField,
    theta: &InterfaceField,
    frozen: &CoefficientFreeze,
    c1: Option<f64>,
) -> Result<(InterfaceField, InterfaceField)> {
    linearized_rhs_dealiased(f, theta, frozen, c1, 1.0)
}

pub(crate) fn linearized_rhs_dealiased(
    f: &InterfaceField,
    theta: &InterfaceField,
    frozen: &CoefficientFreeze,
    c1: Option<f64>,
    fraction: f64,
) -> Result<(InterfaceField, InterfaceField)> {
    check_hyperbolic(frozen, c1)?;
    Ok((theta.clone(), interface_rhs(theta, f, frozen, fraction)))
}

fn cross(a: &BulkVector, b: &BulkVector) -> BulkVector {
    let [a1, a2, a3] = &a.components;
    let [b1, b2, b3] = &b.components;
    BulkVector::new([
        a2.mul(b3).sub(&a3.mul(b2)),
        a3.mul(b1).sub(&a1.mul(b3)),
        a1.mul(b2).sub(&a2.mul(b1)),
    ])
}

/// ∂ₜω = −u·∇ω + h·∇j + ω·∇u − j·∇h and
/// ∂ₜj = −u·∇j + h·∇ω + j·∇u − ω·∇h − 2Σᵢ∇uᵢ×∇hᵢ in Ω_f.
pub fn vorticity_rhs(
    omega: &BulkVector,
    j: &BulkVector,
    u: &BulkVector,
    h: &BulkVector,
    map: &CoordinateMap,
) -> (BulkVector, BulkVector) {
    vorticity_rhs_metric(omega, j, u, h, map.metric())
}

/// [`vorticity_rhs`] on a bare metric, e.g. one interpolated in time.
pub fn vorticity_rhs_metric(
    omega: &BulkVector,
    j: &BulkVector,
    u: &BulkVector,
    h: &BulkVector,
    metric: &MapMetric,
) -> (BulkVector, BulkVector) {
    let omega_dot = BulkVector::combination(&[
        (-1.0, &metric.advect(u, omega)),
        (1.0, &metric.advect(h, j)),
        (1.0, &metric.advect(omega, u)),
        (-1.0, &metric.advect(j, h)),
    ]);
    let mut terms = vec![
        metric.advect(u, j).scale(-1.0),
        metric.advect(h, omega),
        metric.advect(j, u),
        metric.advect(omega, h).scale(-1.0),
    ];
    for i in 0..3 {
        let gu = metric.gradient(&u.components[i]);
        let gh = metric.gradient(&h.components[i]);
        terms.push(cross(&gu, &gh).scale(-2.0));
    }
    let refs: Vec<(f64, &BulkVector)> = terms.iter().map(|t| (1.0, t)).collect();
    (omega_dot, BulkVector::combination(&refs))
}

/// (β̇₁, β̇₂, γ̇₁, γ̇₂) with β̇ᵢ = −∫_Γ(uⱼ∂ⱼuᵢ − hⱼ∂ⱼhᵢ) and
/// γ̇ᵢ = −∫_Γ(uⱼ∂ⱼhᵢ − hⱼ∂ⱼuᵢ), j = 1, 2, on the wall.
pub fn beta_gamma_rhs(u: &BulkVector, h: &BulkVector) -> [f64; 4] {
    let [u1, u2, _] = u.wall_trace();
    let [h1, h2, _] = h.wall_trace();
    let du = [spectral::gradient(&u1), spectral::gradient(&u2)];
    let dh = [spectral::gradient(&h1), spectral::gradient(&h2)];
    let (uu, hh) = ([&u1, &u2], [&h1, &h2]);
    let along = |a: [&InterfaceField; 2], d: &(InterfaceField, InterfaceField)| a[0].mul(&d.0).add(&a[1].mul(&d.1));
    let mut out = [0.0; 4];
    for i in 0..2 {
        out[i] = -(along(uu, &du[i]).sub(&along(hh, &dh[i]))).integral();
        out[2 + i] = -(along(uu, &dh[i]).sub(&along(hh, &du[i]))).integral();
    }
    out
}

/// ∂ₜΦ³ of the harmonic map: harmonic on the reference strip, equal to
/// ∂ₜf on the interface and zero on the wall.
pub fn mesh_velocity(f_dot: &InterfaceField, reference: &CoordinateMap) -> Result<BulkField> {
    let n = reference.n();
    let problem = EllipticProblem {
        map: reference,
        rhs: BulkField::zeros(n, reference.m(), reference.side()),
        interface: Bc::Dirichlet(f_dot.clone()),
        wall: Bc::Dirichlet(InterfaceField::zeros(n)),
    };
    Ok(elliptic::solve(&problem, DEFAULT_TOL)?.field)
}

/// Adds V ∂₃w to the physical rate of a field stored on reference nodes.
pub(crate) fn add_mesh_term(rate: &BulkVector, w: &BulkVector, v: &BulkField, metric: &MapMetric) -> BulkVector {
    BulkVector::new(std::array::from_fn(|i| {
        let d3 = metric.gradient(&w.components[i]).components[2].clone();
        rate.components[i].add(&v.mul(&d3))
    }))
}

/// Rate of the full nonlinear system together with the fields recovered
/// at the given state.
pub fn state_rhs(state: &PlasmaVacuumState, setup: &Setup) -> Result<(StateRate, RecoveredFields)> {
    let rec = recover(state, setup)?;
    let g = g_source(&rec.u, &rec.h, &rec.h_hat, &rec.maps)?;
    let theta = theta_rhs(state, &rec, &g, setup)?;
    let f = spectral::mean_project(&state.theta);
    let map = &rec.maps.plasma;
    let (omega_phys, j_phys) = vorticity_rhs(&state.omega, &state.j, &rec.u, &rec.h, map);
    let v = mesh_velocity(&f, setup.reference_map(Side::Plasma))?;
    let omega = add_mesh_term(&omega_phys, &state.omega, &v, map.metric());
    let j = add_mesh_term(&j_phys, &state.j, &v, map.metric());
    let bg = beta_gamma_rhs(&rec.u, &rec.h);
    let rate = StateRate { f, theta, omega, j, beta: [bg[0], bg[1]], gamma: [bg[2], bg[3]] };
    Ok((rate, rec))
}

/// Post-step normalization: ⟨θ⟩ = 0, ⟨f⟩ = ⟨f₀⟩, dealiasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostStep {
    pub mean_f: f64,
    pub dealias_fraction: f64,
}

impl PostStep {
    pub fn apply(&self, state: PlasmaVacuumState) -> PlasmaVacuumState {
        let settings = spectral::SpectralSettings { n: state.n(), dealias_fraction: self.dealias_fraction, s: 3 };
        let f = spectral::dealias(&state.f, &settings);
        let f = f.add_scalar(self.mean_f - f.mean());
        let theta = spectral::mean_project(&spectral::dealias(&state.theta, &settings));
        PlasmaVacuumState {
            f,
            theta,
            omega: state.omega.dealias(self.dealias_fraction),
            j: state.j.dealias(self.dealias_fraction),
            ..state
        }
    }
}

/// One classical RK4 step.  `first` is the rate at `state` when already
/// known; `rhs` evaluates the rate at a stage state.
pub fn rk4_step<F>(
    state: &PlasmaVacuumState,
    dt: f64,
    first: Option<StateRate>,
    mut rhs: F,
    post: &PostStep,
) -> Result<PlasmaVacuumState>
where
    F: FnMut(&PlasmaVacuumState) -> Result<StateRate>,
{
    let k1 = match first {
        Some(k) => k,
        None => rhs(state)?,
    };
    let k2 = rhs(&advance(state, 0.5 * dt, &[(0.5 * dt, &k1)]))?;
    let k3 = rhs(&advance(state, 0.5 * dt, &[(0.5 * dt, &k2)]))?;
    let k4 = rhs(&advance(state, dt, &[(dt, &k3)]))?;
    let next = advance(state, dt, &[(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)]);
    let next = post.apply(next);
    if !next.is_finite() {
        return Err(Error::InvalidField("non-finite state after time step".into()));
    }
    Ok(next)
}

/// Largest stable step: cfl·Δx / c_max with
/// c_max = max_Γ(2|u| + √λ_max(hhᵀ + ĥĥᵀ)) + max_Ω(|u| + |h|), capped at dt_max.
pub fn cfl_dt(rec: &RecoveredFields, cfl: f64, dt_max: f64) -> f64 {
    let [u1, u2, _] = rec.u.interface_trace();
    let [h1, h2, _] = rec.h.interface_trace();
    let [k1, k2, _] = rec.h_hat.interface_trace();
    let n = u1.n();
    let mut surface: f64 = 0.0;
    for p in 0..n * n {
        let speed = u1.values()[p].hypot(u2.values()[p]);
        let (_, max) = lambda_pair([h1.values()[p], h2.values()[p]], [k1.values()[p], k2.values()[p]]);
        surface = surface.max(2.0 * speed + max.sqrt());
    }
    let speed = |v: &BulkVector| v.norm_sq().values().iter().copied().fold(0.0, f64::max).sqrt();
    let c_max = surface + speed(&rec.u) + speed(&rec.h);
    let dx = 2.0 * PI / n as f64;
    if c_max > 0.0 {
        (cfl * dx / c_max).min(dt_max)
    } else {
        dt_max
    }
}

/// What the driver hands to its observer before every step (and once at
/// the final time, with `dt = 0`).
pub struct StepView<'a> {
    pub step: usize,
    pub state: &'a PlasmaVacuumState,
    pub recovered: &'a RecoveredFields,
    pub rate: &'a StateRate,
    pub dt: f64,
}

/// Outcome of a time integration.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: PlasmaVacuumState,
    pub steps: usize,
    pub reached_end: bool,
}

/// Advances the nonlinear system from `initial` to `cfg.t_end`.
pub fn integrate<O>(
    initial: PlasmaVacuumState,
    setup: &Setup,
    cfg: &TimeStepConfig,
    max_steps: Option<usize>,
    mut observer: O,
) -> Result<RunOutcome>
where
    O: FnMut(&StepView) -> Result<()>,
{
    cfg.validate()?;
    let post = PostStep { mean_f: setup.reference().f.mean(), dealias_fraction: setup.settings.dealias_fraction };
    let mut state = initial;
    let mut steps = 0;
    loop {
        let (rate, rec) = state_rhs(&state, setup)?;
        let remaining = cfg.t_end - state.time;
        let done = remaining <= 1e-12 * cfg.t_end.max(1.0);
        if done || max_steps.is_some_and(|cap| steps >= cap) {
            observer(&StepView { step: steps, state: &state, recovered: &rec, rate: &rate, dt: 0.0 })?;
            return Ok(RunOutcome { state, steps, reached_end: done });
        }
        let bound = cfl_dt(&rec, cfg.cfl, cfg.dt_max);
        let dt = match cfg.dt {
            Some(dt) if dt > bound * (1.0 + 1e-12) => return Err(Error::TimeStepTooLarge { dt, bound }),
            Some(dt) => dt,
            None => bound,
        };
        // Land exactly on t_end; avoid a sliver of a final step.
        let dt = if remaining < 1.5 * dt && cfg.dt.is_none() && remaining > dt {
            0.5 * remaining
        } else {
            dt.min(remaining)
        };
        observer(&StepView { step: steps, state: &state, recovered: &rec, rate: &rate, dt })?;
        state = rk4_step(&state, dt, Some(rate), |s| Ok(state_rhs(s, setup)?.0), &post)?;
        steps += 1;
    }
}

/// (f̄, θ̄) of the linearized interface equation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearState {
    pub f: InterfaceField,
    pub theta: InterfaceField,
    pub time: f64,
}

/// One RK4 step of the linearized system with coefficients given as a
/// function of time.  Afterwards ⟨f̄⟩ is reset to `mean_f`; θ̄ keeps its
/// mean, which the linearization does not control.
pub fn linear_rk4_step<C>(
    state: &LinearState,
    dt: f64,
    coefficients: C,
    c1: Option<f64>,
    mean_f: f64,
) -> Result<LinearState>
where
    C: Fn(f64) -> CoefficientFreeze,
{
    let t = state.time;
    let rate = |f: &InterfaceField, theta: &InterfaceField, time: f64| linearized_rhs(f, theta, &coefficients(time), c1);
    let (a1, b1) = rate(&state.f, &state.theta, t)?;
    let (a2, b2) = rate(&state.f.axpy(0.5 * dt, &a1), &state.theta.axpy(0.5 * dt, &b1), t + 0.5 * dt)?;
    let (a3, b3) = rate(&state.f.axpy(0.5 * dt, &a2), &state.theta.axpy(0.5 * dt, &b2), t + 0.5 * dt)?;
    let (a4, b4) = rate(&state.f.axpy(dt, &a3), &state.theta.axpy(dt, &b3), t + dt)?;
    let w = [dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0];
    let f = InterfaceField::combination(&[(1.0, &state.f), (w[0], &a1), (w[1], &a2), (w[2], &a3), (w[3], &a4)]);
    let theta =
        InterfaceField::combination(&[(1.0, &state.theta), (w[0], &b1), (w[1], &b2), (w[2], &b3), (w[3], &b4)]);
    let f = f.add_scalar(mean_f - f.mean());
    Ok(LinearState { f, theta, time: t + dt })
}
