//! Picard mode: trajectories on a fixed time grid, the iteration space
//! checks, the linearize-and-resolve map and its contraction metric.
//!
//! A trajectory stores full states; `theta` carries ∂ₜf.  The linear
//! stages advance (f̄₁, θ̄, ω̄_*, j̄_*, β̄, γ̄) with RK4 against a background
//! interpolated in time from the samples (cubic Lagrange, four nearest
//! samples).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, add_mesh_term, beta_gamma_rhs, g_source, linearized_rhs_dealiased, mesh_velocity, state_rhs,
    vorticity_rhs_metric, CoefficientFreeze, StateRate,
};
use crate::elliptic::bulk_hs_norm_vec;
use crate::error::{Error, Result};
use crate::geometry::{BulkField, BulkVector, CoordinateMap, MapMetric, Side};
use crate::spectral::{self, hs_norm, InterfaceField};
use crate::state::{recover, InitialData, PlasmaVacuumState, Setup};

/// Relative tolerance for "sample 0 equals the initial data".
pub const INITIAL_MATCH_TOL: f64 = 1e-12;
/// Absolute tolerance of the compatibility integrals, scaled by max(1, M₁).
pub const MCOMP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub m1: f64,
    pub m2: f64,
    pub delta0: f64,
    /// Time horizon T.
    pub t_horizon: f64,
    /// Number of steps of the sample grid on [0, T].
    pub steps: usize,
    pub max_iters: usize,
    pub contraction_tol: f64,
}

impl IterationConfig {
    pub fn validate(&self, m0: f64) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.t_horizon > 0.0 && self.t_horizon.is_finite()) {
            problems.push(format!("T = {} must be positive", self.t_horizon));
        }
        if !(self.m1 >= 2.0 * m0) {
            problems.push(format!("M1 = {} must be at least 2 M0 = {}", self.m1, 2.0 * m0));
        }
        if !(self.m2 > 0.0) {
            problems.push(format!("M2 = {} must be positive", self.m2));
        }
        if !(self.delta0 > 0.0) {
            problems.push(format!("delta0 = {} must be positive", self.delta0));
        }
        if self.steps == 0 || self.max_iters == 0 {
            problems.push("steps and max_iters must be positive".into());
        }
        if !(self.contraction_tol > 0.0) {
            problems.push(format!("contraction_tol = {} must be positive", self.contraction_tol));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidField(problems.join("; ")))
        }
    }

    /// M₁ = 2 max(M₀, ‖data‖_𝓧), M₂ = 2 max(M₀, initial rate norms), and
    /// a step count that respects the CFL bound of the initial data.
    pub fn calibrated(initial: &InitialData, setup: &Setup, t_horizon: f64, cfl: f64) -> Result<Self> {
        let map = setup.reference_map(Side::Plasma);
        let s = setup.s();
        let (rate, rec) = state_rhs(&initial.state, setup)?;
        let m1 = 2.0 * initial.m0.max(x_norm(&initial.state, map, s));
        let m2 = 2.0 * initial.m0.max(rate_norm(&rate, map, s));
        let dt = dynamics::cfl_dt(&rec, cfl, t_horizon);
        let steps = ((t_horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self { m1, m2, delta0: 0.5, t_horizon, steps, max_iters: 20, contraction_tol: 1e-10 })
    }
}

/// States sampled at tₖ = kT/K, k = 0..=K.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCandidate {
    pub samples: Vec<PlasmaVacuumState>,
}

impl TrajectoryCandidate {
    /// The state held constant on the grid.
    pub fn constant(state: &PlasmaVacuumState, t_horizon: f64, steps: usize) -> Self {
        let samples = (0..=steps)
            .map(|k| PlasmaVacuumState { time: t_horizon * k as f64 / steps as f64, ..state.clone() })
            .collect();
        Self { samples }
    }

    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.samples[1].time - self.samples[0].time
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    fn check_grid(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::InsufficientHistory { have: self.samples.len(), need: 2 });
        }
        let dt = self.dt();
        let (n, m) = (self.samples[0].n(), self.samples[0].m());
        for (k, s) in self.samples.iter().enumerate() {
            if s.n() != n || s.m() != m {
                return Err(Error::GridMismatch(format!("sample {k} has a different grid")));
            }
            if (s.time - k as f64 * dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::GridMismatch(format!("sample {k} is off the uniform time grid")));
            }
        }
        Ok(())
    }
}

fn bulk_pair_norm(a: &BulkVector, b: &BulkVector, map: &CoordinateMap, sigma: f64) -> f64 {
    bulk_hs_norm_vec(a, map, sigma) + bulk_hs_norm_vec(b, map, sigma)
}

fn scalars(beta: [f64; 2], gamma: [f64; 2]) -> f64 {
    beta[0].abs() + beta[1].abs() + gamma[0].abs() + gamma[1].abs()
}

/// ‖f‖_{H^{s+1/2}} + ‖∂ₜf‖_{H^{s−1/2}} + ‖ω_*‖_{H^{s−1}} + ‖j_*‖_{H^{s−1}} + |β| + |γ|.
pub fn x_norm(state: &PlasmaVacuumState, map: &CoordinateMap, s: f64) -> f64 {
    hs_norm(&state.f, s + 0.5)
        + hs_norm(&state.theta, s - 0.5)
        + bulk_pair_norm(&state.omega, &state.j, map, s - 1.0)
        + scalars(state.beta, state.gamma)
}

/// ‖∂ₜ²f‖_{H^{s−3/2}} + ‖∂ₜω_*‖_{H^{s−2}} + ‖∂ₜj_*‖_{H^{s−2}} + |∂ₜβ| + |∂ₜγ|.
pub fn rate_norm(rate: &StateRate, map: &CoordinateMap, s: f64) -> f64 {
    hs_norm(&rate.theta, s - 1.5) + bulk_pair_norm(&rate.omega, &rate.j, map, s - 2.0) + scalars(rate.beta, rate.gamma)
}

/// Second-order finite-difference rates of a sampled trajectory.
fn sampled_rates(c: &TrajectoryCandidate) -> Vec<StateRate> {
    let k_max = c.steps();
    let dt = c.dt();
    let s = &c.samples;
    (0..=k_max)
        .map(|k| {
            let (idx, w): (Vec<usize>, Vec<f64>) = if k_max == 1 {
                (vec![0, 1], vec![-1.0 / dt, 1.0 / dt])
            } else if k == 0 {
                (vec![0, 1, 2], vec![-1.5 / dt, 2.0 / dt, -0.5 / dt])
            } else if k == k_max {
                (vec![k - 2, k - 1, k], vec![0.5 / dt, -2.0 / dt, 1.5 / dt])
            } else {
                (vec![k - 1, k + 1], vec![-0.5 / dt, 0.5 / dt])
            };
            let pick_i = |sel: &dyn Fn(&PlasmaVacuumState) -> &InterfaceField| {
                let terms: Vec<(f64, &InterfaceField)> = idx.iter().zip(&w).map(|(&i, &c)| (c, sel(&s[i]))).collect();
                InterfaceField::combination(&terms)
            };
            let pick_b = |sel: &dyn Fn(&PlasmaVacuumState) -> &BulkVector| {
                let terms: Vec<(f64, &BulkVector)> = idx.iter().zip(&w).map(|(&i, &c)| (c, sel(&s[i]))).collect();
                BulkVector::combination(&terms)
            };
            let pick_s = |sel: &dyn Fn(&PlasmaVacuumState) -> [f64; 2]| {
                let mut out = [0.0; 2];
                for (&i, &c) in idx.iter().zip(&w) {
                    let v = sel(&s[i]);
                    out[0] += c * v[0];
                    out[1] += c * v[1];
                }
                out
            };
            StateRate {
                f: pick_i(&|x| &x.f),
                theta: pick_i(&|x| &x.theta),
                omega: pick_b(&|x| &x.omega),
                j: pick_b(&|x| &x.j),
                beta: pick_s(&|x| x.beta),
                gamma: pick_s(&|x| x.gamma),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipEntry {
    pub condition: String,
    pub measured: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub entries: Vec<MembershipEntry>,
}

impl MembershipReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, condition: &str) -> Option<&MembershipEntry> {
        self.entries.iter().find(|e| e.condition == condition)
    }

    fn failures(&self) -> String {
        self.entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| format!("{}: {:e} > {:e}", e.condition, e.measured, e.limit))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn state_distance(a: &PlasmaVacuumState, b: &PlasmaVacuumState) -> f64 {
    let d = |x: f64, y: f64| (x - y).abs();
    [
        a.f.max_abs_diff(&b.f),
        a.theta.max_abs_diff(&b.theta),
        a.omega.max_abs_diff(&b.omega),
        a.j.max_abs_diff(&b.j),
        d(a.beta[0], b.beta[0]),
        d(a.beta[1], b.beta[1]),
        d(a.gamma[0], b.gamma[0]),
        d(a.gamma[1], b.gamma[1]),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Per-condition report of membership in 𝓧(T, M₁, M₂).  Conditions:
/// `initial`, `drift` (sup ‖f − f_*‖_{H^{s−1/2}} ≤ δ₀), `m1`, `m2` and
/// `mcomp` (∫∂ₜf, ∫_Γ ω_*₃, ∫_Γ j_*₃).
pub fn membership_check(
    c: &TrajectoryCandidate,
    cfg: &IterationConfig,
    setup: &Setup,
    initial: &PlasmaVacuumState,
) -> Result<MembershipReport> {
    c.check_grid()?;
    let map = setup.reference_map(Side::Plasma);
    let s = setup.s();
    let f_star = &setup.reference().f;
    let scale = 1.0 + initial.omega.max_abs() + initial.j.max_abs() + initial.f.max_abs() + initial.theta.max_abs();
    let scale = scale + scalars(initial.beta, initial.gamma);
    let start = state_distance(&c.samples[0], initial);
    let rates = sampled_rates(c);
    let mut drift: f64 = 0.0;
    let mut m1: f64 = 0.0;
    let mut m2: f64 = 0.0;
    let mut mcomp: f64 = 0.0;
    for (state, rate) in c.samples.iter().zip(&rates) {
        drift = drift.max(hs_norm(&state.f.sub(f_star), s - 0.5));
        m1 = m1.max(x_norm(state, map, s));
        m2 = m2.max(rate_norm(rate, map, s));
        let flux = state.invariant_residuals();
        mcomp = mcomp.max(state.theta.integral().abs()).max(flux[1]).max(flux[2]);
    }
    let comp_limit = MCOMP_TOL * cfg.m1.max(1.0);
    let entry = |condition: &str, measured: f64, limit: f64| MembershipEntry {
        condition: condition.into(),
        measured,
        limit,
        pass: measured <= limit,
    };
    Ok(MembershipReport {
        entries: vec![
            entry("initial", start, INITIAL_MATCH_TOL * scale),
            entry("drift", drift, cfg.delta0),
            entry("m1", m1, cfg.m1),
            entry("m2", m2, cfg.m2),
            entry("mcomp", mcomp, comp_limit),
        ],
    })
}

/// Everything the linear stages need from one background sample.
#[derive(Clone)]
struct Background {
    coefficients: CoefficientFreeze,
    metric: MapMetric,
    u: BulkVector,
    h: BulkVector,
    /// Mesh velocity ∂ₜΦ³ of the background.
    v: BulkField,
    /// Background (β̇, γ̇).
    rates: [f64; 4],
}

impl Background {
    fn at(state: &PlasmaVacuumState, setup: &Setup) -> Result<Self> {
        let rec = recover(state, setup)?;
        let g = g_source(&rec.u, &rec.h, &rec.h_hat, &rec.maps)?;
        let v = mesh_velocity(&spectral::mean_project(&state.theta), setup.reference_map(Side::Plasma))?;
        Ok(Self {
            coefficients: CoefficientFreeze::from_recovered(&rec, g),
            metric: rec.maps.plasma.metric().clone(),
            rates: beta_gamma_rhs(&rec.u, &rec.h),
            u: rec.u,
            h: rec.h,
            v,
        })
    }

    fn combination(terms: &[(f64, &Background)]) -> Self {
        let coefficients: Vec<(f64, &CoefficientFreeze)> = terms.iter().map(|(c, b)| (*c, &b.coefficients)).collect();
        let metric: Vec<(f64, &MapMetric)> = terms.iter().map(|(c, b)| (*c, &b.metric)).collect();
        let u: Vec<(f64, &BulkVector)> = terms.iter().map(|(c, b)| (*c, &b.u)).collect();
        let h: Vec<(f64, &BulkVector)> = terms.iter().map(|(c, b)| (*c, &b.h)).collect();
        let v: Vec<(f64, &BulkField)> = terms.iter().map(|(c, b)| (*c, &b.v)).collect();
        let mut rates = [0.0; 4];
        for (c, b) in terms {
            for i in 0..4 {
                rates[i] += c * b.rates[i];
            }
        }
        Self {
            coefficients: CoefficientFreeze::combination(&coefficients),
            metric: MapMetric::combination(&metric),
            u: BulkVector::combination(&u),
            h: BulkVector::combination(&h),
            v: BulkField::combination(&v),
            rates,
        }
    }
}

/// Lagrange weights at `t` over up to four consecutive samples of a
/// uniform grid with spacing `dt`, returned as (first index, weights).
pub fn interpolation_weights(t: f64, dt: f64, samples: usize) -> (usize, Vec<f64>) {
    let width = samples.min(4);
    let pos = t / dt;
    let first = (pos.floor() as isize - (width as isize - 1) / 2).clamp(0, (samples - width) as isize) as usize;
    let nodes: Vec<f64> = (first..first + width).map(|k| k as f64).collect();
    let weights = (0..width)
        .map(|i| {
            (0..width)
                .filter(|&j| j != i)
                .map(|j| (pos - nodes[j]) / (nodes[i] - nodes[j]))
                .product()
        })
        .collect();
    (first, weights)
}

fn interpolate(backgrounds: &[Background], t: f64, dt: f64) -> Background {
    let (first, weights) = interpolation_weights(t, dt, backgrounds.len());
    let terms: Vec<(f64, &Background)> = weights.iter().enumerate().map(|(i, &w)| (w, &backgrounds[first + i])).collect();
    Background::combination(&terms)
}

fn linear_rate(state: &PlasmaVacuumState, bg: &Background, c1: Option<f64>, fraction: f64) -> Result<StateRate> {
    let (f, theta) = linearized_rhs_dealiased(&state.f, &state.theta, &bg.coefficients, c1, fraction)?;
    let (w, j) = vorticity_rhs_metric(&state.omega, &state.j, &bg.u, &bg.h, &bg.metric);
    Ok(StateRate {
        f,
        theta,
        omega: add_mesh_term(&w, &state.omega, &bg.v, &bg.metric),
        j: add_mesh_term(&j, &state.j, &bg.v, &bg.metric),
        beta: [bg.rates[0], bg.rates[1]],
        gamma: [bg.rates[2], bg.rates[3]],
    })
}

fn dealias_linear(state: PlasmaVacuumState, fraction: f64) -> PlasmaVacuumState {
    let settings = spectral::SpectralSettings { n: state.n(), dealias_fraction: fraction, s: 3 };
    PlasmaVacuumState {
        f: spectral::dealias(&state.f, &settings),
        theta: spectral::dealias(&state.theta, &settings),
        omega: state.omega.dealias(fraction),
        j: state.j.dealias(fraction),
        ..state
    }
}

/// f̄ = f̄₁ − ⟨f̄₁⟩ + ⟨f₀⟩ and ∂ₜf̄ = θ̄ − ⟨θ̄⟩.
fn corrected(state: &PlasmaVacuumState, mean_f0: f64) -> PlasmaVacuumState {
    PlasmaVacuumState {
        f: state.f.add_scalar(mean_f0 - state.f.mean()),
        theta: spectral::mean_project(&state.theta),
        ..state.clone()
    }
}

/// 𝓕(background): recover along the background, run the linear stages
/// from the initial data and apply the mean correction.
pub fn iterate_once(
    background: &TrajectoryCandidate,
    cfg: &IterationConfig,
    setup: &Setup,
    initial: &PlasmaVacuumState,
) -> Result<TrajectoryCandidate> {
    let report = membership_check(background, cfg, setup, initial)?;
    if !report.passed() {
        return Err(Error::MembershipViolation(report.failures()));
    }
    let backgrounds: Vec<Background> =
        background.samples.par_iter().map(|s| Background::at(s, setup)).collect::<Result<_>>()?;
    let dt = background.dt();
    let c1 = setup.enforce_stability.then_some(setup.c1);
    let fraction = setup.settings.dealias_fraction;
    let mean_f0 = initial.f.mean();
    let rate = |s: &PlasmaVacuumState| linear_rate(s, &interpolate(&backgrounds, s.time, dt), c1, fraction);
    let mut state = PlasmaVacuumState { time: 0.0, ..initial.clone() };
    let mut samples = vec![corrected(&state, mean_f0)];
    for k in 0..background.steps() {
        let k1 = rate(&state)?;
        let k2 = rate(&dynamics::advance(&state, 0.5 * dt, &[(0.5 * dt, &k1)]))?;
        let k3 = rate(&dynamics::advance(&state, 0.5 * dt, &[(0.5 * dt, &k2)]))?;
        let k4 = rate(&dynamics::advance(&state, dt, &[(dt, &k3)]))?;
        let next = dynamics::advance(&state, dt, &[(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)]);
        state = dealias_linear(next, fraction);
        state.time = background.samples[k + 1].time;
        if !state.is_finite() {
            return Err(Error::InvalidField("non-finite state in the linear stage".into()));
        }
        samples.push(corrected(&state, mean_f0));
    }
    Ok(TrajectoryCandidate { samples })
}

/// sup over samples of ‖f^D‖_{H^{s−1/2}} + ‖∂ₜf^D‖_{H^{s−3/2}} + ‖ω_*^D‖_{H^{s−2}}
/// + ‖j_*^D‖_{H^{s−2}} + |β^D| + |γ^D|, bulk norms on the reference strip.
pub fn iterate_distance(a: &TrajectoryCandidate, b: &TrajectoryCandidate, setup: &Setup) -> Result<f64> {
    if a.samples.len() != b.samples.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", a.samples.len(), b.samples.len())));
    }
    let map = setup.reference_map(Side::Plasma);
    let s = setup.s();
    let mut sup: f64 = 0.0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        if x.n() != y.n() || x.m() != y.m() || (x.time - y.time).abs() > 1e-12 * x.time.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("samples at t = {} and t = {} differ in grid", x.time, y.time)));
        }
        let beta = [x.beta[0] - y.beta[0], x.beta[1] - y.beta[1]];
        let gamma = [x.gamma[0] - y.gamma[0], x.gamma[1] - y.gamma[1]];
        let d = hs_norm(&x.f.sub(&y.f), s - 0.5)
            + hs_norm(&x.theta.sub(&y.theta), s - 1.5)
            + bulk_pair_norm(&x.omega.sub(&y.omega), &x.j.sub(&y.j), map, s - 2.0)
            + scalars(beta, gamma);
        sup = sup.max(d);
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub t_horizon: f64,
    pub steps: usize,
    /// Distance between iterates n and n+1 (iterate 0 is the constant
    /// extension of the data).
    pub distances: Vec<f64>,
    /// distances[n+1] / distances[n].
    pub ratios: Vec<f64>,
    pub converged: bool,
}

impl ContractionReport {
    /// Longest run of consecutive ratios at or below `bound`.
    pub fn longest_run_below(&self, bound: f64) -> usize {
        let mut best = 0;
        let mut run = 0;
        for &r in &self.ratios {
            run = if r <= bound { run + 1 } else { 0 };
            best = best.max(run);
        }
        best
    }
}

/// Number of consecutive ratios above one that signals divergence.
pub const DIVERGENCE_RUN: usize = 3;

/// Iterates 𝓕 from the constant extension of the data until successive
/// distances fall below the tolerance.  Three consecutive ratios above
/// one raise NoContraction.
pub fn picard_solve(
    initial: &InitialData,
    setup: &Setup,
    cfg: &IterationConfig,
    mut observer: impl FnMut(usize, f64),
) -> Result<(TrajectoryCandidate, ContractionReport)> {
    cfg.validate(initial.m0)?;
    let start = &initial.state;
    let mut current = TrajectoryCandidate::constant(start, cfg.t_horizon, cfg.steps);
    let mut report =
        ContractionReport { t_horizon: cfg.t_horizon, steps: cfg.steps, distances: Vec::new(), ratios: Vec::new(), converged: false };
    let mut above = 0;
    for iteration in 0..cfg.max_iters {
        let next = iterate_once(&current, cfg, setup, start)?;
        let d = iterate_distance(&next, &current, setup)?;
        observer(iteration, d);
        if let Some(&prev) = report.distances.last() {
            let ratio = if prev > 0.0 { d / prev } else { 0.0 };
            report.ratios.push(ratio);
            above = if ratio > 1.0 { above + 1 } else { 0 };
        }
        report.distances.push(d);
        current = next;
        if d <= cfg.contraction_tol {
            report.converged = true;
            break;
        }
        if above >= DIVERGENCE_RUN {
            return Err(Error::NoContraction { ratios: report.ratios });
        }
    }
    Ok((current, report))
}

/// Halves T, starting from `cfg.t_horizon`, until the iteration converges
/// with every ratio ≤ `bound` and at least `run` of them.  The step size is
/// kept, so the step count halves with T.
pub fn find_contractive_horizon(
    initial: &InitialData,
    setup: &Setup,
    cfg: &IterationConfig,
    bound: f64,
    run: usize,
    max_halvings: usize,
) -> Result<(IterationConfig, TrajectoryCandidate, ContractionReport)> {
    let dt = cfg.t_horizon / cfg.steps as f64;
    let mut trial = *cfg;
    let mut last_err = None;
    for _ in 0..=max_halvings {
        trial.steps = ((trial.t_horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        match picard_solve(initial, setup, &trial, |_, _| ()) {
            Ok((traj, report)) if report.converged && report.ratios.len() >= run && report.ratios.iter().all(|&r| r <= bound) => {
                return Ok((trial, traj, report));
            }
            Ok(_) => last_err = None,
            Err(e @ (Error::NoContraction { .. } | Error::MembershipViolation(_))) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        trial.t_horizon *= 0.5;
    }
    Err(last_err.unwrap_or(Error::NoContraction { ratios: Vec::new() }))
}
