//! The iteration unknowns (f, θ, ω_*, j_*, β, γ) and the recovery of
//! u, h, ĥ and p from them.
//!
//! Vorticity and current live on the nodes of the reference strip Ω_*
//! (the linear strip over f_* = f₀).  The harmonic map Φ_f is
//! parametrized by the same computational nodes, so composing with Φ_f
//! leaves nodal values unchanged: ω_*∘Φ_f⁻¹ at the node Φ_f(y) is ω_*(y).

use serde::{Deserialize, Serialize};

use crate::diagnostics::stability_lambda;
use crate::divcurl::{self, PlasmaDivCurlData, VacuumDivCurlData, SOLVE_TOL};
use crate::elliptic::{self, bulk_hs_norm_vec, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::geometry::{build_interface, harmonic_coordinate_map, BulkField, BulkVector, CoordinateMap, Interface, Side};
use crate::spectral::{self, hs_norm, InterfaceField, SpectralSettings};

/// Tolerance of the initial-data compatibility checks, relative to
/// 1 + max |field|.
pub const INIT_TOL: f64 = 1e-7;

/// Prescribed surface current on the top wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceCurrent {
    /// Ĵ = (j₁, j₂).
    Constant { j: [f64; 2] },
    /// Ĵ = a (cos(νt + φ), sin(νt + φ)).
    Rotating { amplitude: f64, frequency: f64, phase: f64 },
    /// Ĵ = (b₁ + a cos x₂, b₂ + a cos x₁).
    Sheared { base: [f64; 2], amplitude: f64 },
}

impl SurfaceCurrent {
    pub fn at(&self, n: usize, t: f64) -> [InterfaceField; 2] {
        match *self {
            Self::Constant { j } => [InterfaceField::constant(n, j[0]), InterfaceField::constant(n, j[1])],
            Self::Rotating { amplitude, frequency, phase } => {
                let a = frequency * t + phase;
                [InterfaceField::constant(n, amplitude * a.cos()), InterfaceField::constant(n, amplitude * a.sin())]
            }
            Self::Sheared { base, amplitude } => [
                InterfaceField::from_fn(n, |_, y| base[0] + amplitude * y.cos()),
                InterfaceField::from_fn(n, |x, _| base[1] + amplitude * x.cos()),
            ],
        }
    }

    /// ∂ₜĴ at time t.
    pub fn dt_at(&self, n: usize, t: f64) -> [InterfaceField; 2] {
        match *self {
            Self::Rotating { amplitude, frequency, phase } => {
                let a = frequency * t + phase;
                let c = amplitude * frequency;
                [InterfaceField::constant(n, -c * a.sin()), InterfaceField::constant(n, c * a.cos())]
            }
            _ => [InterfaceField::zeros(n), InterfaceField::zeros(n)],
        }
    }

    /// max |∂₁Ĵ₁ + ∂₂Ĵ₂| at time t.
    pub fn divergence(&self, n: usize, t: f64) -> f64 {
        let [a, b] = self.at(n, t);
        let (a1, _) = spectral::gradient(&a);
        let (_, b2) = spectral::gradient(&b);
        a1.add(&b2).max_abs()
    }
}

/// Run-wide parameters: resolution, regularity index, the constants of
/// the stability condition, the surface current and the reference strips.
#[derive(Debug, Clone)]
pub struct Setup {
    pub settings: SpectralSettings,
    pub m: usize,
    pub c0: f64,
    pub c1: f64,
    pub current: SurfaceCurrent,
    /// When false, Λ < c₁ is not reported as an error.
    pub enforce_stability: bool,
    reference: Interface,
    reference_plasma: CoordinateMap,
    reference_vacuum: CoordinateMap,
}

impl Setup {
    pub fn new(f_star: &InterfaceField, m: usize, s: u32, c0: f64, c1: f64, current: SurfaceCurrent) -> Result<Self> {
        let settings = SpectralSettings::new(f_star.n(), s)?;
        if m < 4 {
            return Err(Error::GridMismatch(format!("M = {m} must be at least 4")));
        }
        if !(c0 > 0.0 && c0 < 0.5) || !(c1 > 0.0) {
            return Err(Error::InvalidField(format!("need 0 < c0 < 1/2 and c1 > 0 (c0 = {c0}, c1 = {c1})")));
        }
        let reference = build_interface(f_star, c0)?;
        let reference_plasma = CoordinateMap::sigma(&reference, Side::Plasma, m);
        let reference_vacuum = CoordinateMap::sigma(&reference, Side::Vacuum, m);
        Ok(Self {
            settings,
            m,
            c0,
            c1,
            current,
            enforce_stability: true,
            reference,
            reference_plasma,
            reference_vacuum,
        })
    }

    pub fn n(&self) -> usize {
        self.settings.n
    }

    pub fn s(&self) -> f64 {
        self.settings.s()
    }

    pub fn reference(&self) -> &Interface {
        &self.reference
    }

    /// The linear strip over f_* on the given side.
    pub fn reference_map(&self, side: Side) -> &CoordinateMap {
        match side {
            Side::Plasma => &self.reference_plasma,
            Side::Vacuum => &self.reference_vacuum,
        }
    }
}

/// (f, θ, ω_*, j_*, β, γ) at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasmaVacuumState {
    pub f: InterfaceField,
    pub theta: InterfaceField,
    pub omega: BulkVector,
    pub j: BulkVector,
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
    pub time: f64,
}

impl PlasmaVacuumState {
    pub fn n(&self) -> usize {
        self.f.n()
    }

    pub fn m(&self) -> usize {
        self.omega.m()
    }

    /// Residuals of ⟨θ⟩ = 0 and ∫_Γ ω_{*3} = ∫_Γ j_{*3} = 0.
    pub fn invariant_residuals(&self) -> [f64; 3] {
        [
            self.theta.mean().abs(),
            self.omega.components[2].wall_trace().integral().abs(),
            self.j.components[2].wall_trace().integral().abs(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        let bulk = |v: &BulkVector| v.components.iter().all(|c| c.values().iter().all(|x| x.is_finite()));
        self.f.check_finite().is_ok()
            && self.theta.check_finite().is_ok()
            && bulk(&self.omega)
            && bulk(&self.j)
            && self.beta.iter().chain(&self.gamma).all(|x| x.is_finite())
            && self.time.is_finite()
    }
}

/// Harmonic coordinate maps of both regions over the reference strips.
#[derive(Debug, Clone)]
pub struct MapPair {
    pub plasma: CoordinateMap,
    pub vacuum: CoordinateMap,
}

impl MapPair {
    pub fn interface(&self) -> &Interface {
        self.plasma.interface()
    }
}

/// Builds Ω_f^± as harmonic images of the reference strips.
pub fn build_maps(f: &InterfaceField, setup: &Setup) -> Result<MapPair> {
    let interface = build_interface(f, setup.c0)?;
    let (plasma, vacuum) = rayon::join(
        || harmonic_coordinate_map(&interface, &setup.reference, Side::Plasma, setup.m, DEFAULT_TOL),
        || harmonic_coordinate_map(&interface, &setup.reference, Side::Vacuum, setup.m, DEFAULT_TOL),
    );
    Ok(MapPair { plasma: plasma?, vacuum: vacuum? })
}

/// Everything recovered from a state.
#[derive(Debug, Clone)]
pub struct RecoveredFields {
    pub maps: MapPair,
    /// Projected vorticity and current P_f^div(ω_*∘Φ_f⁻¹), P_f^div(j_*∘Φ_f⁻¹).
    pub omega_tilde: BulkVector,
    pub j_tilde: BulkVector,
    pub u: BulkVector,
    pub h: BulkVector,
    pub h_hat: BulkVector,
    /// Ĵ at the state's time.
    pub current: [InterfaceField; 2],
}

/// P_f^div of a reference-node field, with the wall flux of its third
/// component removed so that the div-curl data are compatible.
pub fn project_vorticity(omega_star: &BulkVector, map: &CoordinateMap) -> Result<BulkVector> {
    let projected = divcurl::div_free_project(omega_star, map)?;
    let flux = projected.components[2].wall_trace().mean();
    let [a, b, c] = projected.components;
    Ok(BulkVector::new([a, b, c.map(|x| x - flux)]))
}

fn recover_plasma(
    vorticity: &BulkVector,
    theta: &InterfaceField,
    alpha: [f64; 2],
    map: &CoordinateMap,
) -> Result<(BulkVector, BulkVector)> {
    let projected = project_vorticity(vorticity, map)?;
    let g = BulkField::zeros(map.n(), map.m(), Side::Plasma);
    let v = divcurl::div_curl_core(map, &g, &projected, theta, alpha, SOLVE_TOL, None)?;
    Ok((projected, v))
}

/// u with curl u = ω̃, div u = 0, u·N_f = θ − ⟨θ⟩ on Γ_f, u₃ = 0 and
/// ∫_Γ uᵢ = βᵢ on the wall.
pub fn recover_velocity(state: &PlasmaVacuumState, maps: &MapPair) -> Result<BulkVector> {
    Ok(recover_plasma(&state.omega, &spectral::mean_project(&state.theta), state.beta, &maps.plasma)?.1)
}

/// h with curl h = j̃, div h = 0, h·N_f = 0 on Γ_f, h₃ = 0 and
/// ∫_Γ hᵢ = γᵢ on the wall.
pub fn recover_magnetic(state: &PlasmaVacuumState, maps: &MapPair) -> Result<BulkVector> {
    Ok(recover_plasma(&state.j, &InterfaceField::zeros(state.n()), state.gamma, &maps.plasma)?.1)
}

/// The curl-free, divergence-free vacuum field with ĥ·N_f = 0 on Γ_f
/// and ĥ×e₃ = Ĵ on the top wall.
pub fn solve_vacuum_field(current: &[InterfaceField; 2], map_plus: &CoordinateMap) -> Result<BulkVector> {
    let mut data = VacuumDivCurlData::zeros(map_plus.n(), map_plus.m());
    data.current = current.clone();
    divcurl::solve_vacuum(&data, map_plus)
}

/// ∂ₜĥ: curl- and divergence-free, wall data ∂ₜĴ and interface data
/// ∂ₜĥ·N_f = −θ ∂₃ĥ·N_f + ĥ₁∂₁θ + ĥ₂∂₂θ.
pub fn solve_vacuum_field_dt(
    theta: &InterfaceField,
    h_hat: &BulkVector,
    dt_current: &[InterfaceField; 2],
    map_plus: &CoordinateMap,
) -> Result<BulkVector> {
    let interface = map_plus.interface();
    let grad: Vec<BulkVector> = h_hat.components.iter().map(|c| map_plus.gradient(c)).collect();
    let d3: [InterfaceField; 3] = std::array::from_fn(|i| grad[i].components[2].interface_trace());
    let [h1, h2, _] = h_hat.interface_trace();
    let (t1, t2) = spectral::gradient(theta);
    let datum = InterfaceField::combination(&[
        (-1.0, &theta.mul(&interface.dot_normal(&d3))),
        (1.0, &h1.mul(&t1)),
        (1.0, &h2.mul(&t2)),
    ]);
    let mut data = VacuumDivCurlData::zeros(map_plus.n(), map_plus.m());
    data.theta = datum;
    data.current = dt_current.clone();
    divcurl::solve_vacuum(&data, map_plus)
}

/// Full recovery of u, h and ĥ from a state.
pub fn recover(state: &PlasmaVacuumState, setup: &Setup) -> Result<RecoveredFields> {
    if !state.is_finite() {
        return Err(Error::InvalidField("state has non-finite entries".into()));
    }
    let maps = build_maps(&state.f, setup)?;
    let current = setup.current.at(state.n(), state.time);
    let theta = spectral::mean_project(&state.theta);
    let map = &maps.plasma;
    let zero = InterfaceField::zeros(state.n());
    let ((u, h), h_hat) = rayon::join(
        || {
            rayon::join(
                || recover_plasma(&state.omega, &theta, state.beta, map),
                || recover_plasma(&state.j, &zero, state.gamma, map),
            )
        },
        || solve_vacuum_field(&current, &maps.vacuum),
    );
    let (omega_tilde, u) = u?;
    let (j_tilde, h) = h?;
    Ok(RecoveredFields { omega_tilde, j_tilde, u, h, h_hat: h_hat?, current, maps })
}

/// ½ H_f(|ĥ|²|_Γ) + p_{u,u} − p_{h,h}.
pub fn assemble_pressure(u: &BulkVector, h: &BulkVector, h_hat: &BulkVector, maps: &MapPair) -> Result<BulkField> {
    let map = &maps.plasma;
    let boundary = h_hat.norm_sq().interface_trace().scale(0.5);
    let source = elliptic::pressure_source(u, u, map).sub(&elliptic::pressure_source(h, h, map));
    let (ext, puh) = rayon::join(
        || elliptic::harmonic_extension(&boundary, map),
        || elliptic::solve_pressure_source(source, map),
    );
    Ok(ext?.add(&puh?))
}

/// θ = u|_Γf · N_f.
pub fn compute_theta(u: &BulkVector, interface: &Interface) -> InterfaceField {
    interface.dot_normal(&u.interface_trace())
}

/// The initial state with the vacuum field it induces and the size M₀
/// of the data.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub state: PlasmaVacuumState,
    pub h_hat: BulkVector,
    pub lambda_min: f64,
    pub m0: f64,
}

/// Builds the initial state from (f₀, u₀, h₀) given on the nodes of the
/// linear strip over f₀ (which is the reference strip of `setup`).
pub fn init_state(u0: &BulkVector, h0: &BulkVector, setup: &Setup) -> Result<InitialData> {
    let n = setup.n();
    let map = setup.reference_map(Side::Plasma);
    let interface = setup.reference();
    let f0 = &interface.f;
    for v in [u0, h0] {
        if v.n() != n || v.m() != setup.m || v.side() != Side::Plasma {
            return Err(Error::GridMismatch("initial fields must live on the plasma reference grid".into()));
        }
        if !v.components.iter().all(|c| c.values().iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidField("initial fields must be finite".into()));
        }
    }

    let limit = 1.0 - 2.0 * setup.c0;
    let max_abs = f0.max_abs();
    if max_abs > limit {
        return Err(Error::GapViolation { max_abs, limit });
    }

    // Compatibility of the data.
    let mut failures = Vec::new();
    for (name, v) in [("u0", u0), ("h0", h0)] {
        let scale = 1.0 + v.max_abs();
        let div = map.divergence(v).max_abs();
        let wall = v.components[2].wall_trace().max_abs();
        if !(div <= INIT_TOL * scale) {
            failures.push(format!("div {name} = {div:e}"));
        }
        if !(wall <= INIT_TOL * scale) {
            failures.push(format!("{name}_3 on the wall = {wall:e}"));
        }
    }
    let normal = compute_theta(h0, interface).max_abs();
    if !(normal <= INIT_TOL * (1.0 + h0.max_abs())) {
        failures.push(format!("h0·N on the interface = {normal:e}"));
    }
    if !failures.is_empty() {
        return Err(Error::CompatibilityError(failures.join(", ")));
    }

    // Stability with the doubled margins.
    let current = setup.current.at(n, 0.0);
    let vacuum = setup.reference_map(Side::Vacuum);
    let h_hat = solve_vacuum_field(&current, vacuum)?;
    let [h1, h2, _] = h0.interface_trace();
    let [k1, k2, _] = h_hat.interface_trace();
    let (_, lambda_min) = stability_lambda(&[h1, h2], &[k1, k2]);
    if !(lambda_min >= 2.0 * setup.c1) {
        return Err(Error::StabilityError { lambda_min, threshold: 2.0 * setup.c1 });
    }

    let wall_integrals = |v: &BulkVector| [v.components[0].wall_trace().integral(), v.components[1].wall_trace().integral()];
    let state = PlasmaVacuumState {
        f: f0.clone(),
        theta: compute_theta(u0, interface),
        omega: map.curl(u0),
        j: map.curl(h0),
        beta: wall_integrals(u0),
        gamma: wall_integrals(h0),
        time: 0.0,
    };

    let s = setup.s();
    let dt_current = setup.current.dt_at(n, 0.0);
    let measured = hs_norm(f0, s + 0.5)
        + (bulk_hs_norm_vec(&state.omega, map, s - 1.0).powi(2) + bulk_hs_norm_vec(&state.j, map, s - 1.0).powi(2))
            .sqrt()
        + hs_norm(&state.theta, s - 0.5)
        + state.beta.iter().chain(&state.gamma).map(|x| x.abs()).sum::<f64>()
        + bulk_hs_norm_vec(&h_hat, vacuum, s)
        + current.iter().map(|c| hs_norm(c, s - 0.5).powi(2)).sum::<f64>().sqrt()
        + dt_current.iter().map(|c| hs_norm(c, s - 1.5).powi(2)).sum::<f64>().sqrt();
    Ok(InitialData { state, h_hat, lambda_min, m0: measured.max(1.0) })
}

/// The curl-free, divergence-free plasma field tangent to Γ_f with wall
/// integrals `alpha`: the background magnetic field over a curved interface.
pub fn potential_field(map: &CoordinateMap, alpha: [f64; 2]) -> Result<BulkVector> {
    let mut data = PlasmaDivCurlData::zeros(map.n(), map.m());
    data.alpha = alpha;
    divcurl::solve_plasma(&data, map)
}
