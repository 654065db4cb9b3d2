use std::f64::consts::PI;

use mhdsim_core::dynamics::*;
use mhdsim_core::geometry::{BulkField, BulkVector, CoordinateMap, Side};
use mhdsim_core::spectral::{hs_norm, InterfaceField};
use mhdsim_core::state::*;
use mhdsim_core::Error;

const AREA: f64 = 4.0 * PI * PI;

/// Equilibrium fields h = (1,0,0), Ĵ = (1,0), u = 0 over the interface f₀
/// (h is the tangential potential field when f₀ is curved).
fn equilibrium_over(f0: &InterfaceField, m: usize) -> (Setup, PlasmaVacuumState) {
    let setup = Setup::new(f0, m, 3, 0.1, 0.1, SurfaceCurrent::Constant { j: [1.0, 0.0] }).unwrap();
    let map = setup.reference_map(Side::Plasma);
    let h0 = potential_field(map, [AREA, 0.0]).unwrap();
    let u0 = BulkVector::zeros(f0.n(), m, Side::Plasma);
    let init = init_state(&u0, &h0, &setup).unwrap();
    (setup, init.state)
}

fn cosine(n: usize, eps: f64, k: [f64; 2]) -> InterfaceField {
    InterfaceField::from_fn(n, |x, y| eps * (k[0] * x + k[1] * y).cos())
}

/// Projection coefficient ⟨a, b⟩ / ⟨b, b⟩.
fn coefficient(a: &InterfaceField, b: &InterfaceField) -> f64 {
    a.inner(b) / b.inner(b)
}

fn constant_fields(setup: &Setup, u: [f64; 3], h: [f64; 3], h_hat: [f64; 3]) -> RecoveredFields {
    let maps = build_maps(&setup.reference().f, setup).unwrap();
    let (n, m) = (setup.n(), setup.m);
    RecoveredFields {
        omega_tilde: BulkVector::zeros(n, m, Side::Plasma),
        j_tilde: BulkVector::zeros(n, m, Side::Plasma),
        u: BulkVector::constant(&maps.plasma, u),
        h: BulkVector::constant(&maps.plasma, h),
        h_hat: BulkVector::constant(&maps.vacuum, h_hat),
        current: [InterfaceField::constant(n, h_hat[1]), InterfaceField::constant(n, -h_hat[0])],
        maps,
    }
}

#[test]
fn g_source_vanishes_for_uniform_fields() {
    let (setup, _) = equilibrium_over(&InterfaceField::zeros(16), 12);
    let rec = constant_fields(&setup, [0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    let g = g_source(&rec.u, &rec.h, &rec.h_hat, &rec.maps).unwrap();
    assert!(g.max_abs() < 1e-10);
    let rec = constant_fields(&setup, [0.0; 3], [0.0; 3], [0.7, -0.3, 0.0]);
    let g = g_source(&rec.u, &rec.h, &rec.h_hat, &rec.maps).unwrap();
    assert!(g.max_abs() < 1e-10);
}

#[test]
fn g_source_matches_the_vacuum_dispersion_correction() {
    // About the equilibrium, f = ε cos(k·x′) gives 𝔤 = (ĥ·k)² sech²|k| f
    // to first order: the full symbol is (h·k)² + (ĥ·k)² tanh²|k|.
    let n = 16;
    let eps = 1e-6;
    for k in [[0.0, 1.0], [1.0, 1.0], [0.0, 2.0]] {
        let f0 = cosine(n, eps, k);
        let (setup, state) = equilibrium_over(&f0, 16);
        let rec = recover(&state, &setup).unwrap();
        let g = g_source(&rec.u, &rec.h, &rec.h_hat, &rec.maps).unwrap();
        let kk = (k[0] * k[0] + k[1] * k[1]).sqrt();
        let expected = k[1] * k[1] / kk.cosh().powi(2);
        let got = coefficient(&g, &f0);
        assert!((got - expected).abs() < 1e-5 * expected.max(1.0), "k = {k:?}: {got} vs {expected}");
    }
}

#[test]
fn theta_rhs_examples() {
    let n = 16;
    // Equilibrium: steady.
    let (setup, state) = equilibrium_over(&InterfaceField::zeros(n), 12);
    let (rate, _) = state_rhs(&state, &setup).unwrap();
    assert!(rate.theta.max_abs() < 1e-12);

    // f = ε cos x₁: ∂ₜθ = −ε cos x₁ + O(ε²).
    let eps = 1e-6;
    let f0 = cosine(n, eps, [1.0, 0.0]);
    let (setup, state) = equilibrium_over(&f0, 12);
    let (rate, _) = state_rhs(&state, &setup).unwrap();
    let d = rate.theta.max_abs_diff(&f0.scale(-1.0));
    assert!(d < 10.0 * eps * eps, "{d:e}");

    // Pure advection: θ = ε sin x₁, u = (1,0,0), h = ĥ = 0 on a flat interface.
    let (mut setup, mut state) = equilibrium_over(&InterfaceField::zeros(n), 12);
    state.theta = InterfaceField::from_fn(n, |x, _| eps * x.sin());
    let rec = constant_fields(&setup, [1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]);
    let g = InterfaceField::zeros(n);
    assert!(matches!(theta_rhs(&state, &rec, &g, &setup), Err(Error::StabilityError { .. })));
    setup.enforce_stability = false;
    let rhs = theta_rhs(&state, &rec, &g, &setup).unwrap();
    let expected = InterfaceField::from_fn(n, |x, _| -2.0 * eps * x.cos());
    assert!(rhs.max_abs_diff(&expected) < 1e-18);
}

/// Analytic fields u = (z cos x₂, sin x₁, 0), h = (sin x₂, z, 0) with their
/// Jacobians ∂ⱼvᵢ and the Jacobians of ω = curl u, j = curl h.
struct Manufactured;

impl Manufactured {
    fn u(x: f64, y: f64, z: f64) -> ([f64; 3], [[f64; 3]; 3]) {
        ([z * y.cos(), x.sin(), 0.0], [[0.0, -z * y.sin(), y.cos()], [x.cos(), 0.0, 0.0], [0.0; 3]])
    }
    fn h(_x: f64, y: f64, z: f64) -> ([f64; 3], [[f64; 3]; 3]) {
        ([y.sin(), z, 0.0], [[0.0, y.cos(), 0.0], [0.0, 0.0, 1.0], [0.0; 3]])
    }
    fn omega(x: f64, y: f64, z: f64) -> ([f64; 3], [[f64; 3]; 3]) {
        ([0.0, y.cos(), x.cos() + z * y.sin()], [[0.0; 3], [0.0, -y.sin(), 0.0], [-x.sin(), z * y.cos(), y.sin()]])
    }
    fn j(_x: f64, y: f64, _z: f64) -> ([f64; 3], [[f64; 3]; 3]) {
        ([-1.0, 0.0, -y.cos()], [[0.0; 3], [0.0; 3], [0.0, y.sin(), 0.0]])
    }
}

fn along(a: [f64; 3], jac: [[f64; 3]; 3]) -> [f64; 3] {
    std::array::from_fn(|i| (0..3).map(|k| a[k] * jac[i][k]).sum())
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[test]
fn vorticity_rhs_examples() {
    let n = 16;
    let m = 16;
    let (setup, _) = equilibrium_over(&InterfaceField::zeros(n), m);
    let map = setup.reference_map(Side::Plasma);
    let zero = BulkVector::zeros(n, m, Side::Plasma);
    let u = BulkVector::constant(map, [0.3, -1.0, 0.0]);
    let h = BulkVector::constant(map, [1.0, 2.0, 0.0]);
    let (a, b) = vorticity_rhs(&zero, &zero, &u, &h, map);
    assert_eq!(a.max_abs(), 0.0);
    assert_eq!(b.max_abs(), 0.0);

    // u = h, zero vorticity: the cross term pairs parallel gradients.
    let v = BulkVector::from_fn(map, |x, y, z| [z * y.cos(), x.sin(), 0.0]);
    let (a, b) = vorticity_rhs(&zero, &zero, &v, &v, map);
    assert!(a.max_abs() < 1e-12 && b.max_abs() < 1e-12);

    // Manufactured fields on a curved map against a pointwise evaluation.
    let f0 = InterfaceField::from_fn(n, |x, y| 0.1 * x.cos() + 0.05 * y.sin());
    let (setup, _) = equilibrium_over(&f0, m);
    let map: &CoordinateMap = setup.reference_map(Side::Plasma);
    let field = |g: fn(f64, f64, f64) -> ([f64; 3], [[f64; 3]; 3])| BulkVector::from_fn(map, move |x, y, z| g(x, y, z).0);
    let (u, h) = (field(Manufactured::u), field(Manufactured::h));
    let (omega, j) = (field(Manufactured::omega), field(Manufactured::j));
    assert!(map.curl(&u).max_abs_diff(&omega) < 1e-9);
    assert!(map.curl(&h).max_abs_diff(&j) < 1e-9);
    let (a, b) = vorticity_rhs(&omega, &j, &u, &h, map);
    let oracle_w = BulkVector::from_fn(map, |x, y, z| {
        let (uv, uj) = Manufactured::u(x, y, z);
        let (hv, hj) = Manufactured::h(x, y, z);
        let (wv, wj) = Manufactured::omega(x, y, z);
        let (jv, jj) = Manufactured::j(x, y, z);
        let t = [along(uv, wj), along(hv, jj), along(wv, uj), along(jv, hj)];
        std::array::from_fn(|i| -t[0][i] + t[1][i] + t[2][i] - t[3][i])
    });
    let oracle_j = BulkVector::from_fn(map, |x, y, z| {
        let (uv, uj) = Manufactured::u(x, y, z);
        let (hv, hj) = Manufactured::h(x, y, z);
        let (wv, wj) = Manufactured::omega(x, y, z);
        let (jv, jj) = Manufactured::j(x, y, z);
        let t = [along(uv, jj), along(hv, wj), along(jv, uj), along(wv, hj)];
        let mut c = [0.0; 3];
        for k in 0..3 {
            let x = cross(uj[k], hj[k]);
            for i in 0..3 {
                c[i] += x[i];
            }
        }
        std::array::from_fn(|i| -t[0][i] + t[1][i] + t[2][i] - t[3][i] - 2.0 * c[i])
    });
    assert!(a.max_abs_diff(&oracle_w) < 1e-9, "{}", a.max_abs_diff(&oracle_w));
    assert!(b.max_abs_diff(&oracle_j) < 1e-9, "{}", b.max_abs_diff(&oracle_j));
}

#[test]
fn beta_gamma_examples() {
    let (n, m) = (16, 8);
    let map = CoordinateMap::flat(n, m, Side::Plasma, 0.0);
    let u = BulkVector::constant(&map, [1.0, 2.0, 0.0]);
    let h = BulkVector::constant(&map, [-1.0, 0.5, 0.0]);
    assert_eq!(beta_gamma_rhs(&u, &h), [0.0; 4]);

    let zero = BulkVector::zeros(n, m, Side::Plasma);
    let u = BulkVector::from_fn(&map, |_, y, _| [y.cos(), 0.0, 0.0]);
    assert!(beta_gamma_rhs(&u, &zero)[0].abs() < 1e-13);

    let u = BulkVector::from_fn(&map, |_, y, _| [y.cos(), y.sin(), 0.0]);
    let r = beta_gamma_rhs(&u, &zero);
    assert!((r[0] - 2.0 * PI * PI).abs() < 1e-12, "{r:?}");
    // Swapping the roles of u and h flips the sign of β̇ and leaves γ̇ = 0.
    let s = beta_gamma_rhs(&zero, &u);
    assert!((s[0] + 2.0 * PI * PI).abs() < 1e-12 && s[2].abs() < 1e-12 && s[3].abs() < 1e-12);
    // γ̇₁ = −∫(u·∇h₁ − h·∇u₁) with u = (0, sin x₂), h = (cos x₂, 0).
    let a = BulkVector::from_fn(&map, |_, y, _| [0.0, y.sin(), 0.0]);
    let b = BulkVector::from_fn(&map, |_, y, _| [y.cos(), 0.0, 0.0]);
    let r = beta_gamma_rhs(&a, &b);
    assert!((r[2] - 2.0 * PI * PI).abs() < 1e-12, "{r:?}");
}

#[test]
fn linearized_rhs_examples() {
    let n = 16;
    let f = InterfaceField::from_fn(n, |x, _| x.cos());
    let theta = InterfaceField::from_fn(n, |x, y| (x + y).sin());
    let zero = CoefficientFreeze::constant(n, [0.0; 2], [0.0; 2], [0.0; 2], 0.0);
    let (a, b) = linearized_rhs(&f, &theta, &zero, None).unwrap();
    assert_eq!(a, theta);
    assert!(b.max_abs() < 1e-15);
    assert!(matches!(linearized_rhs(&f, &theta, &zero, Some(0.1)), Err(Error::StabilityError { .. })));

    let eq = CoefficientFreeze::constant(n, [0.0; 2], [1.0, 0.0], [0.0, 1.0], 0.0);
    let (_, b) = linearized_rhs(&f, &theta, &eq, Some(0.5)).unwrap();
    assert!(b.max_abs_diff(&f.scale(-1.0)) < 1e-13);

    let source = CoefficientFreeze::constant(n, [0.0; 2], [0.0; 2], [0.0; 2], 0.25);
    let (_, b) = linearized_rhs(&f, &theta, &source, None).unwrap();
    assert!(b.max_abs_diff(&InterfaceField::constant(n, 0.25)) < 1e-15);
}

#[test]
fn equilibrium_is_a_fixed_point_of_rk4() {
    let (setup, state) = equilibrium_over(&InterfaceField::zeros(16), 12);
    let post = PostStep { mean_f: 0.0, dealias_fraction: setup.settings.dealias_fraction };
    let mut s = state.clone();
    for _ in 0..3 {
        s = rk4_step(&s, 0.05, None, |x| Ok(state_rhs(x, &setup)?.0), &post).unwrap();
    }
    assert!(s.f.max_abs() < 1e-10 && s.theta.max_abs() < 1e-10);
    assert!(s.omega.max_abs() < 1e-10 && s.j.max_abs() < 1e-10);
    assert!((s.gamma[0] - state.gamma[0]).abs() < 1e-10 && s.beta.iter().all(|b| b.abs() < 1e-10));
}

#[test]
fn linear_oscillation_returns_after_one_period() {
    // k = (1,0) about the equilibrium: ĥ·k = 0, so ω = |h·k| = 1 exactly.
    let n = 16;
    let eps = 1e-4;
    let f0 = cosine(n, eps, [1.0, 0.0]);
    let (setup, state) = equilibrium_over(&f0, 12);
    let cfg = TimeStepConfig { t_end: 2.0 * PI, ..Default::default() };
    let out = integrate(state, &setup, &cfg, None, |_| Ok(())).unwrap();
    assert!(out.reached_end);
    assert!((out.state.time - 2.0 * PI).abs() < 1e-12);
    let err = out.state.f.max_abs_diff(&f0);
    assert!(err < eps * eps, "{err}");
}

#[test]
fn time_step_above_cfl_bound_is_rejected() {
    let (setup, state) = equilibrium_over(&InterfaceField::zeros(16), 8);
    let cfg = TimeStepConfig { dt: Some(1.0), dt_max: 2.0, t_end: 1.0, ..Default::default() };
    assert!(matches!(integrate(state, &setup, &cfg, None, |_| Ok(())), Err(Error::TimeStepTooLarge { .. })));
}

#[test]
fn cfl_step_examples() {
    let (setup, state) = equilibrium_over(&InterfaceField::zeros(32), 8);
    let rec = recover(&state, &setup).unwrap();
    let dt = cfl_dt(&rec, 0.4, 1.0);
    assert!((dt - 0.4 * (2.0 * PI / 32.0) / 2.0).abs() < 1e-12, "{dt}");

    let (setup16, state16) = equilibrium_over(&InterfaceField::zeros(16), 8);
    let rec16 = recover(&state16, &setup16).unwrap();
    assert!((cfl_dt(&rec16, 0.4, 1.0) - 2.0 * dt).abs() < 1e-12);

    let zero = constant_fields(&setup16, [0.0; 3], [0.0; 3], [0.0; 3]);
    assert_eq!(cfl_dt(&zero, 0.4, 0.123), 0.123);
}

#[test]
fn means_are_conserved() {
    let n = 16;
    let f0 = InterfaceField::from_fn(n, |x, y| 0.1 + 0.05 * x.cos() + 0.03 * (x + y).sin());
    let (setup, state) = equilibrium_over(&f0, 12);
    let mean = f0.mean();
    let cfg = TimeStepConfig { t_end: 0.3, ..Default::default() };
    let mut worst: f64 = 0.0;
    integrate(state, &setup, &cfg, None, |v| {
        worst = worst.max((v.state.f.mean() - mean).abs()).max(v.state.theta.mean().abs());
        Ok(())
    })
    .unwrap();
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn x2_independent_data_stays_x2_independent() {
    let n = 16;
    let f0 = InterfaceField::from_fn(n, |x, _| 0.05 * x.cos() + 0.02 * (2.0 * x).sin());
    let (setup, state) = equilibrium_over(&f0, 12);
    let cfg = TimeStepConfig { t_end: 0.5, ..Default::default() };
    let out = integrate(state, &setup, &cfg, None, |_| Ok(())).unwrap();
    let spread = |g: &InterfaceField| {
        (0..n).flat_map(|i2| (0..n).map(move |i1| (i1, i2))).map(|(i1, i2)| (g.get(i1, i2) - g.get(i1, 0)).abs()).fold(0.0, f64::max)
    };
    assert!(spread(&out.state.f) < 1e-10 && spread(&out.state.theta) < 1e-10);
    assert!(out.state.f.max_abs_diff(&f0) > 1e-3, "the interface should have moved");
}

#[test]
fn rk4_converges_at_fourth_order() {
    let n = 8;
    let f0 = InterfaceField::from_fn(n, |x, y| 0.05 * x.cos() + 0.03 * y.sin());
    let (setup, state) = equilibrium_over(&f0, 8);
    let post = PostStep { mean_f: f0.mean(), dealias_fraction: setup.settings.dealias_fraction };
    let run = |dt: f64| {
        let mut s = state.clone();
        let steps = (0.8 / dt).round() as usize;
        for _ in 0..steps {
            s = rk4_step(&s, dt, None, |x| Ok(state_rhs(x, &setup)?.0), &post).unwrap();
        }
        s
    };
    let (a, b, c) = (run(0.2), run(0.1), run(0.05));
    let e1 = hs_norm(&a.f.sub(&b.f), 0.0);
    let e2 = hs_norm(&b.f.sub(&c.f), 0.0);
    let ratio = e1 / e2;
    assert!((ratio - 16.0).abs() < 0.2 * 16.0, "ratio {ratio} ({e1:e}, {e2:e})");
}

#[test]
fn frozen_coefficient_dispersion() {
    // u = 0 with constant h, ĥ: mode k oscillates with ω² = (h·k)² + (ĥ·k)².
    let n = 32;
    for (h, k, hk) in [([1.0, 0.0], [1.0, 0.0], [0.0, 1.0]), ([1.0, 0.0], [1.0, 1.0], [0.0, 1.0]), ([0.8, 0.3], [2.0, -1.0], [-0.2, 1.1])] {
        let coeffs = CoefficientFreeze::constant(n, [0.0; 2], h, hk, 0.0);
        let omega2 = (h[0] * k[0] + h[1] * k[1]).powi(2) + (hk[0] * k[0] + hk[1] * k[1]).powi(2);
        let f0 = cosine(n, 1e-4, k);
        let mut s = LinearState { f: f0.clone(), theta: InterfaceField::zeros(n), time: 0.0 };
        let dt = 1e-3;
        // First upward zero crossing of the mode amplitude after it turns negative.
        let mut prev = coefficient(&s.f, &f0);
        let mut crossings = Vec::new();
        while crossings.len() < 2 {
            s = linear_rk4_step(&s, dt, |_| coeffs.clone(), Some(0.01), 0.0).unwrap();
            let a = coefficient(&s.f, &f0);
            if prev.signum() != a.signum() {
                crossings.push(s.time - dt * a / (a - prev));
            }
            prev = a;
        }
        let period = 2.0 * (crossings[1] - crossings[0]);
        let expected = 2.0 * PI / omega2.sqrt();
        assert!((period - expected).abs() < 0.02 * expected, "{period} vs {expected}");
    }
}

#[test]
fn mesh_velocity_is_harmonic_with_boundary_values() {
    let (n, m) = (16, 12);
    let f0 = InterfaceField::from_fn(n, |x, _| 0.1 * x.cos());
    let (setup, _) = equilibrium_over(&f0, m);
    let reference = setup.reference_map(Side::Plasma);
    let theta = InterfaceField::from_fn(n, |x, y| (x - y).sin());
    let v = mesh_velocity(&theta, reference).unwrap();
    assert!(v.interface_trace().max_abs_diff(&theta) < 1e-14);
    assert!(v.wall_trace().max_abs() < 1e-14);
    let lap: BulkField = reference.laplacian(&v);
    let nn = n * n;
    let interior = &lap.values()[nn..m * nn];
    assert!(interior.iter().all(|x| x.abs() < 1e-7));
}
