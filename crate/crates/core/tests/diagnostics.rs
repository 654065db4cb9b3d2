use std::f64::consts::PI;

use mhdsim_core::diagnostics::*;
use mhdsim_core::dynamics::*;
use mhdsim_core::geometry::{BulkVector, Side};
use mhdsim_core::spectral::{hs_norm, InterfaceField};
use mhdsim_core::state::*;
use mhdsim_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AREA: f64 = 4.0 * PI * PI;

fn equilibrium_over(f0: &InterfaceField, m: usize) -> (Setup, PlasmaVacuumState) {
    let setup = Setup::new(f0, m, 3, 0.1, 0.1, SurfaceCurrent::Constant { j: [1.0, 0.0] }).unwrap();
    let h0 = potential_field(setup.reference_map(Side::Plasma), [AREA, 0.0]).unwrap();
    let u0 = BulkVector::zeros(f0.n(), m, Side::Plasma);
    let state = init_state(&u0, &h0, &setup).unwrap().state;
    (setup, state)
}

fn uniform(n: usize, v: f64) -> [InterfaceField; 2] {
    [InterfaceField::constant(n, v), InterfaceField::zeros(n)]
}

fn brute_force(a: [f64; 2], b: [f64; 2]) -> f64 {
    (0..10_000)
        .map(|i| {
            let phi = PI * i as f64 / 10_000.0;
            let (c, s) = (phi.cos(), phi.sin());
            (a[0] * c + a[1] * s).powi(2) + (b[0] * c + b[1] * s).powi(2)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn lambda_examples() {
    let n = 8;
    let c = |x: f64, y: f64| [InterfaceField::constant(n, x), InterfaceField::constant(n, y)];
    let (field, min) = stability_lambda(&c(1.0, 0.0), &c(0.0, 1.0));
    assert_eq!(min, 1.0);
    assert!(field.values().iter().all(|&x| x == 1.0));
    assert_eq!(stability_lambda(&c(1.0, 0.0), &c(2.0, 0.0)).1, 0.0);
    let expected = (3.0 - 5f64.sqrt()) / 2.0;
    assert!((stability_lambda(&c(1.0, 0.0), &c(1.0, 1.0)).1 - expected).abs() < 1e-15);
    assert!((brute_force([1.0, 0.0], [1.0, 1.0]) - expected).abs() < 1e-6);
}

#[test]
fn equilibrium_lambda_is_exactly_one() {
    let (setup, state) = equilibrium_over(&InterfaceField::zeros(16), 8);
    let rec = recover(&state, &setup).unwrap();
    let frozen = CoefficientFreeze::from_recovered(&rec, InterfaceField::zeros(16));
    assert!((frozen.lambda_min() - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn lambda_matches_angular_minimum(a1 in -3.0..3.0f64, a2 in -3.0..3.0f64, b1 in -3.0..3.0f64, b2 in -3.0..3.0f64) {
        let n = 4;
        let c = |x: f64, y: f64| [InterfaceField::constant(n, x), InterfaceField::constant(n, y)];
        let got = stability_lambda(&c(a1, a2), &c(b1, b2)).1;
        // The angular sampling error is second order in the step.
        let scale = a1 * a1 + a2 * a2 + b1 * b1 + b2 * b2;
        prop_assert!(got >= -1e-15);
        prop_assert!(got <= brute_force([a1, a2], [b1, b2]) + 1e-12 * scale);
        prop_assert!(brute_force([a1, a2], [b1, b2]) - got <= 1e-6 * scale);
    }
}

#[test]
fn energy_examples() {
    let n = 16;
    let s = 3.0;
    let zero = InterfaceField::zeros(n);
    let cos1 = InterfaceField::from_fn(n, |x, _| x.cos());
    let frozen = CoefficientFreeze::constant(n, [0.0; 2], [1.0, 0.0], [0.0, 1.0], 0.0);
    assert_eq!(energy_es(&zero, &zero, &frozen, s).unwrap(), 0.0);
    let weight = 2f64.powf(s - 0.5) * 2.0 * PI * PI;

    let still = CoefficientFreeze::constant(n, [0.0; 2], [0.0; 2], [0.0; 2], 0.0);
    let e = energy_es(&zero, &cos1, &still, s).unwrap();
    assert!((e - weight).abs() < 1e-10 * weight);

    let e = energy_es(&cos1, &zero, &frozen, s).unwrap();
    assert!((e - 0.5 * weight).abs() < 1e-10 * weight);

    // Transport cancellation: ∂ₜf̄ = −u·∇f̄ leaves only the field terms.
    let moving = CoefficientFreeze { u: uniform(n, 1.0), ..frozen.clone() };
    let sin1 = InterfaceField::from_fn(n, |x, _| x.sin());
    let e = energy_es(&cos1, &sin1, &moving, s).unwrap();
    assert!((e - 0.5 * weight).abs() < 1e-10 * weight);

    let std = energy_std(&cos1, &cos1, s);
    let oracle = (2f64.powf(s + 0.5) + 2f64.powf(s - 0.5)) * 2.0 * PI * PI;
    assert!((std - oracle).abs() < 1e-10 * oracle);
}

#[test]
fn energy_equivalence_sandwich() {
    // Constant hyperbolic coefficients with |u| ≤ U, λ_max ≤ Λ⁺, λ_min ≥ Λ⁻.
    // Mode by mode: E ≤ max(2, 2U² + ½Λ⁺)·𝓔 and
    // E ≥ min(ε/2, Λ⁻/4)·𝓔 − L(‖f̄‖² + ‖∂ₜf̄‖²) with ε = min(1, Λ⁻/(4U²)).
    let n = 16;
    let s = 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut upper: f64 = 0.0;
    let mut lower = f64::INFINITY;
    for _ in 0..100 {
        let mut draw = || [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let (u, h, k) = (draw(), draw(), draw());
        let lam = stability_lambda(
            &[InterfaceField::constant(n, h[0]), InterfaceField::constant(n, h[1])],
            &[InterfaceField::constant(n, k[0]), InterfaceField::constant(n, k[1])],
        )
        .1;
        if lam < 0.05 {
            continue;
        }
        let lam_max = h[0] * h[0] + h[1] * h[1] + k[0] * k[0] + k[1] * k[1];
        let uu = u[0] * u[0] + u[1] * u[1];
        let modes: Vec<(f64, f64, f64)> = (0..6).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0))).collect();
        let wave = |c: f64| {
            InterfaceField::from_fn(n, |x, y| {
                modes.iter().enumerate().map(|(i, (a, p, q))| a * c.powi(i as i32) * ((i % 3) as f64 * x + (i / 3) as f64 * y + p + q).cos()).sum()
            })
        };
        let f = wave(0.7);
        let fd = wave(-1.3);
        let frozen = CoefficientFreeze::constant(n, u, h, k, 0.0);
        let e = energy_es(&f, &fd, &frozen, s).unwrap();
        let std = energy_std(&f, &fd, s);
        let l2 = hs_norm(&f, 0.0).powi(2) + hs_norm(&fd, 0.0).powi(2);
        let big = 2f64.max(2.0 * uu + 0.5 * lam_max);
        let eps = 1f64.min(lam / (4.0 * uu.max(1e-300)));
        let small = (0.5 * eps).min(0.25 * lam);
        let l = small * 2f64.powf(s + 0.5);
        assert!(e <= big * std * (1.0 + 1e-12));
        assert!(e >= small * std - l * l2 - 1e-9 * std);
        upper = upper.max(e / std);
        lower = lower.min((e + l2) / std);
    }
    assert!(upper.is_finite() && lower > 0.0, "fitted c = {lower}, C = {upper}");
}

/// Samples of a direct run at a fixed step.
fn run_samples(f0: &InterfaceField, m: usize, dt: f64, steps: usize) -> Vec<(f64, RecoveredFields, PlasmaVacuumState)> {
    let (setup, state) = equilibrium_over(f0, m);
    let cfg = TimeStepConfig { dt: Some(dt), t_end: dt * steps as f64, ..Default::default() };
    let mut out = Vec::new();
    integrate(state, &setup, &cfg, None, |v| {
        out.push((v.state.time, v.recovered.clone(), v.state.clone()));
        Ok(())
    })
    .unwrap();
    out
}

fn residual_at(samples: &[(f64, RecoveredFields, PlasmaVacuumState)], i: usize) -> LimitResiduals {
    let h: Vec<(f64, &RecoveredFields)> = samples[i - 1..=i + 1].iter().map(|(t, r, _)| (*t, r)).collect();
    limit_residuals(&h).unwrap()
}

#[test]
fn limit_residuals_vanish_at_equilibrium() {
    let samples = run_samples(&InterfaceField::zeros(16), 8, 0.05, 3);
    let r = residual_at(&samples, 1);
    assert!(r.w_norm < 1e-10 && r.b_norm < 1e-10, "{r:?}");
    assert!(r.w_bc.iter().chain(&r.b_bc).all(|x| *x < 1e-10));
    let short: Vec<(f64, &RecoveredFields)> = samples[..2].iter().map(|(t, r, _)| (*t, r)).collect();
    assert!(matches!(limit_residuals(&short), Err(Error::InsufficientHistory { have: 2, need: 3 })));
}

#[test]
fn limit_residuals_shrink_with_the_time_step() {
    let n = 16;
    let f0 = InterfaceField::from_fn(n, |x, y| 0.05 * x.cos() + 0.03 * y.sin());
    let coarse = run_samples(&f0, 12, 0.04, 2);
    let fine = run_samples(&f0, 12, 0.02, 4);
    let a = residual_at(&coarse, 1);
    let b = residual_at(&fine, 2);
    assert!((a.time - b.time).abs() < 1e-14);
    println!("coarse {a:?}\nfine {b:?}");
    assert!(b.w_norm < 1e-3 && b.b_norm < 1e-3);
    assert!(a.w_norm / b.w_norm > 2.0 && a.b_norm / b.b_norm > 2.0);
}

#[test]
fn limit_residuals_of_unrelated_fields_are_large() {
    let n = 16;
    let f0 = InterfaceField::from_fn(n, |x, _| 0.05 * x.cos());
    let mut samples = run_samples(&f0, 8, 0.04, 2);
    // Replace the middle velocity by an unrelated divergence-free field.
    let map = samples[1].1.maps.plasma.clone();
    samples[1].1.u = BulkVector::from_fn(&map, |x, y, _| [y.sin(), x.cos(), 0.0]);
    let r = residual_at(&samples, 1);
    assert!(r.w_norm > 0.1 && r.b_norm > 0.1, "{r:?}");
}

#[test]
fn divergence_persistence_examples() {
    let n = 16;
    let f0 = InterfaceField::from_fn(n, |x, y| 0.1 * x.cos() + 0.05 * (x - y).sin());
    let (setup, mut state) = equilibrium_over(&f0, 12);
    let map = setup.reference_map(Side::Plasma).clone();
    state.omega = BulkVector::from_fn(&map, |x, y, z| [z * y.sin(), x.cos() * z, (x + y).sin()]);
    state.j = BulkVector::from_fn(&map, |x, _, z| [0.0, z * z * x.sin(), 0.2 * x.cos()]);
    let rec = recover(&state, &setup).unwrap();
    let (a, b) = divergence_persistence(&rec.omega_tilde, &rec.j_tilde, &rec.maps.plasma);
    assert!(a < 1e-9 && b < 1e-9, "{a} {b}");
    let (a, b) = curl_mismatch(&rec);
    assert!(a < 1e-7 && b < 1e-7, "{a} {b}");
    let zero = BulkVector::zeros(n, 12, Side::Plasma);
    assert_eq!(divergence_persistence(&zero, &zero, &map), (0.0, 0.0));
}

#[test]
fn interface_residual_examples() {
    let n = 16;
    let (setup, state) = equilibrium_over(&InterfaceField::zeros(n), 8);
    let rec = recover(&state, &setup).unwrap();
    let r = interface_residuals(&state, &rec).unwrap();
    assert!(r.pressure_balance < 1e-12 && r.h_normal < 1e-12 && r.h_hat_normal < 1e-12 && r.kinematic < 1e-12);

    let f0 = InterfaceField::from_fn(n, |x, y| 0.1 * x.cos() + 0.05 * y.sin());
    let (setup, mut state) = equilibrium_over(&f0, 12);
    state.theta = InterfaceField::from_fn(n, |x, y| 0.3 + 0.1 * (x + y).cos());
    let rec = recover(&state, &setup).unwrap();
    let r = interface_residuals(&state, &rec).unwrap();
    assert!(r.h_normal < 1e-7 && r.h_hat_normal < 1e-7 && r.pressure_balance < 1e-7, "{r:?}");
    assert!((r.kinematic - 0.3).abs() < 1e-7, "{r:?}");
}

#[test]
fn record_serializes_with_null_limits() {
    let (setup, state) = equilibrium_over(&InterfaceField::zeros(8), 8);
    let rec = recover(&state, &setup).unwrap();
    let record = DiagnosticsRecord::from_sample(0, &state, &rec, &setup, 0.0).unwrap();
    assert!(record.is_finite());
    assert!((record.lambda_min - 1.0).abs() < 1e-12 && record.e_s == 0.0);
    let text = serde_json::to_string(&record).unwrap();
    assert!(text.contains("\"w_norm\":null"));
    let back: DiagnosticsRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, record);
}
