//! Acceptance suite: one PASS/FAIL line per criterion.  Pass criterion
//! numbers as arguments to run a subset.

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use mhdsim_cli::config::Level;
use mhdsim_cli::run::*;
use mhdsim_cli::scenario::build;
use mhdsim_cli::snapshot::{decode, encode, read_snapshot};
use mhdsim_cli::{parse_config, run, RunConfig};
use mhdsim_core::diagnostics::{stability_lambda, DiagnosticsRecord};
use mhdsim_core::divcurl::*;
use mhdsim_core::dynamics::{integrate, TimeStepConfig};
use mhdsim_core::elliptic::{dn_operator, solve, Bc, EllipticProblem};
use mhdsim_core::geometry::*;
use mhdsim_core::spectral::InterfaceField;
use mhdsim_core::state::PlasmaVacuumState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, notes: Vec::new() }
    }
}

fn config(json: &str, dir: &Path) -> RunConfig {
    let mut c = parse_config(json).expect("acceptance configs are valid");
    c.output_dir = dir.to_path_buf();
    c
}

fn records(dir: &Path) -> Vec<DiagnosticsRecord> {
    fs::read_to_string(dir.join(DIAGNOSTICS_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

fn equilibrium_preservation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let summary = run(&config(
        r#"{"scenario": {"name": "equilibrium"}, "n": 32, "m": 32, "t_end": 1.0, "snapshot_every": 1}"#,
        dir.path(),
    ));
    let elapsed = start.elapsed().as_secs_f64();
    let recs = records(dir.path());
    let mut max_f: f64 = 0.0;
    let mut max_theta: f64 = 0.0;
    for path in &summary.snapshots {
        let (_, s) = read_snapshot(&dir.path().join(path)).unwrap();
        max_f = max_f.max(s.f.max_abs());
        max_theta = max_theta.max(s.theta.max_abs());
    }
    let w = max_of(recs.iter().filter_map(|r| r.w_norm));
    let b = max_of(recs.iter().filter_map(|r| r.b_norm));
    let lambda = max_of(recs.iter().map(|r| (r.lambda_min - 1.0).abs()));
    let interior = recs.iter().filter(|r| r.w_norm.is_some()).count();
    let pass = summary.exit_code == EXIT_OK
        && summary.reached_end
        && interior + 2 == recs.len()
        && max_f <= 1e-8
        && max_theta <= 1e-8
        && w <= 1e-8
        && b <= 1e-8
        && lambda <= 1e-10
        && elapsed <= 120.0;
    Outcome::new(
        pass,
        format!(
            "{} steps to t = {}: max|f| {max_f:.1e}, max|θ| {max_theta:.1e}, w {w:.1e}, b {b:.1e}, max|Λ−1| {lambda:.1e}, {elapsed:.1}s",
            summary.steps, summary.t_final
        ),
    )
}

/// Period of the full nonlinear system from the projection of θ on cos(k·x′).
fn nonlinear_period(k: [f64; 2]) -> (f64, f64) {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"scenario": {{"name": "perturbed", "epsilon": 1e-4, "k": [{}, {}]}}, "n": 8, "m": 12, "t_end": 7.0}}"#,
        k[0], k[1]
    );
    let cfg = config(&text, dir.path());
    let (setup, init) = build(&cfg).unwrap();
    let shape = InterfaceField::from_fn(8, |x, y| (k[0] * x + k[1] * y).cos());
    let (mut times, mut values) = (Vec::new(), Vec::new());
    let tcfg = TimeStepConfig { t_end: cfg.t_end, ..Default::default() };
    integrate(init.state, &setup, &tcfg, None, |view| {
        times.push(view.state.time);
        values.push(view.state.theta.inner(&shape));
        Ok(())
    })
    .unwrap();
    let knorm = k[0].hypot(k[1]);
    let predicted = 2.0 * PI / (k[0] * k[0] + k[1] * k[1] * knorm.tanh().powi(2)).sqrt();
    (crossing_period(&times, &values).unwrap_or(f64::NAN), predicted)
}

fn linear_dispersion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut notes = Vec::new();
    for (k, expected) in [([1.0, 0.0], 2.0 * PI), ([1.0, 1.0], 2.0 * PI / 2f64.sqrt())] {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"{{"scenario": {{"name": "perturbed", "epsilon": 1e-4, "k": [{}, {}]}}, "mode": "linear",
                 "n": 16, "m": 12, "t_end": 7.0, "dt": 0.01}}"#,
            k[0], k[1]
        );
        let summary = run(&config(&text, dir.path()));
        let period = summary.linear.as_ref().and_then(|l| l.period).unwrap_or(f64::NAN);
        let rel = (period / expected - 1.0).abs();
        pass &= summary.exit_code == EXIT_OK && rel <= 0.02;
        parts.push(format!("k = {k:?}: period {period:.5} vs {expected:.5} ({:.2}%)", 100.0 * rel));

        let (full, predicted) = nonlinear_period(k);
        notes.push(format!(
            "full system k = {k:?}: period {full:.4}, frozen-vacuum symbol (h·k)² + (ĥ·k)² tanh²|k| predicts {predicted:.4}"
        ));
    }
    Outcome { pass, detail: parts.join("; "), notes }
}

fn dn_oracle() -> Outcome {
    let (n, m) = (32, 32);
    let mut worst: f64 = 0.0;
    let modes: Vec<[f64; 2]> = (1..=8).map(|k| [k as f64, 0.0]).chain([[3.0, 4.0], [5.0, 5.0], [0.0, 8.0]]).collect();
    for depth in [0.5, 1.0, 1.5] {
        let plasma = CoordinateMap::flat(n, m, Side::Plasma, depth - 1.0);
        let vacuum = CoordinateMap::flat(n, m, Side::Vacuum, 1.0 - depth);
        for k in &modes {
            let kn = k[0].hypot(k[1]);
            let psi = InterfaceField::from_fn(n, |x, y| (k[0] * x + k[1] * y).cos());
            let expected = psi.scale(kn * (kn * depth).tanh());
            for map in [&plasma, &vacuum] {
                let out = dn_operator(&psi, map).unwrap();
                worst = worst.max(out.max_abs_diff(&expected) / expected.max_abs());
            }
        }
    }
    Outcome::new(worst <= 1e-6, format!("worst relative error {worst:.2e} over depths 0.5, 1, 1.5 and |k| ≤ 8, both sides"))
}

fn elliptic_error(m: usize, amp: f64, neumann_wall: bool) -> f64 {
    let n = 16;
    let reference = build_interface(&InterfaceField::zeros(n), 0.05).unwrap();
    let f = build_interface(&InterfaceField::from_fn(n, |x, _| amp * x.cos()), 0.05).unwrap();
    let map = harmonic_coordinate_map(&f, &reference, Side::Plasma, m, 1e-12).unwrap();
    let u = |x: f64, y: f64, z: f64| x.cos() * y.sin() * (1.5 * z).cosh() + (0.7 * z).sin();
    let lap = |x: f64, y: f64, z: f64| 0.25 * x.cos() * y.sin() * (1.5 * z).cosh() - 0.49 * (0.7 * z).sin();
    let du3 = |x: f64, y: f64, z: f64| 1.5 * x.cos() * y.sin() * (1.5 * z).sinh() + 0.7 * (0.7 * z).cos();
    let exact = BulkField::from_fn(&map, u);
    let wall = if neumann_wall {
        Bc::Neumann(InterfaceField::from_fn(n, |x, y| du3(x, y, -1.0)))
    } else {
        Bc::Dirichlet(exact.wall_trace())
    };
    let problem =
        EllipticProblem { map: &map, rhs: BulkField::from_fn(&map, lap), interface: Bc::Dirichlet(exact.interface_trace()), wall };
    solve(&problem, 1e-13).unwrap().field.max_abs_diff(&exact)
}

fn elliptic_convergence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for amp in [0.0, 0.1] {
        for neumann in [false, true] {
            let (e8, e16) = (elliptic_error(8, amp, neumann), elliptic_error(16, amp, neumann));
            let factor = e8 / e16;
            pass &= factor >= 100.0;
            let kind = if amp == 0.0 { "flat" } else { "curved" };
            let bc = if neumann { "D/N" } else { "D/D" };
            parts.push(format!("{kind} {bc}: {e8:.1e} -> {e16:.1e} (x{factor:.0})"));
        }
    }
    Outcome::new(pass, parts.join(", "))
}

fn div_curl_round_trips() -> Outcome {
    let (n, m) = (16, 24);
    let reference = build_interface(&InterfaceField::zeros(n), 0.05).unwrap();
    let curved_f = build_interface(&InterfaceField::from_fn(n, |x, y| 0.12 * x.cos() + 0.06 * (x - y).sin()), 0.05).unwrap();
    let curved = |side| harmonic_coordinate_map(&curved_f, &reference, side, m, 1e-12).unwrap();
    let (pc, vc) = (curved(Side::Plasma), curved(Side::Vacuum));
    let (pf, vf) = (CoordinateMap::flat(n, m, Side::Plasma, 0.0), CoordinateMap::flat(n, m, Side::Vacuum, 0.0));
    let mut recovery: f64 = 0.0;
    let mut residual: f64 = 0.0;

    // Closed-form oracles.
    let shear = BulkVector::from_fn(&pf, |_, _, z| [(PI * (z + 1.0)).cos(), 0.0, 0.0]);
    let data = PlasmaDivCurlData {
        g: BulkField::zeros(n, m, Side::Plasma),
        omega: BulkVector::from_fn(&pf, |_, _, z| [0.0, -PI * (PI * (z + 1.0)).sin(), 0.0]),
        theta: InterfaceField::zeros(n),
        alpha: [4.0 * PI * PI, 0.0],
    };
    recovery = recovery.max(solve_plasma(&data, &pf).unwrap().max_abs_diff(&shear));
    let c = 1f64.cosh();
    let gradient = BulkVector::from_fn(&vf, |x, _, z| [-x.sin() * (z - 1.0).cosh() / c, 0.0, x.cos() * (z - 1.0).sinh() / c]);
    let data = VacuumDivCurlData {
        g: BulkField::zeros(n, m, Side::Vacuum),
        omega: BulkVector::zeros(n, m, Side::Vacuum),
        theta: InterfaceField::from_fn(n, |x, _| -x.cos() * 1f64.tanh()),
        current: [InterfaceField::zeros(n), InterfaceField::from_fn(n, |x, _| x.sin() / c)],
    };
    let out = solve_vacuum(&data, &vf).unwrap();
    recovery = recovery.max(out.max_abs_diff(&gradient));
    residual = residual.max(max_of(vacuum_residuals(&out, &data, &vf)));

    // Round trips of smooth fields on curved maps.
    let v = BulkVector::from_fn(&pc, |x, y, z| {
        [0.4 + (x + z).sin() * y.cos(), (2.0 * x - y).cos() * (0.5 * z).exp(), (z + 1.0) * (x - 2.0 * y).sin()]
    });
    let data = PlasmaDivCurlData {
        g: pc.divergence(&v),
        omega: pc.curl(&v),
        theta: pc.interface().dot_normal(&v.interface_trace()),
        alpha: [v.components[0].wall_trace().integral(), v.components[1].wall_trace().integral()],
    };
    let out = solve_plasma(&data, &pc).unwrap();
    recovery = recovery.max(out.max_abs_diff(&v));
    residual = residual.max(max_of(plasma_residuals(&out, &data, &pc)));
    let h = BulkVector::from_fn(&vc, |x, y, z| {
        [0.3 + (x + 0.5 * z).cos() * y.sin(), -0.2 + (x - y).sin() * z * z, (2.0 * y + z).cos() * (1.0 + 0.2 * x.sin())]
    });
    let [w1, w2, _] = h.wall_trace();
    let data = VacuumDivCurlData {
        g: vc.divergence(&h),
        omega: vc.curl(&h),
        theta: vc.interface().dot_normal(&h.interface_trace()),
        current: [w2, w1.scale(-1.0)],
    };
    let out = solve_vacuum(&data, &vc).unwrap();
    recovery = recovery.max(out.max_abs_diff(&h));
    residual = residual.max(max_of(vacuum_residuals(&out, &data, &vc)));

    let zero = max_of([
        solve_plasma(&PlasmaDivCurlData::zeros(n, m), &pf).unwrap().max_abs(),
        solve_plasma(&PlasmaDivCurlData::zeros(n, m), &pc).unwrap().max_abs(),
        solve_vacuum(&VacuumDivCurlData::zeros(n, m), &vf).unwrap().max_abs(),
        solve_vacuum(&VacuumDivCurlData::zeros(n, m), &vc).unwrap().max_abs(),
    ]);
    Outcome::new(
        recovery <= 1e-7 && residual <= 1e-7 && zero <= 1e-9,
        format!("max recovery error {recovery:.1e}, max condition residual {residual:.1e}, zero-data output {zero:.1e}"),
    )
}

fn contraction() -> Outcome {
    let base = r#""scenario": {"name": "perturbed", "epsilon": 1e-5, "k": [0, 1]},
                  "current": {"kind": "constant", "j": [2, 0]}, "n": 8, "m": 12, "mode": "picard""#;
    let dir = tempfile::tempdir().unwrap();
    let text = format!(r#"{{{base}, "picard": {{"t_horizon": 3.2, "bisect": true}}}}"#);
    let summary = run(&config(&text, dir.path()));
    let Some(p) = summary.picard.clone().filter(|_| summary.exit_code == EXIT_OK) else {
        return Outcome::new(false, format!("bisection failed: {:?}", summary.message));
    };
    let t = p.t_horizon;
    let run_ok = p.converged && p.ratios.len() >= 3 && p.ratios.iter().all(|&r| r <= 0.5);

    let far = tempfile::tempdir().unwrap();
    let text = format!(r#"{{{base}, "picard": {{"t_horizon": {}}}}}"#, 100.0 * t);
    let long = run(&config(&text, far.path()));
    let raised = long.exit_code == EXIT_NO_CONTRACTION;
    Outcome::new(
        run_ok && raised,
        format!(
            "T = {t} ({} steps): ratios {:?}; T = {}: {} ({})",
            p.steps,
            p.ratios.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>(),
            100.0 * t,
            long.status,
            long.message.unwrap_or_default()
        ),
    )
}

fn limit_equivalence() -> Outcome {
    let cfg = config(
        r#"{"scenario": {"name": "explicit", "modes": [{"k": [1, 0], "amplitude": 0.05},
             {"k": [0, 1], "amplitude": 0.03, "phase": 1.5707963267948966}]}, "mode": "convergence"}"#,
        Path::new("unused"),
    );
    let t_probe = 0.02;
    let coarse = convergence_level(&cfg, &Level { n: 32, m: 32, dt: 0.02 }, t_probe).unwrap();
    let fine = convergence_level(&cfg, &Level { n: 64, m: 64, dt: 0.01 }, t_probe).unwrap();
    let checked = [
        ("w", coarse.w_norm, fine.w_norm),
        ("b", coarse.b_norm, fine.b_norm),
        ("w·N", coarse.w_interface, fine.w_interface),
        ("b·N", coarse.b_interface, fine.b_interface),
    ];
    let pass = checked.iter().all(|&(_, c, f)| f <= 1e-3 && c >= 2.0 * f);
    let detail = checked.iter().map(|(name, c, f)| format!("{name} {c:.2e} -> {f:.2e} (x{:.1})", c / f)).collect::<Vec<_>>();
    let mut out = Outcome::new(pass, detail.join(", "));
    out.notes.push(format!(
        "solver-level residuals (coarse -> fine): pressure balance {:.1e} -> {:.1e}, kinematic {:.1e} -> {:.1e}, h·N {:.1e} -> {:.1e}, ĥ·N {:.1e} -> {:.1e}, wall w₃ {:.1e} -> {:.1e}",
        coarse.pressure_balance,
        fine.pressure_balance,
        coarse.kinematic,
        fine.kinematic,
        coarse.h_normal,
        fine.h_normal,
        coarse.h_hat_normal,
        fine.h_hat_normal,
        coarse.w_wall,
        fine.w_wall
    ));
    out
}

fn conservation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&config(
        r#"{"scenario": {"name": "explicit", "modes": [{"k": [0, 0], "amplitude": 0.1}, {"k": [1, 0], "amplitude": 0.05},
             {"k": [1, 1], "amplitude": 0.02, "phase": 0.4}]}, "n": 16, "m": 12, "t_end": 1.0}"#,
        dir.path(),
    ));
    let recs = records(dir.path());
    let drift = max_of(recs.iter().map(|r| r.mean_f_drift));
    let theta = max_of(recs.iter().map(|r| r.mean_theta));
    let hn = max_of(recs.iter().map(|r| r.hn_residual));
    let khn = max_of(recs.iter().map(|r| r.h_hat_n_residual));
    Outcome::new(
        summary.exit_code == EXIT_OK && summary.reached_end && drift <= 1e-10 && theta <= 1e-10 && hn <= 1e-7 && khn <= 1e-7,
        format!("{} steps: ⟨f⟩ drift {drift:.1e}, max|⟨θ⟩| {theta:.1e}, max h·N {hn:.1e}, max ĥ·N {khn:.1e}", summary.steps),
    )
}

/// min over |ξ| = 1 of (h·ξ)² + (ĥ·ξ)²: 10⁴ angles, then golden-section
/// refinement around the best one.
fn brute_lambda(h: [f64; 2], k: [f64; 2]) -> f64 {
    let q = |phi: f64| {
        let (s, c) = phi.sin_cos();
        (h[0] * c + h[1] * s).powi(2) + (k[0] * c + k[1] * s).powi(2)
    };
    let count = 10_000;
    let step = PI / count as f64;
    let best = (0..count).min_by(|&a, &b| q(a as f64 * step).total_cmp(&q(b as f64 * step))).unwrap();
    let (mut a, mut b) = ((best as f64 - 1.0) * step, (best as f64 + 1.0) * step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if q(c) < q(d) {
            b = d;
        } else {
            a = c;
        }
    }
    q(0.5 * (a + b)).min(q(best as f64 * step))
}

fn lambda_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 4;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut draw = || InterfaceField::new(n, (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let h = [draw(), draw()];
        let k = [draw(), draw()];
        let (field, min) = stability_lambda(&h, &k);
        let mut brute_min = f64::INFINITY;
        for p in 0..n * n {
            let at = |f: &InterfaceField| f.values()[p];
            let brute = brute_lambda([at(&h[0]), at(&h[1])], [at(&k[0]), at(&k[1])]);
            worst = worst.max((field.values()[p] - brute).abs());
            brute_min = brute_min.min(brute);
        }
        worst = worst.max((min - brute_min).abs());
    }
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&config(r#"{"scenario": {"name": "collinear"}, "n": 8, "m": 8}"#, dir.path()));
    Outcome::new(
        worst <= 1e-8 && summary.exit_code == EXIT_STABILITY,
        format!("max deviation from brute force {worst:.1e} on 100 draws; collinear exit code {}", summary.exit_code),
    )
}

fn energy_shape() -> Outcome {
    let mut constants = Vec::new();
    let mut finite = true;
    let mut lambda = f64::NAN;
    for dt in [0.02, 0.01] {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"{{"scenario": {{"name": "random", "amplitude": 0.1, "kmax": 3}}, "seed": 7,
                 "current": {{"kind": "sheared", "base": [1.0, 0.0], "amplitude": 0.3}},
                 "n": 16, "m": 12, "t_end": 2.0, "mode": "linear", "dt": {dt}, "linear": {{"with_source": false}}}}"#
        );
        let summary = run(&config(&text, dir.path()));
        let lin = summary.linear.clone().unwrap();
        let recs: Vec<LinearRecord> =
            fs::read_to_string(dir.path().join(DIAGNOSTICS_FILE)).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        finite &= summary.exit_code == EXIT_OK && recs.iter().all(|r| r.e_s.is_finite() && r.e_s > 0.0);
        lambda = lin.lambda_min;
        constants.push(lin.growth_constant.unwrap_or(f64::NAN));
    }
    let rel = (constants[1] / constants[0] - 1.0).abs();
    Outcome::new(
        finite && constants.iter().all(|c| c.is_finite()) && rel <= 0.2 && lambda >= 0.1,
        format!("fitted C = {:.6} (dt 0.02), {:.6} (dt 0.01), change {:.1e}; Λ_min {lambda:.3}", constants[0], constants[1], rel),
    )
}

fn x2_variation(values: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for plane in values.chunks(n * n) {
        for i2 in 1..n {
            for i1 in 0..n {
                worst = worst.max((plane[i2 * n + i1] - plane[i1]).abs());
            }
        }
    }
    worst
}

fn symmetry() -> Outcome {
    let cfg = config(
        r#"{"scenario": {"name": "explicit", "modes": [{"k": [1, 0], "amplitude": 0.05}, {"k": [2, 0], "amplitude": 0.02, "phase": 0.3}]},
            "n": 16, "m": 12, "t_end": 0.5}"#,
        Path::new("unused"),
    );
    let (setup, init) = build(&cfg).unwrap();
    let n = setup.n();
    let mut worst: f64 = 0.0;
    let mut motion: f64 = 0.0;
    let f0 = init.state.f.clone();
    let tcfg = TimeStepConfig { t_end: 0.5, ..Default::default() };
    let out = integrate(init.state, &setup, &tcfg, None, |view| {
        let s = view.state;
        let r = view.recovered;
        let mut fields: Vec<&[f64]> = vec![s.f.values(), s.theta.values()];
        for v in [&s.omega, &s.j, &r.u, &r.h] {
            fields.extend(v.components.iter().map(|c| c.values()));
        }
        worst = worst.max(max_of(fields.iter().map(|v| x2_variation(v, n))));
        motion = motion.max(s.f.max_abs_diff(&f0));
        Ok(())
    })
    .unwrap();
    Outcome::new(
        out.reached_end && worst <= 1e-10 && motion > 1e-4,
        format!("max x₂-variation {worst:.1e} over {} steps to t = 0.5 (interface moved by {motion:.1e})", out.steps),
    )
}

fn determinism() -> Outcome {
    let text = r#"{"scenario": {"name": "random", "amplitude": 0.05}, "seed": 5, "n": 16, "m": 12, "t_end": 0.3, "snapshot_every": 2}"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (sa, sb) = (run(&config(text, a.path())), run(&config(text, b.path())));
    let read = |d: &Path, f: &Path| fs::read(d.join(f)).unwrap();
    let same_stream = read(a.path(), Path::new(DIAGNOSTICS_FILE)) == read(b.path(), Path::new(DIAGNOSTICS_FILE));
    let same_snapshots = sa.snapshots == sb.snapshots && sa.snapshots.iter().all(|p| read(a.path(), p) == read(b.path(), p));

    let mut exact = true;
    for p in &sa.snapshots {
        let bytes = read(a.path(), p);
        let (header, state) = decode(&bytes).unwrap();
        exact &= encode(header.step, &state) == bytes;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let (n, m) = (8, 6);
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-200..200))).collect() };
        let size = (m + 1) * n * n;
        let omega = BulkVector::new([0, 1, 2].map(|_| BulkField::new(n, m, Side::Plasma, draw(size)).unwrap()));
        let j = BulkVector::new([0, 1, 2].map(|_| BulkField::new(n, m, Side::Plasma, draw(size)).unwrap()));
        let state = PlasmaVacuumState {
            f: InterfaceField::new(n, draw(n * n)).unwrap(),
            theta: InterfaceField::new(n, draw(n * n)).unwrap(),
            omega,
            j,
            beta: [draw(1)[0], draw(1)[0]],
            gamma: [draw(1)[0], draw(1)[0]],
            time: draw(1)[0],
        };
        let (_, back) = decode(&encode(7, &state)).unwrap();
        exact &= back == state && encode(7, &back) == encode(7, &state);
    }
    Outcome::new(
        sa.exit_code == EXIT_OK && same_stream && same_snapshots && exact,
        format!(
            "diagnostics identical: {same_stream}, {} snapshots identical: {same_snapshots}, round trips bit-exact: {exact}",
            sa.snapshots.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("equilibrium preservation", equilibrium_preservation),
        ("linear dispersion", linear_dispersion),
        ("flat Dirichlet-Neumann oracle", dn_oracle),
        ("elliptic convergence", elliptic_convergence),
        ("div-curl round trips", div_curl_round_trips),
        ("Picard contraction", contraction),
        ("limit-system equivalence", limit_equivalence),
        ("conservation", conservation),
        ("stability functional oracle", lambda_oracle),
        ("energy estimate shape", energy_shape),
        ("x2 symmetry", symmetry),
        ("determinism and snapshot I/O", determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {number:>2} {name}: {} [{:.1}s]", outcome.detail, start.elapsed().as_secs_f64());
        for note in &outcome.notes {
            println!("     note: {note}");
        }
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
