//! Poisson problems on mapped strips, harmonic extensions and
//! Dirichlet–Neumann operators.
//!
//! The discrete problem is collocation: the transformed Laplacian on the
//! interior levels and one boundary row per face.  It is solved by
//! restarted GMRES, left-preconditioned with the flat-strip operator of
//! the same mean depth, which is inverted exactly mode by mode.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::chebyshev::chebyshev;
use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{BulkField, BulkVector, CoordinateMap, MapMetric, Side};
use crate::spectral::InterfaceField;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 500;

/// Relative residual at which a stagnating iteration is still accepted.
pub const ROUNDING_FLOOR: f64 = 1e-9;
const RESTART: usize = 40;
/// Relative tolerance of the solvability check for pure Neumann problems.
const COMPATIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Bc {
    Dirichlet(InterfaceField),
    /// Upward conormal data (−∂₁Z, −∂₂Z, 1)·∇u; on the interface this is
    /// N_f·∇u, on a wall it is ∂₃u.
    Neumann(InterfaceField),
}

impl Bc {
    fn is_dirichlet(&self) -> bool {
        matches!(self, Bc::Dirichlet(_))
    }

    fn data(&self) -> &InterfaceField {
        match self {
            Bc::Dirichlet(g) | Bc::Neumann(g) => g,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EllipticProblem<'a> {
    pub map: &'a CoordinateMap,
    pub rhs: BulkField,
    pub interface: Bc,
    pub wall: Bc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticSolution {
    pub field: BulkField,
    pub residual_norm: f64,
    pub iterations: usize,
}

struct System<'a> {
    metric: &'a MapMetric,
    iface: usize,
    wall: usize,
    iface_dirichlet: bool,
    wall_dirichlet: bool,
    pinned: bool,
}

impl System<'_> {
    fn nn(&self) -> usize {
        self.metric.n * self.metric.n
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let nn = self.nn();
        let g = self.metric.gradient_raw(u);
        let mut out = self.metric.divergence_raw([&g[0], &g[1], &g[2]]);
        for (level, dirichlet) in [(self.iface, self.iface_dirichlet), (self.wall, self.wall_dirichlet)] {
            let row: Vec<f64> = if dirichlet {
                u[level * nn..(level + 1) * nn].to_vec()
            } else {
                self.metric.conormal_from_gradient(&g, level).into_values()
            };
            out[level * nn..(level + 1) * nn].copy_from_slice(&row);
        }
        if self.pinned {
            let w = self.wall;
            let pinned = pin_flat_modes(self.metric.n, &out[w * nn..(w + 1) * nn], &u[w * nn..(w + 1) * nn]);
            out[w * nn..(w + 1) * nn].copy_from_slice(&pinned);
        }
        out
    }
}

/// Replaces the modes of `row` that the flat operator cannot see by the
/// corresponding modes of `values`.
fn pin_flat_modes(n: usize, row: &[f64], values: &[f64]) -> Vec<f64> {
    let mut spec = fft::forward(n, row);
    let vals = fft::forward(n, values);
    for i2 in 0..n {
        for i1 in 0..n {
            if fft::is_flat_mode(n, i1, i2) {
                spec[i2 * n + i1] = vals[i2 * n + i1];
            }
        }
    }
    fft::inverse(n, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PrecondKey {
    n: usize,
    m: usize,
    side: Side,
    iface_dirichlet: bool,
    wall_dirichlet: bool,
    depth_bits: u64,
}

/// Exact inverse of the flat-strip operator, one dense vertical block per
/// distinct horizontal symbol.
struct FlatPreconditioner {
    n: usize,
    m: usize,
    block_of_mode: Vec<usize>,
    inverses: Vec<Vec<f64>>,
}

impl FlatPreconditioner {
    fn get(key: PrecondKey) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<PrecondKey, Arc<FlatPreconditioner>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(p) = cache.lock().expect("preconditioner cache poisoned").get(&key) {
            return p.clone();
        }
        let built = Arc::new(Self::build(key));
        cache.lock().expect("preconditioner cache poisoned").entry(key).or_insert(built).clone()
    }

    fn build(key: PrecondKey) -> Self {
        let PrecondKey { n, m, side, iface_dirichlet, wall_dirichlet, depth_bits } = key;
        let depth = f64::from_bits(depth_bits);
        let c = 2.0 / depth;
        let cheb = chebyshev(m);
        let m1 = m + 1;
        let d = DMatrix::from_row_slice(m1, m1, &cheb.diff);
        let d2 = &d * &d;
        let iface = side.interface_level(m);
        let wall = side.wall_level(m);
        let pinned = !iface_dirichlet && !wall_dirichlet;

        let mut groups: HashMap<(u64, bool), usize> = HashMap::new();
        let mut symbols: Vec<(f64, bool)> = Vec::new();
        let mut block_of_mode = vec![0; n * n];
        for i2 in 0..n {
            for i1 in 0..n {
                let q1 = fft::deriv_wavenumber(n, i1);
                let q2 = fft::deriv_wavenumber(n, i2);
                let q = q1 * q1 + q2 * q2;
                let pin = pinned && fft::is_flat_mode(n, i1, i2);
                let idx = *groups.entry((q.to_bits(), pin)).or_insert_with(|| {
                    symbols.push((q, pin));
                    symbols.len() - 1
                });
                block_of_mode[i2 * n + i1] = idx;
            }
        }
        let inverses = symbols
            .par_iter()
            .map(|&(q, pin)| {
                let mut a = DMatrix::<f64>::zeros(m1, m1);
                for k in 0..m1 {
                    if k == iface || k == wall {
                        continue;
                    }
                    for j in 0..m1 {
                        a[(k, j)] = c * c * d2[(k, j)];
                    }
                    a[(k, k)] -= q;
                }
                for (level, dirichlet) in [(iface, iface_dirichlet), (wall, wall_dirichlet || pin)] {
                    if dirichlet {
                        a[(level, level)] = 1.0;
                    } else {
                        for j in 0..m1 {
                            a[(level, j)] = c * d[(level, j)];
                        }
                    }
                }
                let inv = a.try_inverse().expect("flat operator is invertible");
                // Row-major copy.
                let mut out = vec![0.0; m1 * m1];
                for r in 0..m1 {
                    for s in 0..m1 {
                        out[r * m1 + s] = inv[(r, s)];
                    }
                }
                out
            })
            .collect();
        Self { n, m, block_of_mode, inverses }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let (n, m1) = (self.n, self.m + 1);
        let nn = n * n;
        let spec = fft::forward(n, r);
        let columns: Vec<Vec<Complex64>> = (0..nn)
            .into_par_iter()
            .map(|p| {
                let inv = &self.inverses[self.block_of_mode[p]];
                let mut col = vec![Complex64::new(0.0, 0.0); m1];
                for (k, out) in col.iter_mut().enumerate() {
                    let row = &inv[k * m1..(k + 1) * m1];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, a) in row.iter().enumerate() {
                        acc += *a * spec[j * nn + p];
                    }
                    *out = acc;
                }
                col
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); spec.len()];
        for (p, col) in columns.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                out[k * nn + p] = *v;
            }
        }
        fft::inverse(n, out)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct GmresOutcome {
    x: Vec<f64>,
    relative_residual: f64,
    iterations: usize,
    converged: bool,
}

/// Left-preconditioned restarted GMRES with modified Gram–Schmidt.
fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precondition: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
) -> GmresOutcome {
    // Convergence is judged on the true residual; the Krylov iteration
    // itself runs on the left-preconditioned system.
    let bnorm = norm(b);
    let target = if bnorm > 0.0 { tol * bnorm } else { tol };
    let mut x = x0;
    let mut iterations = 0;
    let relative = |res: f64| if bnorm > 0.0 { res / bnorm } else { res };
    let mut stalled = 0;
    let mut best = f64::INFINITY;
    loop {
        let ax = apply(&x);
        let r0: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let true_res = norm(&r0);
        if true_res <= target {
            return GmresOutcome { x, relative_residual: relative(true_res), iterations, converged: true };
        }
        if true_res < 0.5 * best {
            best = true_res;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if iterations >= MAX_ITERATIONS || stalled > 3 {
            // A request below the rounding floor is met as closely as the
            // floor allows.
            let converged = stalled > 3 && relative(true_res) <= ROUNDING_FLOOR;
            return GmresOutcome { x, relative_residual: relative(true_res), iterations, converged };
        }
        let r = precondition(&r0);
        let beta = norm(&r);
        // Preconditioned residual level expected to meet the true target.
        let inner_target = 0.5 * beta * target / true_res;
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; RESTART]; RESTART + 1];
        let mut cs = vec![0.0; RESTART];
        let mut sn = vec![0.0; RESTART];
        let mut g = vec![0.0; RESTART + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..RESTART {
            let mut w = precondition(&apply(&basis[j]));
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(&w, q);
                h[i][j] = hij;
                for (wk, qk) in w.iter_mut().zip(q) {
                    *wk -= hij * qk;
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            iterations += 1;
            if g[j + 1].abs() <= inner_target || wn == 0.0 || iterations >= MAX_ITERATIONS {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for (k, yk) in y.iter().enumerate().skip(i + 1) {
                acc -= h[i][k] * yk;
            }
            y[i] = acc / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, qk) in x.iter_mut().zip(&basis[i]) {
                *xk += yi * qk;
            }
        }
        if used == 0 {
            stalled = usize::MAX / 2;
        }
    }
}

/// Solves the problem to the given relative tolerance.
pub fn solve(problem: &EllipticProblem, tol: f64) -> Result<EllipticSolution> {
    solve_with_guess(problem, tol, None)
}

/// As [`solve`], starting the iteration from `guess`.
pub fn solve_with_guess(
    problem: &EllipticProblem,
    tol: f64,
    guess: Option<&BulkField>,
) -> Result<EllipticSolution> {
    let map = problem.map;
    let metric = map.metric();
    let (n, m) = (map.n(), map.m());
    let nn = n * n;
    if problem.rhs.n() != n || problem.rhs.m() != m || problem.interface.data().n() != n || problem.wall.data().n() != n {
        return Err(Error::GridMismatch("elliptic data does not match the map grid".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidField(format!("tolerance {tol} must be positive")));
    }
    problem.rhs.values().iter().chain(problem.interface.data().values()).chain(problem.wall.data().values()).try_for_each(
        |v| if v.is_finite() { Ok(()) } else { Err(Error::InvalidField("non-finite elliptic data".into())) },
    )?;
    let side = map.side();
    let iface = side.interface_level(m);
    let wall = side.wall_level(m);
    let pinned = !problem.interface.is_dirichlet() && !problem.wall.is_dirichlet();
    if pinned {
        check_compatibility(problem)?;
    }

    let mut b = problem.rhs.values().to_vec();
    b[iface * nn..(iface + 1) * nn].copy_from_slice(problem.interface.data().values());
    b[wall * nn..(wall + 1) * nn].copy_from_slice(problem.wall.data().values());
    if pinned {
        let zeros = vec![0.0; nn];
        let row = pin_flat_modes(n, &b[wall * nn..(wall + 1) * nn], &zeros);
        b[wall * nn..(wall + 1) * nn].copy_from_slice(&row);
    }

    let system = System {
        metric,
        iface,
        wall,
        iface_dirichlet: problem.interface.is_dirichlet(),
        wall_dirichlet: problem.wall.is_dirichlet(),
        pinned,
    };
    let key = PrecondKey {
        n,
        m,
        side,
        iface_dirichlet: system.iface_dirichlet,
        wall_dirichlet: system.wall_dirichlet,
        depth_bits: quantized_depth(map.mean_depth()).to_bits(),
    };
    let precond = FlatPreconditioner::get(key);
    let x0 = match guess {
        Some(g) => g.values().to_vec(),
        None => vec![0.0; b.len()],
    };
    let outcome = gmres(|u| system.apply(u), |r| precond.apply(r), &b, x0, tol);
    if !outcome.converged {
        return Err(Error::EllipticDivergence { iterations: outcome.iterations, residual: outcome.relative_residual });
    }
    Ok(EllipticSolution {
        field: BulkField::new(n, m, side, outcome.x)?,
        residual_norm: outcome.relative_residual,
        iterations: outcome.iterations,
    })
}

/// Depth used by the preconditioner, rounded so that maps whose mean
/// heights differ by rounding share one cached factorization.
fn quantized_depth(depth: f64) -> f64 {
    let scale = (1u64 << 32) as f64;
    (depth * scale).round() / scale
}

fn check_compatibility(problem: &EllipticProblem) -> Result<()> {
    let map = problem.map;
    let weights = map.metric().volume_weights();
    let volume: f64 = weights.iter().zip(problem.rhs.values()).map(|(w, v)| w * v).sum();
    let volume_abs: f64 = weights.iter().zip(problem.rhs.values()).map(|(w, v)| (w * v).abs()).sum();
    let fi = problem.interface.data();
    let fw = problem.wall.data();
    // Flux through the upper face minus flux through the lower face.
    let flux = match map.side() {
        Side::Plasma => fi.integral() - fw.integral(),
        Side::Vacuum => fw.integral() - fi.integral(),
    };
    let scale = volume_abs + fi.map(f64::abs).integral() + fw.map(f64::abs).integral();
    let mismatch = volume - flux;
    if mismatch.abs() > COMPATIBILITY_TOL * scale + 1e-12 {
        return Err(Error::IncompatibleData { mismatch });
    }
    Ok(())
}

/// H_f ψ: harmonic, equal to ψ on Γ_f, zero vertical derivative on the wall.
pub fn harmonic_extension(psi: &InterfaceField, map: &CoordinateMap) -> Result<BulkField> {
    let n = map.n();
    let problem = EllipticProblem {
        map,
        rhs: BulkField::zeros(n, map.m(), map.side()),
        interface: Bc::Dirichlet(psi.clone()),
        wall: Bc::Neumann(InterfaceField::zeros(n)),
    };
    Ok(solve(&problem, DEFAULT_TOL)?.field)
}

/// Ĥ_f g: harmonic, with the interface trace of g and the wall Neumann
/// data ∂₃g.
pub fn harmonic_extension_hat(g: &BulkField, map: &CoordinateMap) -> Result<BulkField> {
    let problem = EllipticProblem {
        map,
        rhs: BulkField::zeros(map.n(), map.m(), map.side()),
        interface: Bc::Dirichlet(g.interface_trace()),
        wall: Bc::Neumann(map.wall_normal_derivative(g)),
    };
    Ok(solve(&problem, DEFAULT_TOL)?.field)
}

/// 𝓝ψ = ∓N_f·∇H_f ψ on Γ_f (upper sign for the plasma side).
pub fn dn_operator(psi: &InterfaceField, map: &CoordinateMap) -> Result<InterfaceField> {
    let ext = harmonic_extension(psi, map)?;
    Ok(map.interface_conormal(&ext).scale(map.side().dn_sign()))
}

/// 𝓝̂g = ∓N_f·∇Ĥ_f g on Γ_f.
pub fn dn_hat(g: &BulkField, map: &CoordinateMap) -> Result<InterfaceField> {
    let ext = harmonic_extension_hat(g, map)?;
    Ok(map.interface_conormal(&ext).scale(map.side().dn_sign()))
}

/// N̄_f g = 𝓝̂⁺g − 𝓝⁻(g|_Γf) for g given in the vacuum region.
pub fn dn_bar(g: &BulkField, map_plus: &CoordinateMap, map_minus: &CoordinateMap) -> Result<InterfaceField> {
    let hat = dn_hat(g, map_plus)?;
    let minus = dn_operator(&g.interface_trace(), map_minus)?;
    Ok(hat.sub(&minus))
}

/// −Σᵢⱼ ∂ᵢv₁ʲ ∂ⱼv₂ⁱ in physical coordinates.
pub fn pressure_source(v1: &BulkVector, v2: &BulkVector, map: &CoordinateMap) -> BulkField {
    let g1: Vec<[Vec<f64>; 3]> = v1.components.iter().map(|c| map.metric().gradient_raw(c.values())).collect();
    let g2: Vec<[Vec<f64>; 3]> = if std::ptr::eq(v1, v2) {
        g1.clone()
    } else {
        v2.components.iter().map(|c| map.metric().gradient_raw(c.values())).collect()
    };
    let len = map.metric().len();
    let mut out = vec![0.0; len];
    for i in 0..3 {
        for j in 0..3 {
            // ∂ᵢ v₁ʲ = g1[j][i], ∂ⱼ v₂ⁱ = g2[i][j]
            for p in 0..len {
                out[p] -= g1[j][i][p] * g2[i][j][p];
            }
        }
    }
    BulkField::from_vec(map.n(), map.m(), map.side(), out)
}

/// p with Δp = −tr(∇v₁∇v₂), p = 0 on Γ_f and ∂₃p = 0 on the wall.
pub fn solve_pressure_pair(v1: &BulkVector, v2: &BulkVector, map: &CoordinateMap) -> Result<BulkField> {
    solve_pressure_source(pressure_source(v1, v2, map), map)
}

pub(crate) fn solve_pressure_source(rhs: BulkField, map: &CoordinateMap) -> Result<BulkField> {
    let n = map.n();
    let problem = EllipticProblem {
        map,
        rhs,
        interface: Bc::Dirichlet(InterfaceField::zeros(n)),
        wall: Bc::Neumann(InterfaceField::zeros(n)),
    };
    Ok(solve(&problem, DEFAULT_TOL)?.field)
}

/// Discrete H^σ norm of a bulk field: horizontal Fourier weights
/// combined with vertical derivatives up to order ⌊σ⌋.
pub fn bulk_hs_norm(u: &BulkField, map: &CoordinateMap, sigma: f64) -> f64 {
    bulk_hs_norm_metric(u.values(), map.metric(), sigma)
}

pub(crate) fn bulk_hs_norm_metric(u: &[f64], metric: &MapMetric, sigma: f64) -> f64 {
    let n = metric.n;
    let cheb = chebyshev(metric.m);
    let nn = n * n;
    let h = 2.0 * PI / n as f64;
    let orders = sigma.max(0.0).floor() as usize;
    let mut current = u.to_vec();
    let mut total = 0.0;
    for r in 0..=orders {
        let weight = sigma - r as f64;
        let spec = fft::forward(n, &current);
        for k in 0..=metric.m {
            let mut level = 0.0;
            for i2 in 0..n {
                for i1 in 0..n {
                    let w = (1.0 + fft::k_squared(n, i1, i2)).powf(weight);
                    level += w * spec[k * nn + i2 * n + i1].norm_sqr();
                }
            }
            // Mean cell height of the level converts ds to dx₃.
            let zs_mean = metric.zs[k * nn..(k + 1) * nn].iter().sum::<f64>() / nn as f64;
            total += cheb.weights[k] * zs_mean * level * h * h / nn as f64;
        }
        if r < orders {
            let d = cheb.differentiate(nn, &current);
            current = d.iter().zip(&metric.zs).map(|(a, b)| a / b).collect();
        }
    }
    total.sqrt()
}

pub fn bulk_hs_norm_vec(v: &BulkVector, map: &CoordinateMap, sigma: f64) -> f64 {
    v.components.iter().map(|c| bulk_hs_norm(c, map, sigma).powi(2)).sum::<f64>().sqrt()
}
