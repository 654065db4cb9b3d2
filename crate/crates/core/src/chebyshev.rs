//! Chebyshev–Lobatto collocation on [−1, 1].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes sₖ = cos(πk/M), k = 0..M (so s₀ = 1), with the associated
/// differentiation, quadrature and integration operators.
#[derive(Debug)]
pub struct Chebyshev {
    pub m: usize,
    pub nodes: Vec<f64>,
    /// Row-major (M+1)×(M+1) first-derivative matrix.
    pub diff: Vec<f64>,
    /// Clenshaw–Curtis weights (sum to 2).
    pub weights: Vec<f64>,
    /// Row-major matrix of ∫_{−1}^{sᵢ} ℓⱼ(s) ds.
    pub integrate_from_bottom: Vec<f64>,
    bary: Vec<f64>,
}

pub fn chebyshev(m: usize) -> Arc<Chebyshev> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Chebyshev>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("chebyshev cache poisoned");
    guard.entry(m).or_insert_with(|| Arc::new(Chebyshev::new(m))).clone()
}

impl Chebyshev {
    fn new(m: usize) -> Self {
        assert!(m >= 2, "need at least three vertical nodes");
        let mf = m as f64;
        let nodes: Vec<f64> =
            (0..=m).map(|k| (PI * (mf - 2.0 * k as f64) / (2.0 * mf)).sin()).collect();
        let c = |i: usize| if i == 0 || i == m { 2.0 } else { 1.0 };
        let sign = |i: usize| if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        let mut diff = vec![0.0; (m + 1) * (m + 1)];
        for i in 0..=m {
            let mut row_sum = 0.0;
            for j in 0..=m {
                if i == j {
                    continue;
                }
                let dx = 2.0
                    * (PI * (i + j) as f64 / (2.0 * mf)).sin()
                    * (PI * (j as f64 - i as f64) / (2.0 * mf)).sin();
                let v = c(i) / c(j) * sign(i + j) / dx;
                diff[i * (m + 1) + j] = v;
                row_sum += v;
            }
            diff[i * (m + 1) + i] = -row_sum;
        }

        let theta: Vec<f64> = (0..=m).map(|k| PI * k as f64 / mf).collect();
        let mut weights = vec![0.0; m + 1];
        let mut v = vec![1.0; m + 1];
        if m.is_multiple_of(2) {
            weights[0] = 1.0 / (mf * mf - 1.0);
            for k in 1..m / 2 {
                for i in 1..m {
                    v[i] -= 2.0 * (2.0 * k as f64 * theta[i]).cos() / (4.0 * (k * k) as f64 - 1.0);
                }
            }
            for i in 1..m {
                v[i] -= (mf * theta[i]).cos() / (mf * mf - 1.0);
            }
        } else {
            weights[0] = 1.0 / (mf * mf);
            for k in 1..=(m - 1) / 2 {
                for i in 1..m {
                    v[i] -= 2.0 * (2.0 * k as f64 * theta[i]).cos() / (4.0 * (k * k) as f64 - 1.0);
                }
            }
        }
        weights[m] = weights[0];
        for i in 1..m {
            weights[i] = 2.0 * v[i] / mf;
        }

        let mut integrate_from_bottom = vec![0.0; (m + 1) * (m + 1)];
        for j in 0..=m {
            // Chebyshev coefficients of the j-th Lagrange basis function.
            let a: Vec<f64> = (0..=m)
                .map(|k| {
                    let cj = c(j);
                    2.0 / (mf * c(k)) / cj * (PI * (j * k) as f64 / mf).cos()
                })
                .collect();
            // Coefficients of an antiderivative (degree M+1).
            let mut b = vec![0.0; m + 2];
            for (k, &ak) in a.iter().enumerate() {
                match k {
                    0 => b[1] += ak,
                    1 => b[2] += ak / 4.0,
                    _ => {
                        b[k + 1] += ak / (2.0 * (k + 1) as f64);
                        b[k - 1] -= ak / (2.0 * (k - 1) as f64);
                    }
                }
            }
            let at_bottom: f64 = b.iter().enumerate().map(|(k, bk)| bk * sign(k)).sum();
            for i in 0..=m {
                let value: f64 =
                    b.iter().enumerate().map(|(k, bk)| bk * (k as f64 * theta[i]).cos()).sum();
                integrate_from_bottom[i * (m + 1) + j] = value - at_bottom;
            }
        }

        let bary = (0..=m).map(|j| sign(j) / c(j)).collect();
        Self { m, nodes, diff, weights, integrate_from_bottom, bary }
    }

    /// Applies a (M+1)×(M+1) matrix along the vertical index of a
    /// level-major array whose levels hold `stride` values each.
    pub fn apply(&self, mat: &[f64], stride: usize, data: &[f64]) -> Vec<f64> {
        let m1 = self.m + 1;
        debug_assert_eq!(data.len(), m1 * stride);
        let mut out = vec![0.0; data.len()];
        for i in 0..m1 {
            let row = &mat[i * m1..(i + 1) * m1];
            let dst = &mut out[i * stride..(i + 1) * stride];
            for (j, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = &data[j * stride..(j + 1) * stride];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// d/ds along the vertical index.
    pub fn differentiate(&self, stride: usize, data: &[f64]) -> Vec<f64> {
        self.apply(&self.diff, stride, data)
    }

    /// One row of the differentiation matrix applied to the columns.
    pub fn differentiate_at(&self, level: usize, stride: usize, data: &[f64]) -> Vec<f64> {
        let m1 = self.m + 1;
        let row = &self.diff[level * m1..(level + 1) * m1];
        let mut out = vec![0.0; stride];
        for (j, &a) in row.iter().enumerate() {
            for (d, s) in out.iter_mut().zip(&data[j * stride..(j + 1) * stride]) {
                *d += a * s;
            }
        }
        out
    }

    /// Barycentric interpolation of nodal values `v` at `s`.
    pub fn interpolate(&self, v: &[f64], s: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, (&x, &w)) in self.nodes.iter().zip(&self.bary).enumerate() {
            let d = s - x;
            if d == 0.0 {
                return v[j];
            }
            let t = w / d;
            num += t * v[j];
            den += t;
        }
        num / den
    }

    /// Value and derivative of the interpolant of `v` at `s`.
    pub fn interpolate_with_derivative(&self, v: &[f64], dv: &[f64], s: f64) -> (f64, f64) {
        (self.interpolate(v, s), self.interpolate(dv, s))
    }
}
