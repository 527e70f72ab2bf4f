#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A·Aᵀ + δI with Gaussian A.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| normal(rng));
    &a * a.transpose() + DMatrix::identity(n, n) * ridge
}

pub fn dates(n: usize) -> Vec<String> {
    harcov::synth::business_days(chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(), n)
}

/// Trailing mean of the `j` values before position `t`.
pub fn back_mean(x: &[f64], t: usize, j: usize) -> f64 {
    x[t - j..t].iter().sum::<f64>() / j as f64
}

/// Level HAR simulation `y_t = b0 + b1 y_{t−1} + b2 m5 + b3 m20 + sd·ε`.
pub fn sim_har(rng: &mut ChaCha8Rng, b: [f64; 4], sd: f64, n: usize, start: f64) -> Vec<f64> {
    let mut y = vec![start; 20];
    while y.len() < n {
        let t = y.len();
        let v = b[0]
            + b[1] * y[t - 1]
            + b[2] * back_mean(&y, t, 5)
            + b[3] * back_mean(&y, t, 20)
            + sd * normal(rng);
        y.push(v);
    }
    y
}

/// OLS by the normal equations.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    xtx.lu().solve(&(x.transpose() * y)).unwrap()
}

/// Simulates `g_t = x_tᵀβ + g_{t−1} λ_t + σ_ε ε_t` with an AR(1) state λ,
/// returning `g` (the log series when used for HARSL).
pub fn sim_ss(
    rng: &mut ChaCha8Rng,
    beta: [f64; 4],
    phi: f64,
    s_eps: f64,
    s_eta: f64,
    n: usize,
    start: f64,
) -> Vec<f64> {
    let mut g = vec![start; 20];
    let mut lam = s_eta / (1.0 - phi * phi).sqrt() * normal(rng);
    while g.len() < n {
        let t = g.len();
        lam = phi * lam + s_eta * normal(rng);
        let v = beta[0]
            + beta[1] * g[t - 1]
            + beta[2] * back_mean(&g, t, 5)
            + beta[3] * back_mean(&g, t, 20)
            + g[t - 1] * lam
            + s_eps * normal(rng);
        g.push(v);
    }
    g
}

/// Log density of y under the joint Gaussian implied by the model:
/// Cov(y) = diag(f) Σ_λ diag(f) + σ_ε² I with Σ_λ[s,t] = σ_η² φ^|s−t| / (1−φ²).
pub fn brute_force_loglik(
    p: &harcov::statespace::SsParams,
    y: &[f64],
    x: &DMatrix<f64>,
    f: &[f64],
) -> f64 {
    let n = y.len();
    let var0 = p.sigma_eta.powi(2) / (1.0 - p.phi * p.phi);
    let cov = DMatrix::from_fn(n, n, |s, t| {
        let lag = (s as i32 - t as i32).unsigned_abs() as i32;
        let mut c = f[s] * f[t] * var0 * p.phi.powi(lag);
        if s == t {
            c += p.sigma_eps.powi(2);
        }
        c
    });
    let mean = x * DVector::from_column_slice(&p.beta);
    let r = DVector::from_column_slice(y) - mean;
    let chol = cov.cholesky().unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(&r));
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Random filter inputs with n = 1 + 7·seed mod 50 and 1..=4 regressors.
pub fn draw_case(
    seed: u64,
) -> (
    harcov::statespace::SsParams,
    Vec<f64>,
    DMatrix<f64>,
    Vec<f64>,
) {
    let mut g = rng(seed);
    let n = 1 + (seed as usize * 7) % 50;
    let k = 1 + (seed as usize) % 4;
    let p = harcov::statespace::SsParams {
        beta: (0..k).map(|_| normal(&mut g)).collect(),
        phi: 0.98 * (2.0 * g.random::<f64>() - 1.0),
        sigma_eps: 0.1 + normal(&mut g).abs(),
        sigma_eta: normal(&mut g).abs(),
    };
    let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { normal(&mut g) });
    let f: Vec<f64> = (0..n).map(|_| normal(&mut g)).collect();
    let y: Vec<f64> = (0..n).map(|_| 2.0 * normal(&mut g)).collect();
    (p, y, x, f)
}

pub fn objective(h: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    (w.transpose() * h * w)[(0, 0)]
}

pub fn random_sum_one(g: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| normal(g));
    let s = v.sum();
    if s.abs() < 1e-3 {
        return DVector::from_element(n, 1.0 / n as f64);
    }
    v / s
}

/// Minimum of wᵀHw over the simplex by enumerating every support and solving
/// the equality-constrained problem on it with an explicit inverse.
pub fn support_oracle(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let m = idx.len();
        let sub = DMatrix::from_fn(m, m, |i, j| h[(idx[i], idx[j])]);
        let Some(inv) = sub.try_inverse() else {
            continue;
        };
        let z = inv * DVector::from_element(m, 1.0);
        let w_sub = &z / z.sum();
        if w_sub.iter().all(|v| *v >= 0.0) {
            let mut w = DVector::zeros(n);
            for (k, &i) in idx.iter().enumerate() {
                w[i] = w_sub[k];
            }
            best = best.min(objective(h, &w));
        }
    }
    best
}

/// Dense grid over the simplex with spacing 1/steps.
pub fn grid_min(h: &DMatrix<f64>, steps: usize) -> f64 {
    let n = h.nrows();
    let mut best = f64::INFINITY;
    let mut w = vec![0usize; n];
    fn rec(
        h: &DMatrix<f64>,
        w: &mut Vec<usize>,
        pos: usize,
        left: usize,
        steps: usize,
        best: &mut f64,
    ) {
        let n = w.len();
        if pos == n - 1 {
            w[pos] = left;
            let v = DVector::from_iterator(n, w.iter().map(|k| *k as f64 / steps as f64));
            *best = best.min(objective(h, &v));
            return;
        }
        for k in 0..=left {
            w[pos] = k;
            rec(h, w, pos + 1, left - k, steps, best);
        }
    }
    rec(h, &mut w, 0, steps, steps, &mut best);
    best
}
