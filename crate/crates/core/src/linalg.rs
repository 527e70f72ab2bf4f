//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Ratio of smallest to largest singular value (after column scaling) below
/// which a design is treated as rank deficient.
const RANK_TOL: f64 = 1e-9;

/// Least-squares solution with the usual classical statistics.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// sqrt(RSS / (n - k)).
    pub sigma: f64,
    pub n_obs: usize,
}

/// Ordinary least squares of `y` on the columns of `x` via a thin QR
/// factorisation of the column-scaled design.
///
/// Rank deficiency is diagnosed from the singular values of the triangular
/// factor; the error names every column that loads on a near-null direction.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: &[&str]) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if names.len() != k {
        return Err(Error::Dimension(format!(
            "{k} columns but {} names",
            names.len()
        )));
    }
    if n <= k {
        return Err(Error::InsufficientHistory { needed: k, got: n });
    }

    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let zero_cols: Vec<String> = norms
        .iter()
        .zip(names)
        .filter(|(v, _)| !(**v > 0.0) || !v.is_finite())
        .map(|(_, name)| name.to_string())
        .collect();
    if !zero_cols.is_empty() {
        return Err(Error::Collinearity { columns: zero_cols });
    }

    let mut xs = x.clone();
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        col /= norms[j];
    }
    let qr = xs.qr();
    let r = qr.r();
    let q = qr.q();

    let svd = r.clone().svd(false, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > RANK_TOL * s_max) {
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let mut offending = std::collections::BTreeSet::new();
        for (idx, s) in svd.singular_values.iter().enumerate() {
            if !(*s > RANK_TOL * s_max) {
                for j in 0..k {
                    if v_t[(idx, j)].abs() > 0.1 {
                        offending.insert(j);
                    }
                }
            }
        }
        return Err(Error::Collinearity {
            columns: offending
                .into_iter()
                .map(|j| names[j].to_string())
                .collect(),
        });
    }

    let qty = q.transpose() * y;
    let coef_scaled = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Collinearity {
            columns: names.iter().map(|s| s.to_string()).collect(),
        })?;
    let coef = DVector::from_iterator(k, coef_scaled.iter().zip(&norms).map(|(b, s)| b / s));

    let residuals = y - x * &coef;
    let rss = residuals.norm_squared();
    let sigma = (rss / (n - k) as f64).sqrt();

    // (R^T R)^{-1} = R^{-1} R^{-T}
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("nonsingular triangular factor");
    let cov_scaled = &r_inv * r_inv.transpose();
    let std_errors = DVector::from_iterator(
        k,
        (0..k).map(|j| sigma * cov_scaled[(j, j)].max(0.0).sqrt() / norms[j]),
    );

    Ok(OlsFit {
        coef,
        std_errors,
        residuals,
        rss,
        sigma,
        n_obs: n,
    })
}

/// Gaussian log-likelihood of a regression evaluated at the ML variance RSS/n.
pub fn gaussian_regression_loglik(rss: f64, n: usize) -> f64 {
    let n = n as f64;
    let s2 = rss / n;
    -0.5 * n * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0)
}

/// Largest absolute asymmetry `|a_ij - a_ji|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut gap: f64 = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            gap = gap.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    gap
}

/// True when the matrix is square and symmetric to `rel_tol` relative to its
/// largest absolute entry.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    max_asymmetry(m) <= rel_tol * scale
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(m));
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// PSD test used throughout: smallest eigenvalue ≥ −tol × largest (absolute).
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let (lo, hi) = eig_range(m);
    lo >= -rel_tol * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)
}

/// Nearest positive semidefinite matrix in Frobenius norm: eigenvalues of the
/// symmetric part clipped at zero.
pub fn nearest_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    symmetrize(&out)
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
