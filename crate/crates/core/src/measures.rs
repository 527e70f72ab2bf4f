//! Realized measures and the panel types that carry them.
//!
//! Every model in this crate works on realized *variance* (sum of squared
//! intraday returns, in squared daily percent). Volatility is only exposed as
//! the square root of that quantity.
//!
//! Half-vectorisation uses the lower triangle including the diagonal in
//! column-major order: for N = 3 the layout is
//! `(s11, s21, s31, s22, s32, s33)`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance for symmetry checks on covariance input.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative tolerance for the PSD check (λ_min ≥ −tol·λ_max).
pub const PSD_TOL: f64 = 1e-8;
/// Observations consumed by the longest (monthly) lag aggregate.
pub const BURN_IN: usize = 20;

/// Number of free elements of an N×N symmetric matrix, N(N+1)/2.
pub fn vech_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`vech_len`]; `None` when `len` is not triangular.
pub fn dim_from_vech_len(len: usize) -> Option<usize> {
    let n = (((8 * len + 1) as f64).sqrt() - 1.0) / 2.0;
    let n = n.round() as usize;
    (vech_len(n) == len).then_some(n)
}

/// Index pairs `(i, j)` with `i >= j` in vech order.
pub fn vech_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |j| (j..n).map(move |i| (i, j)))
}

/// Index pairs `(i, j)` with `i > j` in strict-lower column-major order.
pub fn strict_lower_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |j| ((j + 1)..n).map(move |i| (i, j)))
}

pub fn vech(s: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !s.is_square() {
        return Err(Error::Dimension(format!(
            "vech of a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    if !linalg::is_symmetric(s, SYMMETRY_TOL) {
        return Err(Error::Symmetry {
            max_gap: linalg::max_asymmetry(s),
        });
    }
    Ok(vech_unchecked(s))
}

pub(crate) fn vech_unchecked(s: &DMatrix<f64>) -> DVector<f64> {
    let n = s.nrows();
    DVector::from_iterator(vech_len(n), vech_pairs(n).map(|(i, j)| s[(i, j)]))
}

pub fn unvech(v: &[f64]) -> Result<DMatrix<f64>> {
    let n = dim_from_vech_len(v.len()).ok_or_else(|| {
        Error::Dimension(format!("length {} is not a triangular number", v.len()))
    })?;
    let mut m = DMatrix::zeros(n, n);
    for ((i, j), x) in vech_pairs(n).zip(v) {
        m[(i, j)] = *x;
        m[(j, i)] = *x;
    }
    Ok(m)
}

/// A covariance matrix split into standard deviations and correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct Drd {
    /// Diagonal of D: per-asset standard deviations.
    pub std_devs: DVector<f64>,
    /// Correlation matrix R with unit diagonal.
    pub corr: DMatrix<f64>,
}

pub fn decompose_drd(s: &DMatrix<f64>) -> Result<Drd> {
    if !s.is_square() {
        return Err(Error::Dimension(
            "DRD decomposition needs a square matrix".into(),
        ));
    }
    let n = s.nrows();
    for i in 0..n {
        let v = s[(i, i)];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::DegenerateVariance { index: i, value: v });
        }
    }
    let std_devs = DVector::from_iterator(n, (0..n).map(|i| s[(i, i)].sqrt()));
    let mut corr = DMatrix::from_fn(n, n, |i, j| s[(i, j)] / (std_devs[i] * std_devs[j]));
    for i in 0..n {
        corr[(i, i)] = 1.0;
    }
    Ok(Drd {
        std_devs,
        corr: linalg::symmetrize(&corr),
    })
}

pub fn compose_drd(std_devs: &DVector<f64>, corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = std_devs.len();
    if corr.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "{} standard deviations but {}x{} correlation matrix",
            n,
            corr.nrows(),
            corr.ncols()
        )));
    }
    if let Some(i) = std_devs.iter().position(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::DegenerateVariance {
            index: i,
            value: std_devs[i],
        });
    }
    if !linalg::is_symmetric(corr, SYMMETRY_TOL) {
        return Err(Error::Composition(
            "correlation matrix is not symmetric".into(),
        ));
    }
    for i in 0..n {
        if (corr[(i, i)] - 1.0).abs() > 1e-10 {
            return Err(Error::Composition(format!(
                "correlation diagonal {} = {}",
                i,
                corr[(i, i)]
            )));
        }
    }
    if corr.iter().any(|r| r.abs() > 1.0 + 1e-12) {
        return Err(Error::Composition(
            "correlation entry outside [-1, 1]".into(),
        ));
    }
    if !linalg::is_psd(corr, PSD_TOL) {
        return Err(Error::Composition(
            "correlation matrix is not positive semidefinite".into(),
        ));
    }
    let mut out = DMatrix::from_fn(n, n, |i, j| std_devs[i] * corr[(i, j)] * std_devs[j]);
    for i in 0..n {
        out[(i, i)] = std_devs[i] * std_devs[i];
    }
    Ok(linalg::symmetrize(&out))
}

/// Sum of squared intraday returns.
pub fn realized_variance(intraday_returns: &[f64]) -> Result<f64> {
    if intraday_returns.is_empty() {
        return Err(Error::EmptyDay);
    }
    Ok(intraday_returns.iter().map(|r| r * r).sum())
}

/// Square root of [`realized_variance`].
pub fn realized_volatility(intraday_returns: &[f64]) -> Result<f64> {
    realized_variance(intraday_returns).map(f64::sqrt)
}

/// `(M / 3) · Σ r⁴`.
pub fn realized_quarticity(intraday_returns: &[f64]) -> Result<f64> {
    if intraday_returns.is_empty() {
        return Err(Error::EmptyDay);
    }
    let m = intraday_returns.len() as f64;
    Ok(m / 3.0 * intraday_returns.iter().map(|r| r.powi(4)).sum::<f64>())
}

/// Outer-product realized covariance of an M×N block of intraday returns.
pub fn realized_cov(intraday_returns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if intraday_returns.nrows() == 0 {
        return Err(Error::EmptyDay);
    }
    if intraday_returns.ncols() == 0 {
        return Err(Error::Dimension("no assets".into()));
    }
    let out = intraday_returns.transpose() * intraday_returns;
    Ok(linalg::symmetrize(&out))
}

/// Mean of the `j` values strictly preceding each position; `None` where
/// fewer than `j` predecessors exist.
pub fn lag_aggregate(series: &[f64], j: usize) -> Result<Vec<Option<f64>>> {
    if j == 0 {
        return Err(Error::Argument("lag horizon must be at least 1".into()));
    }
    if series.len() <= j {
        return Err(Error::InsufficientHistory {
            needed: j,
            got: series.len(),
        });
    }
    let mut out = vec![None; series.len()];
    for t in j..series.len() {
        out[t] = Some(series[t - j..t].iter().sum::<f64>() / j as f64);
    }
    Ok(out)
}

/// Mean of the last `j` entries of `series` (the lag aggregate one step past its end).
pub(crate) fn trailing_mean(series: &[f64], j: usize) -> f64 {
    let tail = &series[series.len() - j..];
    tail.iter().sum::<f64>() / j as f64
}

fn check_dates(dates: &[String]) -> Result<()> {
    if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Alignment(format!(
            "dates not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Dated rows of per-column observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedPanel {
    pub dates: Vec<String>,
    pub columns: Vec<String>,
    /// `rows[t][i]` is column `i` on `dates[t]`.
    pub rows: Vec<Vec<f64>>,
}

impl DatedPanel {
    pub fn new(dates: Vec<String>, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dates.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} dates but {} rows",
                dates.len(),
                rows.len()
            )));
        }
        if let Some((t, r)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != columns.len())
        {
            return Err(Error::Dimension(format!(
                "row {} has {} values, expected {}",
                t,
                r.len(),
                columns.len()
            )));
        }
        check_dates(&dates)?;
        Ok(Self {
            dates,
            columns,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Copy of column `i` as a time series.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }

    /// Rows `range` as a new panel.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dates: self.dates[range.clone()].to_vec(),
            columns: self.columns.clone(),
            rows: self.rows[range].to_vec(),
        }
    }
}

macro_rules! panel_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DatedPanel);

        impl Deref for $name {
            type Target = DatedPanel;
            fn deref(&self) -> &DatedPanel {
                &self.0
            }
        }

        impl $name {
            pub fn into_inner(self) -> DatedPanel {
                self.0
            }
        }
    };
}

panel_newtype!(
    /// Per-asset realized variances, (percent)² per day.
    VolPanel
);
panel_newtype!(
    /// Per-asset realized quarticities, (percent)⁴ per day.
    QuartPanel
);
panel_newtype!(
    /// Realized correlations in strict-lower-triangle column-major order.
    CorrPanel
);

fn check_nonnegative(p: &DatedPanel, what: &str) -> Result<()> {
    for (t, row) in p.rows.iter().enumerate() {
        if let Some(i) = row.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "{what} {} on {} is {} (must be finite and nonnegative)",
                p.columns[i], p.dates[t], row[i]
            )));
        }
    }
    Ok(())
}

impl VolPanel {
    pub fn new(panel: DatedPanel) -> Result<Self> {
        check_nonnegative(&panel, "realized variance")?;
        Ok(Self(panel))
    }

    /// Element-wise square roots of the variances.
    pub fn volatilities(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|v| v.sqrt()).collect())
            .collect()
    }
}

impl QuartPanel {
    pub fn new(panel: DatedPanel) -> Result<Self> {
        check_nonnegative(&panel, "realized quarticity")?;
        Ok(Self(panel))
    }
}

impl CorrPanel {
    pub fn new(panel: DatedPanel) -> Result<Self> {
        for (t, row) in panel.rows.iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !(v.abs() <= 1.0)) {
                return Err(Error::Domain(format!(
                    "correlation {v} on {} outside [-1, 1]",
                    panel.dates[t]
                )));
            }
        }
        if dim_from_vech_len(panel.n_cols()).is_none() && panel.n_cols() != 0 {
            // strict lower triangle has N(N-1)/2 entries, i.e. vech_len(N-1)
            return Err(Error::Dimension(format!(
                "{} correlations do not form a triangle",
                panel.n_cols()
            )));
        }
        Ok(Self(panel))
    }

    /// Number of assets N implied by the N(N−1)/2 columns.
    pub fn n_assets(&self) -> usize {
        dim_from_vech_len(self.n_cols()).map(|m| m + 1).unwrap_or(1)
    }
}

/// Unit-diagonal matrix from a strict-lower correlation vector.
pub fn corr_from_strict_lower(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    for ((i, j), r) in strict_lower_pairs(n).zip(v) {
        m[(i, j)] = *r;
        m[(j, i)] = *r;
    }
    m
}

pub fn strict_lower(m: &DMatrix<f64>) -> Vec<f64> {
    strict_lower_pairs(m.nrows())
        .map(|(i, j)| m[(i, j)])
        .collect()
}

/// Dated N×N realized covariance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CovPanel {
    dates: Vec<String>,
    asset_ids: Vec<String>,
    mats: Vec<DMatrix<f64>>,
}

impl CovPanel {
    /// Validates shape, symmetry, PSD-ness and date order.
    pub fn new(
        dates: Vec<String>,
        asset_ids: Vec<String>,
        mats: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = asset_ids.len();
        if dates.len() != mats.len() {
            return Err(Error::Dimension(format!(
                "{} dates but {} matrices",
                dates.len(),
                mats.len()
            )));
        }
        check_dates(&dates)?;
        for (t, m) in mats.iter().enumerate() {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "matrix on {} is {}x{}, expected {n}x{n}",
                    dates[t],
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !linalg::is_symmetric(m, SYMMETRY_TOL) {
                return Err(Error::Symmetry {
                    max_gap: linalg::max_asymmetry(m),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite covariance entry on {}",
                    dates[t]
                )));
            }
            if !linalg::is_psd(m, PSD_TOL) {
                return Err(Error::Domain(format!(
                    "covariance on {} is not positive semidefinite",
                    dates[t]
                )));
            }
        }
        Ok(Self {
            dates,
            asset_ids,
            mats,
        })
    }

    /// Builds a panel from vech rows (see module docs for the layout).
    pub fn from_vech_rows(
        dates: Vec<String>,
        asset_ids: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let mats = rows.iter().map(|r| unvech(r)).collect::<Result<Vec<_>>>()?;
        Self::new(dates, asset_ids, mats)
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    /// N* = N(N+1)/2.
    pub fn n_vech(&self) -> usize {
        vech_len(self.n_assets())
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn vech_rows(&self) -> Vec<Vec<f64>> {
        self.mats
            .iter()
            .map(|m| vech_unchecked(m).as_slice().to_vec())
            .collect()
    }

    /// Column names `v_<i>_<j>` (1-based, i ≥ j) in vech order.
    pub fn vech_column_names(&self) -> Vec<String> {
        vech_pairs(self.n_assets())
            .map(|(i, j)| format!("v_{}_{}", i + 1, j + 1))
            .collect()
    }

    /// Matrix diagonals as a variance panel.
    pub fn variances(&self) -> VolPanel {
        let rows = self
            .mats
            .iter()
            .map(|m| m.diagonal().as_slice().to_vec())
            .collect();
        VolPanel(DatedPanel {
            dates: self.dates.clone(),
            columns: self.asset_ids.clone(),
            rows,
        })
    }

    /// Correlations of every day; fails on any nonpositive variance.
    pub fn correlations(&self) -> Result<CorrPanel> {
        let n = self.n_assets();
        let columns = strict_lower_pairs(n)
            .map(|(i, j)| format!("r_{}_{}", i + 1, j + 1))
            .collect();
        let rows = self
            .mats
            .iter()
            .map(|m| decompose_drd(m).map(|d| strict_lower(&d.corr)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CorrPanel(DatedPanel {
            dates: self.dates.clone(),
            columns,
            rows,
        }))
    }

    /// Rows `range` as a new panel.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dates: self.dates[range.clone()].to_vec(),
            asset_ids: self.asset_ids.clone(),
            mats: self.mats[range].to_vec(),
        }
    }
}

/// Where an outlier was detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutlierSource {
    Covariance,
    Quarticity,
}

/// One element of one day exceeding the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierHit {
    pub day: usize,
    pub source: OutlierSource,
    /// `v_<i>_<j>` for covariance elements, the asset id for quarticities.
    pub element: String,
    /// Distance from the element mean in standard deviations.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    /// Every flagged day index, ascending (union of covariance and quarticity flags).
    pub flagged_dates: Vec<usize>,
    /// Threshold in standard deviations.
    pub rule: f64,
    /// Days actually replaced; day 0 has no predecessor and is never replaced.
    pub n_replaced: usize,
    pub hits: Vec<OutlierHit>,
}

/// Mean and sample standard deviation of each column of `rows`.
fn column_moments(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let t = rows.len() as f64;
    let k = rows.first().map_or(0, |r| r.len());
    (0..k)
        .map(|i| {
            let mean = rows.iter().map(|r| r[i]).sum::<f64>() / t;
            let var = rows.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
            (mean, var.sqrt())
        })
        .collect()
}

fn scan(
    rows: &[Vec<f64>],
    names: &[String],
    threshold: f64,
    source: OutlierSource,
) -> Vec<OutlierHit> {
    let moments = column_moments(rows);
    let mut hits = Vec::new();
    for (t, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            let (mean, sd) = moments[i];
            let dev = (v - mean).abs();
            if dev > threshold * sd {
                hits.push(OutlierHit {
                    day: t,
                    source: source.clone(),
                    element: names[i].clone(),
                    z_score: dev / sd,
                });
            }
        }
    }
    hits
}

/// Flags days where any covariance element or any quarticity lies more than
/// `threshold` full-sample standard deviations from its full-sample mean, and
/// carries the previous (already cleaned) day forward over each flagged day.
///
/// Statistics come from the raw input; replacements are applied in one
/// forward pass.
pub fn clean_outliers(
    cov: &CovPanel,
    quart: &QuartPanel,
    threshold: f64,
) -> Result<(CovPanel, QuartPanel, OutlierReport)> {
    if !(threshold > 0.0) {
        return Err(Error::Argument(format!(
            "outlier threshold must be positive, got {threshold}"
        )));
    }
    if cov.dates() != quart.dates.as_slice() {
        return Err(Error::Alignment(
            "covariance and quarticity panels have different dates".into(),
        ));
    }
    if quart.n_cols() != cov.n_assets() {
        return Err(Error::Dimension(format!(
            "{} quarticity columns for {} assets",
            quart.n_cols(),
            cov.n_assets()
        )));
    }
    let mut hits = scan(
        &cov.vech_rows(),
        &cov.vech_column_names(),
        threshold,
        OutlierSource::Covariance,
    );
    hits.extend(scan(
        &quart.rows,
        &quart.columns,
        threshold,
        OutlierSource::Quarticity,
    ));
    hits.sort_by(|a, b| a.day.cmp(&b.day));

    let mut flagged: Vec<usize> = hits.iter().map(|h| h.day).collect();
    flagged.dedup();

    let mut mats = cov.mats.clone();
    let mut qrows = quart.rows.clone();
    let mut n_replaced = 0;
    for &t in flagged.iter().filter(|&&t| t > 0) {
        mats[t] = mats[t - 1].clone();
        qrows[t] = qrows[t - 1].clone();
        n_replaced += 1;
    }

    let cleaned_cov = CovPanel {
        dates: cov.dates.clone(),
        asset_ids: cov.asset_ids.clone(),
        mats,
    };
    let cleaned_q = QuartPanel(DatedPanel {
        dates: quart.dates.clone(),
        columns: quart.columns.clone(),
        rows: qrows,
    });
    Ok((
        cleaned_cov,
        cleaned_q,
        OutlierReport {
            flagged_dates: flagged,
            rule: threshold,
            n_replaced,
            hits,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    }

    #[test]
    fn vech_examples() {
        assert_eq!(
            vech(&DMatrix::identity(2, 2)).unwrap().as_slice(),
            &[1.0, 0.0, 1.0]
        );
        assert_eq!(
            vech(&m2(4.0, 2.0, 9.0)).unwrap().as_slice(),
            &[4.0, 2.0, 9.0]
        );
        assert_eq!(vech(&DMatrix::zeros(3, 3)).unwrap().as_slice(), &[0.0; 6]);
    }

    #[test]
    fn vech_order_is_column_major_lower() {
        let s = DMatrix::from_row_slice(
            3,
            3,
            &[11.0, 21.0, 31.0, 21.0, 22.0, 32.0, 31.0, 32.0, 33.0],
        );
        assert_eq!(
            vech(&s).unwrap().as_slice(),
            &[11.0, 21.0, 31.0, 22.0, 32.0, 33.0]
        );
    }

    #[test]
    fn vech_rejects_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(vech(&s), Err(Error::Symmetry { .. })));
    }

    #[test]
    fn unvech_examples() {
        assert_eq!(unvech(&[1.0, 0.0, 1.0]).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(unvech(&[4.0, 2.0, 9.0]).unwrap(), m2(4.0, 2.0, 9.0));
        assert!(matches!(unvech(&[1.0; 4]), Err(Error::Dimension(_))));
    }

    #[test]
    fn drd_examples() {
        let d = decompose_drd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(d.std_devs.as_slice(), &[1.0; 3]);
        assert_eq!(d.corr, DMatrix::identity(3, 3));

        let d = decompose_drd(&m2(4.0, 2.0, 9.0)).unwrap();
        assert_eq!(d.std_devs.as_slice(), &[2.0, 3.0]);
        assert!((d.corr[(1, 0)] - 1.0 / 3.0).abs() < 1e-15);

        let d = decompose_drd(&m2(5.0, 0.0, 7.0)).unwrap();
        assert_eq!(d.corr, DMatrix::identity(2, 2));

        assert!(matches!(
            decompose_drd(&m2(0.0, 0.0, 1.0)),
            Err(Error::DegenerateVariance { index: 0, .. })
        ));
    }

    #[test]
    fn compose_examples() {
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(
            compose_drd(&DVector::from_element(2, 1.0), &i2).unwrap(),
            i2
        );

        let r = m2(1.0, 1.0 / 3.0, 1.0);
        let s = compose_drd(&DVector::from_vec(vec![2.0, 3.0]), &r).unwrap();
        assert!((s - m2(4.0, 2.0, 9.0)).amax() < 1e-14);

        let bad = m2(1.0, 1.5, 1.0);
        assert!(matches!(
            compose_drd(&DVector::from_element(2, 1.0), &bad),
            Err(Error::Composition(_))
        ));
    }

    #[test]
    fn realized_measure_examples() {
        assert_eq!(realized_variance(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((realized_variance(&[0.1, 0.2]).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(realized_variance(&[1.7]).unwrap(), 1.7 * 1.7);
        assert_eq!(realized_variance(&[]), Err(Error::EmptyDay));

        assert_eq!(realized_quarticity(&[0.0; 5]).unwrap(), 0.0);
        let rq = realized_quarticity(&[0.1, 0.2]).unwrap();
        assert!((rq - 2.0 / 3.0 * 0.0017).abs() < 1e-15);
        assert!((realized_quarticity(&[1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(realized_quarticity(&[]), Err(Error::EmptyDay));
        assert!((realized_volatility(&[0.3, 0.4]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn realized_cov_examples() {
        assert_eq!(
            realized_cov(&DMatrix::zeros(4, 3)).unwrap(),
            DMatrix::zeros(3, 3)
        );
        let one = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert_eq!(realized_cov(&one).unwrap(), m2(1.0, 2.0, 4.0));
        let col = DMatrix::from_column_slice(3, 1, &[0.1, -0.2, 0.3]);
        assert_eq!(
            realized_cov(&col).unwrap()[(0, 0)],
            realized_variance(&[0.1, -0.2, 0.3]).unwrap()
        );
    }

    #[test]
    fn lag_aggregate_examples() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let lag1 = lag_aggregate(&s, 1).unwrap();
        assert_eq!(lag1, vec![None, Some(1.0), Some(2.0), Some(3.0), Some(4.0)]);
        assert_eq!(lag_aggregate(&s, 2).unwrap()[4], Some(3.5));
        let c = lag_aggregate(&[2.5; 30], 20).unwrap();
        assert!(c[..20].iter().all(Option::is_none));
        assert!(c[20..].iter().all(|v| *v == Some(2.5)));
        assert!(matches!(
            lag_aggregate(&s, 5),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn corr_panel_roundtrip_through_cov_panel() {
        let mats = vec![m2(4.0, 2.0, 9.0), m2(1.0, -0.5, 1.0)];
        let p = CovPanel::new(
            vec!["2020-01-01".into(), "2020-01-02".into()],
            vec!["A".into(), "B".into()],
            mats,
        )
        .unwrap();
        let c = p.correlations().unwrap();
        assert_eq!(c.n_assets(), 2);
        assert!((c.rows[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.rows[1][0], -0.5);
        assert_eq!(p.variances().rows[0], vec![4.0, 9.0]);
    }

    #[test]
    fn cov_panel_rejects_bad_input() {
        let d = vec!["2020-01-02".to_string(), "2020-01-01".to_string()];
        let ids = vec!["A".to_string(), "B".to_string()];
        let ok = vec![DMatrix::identity(2, 2); 2];
        assert!(matches!(
            CovPanel::new(d, ids.clone(), ok.clone()),
            Err(Error::Alignment(_))
        ));
        let d = vec!["2020-01-01".to_string(), "2020-01-02".to_string()];
        let not_psd = vec![DMatrix::identity(2, 2), m2(1.0, 2.0, 1.0)];
        assert!(matches!(
            CovPanel::new(d, ids, not_psd),
            Err(Error::Domain(_))
        ));
    }
}
