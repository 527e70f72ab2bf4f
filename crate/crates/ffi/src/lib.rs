//! C ABI over `harcov`.
//!
//! Every function returns a [`HarcovStatus`]; on failure the message is
//! available from [`harcov_last_error`] on the same thread. Matrices are
//! dense row-major `n × n` arrays. Fitted models are opaque handles that
//! must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use harcov::error::Error;
use harcov::{econ, measures, statespace, statloss, unihar};
use nalgebra::{DMatrix, DVector};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarcovStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Symmetry = 3,
    Domain = 4,
    InsufficientHistory = 5,
    Collinearity = 6,
    SingularForecast = 7,
    InvalidArgument = 8,
    Numerical = 9,
    Panic = 10,
}

/// HAR variants accepted by [`harcov_har_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarcovHarSpec {
    Har = 0,
    Harl = 1,
    Harq = 2,
    Harql = 3,
}

/// Fitted HAR-family model.
pub struct HarcovHarFit {
    inner: unihar::HarFit,
}

/// Fitted state-space HAR model.
pub struct HarcovSsFit {
    inner: statespace::SsFit,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HarcovStatus {
    match e {
        Error::Dimension(_) => HarcovStatus::Dimension,
        Error::Symmetry { .. } => HarcovStatus::Symmetry,
        Error::InsufficientHistory { .. } => HarcovStatus::InsufficientHistory,
        Error::Collinearity { .. } => HarcovStatus::Collinearity,
        Error::SingularForecast { .. } => HarcovStatus::SingularForecast,
        Error::Argument(_) | Error::Parameter(_) | Error::Config(_) => {
            HarcovStatus::InvalidArgument
        }
        Error::Initialization(_)
        | Error::InfeasibleUtility(_)
        | Error::UndefinedSharpe
        | Error::DegenerateDrift => HarcovStatus::Numerical,
        _ => HarcovStatus::Domain,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), FfiError>>(f: F) -> HarcovStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            HarcovStatus::Ok
        }
        Ok(Err(FfiError::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HarcovStatus::NullPointer
        }
        Ok(Err(FfiError::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            HarcovStatus::Panic
        }
    }
}

enum FfiError {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for FfiError {
    fn from(e: Error) -> Self {
        FfiError::Lib(e)
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], FfiError> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(FfiError::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(
    p: *mut f64,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [f64], FfiError> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(FfiError::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn scalar_out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, FfiError> {
    p.as_mut().ok_or(FfiError::Null(what))
}

unsafe fn matrix(p: *const f64, n: usize, what: &'static str) -> Result<DMatrix<f64>, FfiError> {
    Ok(DMatrix::from_row_slice(n, n, input(p, n * n, what)?))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn harcov_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(s) => s,
            Err(_) => panic!(),
        };
    VERSION.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn harcov_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Half-vectorisation of a symmetric `n × n` matrix into `out` (length `n(n+1)/2`).
///
/// # Safety
/// `s` must hold `n*n` values and `out` room for `n(n+1)/2`.
#[no_mangle]
pub unsafe extern "C" fn harcov_vech(s: *const f64, n: usize, out: *mut f64) -> HarcovStatus {
    guard(|| {
        let v = measures::vech(&matrix(s, n, "s")?)?;
        output(out, v.len(), "out")?.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Inverse of [`harcov_vech`]: `v` has length `n(n+1)/2`, `out` receives `n × n`.
///
/// # Safety
/// `v` must hold `n(n+1)/2` values and `out` room for `n*n`.
#[no_mangle]
pub unsafe extern "C" fn harcov_unvech(v: *const f64, n: usize, out: *mut f64) -> HarcovStatus {
    guard(|| {
        let m = measures::unvech(input(v, measures::vech_len(n), "v")?)?;
        let o = output(out, n * n, "out")?;
        for i in 0..n {
            for j in 0..n {
                o[i * n + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// Frobenius distance between realized `s` and forecast `shat`.
///
/// # Safety
/// Both matrices must hold `n*n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn harcov_frobenius_loss(
    s: *const f64,
    shat: *const f64,
    n: usize,
    out: *mut f64,
) -> HarcovStatus {
    guard(|| {
        *scalar_out(out, "out")? =
            statloss::frobenius_loss(&matrix(s, n, "s")?, &matrix(shat, n, "shat")?)?;
        Ok(())
    })
}

/// Q-Like loss `log|Ŝ| + tr(Ŝ⁻¹S)`.
///
/// # Safety
/// Both matrices must hold `n*n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn harcov_qlike_loss(
    s: *const f64,
    shat: *const f64,
    n: usize,
    out: *mut f64,
) -> HarcovStatus {
    guard(|| {
        *scalar_out(out, "out")? =
            statloss::qlike_loss(&matrix(s, n, "s")?, &matrix(shat, n, "shat")?)?;
        Ok(())
    })
}

/// Global minimum-variance weights; `long_only != 0` adds `w ≥ 0`.
///
/// # Safety
/// `h` must hold `n*n` values and `weights` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn harcov_gmv_weights(
    h: *const f64,
    n: usize,
    long_only: i32,
    weights: *mut f64,
) -> HarcovStatus {
    guard(|| {
        let h = matrix(h, n, "h")?;
        let g = if long_only != 0 {
            econ::gmv_weights_longonly(&h)?
        } else {
            econ::gmv_weights(&h)?
        };
        output(weights, n, "weights")?.copy_from_slice(g.weights.as_slice());
        Ok(())
    })
}

/// Turnover between `w_curr` (drifted by decimal returns `r`) and `w_next`.
///
/// # Safety
/// All arrays must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn harcov_turnover(
    w_next: *const f64,
    w_curr: *const f64,
    r: *const f64,
    n: usize,
    out: *mut f64,
) -> HarcovStatus {
    guard(|| {
        let next = DVector::from_column_slice(input(w_next, n, "w_next")?);
        let curr = DVector::from_column_slice(input(w_curr, n, "w_curr")?);
        *scalar_out(out, "out")? = econ::turnover(&next, &curr, input(r, n, "r")?)?;
        Ok(())
    })
}

/// Daily fee Δ solving `Σ U(base) = Σ U(other − Δ)` for decimal returns.
///
/// # Safety
/// Both series must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn harcov_delta_gamma(
    returns_base: *const f64,
    returns_other: *const f64,
    len: usize,
    gamma: f64,
    out: *mut f64,
) -> HarcovStatus {
    guard(|| {
        let d = econ::delta_gamma(
            input(returns_base, len, "returns_base")?,
            input(returns_other, len, "returns_other")?,
            gamma,
        )?;
        *scalar_out(out, "out")? = d;
        Ok(())
    })
}

/// Diebold-Mariano test of `loss_a` against `loss_b`; `p_value` near 0 favours `a`.
///
/// # Safety
/// Both series must hold `len` values; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn harcov_dm_test(
    loss_a: *const f64,
    loss_b: *const f64,
    len: usize,
    statistic: *mut f64,
    p_value: *mut f64,
) -> HarcovStatus {
    guard(|| {
        let r = statloss::dm_test(input(loss_a, len, "loss_a")?, input(loss_b, len, "loss_b")?)?;
        *scalar_out(statistic, "statistic")? = r.statistic;
        *scalar_out(p_value, "p_value")? = r.p_value;
        Ok(())
    })
}

fn spec_of(spec: HarcovHarSpec) -> unihar::HarSpec {
    match spec {
        HarcovHarSpec::Har => unihar::HarSpec::HAR,
        HarcovHarSpec::Harl => unihar::HarSpec::HARL,
        HarcovHarSpec::Harq => unihar::HarSpec::HARQ,
        HarcovHarSpec::Harql => unihar::HarSpec::HARQL,
    }
}

/// Fits a HAR variant to `len` daily realized variances. `rq` (quarticities)
/// is required for the Q variants and must be null otherwise.
///
/// # Safety
/// `rv` (and `rq` when non-null) must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn harcov_har_fit(
    rv: *const f64,
    rq: *const f64,
    len: usize,
    spec: HarcovHarSpec,
    out: *mut *mut HarcovHarFit,
) -> HarcovStatus {
    guard(|| {
        let slot = scalar_out(out, "out")?;
        *slot = ptr::null_mut();
        let rq = if rq.is_null() {
            None
        } else {
            Some(input(rq, len, "rq")?)
        };
        let fit = unihar::fit_har(input(rv, len, "rv")?, rq, spec_of(spec))?;
        *slot = Box::into_raw(Box::new(HarcovHarFit { inner: fit }));
        Ok(())
    })
}

/// Coefficients `(β₀, β₁, β₂, β₃, γ)` (γ = 0 without a quarticity term) and σ_ε.
///
/// # Safety
/// `fit` must come from [`harcov_har_fit`]; `coef` must have room for 5 values.
#[no_mangle]
pub unsafe extern "C" fn harcov_har_coefficients(
    fit: *const HarcovHarFit,
    coef: *mut f64,
    sigma_eps: *mut f64,
) -> HarcovStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or(FfiError::Null("fit"))?.inner;
        let c = output(coef, 5, "coef")?;
        c[..4].copy_from_slice(&f.beta);
        c[4] = f.gamma_q.unwrap_or(0.0);
        *scalar_out(sigma_eps, "sigma_eps")? = f.sigma_eps;
        Ok(())
    })
}

/// Next-day variance forecast from the last `len ≥ 20` variances.
/// `rq_last` is read only by the Q variants.
///
/// # Safety
/// `fit` must be a live handle and `recent` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn harcov_har_forecast(
    fit: *const HarcovHarFit,
    recent: *const f64,
    len: usize,
    rq_last: f64,
    out: *mut f64,
) -> HarcovStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or(FfiError::Null("fit"))?.inner;
        let rq = f.spec.quarticity_term.then_some(rq_last);
        let v = unihar::forecast_har(
            f,
            input(recent, len, "recent")?,
            rq,
            unihar::DEFAULT_VARIANCE_FLOOR,
        )?;
        *scalar_out(out, "out")? = v.variance;
        Ok(())
    })
}

/// Releases a HAR handle; null is ignored.
///
/// # Safety
/// `fit` must come from [`harcov_har_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn harcov_har_free(fit: *mut HarcovHarFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Maximum-likelihood fit of the state-space HAR (`log_target != 0` for the log variant).
///
/// # Safety
/// `rv` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn harcov_ss_fit(
    rv: *const f64,
    len: usize,
    log_target: i32,
    out: *mut *mut HarcovSsFit,
) -> HarcovStatus {
    guard(|| {
        let slot = scalar_out(out, "out")?;
        *slot = ptr::null_mut();
        let fit = statespace::fit_ss(input(rv, len, "rv")?, log_target != 0)?;
        *slot = Box::into_raw(Box::new(HarcovSsFit { inner: fit }));
        Ok(())
    })
}

/// Parameters: `beta` (4 values), φ, σ_ε, σ_η and the maximised log-likelihood.
///
/// # Safety
/// `fit` must be a live handle; `beta` must have room for 4 values.
#[no_mangle]
pub unsafe extern "C" fn harcov_ss_params(
    fit: *const HarcovSsFit,
    beta: *mut f64,
    phi: *mut f64,
    sigma_eps: *mut f64,
    sigma_eta: *mut f64,
    loglik: *mut f64,
) -> HarcovStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or(FfiError::Null("fit"))?.inner;
        output(beta, 4, "beta")?.copy_from_slice(&f.params.beta);
        *scalar_out(phi, "phi")? = f.params.phi;
        *scalar_out(sigma_eps, "sigma_eps")? = f.params.sigma_eps;
        *scalar_out(sigma_eta, "sigma_eta")? = f.params.sigma_eta;
        *scalar_out(loglik, "loglik")? = f.loglik;
        Ok(())
    })
}

/// Next-day variance forecast after the fitted sample.
///
/// # Safety
/// `fit` must be a live handle and `recent` hold `len ≥ 20` values ending
/// where the fitted sample ended.
#[no_mangle]
pub unsafe extern "C" fn harcov_ss_forecast(
    fit: *const HarcovSsFit,
    recent: *const f64,
    len: usize,
    out: *mut f64,
) -> HarcovStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or(FfiError::Null("fit"))?.inner;
        let v = statespace::forecast_ss(
            f,
            input(recent, len, "recent")?,
            unihar::DEFAULT_VARIANCE_FLOOR,
        )?;
        *scalar_out(out, "out")? = v.variance;
        Ok(())
    })
}

/// Releases a state-space handle; null is ignored.
///
/// # Safety
/// `fit` must come from [`harcov_ss_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn harcov_ss_free(fit: *mut HarcovSsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
