#ifndef HARCOV_H
#define HARCOV_H

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum HarcovStatus {
  HARCOV_STATUS_OK = 0,
  HARCOV_STATUS_NULL_POINTER = 1,
  HARCOV_STATUS_DIMENSION = 2,
  HARCOV_STATUS_SYMMETRY = 3,
  HARCOV_STATUS_DOMAIN = 4,
  HARCOV_STATUS_INSUFFICIENT_HISTORY = 5,
  HARCOV_STATUS_COLLINEARITY = 6,
  HARCOV_STATUS_SINGULAR_FORECAST = 7,
  HARCOV_STATUS_INVALID_ARGUMENT = 8,
  HARCOV_STATUS_NUMERICAL = 9,
  HARCOV_STATUS_PANIC = 10,
} HarcovStatus;

// HAR variants accepted by [`harcov_har_fit`].
typedef enum HarcovHarSpec {
  HARCOV_HAR_SPEC_HAR = 0,
  HARCOV_HAR_SPEC_HARL = 1,
  HARCOV_HAR_SPEC_HARQ = 2,
  HARCOV_HAR_SPEC_HARQL = 3,
} HarcovHarSpec;

// Fitted HAR-family model.
typedef struct HarcovHarFit HarcovHarFit;

// Fitted state-space HAR model.
typedef struct HarcovSsFit HarcovSsFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *harcov_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the full message length.
//
// # Safety
// `buf` must be valid for `len` bytes or null.
uintptr_t harcov_last_error(char *buf, uintptr_t len);

// Half-vectorisation of a symmetric `n × n` matrix into `out` (length `n(n+1)/2`).
//
// # Safety
// `s` must hold `n*n` values and `out` room for `n(n+1)/2`.
enum HarcovStatus harcov_vech(const double *s, uintptr_t n, double *out);

// Inverse of [`harcov_vech`]: `v` has length `n(n+1)/2`, `out` receives `n × n`.
//
// # Safety
// `v` must hold `n(n+1)/2` values and `out` room for `n*n`.
enum HarcovStatus harcov_unvech(const double *v, uintptr_t n, double *out);

// Frobenius distance between realized `s` and forecast `shat`.
//
// # Safety
// Both matrices must hold `n*n` values; `out` must be valid.
enum HarcovStatus harcov_frobenius_loss(const double *s,
                                        const double *shat,
                                        uintptr_t n,
                                        double *out);

// Q-Like loss `log|Ŝ| + tr(Ŝ⁻¹S)`.
//
// # Safety
// Both matrices must hold `n*n` values; `out` must be valid.
enum HarcovStatus harcov_qlike_loss(const double *s, const double *shat, uintptr_t n, double *out);

// Global minimum-variance weights; `long_only != 0` adds `w ≥ 0`.
//
// # Safety
// `h` must hold `n*n` values and `weights` room for `n`.
enum HarcovStatus harcov_gmv_weights(const double *h,
                                     uintptr_t n,
                                     int32_t long_only,
                                     double *weights);

// Turnover between `w_curr` (drifted by decimal returns `r`) and `w_next`.
//
// # Safety
// All arrays must hold `n` values; `out` must be valid.
enum HarcovStatus harcov_turnover(const double *w_next,
                                  const double *w_curr,
                                  const double *r,
                                  uintptr_t n,
                                  double *out);

// Daily fee Δ solving `Σ U(base) = Σ U(other − Δ)` for decimal returns.
//
// # Safety
// Both series must hold `len` values; `out` must be valid.
enum HarcovStatus harcov_delta_gamma(const double *returns_base,
                                     const double *returns_other,
                                     uintptr_t len,
                                     double gamma,
                                     double *out);

// Diebold-Mariano test of `loss_a` against `loss_b`; `p_value` near 0 favours `a`.
//
// # Safety
// Both series must hold `len` values; outputs must be valid.
enum HarcovStatus harcov_dm_test(const double *loss_a,
                                 const double *loss_b,
                                 uintptr_t len,
                                 double *statistic,
                                 double *p_value);

// Fits a HAR variant to `len` daily realized variances. `rq` (quarticities)
// is required for the Q variants and must be null otherwise.
//
// # Safety
// `rv` (and `rq` when non-null) must hold `len` values; `out` must be valid.
enum HarcovStatus harcov_har_fit(const double *rv,
                                 const double *rq,
                                 uintptr_t len,
                                 enum HarcovHarSpec spec,
                                 struct HarcovHarFit **out);

// Coefficients `(β₀, β₁, β₂, β₃, γ)` (γ = 0 without a quarticity term) and σ_ε.
//
// # Safety
// `fit` must come from [`harcov_har_fit`]; `coef` must have room for 5 values.
enum HarcovStatus harcov_har_coefficients(const struct HarcovHarFit *fit,
                                          double *coef,
                                          double *sigma_eps);

// Next-day variance forecast from the last `len ≥ 20` variances.
// `rq_last` is read only by the Q variants.
//
// # Safety
// `fit` must be a live handle and `recent` hold `len` values.
enum HarcovStatus harcov_har_forecast(const struct HarcovHarFit *fit,
                                      const double *recent,
                                      uintptr_t len,
                                      double rq_last,
                                      double *out);

// Releases a HAR handle; null is ignored.
//
// # Safety
// `fit` must come from [`harcov_har_fit`] and not be used afterwards.
void harcov_har_free(struct HarcovHarFit *fit);

// Maximum-likelihood fit of the state-space HAR (`log_target != 0` for the log variant).
//
// # Safety
// `rv` must hold `len` values; `out` must be valid.
enum HarcovStatus harcov_ss_fit(const double *rv,
                                uintptr_t len,
                                int32_t log_target,
                                struct HarcovSsFit **out);

// Parameters: `beta` (4 values), φ, σ_ε, σ_η and the maximised log-likelihood.
//
// # Safety
// `fit` must be a live handle; `beta` must have room for 4 values.
enum HarcovStatus harcov_ss_params(const struct HarcovSsFit *fit,
                                   double *beta,
                                   double *phi,
                                   double *sigma_eps,
                                   double *sigma_eta,
                                   double *loglik);

// Next-day variance forecast after the fitted sample.
//
// # Safety
// `fit` must be a live handle and `recent` hold `len ≥ 20` values ending
// where the fitted sample ended.
enum HarcovStatus harcov_ss_forecast(const struct HarcovSsFit *fit,
                                     const double *recent,
                                     uintptr_t len,
                                     double *out);

// Releases a state-space handle; null is ignored.
//
// # Safety
// `fit` must come from [`harcov_ss_fit`] and not be used afterwards.
void harcov_ss_free(struct HarcovSsFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARCOV_H */
