#ifndef MISFDR_H
#define MISFDR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum MisfdrStatus {
  MISFDR_STATUS_OK = 0,
  MISFDR_STATUS_NULL_POINTER = 1,
  MISFDR_STATUS_INVALID_ARGUMENT = 2,
  MISFDR_STATUS_DIMENSION_MISMATCH = 3,
  MISFDR_STATUS_NOT_POSITIVE_DEFINITE = 4,
  MISFDR_STATUS_BOUNDARY = 5,
  MISFDR_STATUS_UNSUPPORTED = 6,
  MISFDR_STATUS_TOO_MANY_EXCLUDED = 7,
  MISFDR_STATUS_IO = 8,
  MISFDR_STATUS_PANIC = 9,
} MisfdrStatus;

// Covariance matrix handle.
typedef struct MisfdrCovariance MisfdrCovariance;

// Sampling-law handle.
typedef struct MisfdrLaw MisfdrLaw;

// Monte Carlo KL estimate.
typedef struct MisfdrKlEstimate {
  double total;
  double per_dim;
  double std_err;
  size_t n_draws;
  size_t n_excluded;
} MisfdrKlEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the next
// failing call on the same thread.
const char *misfdr_last_error(void);

// Library version as a static NUL-terminated string.
const char *misfdr_version(void);

// Exponential covariance on a `rows × cols` grid.
//
// # Safety
// `out` must be a valid pointer.
enum MisfdrStatus misfdr_cov_exponential(size_t rows,
                                         size_t cols,
                                         double spacing,
                                         double range,
                                         struct MisfdrCovariance **out);

// Stationary AR(2) covariance of an `m`-long series.
//
// # Safety
// `out` must be a valid pointer.
enum MisfdrStatus misfdr_cov_ar2(size_t m,
                                 double rho1,
                                 double rho2,
                                 double innovation_var,
                                 bool normalize,
                                 struct MisfdrCovariance **out);

// `m × m` identity.
//
// # Safety
// `out` must be a valid pointer.
enum MisfdrStatus misfdr_cov_identity(size_t m, struct MisfdrCovariance **out);

// Covariance from `m * m` row-major entries.
//
// # Safety
// `data` must point to `m * m` doubles and `out` must be valid.
enum MisfdrStatus misfdr_cov_from_matrix(const double *data,
                                         size_t m,
                                         struct MisfdrCovariance **out);

// Releases a covariance handle. NULL is ignored.
//
// # Safety
// `cov` must come from a constructor of this library and not be used again.
void misfdr_cov_free(struct MisfdrCovariance *cov);

// Dimension of the matrix, or 0 for NULL.
//
// # Safety
// `cov` must be NULL or a live handle.
size_t misfdr_cov_dim(const struct MisfdrCovariance *cov);

// Copies the entries row-major into `out` (length `len` = m * m).
//
// # Safety
// `cov` must be live and `out` must hold `len` doubles.
enum MisfdrStatus misfdr_cov_copy(const struct MisfdrCovariance *cov, double *out, size_t len);

// Known-variance sampling law of the statistics for data generated with
// covariance `truth_cov` (prior mean 0) and analysed with `spec_cov`.
//
// # Safety
// Handles must be live and `out` valid.
enum MisfdrStatus misfdr_law_known_var(double sigma0_sq,
                                       const struct MisfdrCovariance *truth_cov,
                                       const struct MisfdrCovariance *spec_cov,
                                       double g,
                                       struct MisfdrLaw **out);

// Unknown-variance law under the normal-inverse-gamma prior.
//
// # Safety
// Handles must be live and `out` valid.
enum MisfdrStatus misfdr_law_unknown_var(double sigma0_sq,
                                         const struct MisfdrCovariance *truth_cov,
                                         const struct MisfdrCovariance *spec_cov,
                                         double g,
                                         double alpha_ig,
                                         double beta_ig,
                                         struct MisfdrLaw **out);

// Releases a law handle. NULL is ignored.
//
// # Safety
// `law` must come from this library and not be used again.
void misfdr_law_free(struct MisfdrLaw *law);

// Dimension of the law, or 0 for NULL.
//
// # Safety
// `law` must be NULL or live.
size_t misfdr_law_dim(const struct MisfdrLaw *law);

// Copies the ratios `r_i = a_ii / b_ii` into `out` (length m).
//
// # Safety
// `law` must be live and `out` must hold `len` doubles.
enum MisfdrStatus misfdr_law_ratios(const struct MisfdrLaw *law, double *out, size_t len);

// Marginal CDF of one statistic with ratio `r`.
//
// # Safety
// `out` must be valid.
enum MisfdrStatus misfdr_marginal_cdf(double h, double r, double *out);

// Marginal density of one statistic with ratio `r`.
//
// # Safety
// `out` must be valid.
enum MisfdrStatus misfdr_marginal_pdf(double h, double r, double *out);

// Joint log density of `h` under a known-variance law.
//
// # Safety
// `law` must be live, `h` must hold `len` doubles, `out` valid.
enum MisfdrStatus misfdr_joint_log_pdf(const struct MisfdrLaw *law,
                                       const double *h,
                                       size_t len,
                                       double *out);

// Step-up rule. Writes 1/0 per hypothesis into `mask` and the number of
// rejections into `k` (either may be NULL).
//
// # Safety
// `h` must hold `len` doubles; `mask`, when non-NULL, `len` bytes.
enum MisfdrStatus misfdr_step_up(const double *h,
                                 size_t len,
                                 double alpha_star,
                                 uint8_t *mask,
                                 size_t *k);

// Known-variance posterior probabilities `P(θ_i ≥ θ₀ᵢ | y)`. `theta0` may
// be NULL for a zero prior mean.
//
// # Safety
// `y`, `theta0` (if non-NULL) and `out` must hold `len` doubles.
enum MisfdrStatus misfdr_posterior_known_var(const double *y,
                                             const double *theta0,
                                             size_t len,
                                             const struct MisfdrCovariance *spec_cov,
                                             double sigma0_sq,
                                             double g,
                                             double *out);

// Monte Carlo KL divergence between the laws under `truth_cov` (correct)
// and `mis_cov`, both with prior scale `g`.
//
// # Safety
// Handles must be live and `out` valid.
enum MisfdrStatus misfdr_kl_known_var(double sigma0_sq,
                                      const struct MisfdrCovariance *truth_cov,
                                      const struct MisfdrCovariance *mis_cov,
                                      double g,
                                      size_t n_draws,
                                      uint64_t seed,
                                      struct MisfdrKlEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MISFDR_H */
