#ifndef QFIM_H
#define QFIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QfimStatus {
  QFIM_STATUS_OK = 0,
  QFIM_STATUS_NULL_POINTER = 1,
  QFIM_STATUS_INVALID_ARGUMENT = 2,
  QFIM_STATUS_DIMENSION_MISMATCH = 3,
  QFIM_STATUS_DEGENERATE_FAMILY = 4,
  QFIM_STATUS_NUMERICAL = 5,
  QFIM_STATUS_BUFFER_TOO_SMALL = 6,
  QFIM_STATUS_PANIC = 7,
} QfimStatus;

// Opaque reference ansatz.
typedef struct QfimAnsatz QfimAnsatz;

// Opaque CFIM sampler at a fixed parameter point.
typedef struct QfimSampler QfimSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or an empty string.
// Valid until the next call into this library on the same thread.
const char *qfim_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *qfim_version(void);

// Build the seeded product-of-exponentials ansatz with `n` amplitudes and `m` parameters.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum QfimStatus qfim_ansatz_new(size_t n, size_t m, uint64_t seed, struct QfimAnsatz **out);

// # Safety
// `ansatz` must come from [`qfim_ansatz_new`] and not be freed twice. Null is ignored.
void qfim_ansatz_free(struct QfimAnsatz *ansatz);

// Hilbert-space dimension, or 0 for a null handle.
//
// # Safety
// `ansatz` must be null or a live handle.
size_t qfim_ansatz_dim(const struct QfimAnsatz *ansatz);

// Number of parameters, or 0 for a null handle.
//
// # Safety
// `ansatz` must be null or a live handle.
size_t qfim_ansatz_num_params(const struct QfimAnsatz *ansatz);

// Exact QFIM at `theta` into `out` (row-major `m×m`).
//
// # Safety
// `theta` must point to `theta_len` doubles and `out` to `out_len` doubles.
enum QfimStatus qfim_ansatz_qfim(const struct QfimAnsatz *ansatz,
                                 const double *theta,
                                 size_t theta_len,
                                 double *out,
                                 size_t out_len);

// Sampler for Haar-random-basis CFIMs at `theta`. Sample `i` is a pure
// function of `(ansatz, theta, seed, i)`.
//
// # Safety
// `theta` must point to `theta_len` doubles and `out` to storage for one handle.
enum QfimStatus qfim_sampler_new(const struct QfimAnsatz *ansatz,
                                 const double *theta,
                                 size_t theta_len,
                                 uint64_t seed,
                                 double prob_floor,
                                 struct QfimSampler **out);

// # Safety
// `sampler` must come from [`qfim_sampler_new`] and not be freed twice. Null is ignored.
void qfim_sampler_free(struct QfimSampler *sampler);

// CFIM of sample `index` into `out`.
//
// # Safety
// `sampler` must be a live handle and `out` must point to `out_len` doubles.
enum QfimStatus qfim_sampler_sample(const struct QfimSampler *sampler,
                                    uint64_t index,
                                    double *out,
                                    size_t out_len);

// Monte Carlo QFIM estimate `2·mean(F)` over samples `0..k`, its entrywise
// empirical variance of `F`, and the relative Frobenius error of the mean
// against `Q/2`. `out_variance` and `out_rel_frob` may be null.
//
// # Safety
// `sampler` must be a live handle; non-null buffers must hold `out_len` doubles.
enum QfimStatus qfim_sampler_estimate(const struct QfimSampler *sampler,
                                      size_t k,
                                      double *out_qfim,
                                      double *out_variance,
                                      size_t out_len,
                                      double *out_rel_frob);

// `min(1, 2m² exp(−(N−1)t²/120))`.
//
// # Safety
// `out` must be a valid pointer.
enum QfimStatus qfim_bound_max_norm(double t, size_t n, size_t m, double *out);

// Frobenius tail bound: probability `exp(−(N−1)t²/120)` of a relative error
// above `t + 16√(m/(N−1))`, the latter written to `out_threshold`.
//
// # Safety
// Both output pointers must be valid.
enum QfimStatus qfim_bound_frobenius(double t,
                                     size_t n,
                                     size_t m,
                                     double *out_threshold,
                                     double *out_probability);

// Eigenvalue sandwich bound. `out_precondition_met` receives 1 when
// `N ≥ 10⁵m/ε²`, else 0; the probability is reported either way.
//
// # Safety
// All output pointers must be valid.
enum QfimStatus qfim_bound_eigenvalue(double epsilon,
                                      size_t n,
                                      size_t m,
                                      int32_t *out_precondition_met,
                                      double *out_exponent,
                                      double *out_success_probability);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QFIM_H */
