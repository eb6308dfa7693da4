#ifndef CONCMARK_H
#define CONCMARK_H

#include <stddef.h>
#include <stdint.h>

typedef enum CmStatus {
  CM_STATUS_OK = 0,
  CM_STATUS_NULL_POINTER = 1,
  CM_STATUS_INVALID_ARGUMENT = 2,
  CM_STATUS_DOMAIN = 3,
  CM_STATUS_TRUNCATION = 4,
  CM_STATUS_HYPOTHESIS = 5,
  CM_STATUS_DIVERGENT = 6,
  CM_STATUS_SIMULATION = 7,
  CM_STATUS_IO = 8,
  CM_STATUS_PARSE = 9,
  CM_STATUS_PANIC = 10,
} CmStatus;

typedef enum CmStage {
  CM_STAGE_CERTIFY = 0,
  CM_STAGE_ENVELOPE = 1,
  CM_STAGE_TAILS = 2,
  CM_STAGE_SCENARIO = 3,
} CmStage;

typedef enum CmOutcome {
  CM_OUTCOME_PASS = 0,
  CM_OUTCOME_CERTIFICATION_FAILED = 1,
  CM_OUTCOME_DOMINANCE_FAILED = 2,
} CmOutcome;

/**
 * Opaque birth-death chain.
 */
typedef struct CmChain CmChain;

/**
 * Opaque concentration envelope.
 */
typedef struct CmEnvelope CmEnvelope;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns its full length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cm_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cm_version(void);

/**
 * Birth rate `p (x+1)^n`, death rate `x^n`.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum CmStatus cm_chain_geometric(double p, uint32_t n, struct CmChain **out);

/**
 * Birth rate `rate`, death rate `x`; Poisson stationary law.
 *
 * # Safety
 * `out` must be null or writable.
 */
enum CmStatus cm_chain_mm_infinity(double rate, struct CmChain **out);

/**
 * Finite chain on `{0..len-1}` from rate tables.
 *
 * # Safety
 * `birth` and `death` must point to `len` readable doubles.
 */
enum CmStatus cm_chain_tabulated(const double *birth,
                                 const double *death,
                                 size_t len,
                                 struct CmChain **out);

/**
 * Default truncation level of the chain.
 *
 * # Safety
 * `chain` must be null or a live handle.
 */
enum CmStatus cm_chain_truncation(const struct CmChain *chain, size_t *out);

/**
 * # Safety
 * `chain` must be null or a handle not yet freed.
 */
void cm_chain_free(struct CmChain *chain);

/**
 * Spectral gap of the reflected truncation `{0..n}`.
 *
 * # Safety
 * `chain` must be a live handle and `out` writable.
 */
enum CmStatus cm_spectral_gap(const struct CmChain *chain, size_t n, double *out);

/**
 * Hardy constant `delta` and the gap bracket `[1/(4 delta), 1/delta]`.
 *
 * # Safety
 * `chain` must be a live handle and the out-pointers writable.
 */
enum CmStatus cm_miclo(const struct CmChain *chain,
                       size_t n,
                       double *delta,
                       double *gap_lower,
                       double *gap_upper);

/**
 * Entropic constant from monotone rates; 0 when the criterion does not apply.
 *
 * # Safety
 * `chain` must be a live handle and `out` writable.
 */
enum CmStatus cm_entropic_lower_bound(const struct CmChain *chain, size_t n, double *out);

/**
 * `P(X - E X > r)` for the stationary law truncated at `n`, with the mass
 * past `n` bounded by `widening`.
 *
 * # Safety
 * `chain` must be a live handle and the out-pointers writable.
 */
enum CmStatus cm_exact_tail(const struct CmChain *chain,
                            size_t n,
                            double r,
                            double *value,
                            double *widening);

/**
 * # Safety
 * `out` must be null or writable.
 */
enum CmStatus cm_envelope_entropic(double rho0, double a, double b, struct CmEnvelope **out);

/**
 * # Safety
 * `out` must be null or writable.
 */
enum CmStatus cm_envelope_beckner(double alpha_p,
                                  double p,
                                  double a,
                                  double b,
                                  struct CmEnvelope **out);

/**
 * # Safety
 * `out` must be null or writable.
 */
enum CmStatus cm_envelope_covariance(double rho0, double a, double b, struct CmEnvelope **out);

/**
 * # Safety
 * `out` must be null or writable.
 */
enum CmStatus cm_envelope_super_exponential(double rho0,
                                            double a,
                                            double b,
                                            struct CmEnvelope **out);

/**
 * # Safety
 * `env` must be null or a handle not yet freed.
 */
void cm_envelope_free(struct CmEnvelope *env);

/**
 * Exponent and bound `exp(-exponent)` at deviation `r >= 0`.
 *
 * # Safety
 * `env` must be a live handle and the out-pointers writable.
 */
enum CmStatus cm_envelope_eval(const struct CmEnvelope *env,
                               double r,
                               double *exponent,
                               double *bound);

/**
 * End of the Gaussian window; infinity when there is none.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum CmStatus cm_envelope_r_max(const struct CmEnvelope *env, double *out);

/**
 * Runs a scenario file and writes its artifacts under `out_dir/<name>/`.
 *
 * # Safety
 * `path` and `out_dir` must be NUL-terminated strings; `outcome` writable.
 */
enum CmStatus cm_run_scenario(const char *path,
                              enum CmStage stage,
                              const char *out_dir,
                              enum CmOutcome *outcome);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONCMARK_H */
