#ifndef MSGATE_H
#define MSGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsgatePair {
  MSGATE_PAIR_GG = 0,
  MSGATE_PAIR_GE = 1,
  MSGATE_PAIR_EG = 2,
  MSGATE_PAIR_EE = 3,
} MsgatePair;

typedef enum MsgateStatus {
  MSGATE_STATUS_OK = 0,
  MSGATE_STATUS_NULL_POINTER = 1,
  MSGATE_STATUS_INVALID_ARGUMENT = 2,
  MSGATE_STATUS_NUMERICAL = 3,
  MSGATE_STATUS_IO = 4,
  MSGATE_STATUS_PANIC = 5,
} MsgateStatus;

/**
 * Opaque coefficient table.
 */
typedef struct MsgateTable MsgateTable;

typedef struct MsgateScalars {
  double a;
  double b_re;
  double b_im;
  double c_gg;
  double c_ee;
  double c_eg;
} MsgateScalars;

/**
 * Initial motional state: a Fock state `n` when `thermal` is false, otherwise a thermal state of mean `n_bar`.
 */
typedef struct MsgateMotion {
  bool thermal;
  uint32_t n;
  double n_bar;
} MsgateMotion;

typedef struct MsgatePrediction {
  double phase;
  /**
   * gg, ge, eg, ee.
   */
  double populations[4];
  double fidelity;
  double purity;
} MsgatePrediction;

typedef struct MsgateObservables {
  double populations[4];
  double relative_phase;
  double coherence_magnitude;
  bool phase_reliable;
  double fidelity;
  double purity;
  double norm_drift;
} MsgateObservables;

typedef struct MsgateCalibration {
  double amplitude;
  double offset;
  double phi_seq;
  double sigma_phi;
  double residual;
  bool reliable;
  double lambda_hat;
  double lambda_sigma;
} MsgateCalibration;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated, truncated to `len`).
 * Returns the full message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t msgate_last_error(char *buf, size_t len);

/**
 * ⟨m|D(α)|n⟩ with α = alpha_re + i alpha_im.
 *
 * # Safety
 * `out_re` and `out_im` must be valid for writes.
 */
enum MsgateStatus msgate_displacement_element(uint32_t m,
                                              uint32_t n,
                                              double alpha_re,
                                              double alpha_im,
                                              double *out_re,
                                              double *out_im);

/**
 * Computes the table for the given gate with the default quadrature settings.
 *
 * # Safety
 * `table_out` must be valid for writes.
 */
enum MsgateStatus msgate_table_compute(double omega_tilde,
                                       double tau_g,
                                       uint32_t n_max,
                                       struct MsgateTable **table_out);

/**
 * Computes the table for the calibrated gate (Ω̃ = 1/2, τ_g = 2π, n_max = 40).
 *
 * # Safety
 * `table_out` must be valid for writes.
 */
enum MsgateStatus msgate_table_compute_default(struct MsgateTable **table_out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `table_out` must be valid for writes.
 */
enum MsgateStatus msgate_table_load(const char *path_, struct MsgateTable **table_out);

/**
 * # Safety
 * `table` must come from this library; `path` must be a NUL-terminated string.
 */
enum MsgateStatus msgate_table_save(const struct MsgateTable *table_, const char *path_);

/**
 * Releases a table. Null is ignored.
 *
 * # Safety
 * `table` must be null or come from this library and not be used afterwards.
 */
void msgate_table_free(struct MsgateTable *table_);

/**
 * Fock cutoff of the table and the largest n with derived scalars.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MsgateStatus msgate_table_range(const struct MsgateTable *table_,
                                     uint32_t *n_max,
                                     uint32_t *scalar_n_max);

/**
 * a_n, b_n and c_n.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MsgateStatus msgate_table_scalars(const struct MsgateTable *table_,
                                       uint32_t n,
                                       struct MsgateScalars *scalars_out);

/**
 * Closed-form prediction at λ̃ for the given input; `order` (1 or 2) applies to the phase only.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MsgateStatus msgate_predict(const struct MsgateTable *table_,
                                 enum MsgatePair pair,
                                 struct MsgateMotion motion_,
                                 double lambda_tilde,
                                 uint32_t order,
                                 bool renormalized,
                                 struct MsgatePrediction *prediction_out);

/**
 * Numerical gate for a Fock input on the calibrated gate, RK4 with `steps` steps (0 selects the default).
 *
 * # Safety
 * `observables_out` must be valid for writes.
 */
enum MsgateStatus msgate_oracle_observables(enum MsgatePair pair,
                                            uint32_t n,
                                            double lambda_tilde,
                                            uint32_t steps,
                                            struct MsgateObservables *observables_out);

/**
 * Fits P_ee(φ_d) = A cos(2φ_d + φ_seq) + B and converts φ_seq into λ̂.
 * `shots` may be null, in which case all points are weighted equally.
 *
 * # Safety
 * `phi_d` and `p_ee` (and `shots` when non-null) must point to `len` elements.
 */
enum MsgateStatus msgate_calibrate(const struct MsgateTable *table_,
                                   const double *phi_d,
                                   const double *p_ee,
                                   const uint32_t *shots,
                                   size_t len,
                                   struct MsgateMotion motion_,
                                   double epsilon,
                                   struct MsgateCalibration *calibration_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSGATE_H */
