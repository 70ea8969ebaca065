/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef DECOHERENCE_H
#define DECOHERENCE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DdStatus {
  DD_STATUS_OK = 0,
  DD_STATUS_NULL_POINTER = 1,
  // Bad configuration or argument (CLI exit code 2).
  DD_STATUS_INVALID_ARGUMENT = 2,
  // Integration or fit failure (CLI exit code 3).
  DD_STATUS_NUMERICAL = 3,
  // Design targets out of reach (CLI exit code 4).
  DD_STATUS_INFEASIBLE = 4,
  DD_STATUS_BUFFER_TOO_SMALL = 5,
  DD_STATUS_PANIC = 6,
} DdStatus;

// Opaque run configuration.
typedef struct DdConfig DdConfig;

// Opaque protocol simulator; owns the cached deterministic curve.
typedef struct DdSimulator DdSimulator;

// Absent quantities are NaN.
typedef struct DdRates {
  double r1;
  double r2;
  double gamma;
  double big_gamma;
  double p1_inf;
} DdRates;

typedef struct DdFit {
  double omega;
  double lambda;
  double p_inf;
  double amplitude;
  double phase;
  double residual_rms;
  bool converged;
  bool low_confidence;
} DdFit;

typedef struct DdDesign {
  double i0;
  // Radians.
  double alpha;
  double zeeman_delta;
  struct DdRates achieved;
} DdDesign;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dd_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call into the library from the same thread.
const char *dd_last_error(void);

// Parse a TOML configuration; an empty string gives the defaults.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum DdStatus dd_config_from_toml(const char *toml, struct DdConfig **out);

// # Safety
// `config` must come from [`dd_config_from_toml`] or be null.
void dd_config_free(struct DdConfig *config);

// Set one physics knob by its configuration name (`i0`, `alpha_deg`,
// `b_field_2pikhz`, `omega_2pikhz`, ...), in configuration units.
//
// # Safety
// `config` must be a live handle and `name` a NUL-terminated string.
enum DdStatus dd_config_set(struct DdConfig *config, const char *name, double value);

// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum DdStatus dd_rates(const struct DdConfig *config, struct DdRates *out);

// Deterministic P₁ at N·δt for N = 0..=n_max; `len` must be at least
// n_max + 1. `written` (optional) receives the number of values.
//
// # Safety
// `p1` must point to `len` writable doubles.
enum DdStatus dd_simulate(const struct DdConfig *config, double *p1, size_t len, size_t *written);

// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum DdStatus dd_simulator_new(const struct DdConfig *config, struct DdSimulator **out);

// # Safety
// `sim` must come from [`dd_simulator_new`] or be null.
void dd_simulator_free(struct DdSimulator *sim);

// Outcomes (1 = on) of trajectory `index` for N = 1..=n_max. The result
// depends only on the configuration, seed and index.
//
// # Safety
// `outcomes` must point to `len` writable bytes.
enum DdStatus dd_simulator_run(const struct DdSimulator *sim,
                               uint64_t index,
                               uint8_t *outcomes,
                               size_t len);

// Damped-cosine fit of `n` samples (τ in seconds). Non-convergence is
// reported in `out.converged`, not as an error.
//
// # Safety
// `tau` and `p1` must point to `n` readable doubles.
enum DdStatus dd_fit(const double *tau, const double *p1, size_t n, struct DdFit *out);

// Light intensity, polarization and field for target rates γ and Γ (rad/s;
// Γ = +∞ for none), with the bounds of the configuration's design section.
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum DdStatus dd_design(const struct DdConfig *config,
                        double gamma,
                        double big_gamma,
                        struct DdDesign *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DECOHERENCE_H */
