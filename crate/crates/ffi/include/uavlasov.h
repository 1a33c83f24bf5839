#ifndef UAVLASOV_H
#define UAVLASOV_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum UavStatus {
  UAV_STATUS_OK = 0,
  UAV_STATUS_NULL_POINTER = 1,
  UAV_STATUS_INVALID_UTF8 = 2,
  UAV_STATUS_CONFIG = 3,
  UAV_STATUS_PRECONDITION = 4,
  UAV_STATUS_DOMAIN = 5,
  UAV_STATUS_RANGE = 6,
  UAV_STATUS_ITERATION_LIMIT = 7,
  UAV_STATUS_IO = 8,
  UAV_STATUS_PANIC = 9,
  UAV_STATUS_BUFFER_TOO_SMALL = 10,
} UavStatus;

/**
 * Integrators reachable through [`uav_integrate`].
 */
typedef enum UavScheme {
  UAV_SCHEME_MRC = 0,
  UAV_SCHEME_TSF = 1,
  UAV_SCHEME_MM = 2,
  UAV_SCHEME_RK4 = 3,
  UAV_SCHEME_LIMIT = 4,
} UavScheme;

/**
 * An experiment configuration.
 */
typedef struct UavConfig UavConfig;

/**
 * A weighted particle ensemble on a periodic mesh.
 */
typedef struct UavEnsemble UavEnsemble;

/**
 * A magnetic/electric field configuration.
 */
typedef struct UavField UavField;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Writes the last error message of this thread into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null; `needed` may be null.
 */
enum UavStatus uav_last_error(char *buf, size_t len, size_t *needed);

/**
 * Builds a field from a catalog name: `example1`, `example2`, `uniform`,
 * `screw-pinch` or `screw-pinch:<alpha>`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UavStatus uav_field_new(const char *spec, struct UavField **out);

/**
 * # Safety
 * `field` must come from [`uav_field_new`] or be null.
 */
void uav_field_free(struct UavField *field);

/**
 * Evaluates `E(t, x)` and `B(x)`.
 *
 * # Safety
 * `x` must point to 3 doubles; `e` and `b` to 3 writable doubles each.
 */
enum UavStatus uav_field_eval(const struct UavField *field,
                              double t,
                              const double *x,
                              double *e,
                              double *b);

/**
 * Advances `state = (x, v)` from `0` to `t_final` with `steps` steps.
 * `n_tau` is ignored by MRC, RK4 and the averaged model.
 *
 * # Safety
 * `state` must point to 6 doubles, read as input and overwritten.
 */
enum UavStatus uav_integrate(const struct UavField *field,
                             enum UavScheme scheme,
                             double eps,
                             double t_final,
                             size_t steps,
                             size_t n_tau,
                             double *state);

/**
 * Reference solution of the full characteristics with `per_period`
 * extrapolation steps per gyro-period.
 *
 * # Safety
 * `state` must point to 6 doubles, read as input and overwritten.
 */
enum UavStatus uav_reference(const struct UavField *field,
                             double eps,
                             double t_final,
                             size_t per_period,
                             double *state);

/**
 * Default experiment configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum UavStatus uav_config_new(struct UavConfig **out);

/**
 * Parses a `key = value` configuration text.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` valid.
 */
enum UavStatus uav_config_parse(const char *text, struct UavConfig **out);

/**
 * # Safety
 * `cfg` must come from [`uav_config_new`]/[`uav_config_parse`] or be null.
 */
void uav_config_free(struct UavConfig *cfg);

/**
 * Applies one setting, as in a configuration file.
 *
 * # Safety
 * `key` and `value` must be NUL-terminated.
 */
enum UavStatus uav_config_set(struct UavConfig *cfg, const char *key, const char *value);

/**
 * Writes the 16-hex-digit configuration hash.
 *
 * # Safety
 * `buf` must hold `len` bytes; `needed` may be null.
 */
enum UavStatus uav_config_hash(const struct UavConfig *cfg, char *buf, size_t len, size_t *needed);

/**
 * Runs the convergence sweep of the configuration and writes the error
 * table as CSV. A reparametrized scheme is rejected.
 *
 * # Safety
 * `path` must be NUL-terminated.
 */
enum UavStatus uav_sweep_csv(const struct UavConfig *cfg, const char *path);

/**
 * Samples `n_p` particles of the perturbed ring on `[-8, 8]² × [0, 1]`
 * with `nodes[3]` mesh nodes.
 *
 * # Safety
 * `nodes` must point to 3 values and `out` be valid.
 */
enum UavStatus uav_ensemble_new(const size_t *nodes,
                                double n0,
                                double eta,
                                uint32_t k,
                                uint64_t seed,
                                size_t n_p,
                                struct UavEnsemble **out);

/**
 * # Safety
 * `ens` must come from [`uav_ensemble_new`] or be null.
 */
void uav_ensemble_free(struct UavEnsemble *ens);

/**
 * Number of particles, 0 for a null handle.
 *
 * # Safety
 * `ens` must be a valid handle or null.
 */
size_t uav_ensemble_len(const struct UavEnsemble *ens);

/**
 * Copies particle `i` into `state[6]` and its weight into `*weight`.
 *
 * # Safety
 * `state` must hold 6 doubles; `weight` may be null.
 */
enum UavStatus uav_ensemble_get(const struct UavEnsemble *ens,
                                size_t i,
                                double *state,
                                double *weight);

/**
 * Advances the ensemble self-consistently to `t_final` with `macro_steps`
 * MRC steps. `*max_energy_error` receives the largest relative change of
 * the total energy.
 *
 * # Safety
 * Handles must be valid; `max_energy_error` may be null.
 */
enum UavStatus uav_vp_run(struct UavEnsemble *ens,
                          const struct UavField *field,
                          double eps,
                          double t_final,
                          size_t macro_steps,
                          double *max_energy_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UAVLASOV_H */
