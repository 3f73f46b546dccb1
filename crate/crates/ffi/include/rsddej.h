#ifndef RSDDEJ_H
#define RSDDEJ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsddejStatus {
  RSDDEJ_STATUS_OK = 0,
  RSDDEJ_STATUS_NULL_POINTER = 1,
  RSDDEJ_STATUS_INVALID_ARGUMENT = 2,
  RSDDEJ_STATUS_CONFIG = 3,
  RSDDEJ_STATUS_NUMERICAL = 4,
  RSDDEJ_STATUS_IO = 5,
  RSDDEJ_STATUS_BUFFER_TOO_SMALL = 6,
  RSDDEJ_STATUS_PANIC = 7,
} RsddejStatus;

/**
 * One simulated path.
 */
typedef struct RsddejPath RsddejPath;

/**
 * A validated run configuration.
 */
typedef struct RsddejSession RsddejSession;

/**
 * Dissipativity constants; rates are NaN when the model is infeasible.
 */
typedef struct RsddejDissipativity {
  bool feasible;
  double epsilon_sq;
  double alpha;
  double alpha1;
  double alpha2;
  double beta1;
  double beta2;
  double lambda_moment;
  double lambda_contraction;
} RsddejDissipativity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error of this thread into `buf` as a NUL-terminated
 * string, truncating if needed. Returns the full message length without
 * the terminator; pass a null `buf` to query it.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t rsddej_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rsddej_version(void);

/**
 * Positive root of `λ − a1 + a2·e^{λτ} = 0`.
 *
 * # Safety
 * `out` must be null or point to a writable `double`.
 */
enum RsddejStatus rsddej_solve_lambda_star(double a1, double a2, double delay, double *out);

/**
 * Orthant projection of `n` values: `x_post = max(x_pre, 0)`,
 * `dk = max(−x_pre, 0)`.
 *
 * # Safety
 * All three pointers must reference `n` doubles; `x_post` and `dk` must be
 * writable and must not overlap `x_pre`.
 */
enum RsddejStatus rsddej_project_and_regulate(const double *x_pre,
                                              size_t n,
                                              double *x_post,
                                              double *dk);

/**
 * Parse and validate a JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must point to writable
 * storage for a handle.
 */
enum RsddejStatus rsddej_session_from_json(const char *json, struct RsddejSession **out);

/**
 * # Safety
 * `session` must be null or a handle from [`rsddej_session_from_json`]
 * that has not been freed.
 */
void rsddej_session_free(struct RsddejSession *session);

/**
 * State dimension of the configured model.
 *
 * # Safety
 * `session` must be a live handle and `out` writable.
 */
enum RsddejStatus rsddej_session_dim(const struct RsddejSession *session, size_t *out);

/**
 * Dissipativity constants of the configured model.
 *
 * # Safety
 * `session` must be a live handle and `out` writable.
 */
enum RsddejStatus rsddej_session_validate(const struct RsddejSession *session,
                                          struct RsddejDissipativity *out);

/**
 * Simulate path `path_index` of the configured run from the primary
 * initial segment. The result is identical to path `path_index` of the
 * `simulate` command.
 *
 * # Safety
 * `session` must be a live handle; `out` must point to writable storage
 * for a handle.
 */
enum RsddejStatus rsddej_session_simulate(const struct RsddejSession *session,
                                          uint64_t path_index,
                                          struct RsddejPath **out);

/**
 * # Safety
 * `path` must be null or a handle from [`rsddej_session_simulate`] that has
 * not been freed.
 */
void rsddej_path_free(struct RsddejPath *path);

/**
 * Grid shape of a path: `steps + 1` rows of `dim` values.
 *
 * # Safety
 * `path` must be a live handle; `steps` and `dim` writable.
 */
enum RsddejStatus rsddej_path_shape(const struct RsddejPath *path, size_t *steps, size_t *dim);

/**
 * Number of Poisson jumps applied along the path.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum RsddejStatus rsddej_path_jump_count(const struct RsddejPath *path, size_t *out);

/**
 * Copy one series (an [`RsddejField`] value), row-major `(steps + 1) × dim`, into `buf`. With a
 * short buffer nothing is copied, `*written` receives the required length
 * and `RSDDEJ_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `path` must be a live handle, `buf` must point to `len` writable doubles
 * (or be null when `len` is 0), `written` must be writable.
 */
enum RsddejStatus rsddej_path_copy(const struct RsddejPath *path,
                                   uint32_t field,
                                   double *buf,
                                   size_t len,
                                   size_t *written);

/**
 * Run a CLI command (`"simulate"`, `"validate"`, `"moments"`,
 * `"contraction"`, `"invariant"`, `"localtime"` or `"lossrate"`) on a
 * session, writing CSVs and a manifest into `out_dir`. When `override_seed`
 * is true `seed` replaces the configured seed.
 *
 * # Safety
 * `session` must be a live handle; `command` and `out_dir` must be
 * NUL-terminated strings.
 */
enum RsddejStatus rsddej_run_experiment(const struct RsddejSession *session,
                                        const char *command,
                                        const char *out_dir,
                                        bool override_seed,
                                        uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSDDEJ_H */
