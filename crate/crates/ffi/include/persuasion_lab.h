#ifndef PERSUASION_LAB_H
#define PERSUASION_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PlStatus {
  PL_STATUS_OK = 0,
  PL_STATUS_NULL_POINTER = 1,
  PL_STATUS_INVALID_UTF8 = 2,
  /**
   * Config, dataset or validation error.
   */
  PL_STATUS_PARSE = 3,
  /**
   * Rank condition failed or an action is unsupported by the data.
   */
  PL_STATUS_RANK = 4,
  /**
   * Lifted state space or trajectory enumeration over the size guard.
   */
  PL_STATUS_SIZE_GUARD = 5,
  PL_STATUS_IO = 6,
  PL_STATUS_INTERNAL = 7,
  PL_STATUS_PANIC = 8,
} PlStatus;

/**
 * Logged behavioral dataset.
 */
typedef struct PlDataset PlDataset;

/**
 * Validated environment.
 */
typedef struct PlEnvironment PlEnvironment;

/**
 * Meta-policy usable as behavioral or evaluation strategy.
 */
typedef struct PlStrategy PlStrategy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *pl_version(void);

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *pl_last_error_message(void);

/**
 * Parses an environment from TOML source.
 *
 * # Safety
 * `toml` must be a valid C string; `out` must be writable.
 */
enum PlStatus pl_env_from_toml(const char *toml, struct PlEnvironment **out);

/**
 * Loads an environment from a TOML file.
 *
 * # Safety
 * `path` must be a valid C string; `out` must be writable.
 */
enum PlStatus pl_env_from_path(const char *path, struct PlEnvironment **out);

/**
 * # Safety
 * `env` must be null or a handle from this library not yet freed.
 */
void pl_env_free(struct PlEnvironment *env);

/**
 * Horizon `T`, or 0 for a null handle.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t pl_env_horizon(const struct PlEnvironment *env);

/**
 * Number of signaling policies, or 0 for a null handle.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t pl_env_num_policies(const struct PlEnvironment *env);

/**
 * Content hash (hex); owned by the environment.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
const char *pl_env_hash(const struct PlEnvironment *env);

/**
 * Best one-shot policy in the environment's set and its value.
 *
 * # Safety
 * `env` must be a live handle; `best_index` and `value` must be writable.
 */
enum PlStatus pl_solve_bp(const struct PlEnvironment *env, size_t *best_index, double *value);

/**
 * Builds a strategy from a TOML strategy descriptor such as
 * `family = "constant"` / `policy = 1`.
 *
 * # Safety
 * `env` must be a live handle, `toml` a valid C string, `out` writable.
 */
enum PlStatus pl_strategy_from_toml(const struct PlEnvironment *env,
                                    const char *toml,
                                    struct PlStrategy **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void pl_strategy_free(struct PlStrategy *s);

/**
 * Simulates `n` episodes under `behavioral`.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum PlStatus pl_dataset_generate(const struct PlEnvironment *env,
                                  const struct PlStrategy *behavioral,
                                  size_t n,
                                  uint64_t seed,
                                  struct PlDataset **out);

/**
 * # Safety
 * `path` must be a valid C string; `out` writable.
 */
enum PlStatus pl_dataset_load(const char *path, struct PlDataset **out);

/**
 * # Safety
 * `ds` must be a live handle; `path` a valid C string.
 */
enum PlStatus pl_dataset_save(const struct PlDataset *ds, const char *path);

/**
 * Number of records, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t pl_dataset_len(const struct PlDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle from this library not yet freed.
 */
void pl_dataset_free(struct PlDataset *ds);

/**
 * Sample-mode proximal estimate of `eval`'s value from `ds`, with the
 * default estimator variant.
 *
 * # Safety
 * Handles must be live; `value` writable.
 */
enum PlStatus pl_ope_value(const struct PlDataset *ds,
                           const struct PlStrategy *eval,
                           double *value);

/**
 * Exact value by trajectory enumeration on the lifted model.
 *
 * # Safety
 * Handles must be live and `env` not shared across threads during the
 * call; `value` writable.
 */
enum PlStatus pl_exact_value(struct PlEnvironment *env,
                             const struct PlStrategy *strategy,
                             double *value);

/**
 * Mean cumulative sender reward over `n` simulated episodes.
 *
 * # Safety
 * Handles must be live; `value` writable.
 */
enum PlStatus pl_monte_carlo_value(const struct PlEnvironment *env,
                                   const struct PlStrategy *strategy,
                                   size_t n,
                                   uint64_t seed,
                                   double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERSUASION_LAB_H */
