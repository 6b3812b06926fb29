#ifndef DEVMINER_H
#define DEVMINER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Expected direction of a one-sided test.
 */
typedef enum DmDirection {
  DM_DIRECTION_DEFECTIVE_GREATER = 0,
  DM_DIRECTION_NEUTRAL_GREATER = 1,
} DmDirection;

/**
 * Result code of every fallible call.
 */
typedef enum DmStatus {
  DM_STATUS_OK = 0,
  DM_STATUS_NULL_POINTER = 1,
  DM_STATUS_INVALID_UTF8 = 2,
  DM_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Unreadable or malformed input.
   */
  DM_STATUS_INPUT = 4,
  /**
   * A computation stage failed.
   */
  DM_STATUS_STAGE = 5,
  /**
   * Configuration rejected.
   */
  DM_STATUS_VALIDATION = 6,
  DM_STATUS_OUT_OF_RANGE = 7,
  DM_STATUS_PANIC = 8,
} DmStatus;

/**
 * A commit history loaded from a repository or log export.
 */
typedef struct DmHistory DmHistory;

/**
 * Activity metric rows, one per script.
 */
typedef struct DmMetricTable DmMetricTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dm_version(void);

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *dm_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void dm_string_free(char *s);

/**
 * Loads a history. `format` is `"jsonl"` (a log export) or `"git"` (a
 * repository directory); NULL means `"jsonl"`. Only `.pp` files count as
 * IaC scripts.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum DmStatus dm_history_load(const char *source, const char *format, struct DmHistory **out);

/**
 * Number of commits in the history; 0 for NULL.
 *
 * # Safety
 * `history` must be NULL or a live handle.
 */
size_t dm_history_commit_count(const struct DmHistory *history);

/**
 * Number of IaC scripts seen in the history; 0 for NULL.
 *
 * # Safety
 * `history` must be NULL or a live handle.
 */
size_t dm_history_iac_file_count(const struct DmHistory *history);

/**
 * # Safety
 * `history` must be NULL or a live handle, not used afterwards.
 */
void dm_history_free(struct DmHistory *history);

/**
 * Computes the metric table from a history and a JSON-lines label file.
 *
 * # Safety
 * `history` must be a live handle; `labels_path` NUL-terminated; `out`
 * writable.
 */
enum DmStatus dm_metric_table_compute(const struct DmHistory *history,
                                      const char *labels_path,
                                      bool normalize_edge_betweenness,
                                      struct DmMetricTable **out);

/**
 * Loads a metric table from CSV as written by `devminer metrics`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum DmStatus dm_metric_table_load_csv(const char *path, struct DmMetricTable **out);

/**
 * Number of rows; 0 for NULL.
 *
 * # Safety
 * `table` must be NULL or a live handle.
 */
size_t dm_metric_table_len(const struct DmMetricTable *table);

/**
 * Reads one metric by column name (`developers`, `disjointness`,
 * `highest_contrib`, `minors`, `norm_commit_size`, `scatteredness`,
 * `unfocused`, `size_loc`, `age_months`). Undefined values read as NaN.
 *
 * # Safety
 * `table` must be a live handle; `metric` NUL-terminated; `out` writable.
 */
enum DmStatus dm_metric_table_value(const struct DmMetricTable *table,
                                    size_t row,
                                    const char *metric,
                                    double *out);

/**
 * Script path of a row, or NULL on error. Free with [`dm_string_free`].
 *
 * # Safety
 * `table` must be a live handle.
 */
char *dm_metric_table_script(const struct DmMetricTable *table, size_t row);

/**
 * # Safety
 * `table` must be a live handle; `out` writable.
 */
enum DmStatus dm_metric_table_is_defective(const struct DmMetricTable *table,
                                           size_t row,
                                           bool *out);

/**
 * The table as CSV, or NULL for a NULL handle. Free with [`dm_string_free`].
 *
 * # Safety
 * `table` must be NULL or a live handle.
 */
char *dm_metric_table_to_csv(const struct DmMetricTable *table);

/**
 * # Safety
 * `table` must be NULL or a live handle, not used afterwards.
 */
void dm_metric_table_free(struct DmMetricTable *table);

/**
 * One-sided Mann-Whitney U test. `u_out` receives U of the defective
 * sample, `p_out` the p-value. Either out-pointer may be NULL.
 *
 * # Safety
 * Arrays must hold at least the given number of elements.
 */
enum DmStatus dm_mann_whitney(const double *defective,
                              size_t n_defective,
                              const double *neutral,
                              size_t n_neutral,
                              enum DmDirection direction,
                              double *u_out,
                              double *p_out);

/**
 * Cliff's delta of `x` against `y`.
 *
 * # Safety
 * Arrays must hold at least the given number of elements; `out` writable.
 */
enum DmStatus dm_cliffs_delta(const double *x, size_t nx, const double *y, size_t ny, double *out);

/**
 * Cohen's kappa for two raters' yes/no ratings of `n` items.
 *
 * # Safety
 * Both arrays must hold `n` elements; `out` writable.
 */
enum DmStatus dm_cohens_kappa(const bool *a, const bool *b, size_t n, double *out);

/**
 * Runs the whole pipeline from a TOML configuration file.
 *
 * # Safety
 * `config_path` must be NUL-terminated.
 */
enum DmStatus dm_run_pipeline(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEVMINER_H */
