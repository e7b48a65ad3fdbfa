#ifndef COGPLAN_H
#define COGPLAN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CogplanStatus {
  COGPLAN_STATUS_OK = 0,
  /**
   * A null pointer or non-UTF-8 string was passed.
   */
  COGPLAN_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Input was well-formed but rejected (bad config, unknown ids, ...).
   */
  COGPLAN_STATUS_VALIDATION = 2,
  /**
   * The expert or search backend failed.
   */
  COGPLAN_STATUS_BACKEND = 3,
  COGPLAN_STATUS_IO = 4,
  /**
   * Malformed JSON, JSONL or TOML.
   */
  COGPLAN_STATUS_PARSE = 5,
  /**
   * A bug: the library panicked.
   */
  COGPLAN_STATUS_INTERNAL = 6,
} CogplanStatus;

/**
 * Opaque handle to a loaded benchmark dataset.
 */
typedef struct CogplanDataset CogplanDataset;

/**
 * Opaque planner handle.
 */
typedef struct CogplanPlanner CogplanPlanner;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *cogplan_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void cogplan_string_free(char *s);

/**
 * Creates a planner from TOML settings. `config_toml` may be null for the
 * defaults; relative paths in it resolve against `base_dir` (null: the
 * working directory). Environment overrides apply as in the CLI.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum CogplanStatus cogplan_planner_new(const char *config_toml,
                                       const char *base_dir,
                                       struct CogplanPlanner **out);

/**
 * Plans and answers one query. `query_json` is an object
 * `{"id": ..., "text": ..., "image": optional locator}`; on success (and on a
 * backend failure, status `Backend`) `*out_trace_json` receives the trace.
 *
 * # Safety
 * `planner` must be a live handle; `query_json` NUL-terminated; `out_trace_json` writable.
 */
enum CogplanStatus cogplan_planner_run(const struct CogplanPlanner *planner,
                                       const char *query_json,
                                       char **out_trace_json);

/**
 * # Safety
 * `planner` must be null or a handle from `cogplan_planner_new` not yet freed.
 */
void cogplan_planner_free(struct CogplanPlanner *planner);

/**
 * Token-level F1 between a prediction and a reference.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` writable.
 */
enum CogplanStatus cogplan_token_f1(const char *pred, const char *gold, double *out);

/**
 * ROUGE-L F-measure.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` writable.
 */
enum CogplanStatus cogplan_rouge_l(const char *pred, const char *gold, double *out);

/**
 * Sentence BLEU against `n_refs` references.
 *
 * # Safety
 * `refs` must point to `n_refs` NUL-terminated strings; `out` writable.
 */
enum CogplanStatus cogplan_bleu(const char *pred,
                                const char *const *refs,
                                size_t n_refs,
                                double *out);

/**
 * Loads a JSONL benchmark dataset; image paths resolve against its directory.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum CogplanStatus cogplan_dataset_load(const char *path, struct CogplanDataset **out);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t cogplan_dataset_len(const struct CogplanDataset *dataset);

/**
 * Dataset statistics as a JSON object.
 *
 * # Safety
 * `dataset` must be a live handle; `out_json` writable.
 */
enum CogplanStatus cogplan_dataset_stats_json(const struct CogplanDataset *dataset,
                                              char **out_json);

/**
 * # Safety
 * `dataset` must be null or a handle from `cogplan_dataset_load` not yet freed.
 */
void cogplan_dataset_free(struct CogplanDataset *dataset);

/**
 * Scores JSONL traces against a dataset with sentence claims and exact
 * matching, writing the metric report as JSON. `label` may be null.
 *
 * # Safety
 * `dataset` must be a live handle; strings NUL-terminated; `out_report_json` writable.
 */
enum CogplanStatus cogplan_evaluate(const struct CogplanDataset *dataset,
                                    const char *traces_jsonl,
                                    const char *label,
                                    char **out_report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COGPLAN_H */
