#ifndef EDGEHST_H
#define EDGEHST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EhStatus {
  EH_STATUS_OK = 0,
  EH_STATUS_NULL_POINTER = 1,
  EH_STATUS_INVALID_UTF8 = 2,
  EH_STATUS_INVALID_CONFIG = 3,
  EH_STATUS_INVALID_DATA = 4,
  EH_STATUS_OUT_OF_ORDER = 5,
  EH_STATUS_VERSION_MISMATCH = 6,
  EH_STATUS_IO = 7,
  EH_STATUS_UNDEFINED_METRIC = 8,
  EH_STATUS_STATIC_MODE = 9,
  EH_STATUS_INTERNAL = 10,
  EH_STATUS_PANIC = 11,
} EhStatus;

/**
 * Opaque streaming detector.
 */
typedef struct EhPipeline EhPipeline;

/**
 * One scored edge.
 */
typedef struct EhScore {
  uint64_t seq;
  double score;
  double source_term;
  double dest_term;
  double edge_term;
  bool cache_hit;
} EhScore;

typedef struct EhThreshold {
  double tau_star;
  double objective;
  uint64_t left_size;
  uint64_t right_size;
  bool degenerate;
} EhThreshold;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *eh_last_error(void);

/**
 * Library version as a static string.
 */
const char *eh_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void eh_string_free(char *s);

/**
 * Creates a detector from a serialized model and forests.
 *
 * `config_json` may be null for the default pipeline configuration. The
 * detector starts with an empty graph; feed history with
 * [`eh_pipeline_observe`].
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum EhStatus eh_pipeline_new(const char *model_json,
                              const char *forests_json,
                              const char *config_json,
                              struct EhPipeline **out);

/**
 * # Safety
 * `p` must be null or a handle from [`eh_pipeline_new`] not yet freed.
 */
void eh_pipeline_free(struct EhPipeline *p);

/**
 * Adds a history edge to the graph without scoring it.
 *
 * # Safety
 * `p` must be a live handle; strings must be NUL-terminated.
 */
enum EhStatus eh_pipeline_observe(struct EhPipeline *p,
                                  const char *source,
                                  const char *destination,
                                  int64_t timestamp);

/**
 * Inserts and scores one edge with an integer timestamp.
 *
 * # Safety
 * `p` must be a live handle; strings must be NUL-terminated; `out` writable.
 */
enum EhStatus eh_pipeline_process(struct EhPipeline *p,
                                  const char *source,
                                  const char *destination,
                                  int64_t timestamp,
                                  struct EhScore *out);

/**
 * Same as [`eh_pipeline_process`] with a real-valued timestamp.
 *
 * # Safety
 * See [`eh_pipeline_process`].
 */
enum EhStatus eh_pipeline_process_real(struct EhPipeline *p,
                                       const char *source,
                                       const char *destination,
                                       double timestamp,
                                       struct EhScore *out);

/**
 * Serializes the current forests (including any dynamic updates).
 * The returned string is released with [`eh_string_free`].
 *
 * # Safety
 * `p` must be a live handle; `out` writable.
 */
enum EhStatus eh_pipeline_forests_json(struct EhPipeline *p, char **out);

/**
 * Number of nodes in the detector's graph.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
uint64_t eh_pipeline_node_count(const struct EhPipeline *p);

/**
 * # Safety
 * `scores` and `labels` must each hold `n` elements; `out` writable.
 */
enum EhStatus eh_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * # Safety
 * `scores` and `labels` must each hold `n` elements; `out` writable.
 */
enum EhStatus eh_average_precision(const double *scores,
                                   const uint8_t *labels,
                                   size_t n,
                                   double *out);

/**
 * Fits the minimum weighted Gini threshold on labeled scores.
 *
 * # Safety
 * `scores` and `labels` must each hold `n` elements; `out` writable.
 */
enum EhStatus eh_fit_threshold(const double *scores,
                               const uint8_t *labels,
                               size_t n,
                               struct EhThreshold *out);

/**
 * Writes `score > tau` as 0/1 into `out_labels`.
 *
 * # Safety
 * `scores` and `out_labels` must each hold `n` elements.
 */
enum EhStatus eh_classify(const double *scores, size_t n, double tau, uint8_t *out_labels);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDGEHST_H */
