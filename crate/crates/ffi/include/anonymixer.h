/* C interface for the anonymixer cluster-preserving anonymization toolkit.
 * Generated by cbindgen from crates/ffi; do not edit by hand. */

#ifndef ANONYMIXER_H
#define ANONYMIXER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. The first four values match the CLI's
 * process exit codes.
 */
typedef enum AnxStatus {
  /**
   * Success.
   */
  AnxStatus_Ok = 0,
  /**
   * Invalid arguments or an unreadable/unwritable file.
   */
  AnxStatus_Usage = 1,
  /**
   * Malformed data or a violated call contract.
   */
  AnxStatus_Data = 2,
  /**
   * Numeric breakdown (undefined metric, divergence, non-finite values).
   */
  AnxStatus_Numeric = 3,
  /**
   * A required pointer argument was null.
   */
  AnxStatus_NullPointer = 4,
  /**
   * A string argument was not valid UTF-8.
   */
  AnxStatus_InvalidUtf8 = 5,
  /**
   * An internal invariant failed; the library state is still consistent.
   */
  AnxStatus_Panic = 6,
} AnxStatus;

/**
 * Opaque dataset handle.
 */
typedef struct AnxDataset AnxDataset;

/**
 * Opaque cluster-assignment handle.
 */
typedef struct AnxLabels AnxLabels;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Human-readable description of the most recent failure on this thread.
 * Never null; empty before the first failure. Valid until the next failing
 * call on the same thread — do not free.
 */
const char *anx_last_error(void);

/**
 * Library version as a static string — do not free.
 */
const char *anx_version(void);

/**
 * Free a string returned by this library through an out-pointer.
 * Passing null is a no-op.
 *
 * # Safety
 * `s` must be null or a pointer previously returned by this library and not
 * yet freed.
 */
void anx_string_free(char *s);

/**
 * Load a CSV against a JSON schema (`{"columns":[{"name":...,"kind":...}]}`
 * with kinds `continuous`, `quasi_identifier`, `discrete_label`) into a new
 * dataset handle.
 *
 * # Safety
 * `path` and `schema_json` must be valid nul-terminated strings; `out` must
 * point to writable storage for one pointer.
 */
enum AnxStatus anx_dataset_load_csv(const char *path,
                                    const char *schema_json,
                                    struct AnxDataset **out);

/**
 * Generate seeded toy telemetry: `n` rows from `k` unit-variance Gaussian
 * blobs in `m` dimensions with pairwise centroid distance `separation`.
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
enum AnxStatus anx_dataset_toy(uint64_t seed,
                               uintptr_t n,
                               uintptr_t k,
                               uintptr_t m,
                               double separation,
                               struct AnxDataset **out);

/**
 * Row count of a dataset.
 *
 * # Safety
 * `dataset` must be a live dataset handle; `out` must be writable.
 */
enum AnxStatus anx_dataset_n_rows(const struct AnxDataset *dataset, uintptr_t *out);

/**
 * Continuous-feature count of a dataset.
 *
 * # Safety
 * `dataset` must be a live dataset handle; `out` must be writable.
 */
enum AnxStatus anx_dataset_n_features(const struct AnxDataset *dataset, uintptr_t *out);

/**
 * Free a dataset handle. Passing null is a no-op.
 *
 * # Safety
 * `dataset` must be null or a live dataset handle; it is invalid afterwards.
 */
void anx_dataset_free(struct AnxDataset *dataset);

/**
 * Cluster with K-means (k-means++ seeding, Lloyd iterations).
 *
 * # Safety
 * `dataset` must be a live dataset handle; `out` must be writable.
 */
enum AnxStatus anx_kmeans(const struct AnxDataset *dataset,
                          uintptr_t k,
                          uint64_t seed,
                          struct AnxLabels **out);

/**
 * Cluster with DBSCAN; rows labeled `-1` are noise.
 *
 * # Safety
 * `dataset` must be a live dataset handle; `out` must be writable.
 */
enum AnxStatus anx_dbscan(const struct AnxDataset *dataset,
                          double eps,
                          uintptr_t min_pts,
                          struct AnxLabels **out);

/**
 * Fit a diagonal-covariance Gaussian hidden Markov model and decode each
 * row's most likely state as its cluster label.
 *
 * # Safety
 * `dataset` must be a live dataset handle; `out` must be writable.
 */
enum AnxStatus anx_ghmm(const struct AnxDataset *dataset,
                        uintptr_t states,
                        uint64_t seed,
                        struct AnxLabels **out);

/**
 * Cluster with agglomerative (Ward) clustering cut at `k` clusters.
 *
 * # Safety
 * `dataset` must be a live dataset handle; `out` must be writable.
 */
enum AnxStatus anx_agglomerative(const struct AnxDataset *dataset,
                                 uintptr_t k,
                                 struct AnxLabels **out);

/**
 * Row count covered by a cluster assignment.
 *
 * # Safety
 * `labels` must be a live labels handle; `out` must be writable.
 */
enum AnxStatus anx_labels_len(const struct AnxLabels *labels, uintptr_t *out);

/**
 * Number of clusters (noise rows excluded).
 *
 * # Safety
 * `labels` must be a live labels handle; `out` must be writable.
 */
enum AnxStatus anx_labels_n_clusters(const struct AnxLabels *labels, uintptr_t *out);

/**
 * Copy all row labels into `buffer`, which must hold exactly
 * `anx_labels_len` entries. Noise rows are `-1`.
 *
 * # Safety
 * `labels` must be a live labels handle; `buffer` must point to writable
 * storage for `buffer_len` values.
 */
enum AnxStatus anx_labels_copy(const struct AnxLabels *labels,
                               int64_t *buffer,
                               uintptr_t buffer_len);

/**
 * Free a labels handle. Passing null is a no-op.
 *
 * # Safety
 * `labels` must be null or a live labels handle; it is invalid afterwards.
 */
void anx_labels_free(struct AnxLabels *labels);

/**
 * Compute the three cluster-validation scores of an assignment on a dataset.
 *
 * # Safety
 * `dataset` and `labels` must be live handles; the three score pointers
 * must be writable.
 */
enum AnxStatus anx_scores(const struct AnxDataset *dataset,
                          const struct AnxLabels *labels,
                          double *silhouette,
                          double *calinski_harabasz,
                          double *davies_bouldin);

/**
 * Run the full anonymization pipeline from a config file, emitting all
 * artifacts into `out_dir`. On success `report_json` receives the report
 * as a JSON string (free with `anx_string_free`); pass null to skip it.
 *
 * # Safety
 * `config_path` and `out_dir` must be valid nul-terminated strings;
 * `report_json` must be null or writable.
 */
enum AnxStatus anx_run_pipeline(const char *config_path, const char *out_dir, char **report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANONYMIXER_H */
