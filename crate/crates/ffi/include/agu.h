#ifndef AGU_H
#define AGU_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AguStatus {
  AGU_STATUS_OK = 0,
  AGU_STATUS_NULL_ARGUMENT = 1,
  AGU_STATUS_INVALID_ARGUMENT = 2,
  AGU_STATUS_IO = 3,
  AGU_STATUS_PARSE = 4,
  AGU_STATUS_REFERENCE = 5,
  AGU_STATUS_CONFIG = 6,
  AGU_STATUS_DIVERGED = 7,
  AGU_STATUS_CHECKPOINT = 8,
  AGU_STATUS_INTERNAL = 9,
} AguStatus;

typedef enum AguRequestKind {
  AGU_REQUEST_KIND_NODE = 0,
  AGU_REQUEST_KIND_EDGE = 1,
  AGU_REQUEST_KIND_FEATURE = 2,
} AguRequestKind;

typedef enum AguArch {
  AGU_ARCH_GCN = 0,
  AGU_ARCH_SGC = 1,
  AGU_ARCH_GAT = 2,
  AGU_ARCH_GIN = 3,
  AGU_ARCH_SAGE = 4,
} AguArch;

typedef struct AguGraph AguGraph;

typedef struct AguModel AguModel;

typedef struct AguRequest AguRequest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *agu_last_error(void);

/**
 * Loads `graph.tsv` and optionally `masks.tsv` (`masks_path` may be null).
 *
 * # Safety
 * Paths must be null or NUL-terminated; `out` must be writable.
 */
enum AguStatus agu_graph_load(const char *graph_path,
                              const char *masks_path,
                              struct AguGraph **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum AguStatus agu_graph_generate_sbm(size_t n,
                                      size_t blocks,
                                      double p_in,
                                      double p_out,
                                      size_t d,
                                      double s,
                                      uint64_t seed,
                                      struct AguGraph **out);

/**
 * Node count, or 0 for a null graph.
 *
 * # Safety
 * `g` must be null or a live graph.
 */
size_t agu_graph_num_nodes(const struct AguGraph *g);

/**
 * # Safety
 * `g` must be null or a live graph.
 */
size_t agu_graph_num_edges(const struct AguGraph *g);

/**
 * # Safety
 * `g` must be null or a graph not yet freed.
 */
void agu_graph_free(struct AguGraph *g);

/**
 * Reads a request file, checking node ids against `g`.
 *
 * # Safety
 * Arguments must be live objects or NUL-terminated strings.
 */
enum AguStatus agu_request_load(const char *request_path,
                                const struct AguGraph *g,
                                struct AguRequest **out);

/**
 * Uniform sample of `ratio` of the train nodes (node, feature) or edges.
 *
 * # Safety
 * `g` must be a live graph; `out` must be writable.
 */
enum AguStatus agu_request_sample(const struct AguGraph *g,
                                  enum AguRequestKind kind,
                                  double ratio,
                                  uint64_t seed,
                                  struct AguRequest **out);

/**
 * Number of elements in the request, or 0 for null.
 *
 * # Safety
 * `r` must be null or a live request.
 */
size_t agu_request_len(const struct AguRequest *r);

/**
 * # Safety
 * `r` must be null or a request not yet freed.
 */
void agu_request_free(struct AguRequest *r);

/**
 * Trains a fresh model with default optimizer settings.
 *
 * # Safety
 * `g` must be a live graph; `out` must be writable.
 */
enum AguStatus agu_model_train(const struct AguGraph *g,
                               enum AguArch arch,
                               size_t layers,
                               size_t hidden,
                               size_t epochs,
                               uint64_t seed,
                               struct AguModel **out);

/**
 * # Safety
 * `m` must be a live model; `model_path` NUL-terminated.
 */
enum AguStatus agu_model_save(const struct AguModel *m, const char *model_path);

/**
 * # Safety
 * `model_path` NUL-terminated; `out` must be writable.
 */
enum AguStatus agu_model_load(const char *model_path, struct AguModel **out);

/**
 * Writes one predicted class per node into `labels`, which must hold
 * exactly `len == num_nodes` entries.
 *
 * # Safety
 * `labels` must point to `len` writable `u32`s.
 */
enum AguStatus agu_model_predict(const struct AguModel *m,
                                 const struct AguGraph *g,
                                 uint32_t *labels,
                                 size_t len);

/**
 * Micro-F1 on the graph's test mask.
 *
 * # Safety
 * Arguments must be live objects; `out` writable.
 */
enum AguStatus agu_model_test_f1(const struct AguModel *m, const struct AguGraph *g, double *out);

/**
 * # Safety
 * `m` must be null or a model not yet freed.
 */
void agu_model_free(struct AguModel *m);

/**
 * Unlearns `r` from `m` (trained on `g`) with default settings and the
 * given epoch count; the input model is left untouched.
 *
 * # Safety
 * Arguments must be live objects; `out` writable.
 */
enum AguStatus agu_unlearn(const struct AguModel *m,
                           const struct AguGraph *g,
                           const struct AguRequest *r,
                           size_t epochs,
                           uint64_t seed,
                           struct AguModel **out);

/**
 * Neighbor report as a JSON string; release it with [`agu_string_free`].
 *
 * # Safety
 * Arguments must be live objects; `out` writable.
 */
enum AguStatus agu_neighbors_json(const struct AguModel *m,
                                  const struct AguGraph *g,
                                  const struct AguRequest *r,
                                  uint64_t seed,
                                  char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void agu_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGU_H */
