#ifndef ISING_MOMENTS_H
#define ISING_MOMENTS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Values 2 to 5 match the command-line exit codes.
typedef enum IsmStatus {
  ISM_STATUS_OK = 0,
  ISM_STATUS_ERROR = 1,
  ISM_STATUS_SCHEMA = 2,
  ISM_STATUS_MISSING_MOMENT = 3,
  ISM_STATUS_INFEASIBLE = 4,
  ISM_STATUS_THEORY_UNCONFIRMED = 5,
  ISM_STATUS_NULL_POINTER = 6,
  ISM_STATUS_INVALID_UTF8 = 7,
  ISM_STATUS_PANIC = 8,
} IsmStatus;

// Opaque edge set handle.
typedef struct IsmEdgeSet IsmEdgeSet;

// Opaque coupling/field estimate handle.
typedef struct IsmEstimate IsmEstimate;

// Opaque model handle.
typedef struct IsmModel IsmModel;

// Opaque moment table handle.
typedef struct IsmMomentTable IsmMomentTable;

// Optimizer settings for the practical schedule. Negative or zero values
// select the library default for that field.
typedef struct IsmScheduleOptions {
  // Taylor degree; negative for the default.
  int32_t d;
  // Iteration count; 0 for the default.
  uint64_t iterations;
  // Step size; non-positive for the default.
  double eta;
  // Target error used to pick the default degree; non-positive for the default.
  double epsilon;
} IsmScheduleOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *ism_last_error(void);

// Library version as a static string.
const char *ism_version(void);

// # Safety
// `s` must be NULL or a string returned by this library.
void ism_string_free(char *s);

// Default options: every field selects the library default.
struct IsmScheduleOptions ism_schedule_options_default(void);

// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum IsmStatus ism_model_from_json(const char *json, struct IsmModel **out);

// Draws a model; `topology` is one of `er`, `regular`, `ring`, `grid`.
//
// # Safety
// `topology` must be a NUL-terminated string and `out` a valid pointer.
enum IsmStatus ism_model_generate(size_t p,
                                  const char *topology,
                                  double gamma,
                                  double alpha,
                                  uint64_t seed,
                                  struct IsmModel **out);

// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_model_to_json(const struct IsmModel *model, char **out);

// Number of spins, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t ism_model_p(const struct IsmModel *model);

// # Safety
// `model` must be NULL or a live handle; it is invalid afterwards.
void ism_model_free(struct IsmModel *model);

// Exact moments of `model` up to `degree` by enumeration.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_table_exact(const struct IsmModel *model,
                               size_t degree,
                               struct IsmMomentTable **out);

// Empirical moments up to `degree` from `n` exact samples of `model`.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_table_sampled(const struct IsmModel *model,
                                 size_t n,
                                 uint64_t seed,
                                 size_t degree,
                                 struct IsmMomentTable **out);

// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum IsmStatus ism_table_from_json(const char *json, struct IsmMomentTable **out);

// # Safety
// `table` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_table_to_json(const struct IsmMomentTable *table, char **out);

// Looks up the moment of the monomial over `indices[0..len]` (repeats reduce
// mod 2).
//
// # Safety
// `table` must be a live handle, `indices` valid for `len` reads (or NULL
// when `len` is 0), and `out` a valid pointer.
enum IsmStatus ism_table_query(const struct IsmMomentTable *table,
                               const size_t *indices,
                               size_t len,
                               double *out);

// # Safety
// `table` must be NULL or a live handle; it is invalid afterwards.
void ism_table_free(struct IsmMomentTable *table);

// Learns every node's couplings and first-stage field by moment-based
// screening with the practical schedule.
//
// # Safety
// `table` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_learn_couplings(const struct IsmMomentTable *table,
                                   double gamma,
                                   struct IsmScheduleOptions options,
                                   struct IsmEstimate **out);

// Re-fits fields on `edges` with couplings fixed, storing them in `estimate`.
//
// # Safety
// All handles must be live.
enum IsmStatus ism_learn_fields(struct IsmEstimate *estimate,
                                const struct IsmEdgeSet *edges,
                                const struct IsmMomentTable *table,
                                double gamma,
                                struct IsmScheduleOptions options);

// Learns all parameters on a known edge set. A non-positive `eta` selects
// `2 gamma / (L sqrt T)`.
//
// # Safety
// `table` and `edges` must be live handles and `out` a valid pointer.
enum IsmStatus ism_learn_known_structure(const struct IsmMomentTable *table,
                                         const struct IsmEdgeSet *edges,
                                         double gamma,
                                         uint64_t iterations,
                                         double eta,
                                         struct IsmEstimate **out);

// Symmetrized coupling estimate for the pair `(u, v)`.
//
// # Safety
// `estimate` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_estimate_coupling(const struct IsmEstimate *estimate,
                                     size_t u,
                                     size_t v,
                                     double *out);

// Best available field estimate for node `u` (second stage when present).
//
// # Safety
// `estimate` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_estimate_field(const struct IsmEstimate *estimate, size_t u, double *out);

// # Safety
// `estimate` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_estimate_to_json(const struct IsmEstimate *estimate, char **out);

// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum IsmStatus ism_estimate_from_json(const char *json, struct IsmEstimate **out);

// # Safety
// `estimate` must be NULL or a live handle; it is invalid afterwards.
void ism_estimate_free(struct IsmEstimate *estimate);

// Edges whose symmetrized coupling magnitude exceeds `alpha / 2`.
//
// # Safety
// `estimate` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_threshold_edges(const struct IsmEstimate *estimate,
                                   double alpha,
                                   struct IsmEdgeSet **out);

// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum IsmStatus ism_edges_from_json(const char *json, struct IsmEdgeSet **out);

// # Safety
// `edges` must be a live handle and `out` a valid pointer.
enum IsmStatus ism_edges_to_json(const struct IsmEdgeSet *edges, char **out);

// Number of edges, or 0 for NULL.
//
// # Safety
// `edges` must be NULL or a live handle.
size_t ism_edges_len(const struct IsmEdgeSet *edges);

// The `index`-th edge in ascending `(u, v)` order, with `u < v`.
//
// # Safety
// `edges` must be a live handle and `u`, `v` valid pointers.
enum IsmStatus ism_edges_get(const struct IsmEdgeSet *edges, size_t index, size_t *u, size_t *v);

// # Safety
// `edges` must be NULL or a live handle; it is invalid afterwards.
void ism_edges_free(struct IsmEdgeSet *edges);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISING_MOMENTS_H */
