#ifndef GROKFORGE_H
#define GROKFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum GfStatus {
  GF_STATUS_OK = 0,
  GF_STATUS_NULL_POINTER = 1,
  GF_STATUS_INVALID_UTF8 = 2,
  GF_STATUS_INVALID_PARAMETER = 3,
  GF_STATUS_INVALID_FACT = 4,
  GF_STATUS_IO = 5,
  GF_STATUS_PARSE = 6,
  /**
   * The requested ratio has no atomic facts to divide by.
   */
  GF_STATUS_UNDEFINED = 7,
  /**
   * No node count satisfies the threshold at this branching factor.
   */
  GF_STATUS_INFEASIBLE = 8,
  /**
   * The search gave up at its cutoff.
   */
  GF_STATUS_NOT_FOUND = 9,
  GF_STATUS_PANIC = 10,
  GF_STATUS_INTERNAL = 11,
} GfStatus;

/**
 * Path-counting convention.
 */
typedef enum GfMode {
  GF_MODE_DIRECTED = 0,
  GF_MODE_UNDIRECTED = 1,
} GfMode;

/**
 * Opaque knowledge-graph handle.
 */
typedef struct GfGraph GfGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gf_last_error(void);

/**
 * Creates an empty graph. Release it with `gf_graph_free`.
 */
struct GfGraph *gf_graph_new(void);

/**
 * Loads a `head<TAB>relation<TAB>tail` file into a new graph.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GfStatus gf_graph_load_tsv(const char *path, struct GfGraph **out);

/**
 * # Safety
 * `graph` must come from `gf_graph_new` or `gf_graph_load_tsv` and must not
 * be used afterwards. Null is ignored.
 */
void gf_graph_free(struct GfGraph *graph);

/**
 * Adds one atomic fact. Duplicates are ignored.
 *
 * # Safety
 * `graph` must be a live handle; the labels must be NUL-terminated strings.
 */
enum GfStatus gf_graph_add_fact(struct GfGraph *graph,
                                const char *head,
                                const char *relation,
                                const char *tail);

/**
 * Number of entities, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be a live handle or null.
 */
size_t gf_graph_node_count(const struct GfGraph *graph);

/**
 * Number of distinct facts, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be a live handle or null.
 */
size_t gf_graph_edge_count(const struct GfGraph *graph);

/**
 * Global inferred/atomic ratio as an exact fraction. With `up_to` set, paths
 * of 2..=`hops` hops are counted; otherwise exactly `hops`.
 *
 * # Safety
 * `graph` must be a live handle; `num` and `den` must be writable.
 */
enum GfStatus gf_graph_phi(const struct GfGraph *graph,
                           size_t hops,
                           bool up_to,
                           enum GfMode mode,
                           uint64_t *num,
                           uint64_t *den);

/**
 * Full ratio report (global and per relation) as a JSON string. Release the
 * string with `gf_string_free`.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum GfStatus gf_graph_phi_json(const struct GfGraph *graph,
                                size_t hops,
                                bool up_to,
                                enum GfMode mode,
                                char **out);

/**
 * # Safety
 * `s` must be a string returned by this library, not yet freed, or null.
 */
void gf_string_free(char *s);

/**
 * Expected number of `hops`-hop paths in a random graph with `nodes`
 * entities and branching factor `b_num / b_den`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GfStatus gf_expected_path_count(uint64_t nodes,
                                     uint64_t b_num,
                                     uint64_t b_den,
                                     size_t hops,
                                     double *out);

/**
 * Expected inferred/atomic ratio for the same random-graph parameters.
 *
 * # Safety
 * `out` must be writable.
 */
enum GfStatus gf_expected_phi(uint64_t nodes,
                              uint64_t b_num,
                              uint64_t b_den,
                              size_t hops,
                              double *out);

/**
 * Upper bound on the ratio; `nodes == 0` means an unbounded graph.
 *
 * # Safety
 * `out` must be writable.
 */
enum GfStatus gf_phi_upper_bound(uint64_t nodes,
                                 uint64_t b_num,
                                 uint64_t b_den,
                                 size_t hops,
                                 double *out);

/**
 * Smallest node count whose ratio bound reaches `phi_g` for a relation with
 * branching factor `b_r`. Returns `Infeasible` when none exists and
 * `NotFound` when the search stops at `cutoff`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GfStatus gf_min_node_count(uint64_t phi_g_num,
                                uint64_t phi_g_den,
                                uint64_t b_num,
                                uint64_t b_den,
                                size_t hops,
                                uint64_t cutoff,
                                uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROKFORGE_H */
