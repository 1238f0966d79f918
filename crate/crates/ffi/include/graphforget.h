#ifndef GRAPHFORGET_H
#define GRAPHFORGET_H

/* Generated by cbindgen; do not edit. */

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
  GF_STATUS_CONFIG = 3,
  GF_STATUS_MISSING_ARTIFACT = 4,
  GF_STATUS_NUMERIC = 5,
  GF_STATUS_IO = 6,
  GF_STATUS_BUFFER_TOO_SMALL = 7,
  GF_STATUS_PANIC = 8,
  GF_STATUS_OTHER = 9,
} GfStatus;

/**
 * Benchmark cases built from a world.
 */
typedef struct GfBenchmark GfBenchmark;

/**
 * A model checkpoint.
 */
typedef struct GfModel GfModel;

/**
 * A generated or loaded knowledge graph.
 */
typedef struct GfWorld GfWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message into `buf` (NUL-terminated). Returns the
 * message length excluding the NUL, 0 when there is none, or -1 if `buf`
 * is too small.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null with `len` 0.
 */
int gf_last_error_message(char *buf, size_t len);

/**
 * Generate the default world with `seed`.
 *
 * # Safety
 * `out` must be a valid pointer; the handle is released with [`gf_world_free`].
 */
enum GfStatus gf_world_generate(uint64_t seed, struct GfWorld **out);

/**
 * Load a world from a directory holding `triples.tsv` and `schema.tsv`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GfStatus gf_world_load(const char *dir, struct GfWorld **out);

/**
 * Write `triples.tsv` and `schema.tsv` into `dir`.
 *
 * # Safety
 * `world` must be a live handle and `dir` a NUL-terminated string.
 */
enum GfStatus gf_world_dump(const struct GfWorld *world, const char *dir);

/**
 * # Safety
 * `world` must be a live handle or null.
 */
size_t gf_world_num_entities(const struct GfWorld *world);

/**
 * # Safety
 * `world` must be a live handle or null.
 */
size_t gf_world_num_triples(const struct GfWorld *world);

/**
 * Undirected hop distance between two entities by label; -1 when disconnected.
 *
 * # Safety
 * `world` must be a live handle, labels NUL-terminated strings, `out` valid.
 */
enum GfStatus gf_world_geodesic(const struct GfWorld *world,
                                const char *a,
                                const char *b,
                                int64_t *out);

/**
 * # Safety
 * `world` must come from this library and not be used afterwards.
 */
void gf_world_free(struct GfWorld *world);

/**
 * Build `n_targets` benchmark cases from `world`.
 *
 * # Safety
 * `world` must be a live handle and `out` a valid pointer.
 */
enum GfStatus gf_bench_build(const struct GfWorld *world,
                             size_t n_targets,
                             uint64_t seed,
                             struct GfBenchmark **out);

/**
 * # Safety
 * `bench` must be a live handle or null.
 */
size_t gf_bench_num_cases(const struct GfBenchmark *bench);

/**
 * # Safety
 * `bench` must be a live handle or null.
 */
size_t gf_bench_num_probes(const struct GfBenchmark *bench);

/**
 * Write the probe dataset (line-delimited JSON plus case sidecar) to `path`.
 *
 * # Safety
 * `bench` must be a live handle and `path` a NUL-terminated string.
 */
enum GfStatus gf_bench_write(const struct GfBenchmark *bench, const char *path);

/**
 * # Safety
 * `bench` must come from this library and not be used afterwards.
 */
void gf_bench_free(struct GfBenchmark *bench);

/**
 * Load a binary model checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GfStatus gf_model_load(const char *path, struct GfModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum GfStatus gf_model_save(const struct GfModel *model, const char *path);

/**
 * Write the checkpoint's content hash (hex, NUL-terminated) into `buf`.
 *
 * # Safety
 * `model` must be a live handle and `buf` point to `len` writable bytes.
 */
enum GfStatus gf_model_hash(const struct GfModel *model, char *buf, size_t len);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void gf_model_free(struct GfModel *model);

/**
 * ROUGE-L recall of `hypothesis` against `reference`.
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` valid.
 */
enum GfStatus gf_rouge_l_recall(const char *hypothesis, const char *reference, double *out);

/**
 * ROC-AUC that a forget score falls below a retain score, ties counting half.
 *
 * # Safety
 * `forget` and `retain` must point to `n_forget` and `n_retain` doubles.
 */
enum GfStatus gf_roc_auc(const double *forget,
                         size_t n_forget,
                         const double *retain,
                         size_t n_retain,
                         double *out);

/**
 * Run the command-line interface with `argv[0..argc]`; returns its exit code.
 *
 * # Safety
 * `argv` must hold `argc` NUL-terminated strings.
 */
int gf_run_cli(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPHFORGET_H */
