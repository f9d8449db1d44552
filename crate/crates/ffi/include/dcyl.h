#ifndef DCYL_H
#define DCYL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DcylStatus {
  DCYL_STATUS_OK = 0,
  DCYL_STATUS_NULL_POINTER = 1,
  DCYL_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The operation needs a transient lattice (dimension >= 3).
   */
  DCYL_STATUS_RECURRENT = 3,
  /**
   * A solver or estimator did not reach its tolerance.
   */
  DCYL_STATUS_NUMERICAL = 4,
  DCYL_STATUS_IO = 5,
  DCYL_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  DCYL_STATUS_INTERNAL = 7,
} DcylStatus;

/**
 * A cylinder T × Z or a lattice Z^d.
 */
typedef struct DcylGeometry DcylGeometry;

/**
 * A seeded simple random walk.
 */
typedef struct DcylWalk DcylWalk;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dcyl_version(void);

/**
 * Length in bytes of the last error message on this thread, without the
 * terminating NUL; 0 when there is none.
 */
size_t dcyl_last_error_length(void);

/**
 * Copies the last error message (NUL-terminated) into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` bytes of writes.
 */
enum DcylStatus dcyl_last_error_message(char *buf, size_t len);

/**
 * The cylinder (Z/NZ)^d × Z.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DcylStatus dcyl_geometry_cylinder(size_t d, uint32_t n, struct DcylGeometry **out);

/**
 * The lattice Z^dim.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DcylStatus dcyl_geometry_lattice(size_t dim, struct DcylGeometry **out);

/**
 * Number of coordinates of a point (d + 1 on the cylinder).
 *
 * # Safety
 * `g` must be a live handle and `out` valid for writes.
 */
enum DcylStatus dcyl_geometry_dim(const struct DcylGeometry *g, size_t *out);

/**
 * # Safety
 * `g` must be null or a handle not yet freed.
 */
void dcyl_geometry_free(struct DcylGeometry *g);

/**
 * A walk from the origin.
 *
 * # Safety
 * `g` must be a live handle and `out` valid for writes.
 */
enum DcylStatus dcyl_walk_new(const struct DcylGeometry *g, uint64_t seed, struct DcylWalk **out);

/**
 * Advances the walk by `steps` steps.
 *
 * # Safety
 * `w` must be a live handle.
 */
enum DcylStatus dcyl_walk_advance(struct DcylWalk *w, uint64_t steps);

/**
 * Copies the current position into `buf`, which must hold the geometry's
 * dimension.
 *
 * # Safety
 * `w` must be a live handle and `buf` valid for `len` writes.
 */
enum DcylStatus dcyl_walk_position(const struct DcylWalk *w, int64_t *buf, size_t len);

/**
 * Steps taken so far.
 *
 * # Safety
 * `w` must be a live handle and `out` valid for writes.
 */
enum DcylStatus dcyl_walk_time(const struct DcylWalk *w, uint64_t *out);

/**
 * # Safety
 * `w` must be null or a handle not yet freed.
 */
void dcyl_walk_free(struct DcylWalk *w);

/**
 * Disconnection time of a fresh walk from the origin. When the budget runs
 * out first, `*censored` is set and `*time` holds the budget, a lower bound.
 *
 * # Safety
 * `g` must be a live handle; `time` and `censored` valid for writes.
 */
enum DcylStatus dcyl_disconnection_time(const struct DcylGeometry *g,
                                        uint64_t seed,
                                        uint64_t budget,
                                        uint64_t *time,
                                        bool *censored);

/**
 * Capacity of the finite set given as `count` points of `dim` coordinates
 * (row-major), computed on a box of the given margin with far-field
 * correction.
 *
 * # Safety
 * `points` must be valid for `count·dim` reads and `out` for writes.
 */
enum DcylStatus dcyl_capacity(size_t dim,
                              const int64_t *points,
                              size_t count,
                              uint64_t margin,
                              double *out);

/**
 * E[exp(−θ²ζ(u)/2)].
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DcylStatus dcyl_zeta_laplace(double theta, double u, double *out);

/**
 * W[ζ(u) ≥ s] and its inversion error estimate.
 *
 * # Safety
 * `tail` and `err` must be valid for writes.
 */
enum DcylStatus dcyl_zeta_tail(double s, double u, double *tail, double *err);

/**
 * Largest deviation of the Green sum of the excursion box from its
 * constant, on the cylinder of side n at the default scales.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DcylStatus dcyl_green_sum_residual(size_t d, uint32_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCYL_H */
