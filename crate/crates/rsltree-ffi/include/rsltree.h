#ifndef RSLTREE_H
#define RSLTREE_H

/* Generated by cbindgen from rsltree-ffi; regenerate with `cbindgen --config cbindgen.toml --crate rsltree-ffi --output include/rsltree.h`. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum RslStatus {
  RSL_OK = 0,
  RSL_NULL_POINTER = 1,
  RSL_INVALID_ARGUMENT = 2,
  RSL_REGIME_VIOLATION = 3,
  RSL_NUMERIC_FAILURE = 4,
  RSL_IO_ERROR = 5,
  RSL_UTF8_ERROR = 6,
  RSL_PANIC = 7,
} RslStatus;

/**
 * Connection rule selector for the sweep entry points.
 */
typedef enum RslRule {
  /**
   * Fixed connection radius R (`value` = R).
   */
  RSL_RULE_FIXED = 0,
  /**
   * Proportional rule R = value * r.
   */
  RSL_RULE_PROPORTIONAL = 1,
} RslRule;

/**
 * Regime selector matching the parameter calculators.
 */
typedef enum RslRegime {
  RSL_REGIME_NOISELESS = 0,
  RSL_REGIME_CLUTTER = 1,
  RSL_REGIME_ADDITIVE = 2,
  RSL_REGIME_KDE = 3,
} RslRegime;

/**
 * Opaque dendrogram handle.
 */
typedef struct RslDendrogram RslDendrogram;

/**
 * Opaque point-cloud handle.
 */
typedef struct RslPointCloud RslPointCloud;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or NULL.
 * The pointer stays valid until the next failing `rsl_*` call here.
 */
const char *rsl_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *rsl_version(void);

/**
 * Creates a point cloud from a row-major `n x dim` coordinate buffer.
 *
 * # Safety
 * `coords` must point to `n * dim` doubles and `out` must be valid.
 */
enum RslStatus rsl_pointcloud_create(const double *coords,
                                     size_t n,
                                     size_t dim,
                                     struct RslPointCloud **out);

/**
 * Frees a point cloud created by this library. NULL is ignored.
 *
 * # Safety
 * `p` must come from `rsl_pointcloud_create` and not be freed twice.
 */
void rsl_pointcloud_free(struct RslPointCloud *p);

/**
 * Number of points; 0 for NULL.
 *
 * # Safety
 * `p` must be a live handle or NULL.
 */
size_t rsl_pointcloud_len(const struct RslPointCloud *p);

/**
 * Ambient dimension; 0 for NULL.
 *
 * # Safety
 * `p` must be a live handle or NULL.
 */
size_t rsl_pointcloud_dim(const struct RslPointCloud *p);

/**
 * Writes each point's k-NN radius (the point itself counts first) into
 * `out_radii`, an array of length `rsl_pointcloud_len(p)`.
 *
 * # Safety
 * Buffers must match the documented lengths.
 */
enum RslStatus rsl_knn_radius(const struct RslPointCloud *p, size_t k, double *out_radii);

/**
 * Runs the sweep and returns a dendrogram handle.
 *
 * # Safety
 * `p` must be a live handle; `out` must be valid.
 */
enum RslStatus rsl_sweep(const struct RslPointCloud *p,
                         size_t k,
                         enum RslRule rule,
                         double rule_value,
                         struct RslDendrogram **out);

/**
 * Runs the spatially adaptive sweep against a known round sphere centered
 * at the origin and spanned by the leading axes.
 *
 * # Safety
 * `p` must be a live handle; `out` must be valid.
 */
enum RslStatus rsl_adaptive_sweep_sphere(const struct RslPointCloud *p,
                                         size_t k,
                                         enum RslRule rule,
                                         double rule_value,
                                         size_t sphere_d,
                                         double sphere_tau,
                                         struct RslDendrogram **out);

/**
 * Frees a dendrogram handle. NULL is ignored.
 *
 * # Safety
 * `d` must come from a sweep call and not be freed twice.
 */
void rsl_dendrogram_free(struct RslDendrogram *d);

/**
 * Number of points covered by the dendrogram; 0 for NULL.
 *
 * # Safety
 * `d` must be a live handle or NULL.
 */
size_t rsl_dendrogram_len(const struct RslDendrogram *d);

/**
 * Number of merge events; 0 for NULL.
 *
 * # Safety
 * `d` must be a live handle or NULL.
 */
size_t rsl_dendrogram_merge_count(const struct RslDendrogram *d);

/**
 * Copies the per-point activation radii into `out`, length
 * `rsl_dendrogram_len(d)`. Points that never activate report infinity.
 *
 * # Safety
 * Buffers must match the documented lengths.
 */
enum RslStatus rsl_dendrogram_activation(const struct RslDendrogram *d, double *out);

/**
 * Copies the ordered merge list into three parallel arrays of length
 * `rsl_dendrogram_merge_count(d)`: event radius and the two component
 * labels (minimum member index of each side).
 *
 * # Safety
 * Buffers must match the documented lengths.
 */
enum RslStatus rsl_dendrogram_merges(const struct RslDendrogram *d,
                                     double *out_radii,
                                     uint64_t *out_comp_a,
                                     uint64_t *out_comp_b);

/**
 * Component labels at sweep value `r`: for each point, the minimum member
 * index of its component, or -1 if the point is not yet active. `out` has
 * length `rsl_dendrogram_len(d)`.
 *
 * # Safety
 * Buffers must match the documented lengths.
 */
enum RslStatus rsl_components_at(const struct RslDendrogram *d, double r, int64_t *out_labels);

/**
 * Writes the dendrogram in the text interchange format.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string.
 */
enum RslStatus rsl_dendrogram_write(const struct RslDendrogram *d, const char *path);

/**
 * Reads a dendrogram from the text interchange format.
 *
 * # Safety
 * `path` must be NUL-terminated UTF-8; `out` must be valid.
 */
enum RslStatus rsl_dendrogram_read(const char *path, struct RslDendrogram **out);

/**
 * Volume of the d-dimensional unit ball.
 *
 * # Safety
 * `out` must be valid.
 */
enum RslStatus rsl_unit_ball_volume(size_t d, double *out);

/**
 * Exact spherical-cap volume for chord radius `r` on a d-sphere of radius
 * `tau` (0 <= r <= 2 tau).
 *
 * # Safety
 * `out` must be valid.
 */
enum RslStatus rsl_cap_volume_exact(size_t d, double tau, double r, double *out);

/**
 * Small-cap series volume (regime `r / tau <= 0.25`).
 *
 * # Safety
 * `out` must be valid.
 */
enum RslStatus rsl_cap_volume_series(size_t d, double tau, double r, double *out);

/**
 * Two-sided manifold ball-volume bounds for `0 < r < tau / 2`; the upper
 * bound degenerates to infinity for `r >= 3 tau / 8`.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum RslStatus rsl_ball_volume_bounds(size_t d,
                                      double tau,
                                      double r,
                                      double *out_lower,
                                      double *out_upper,
                                      double *out_r1);

/**
 * Salience radius and the branch attaining it (0 sigma, 1 epsilon-tau,
 * 2 tau).
 *
 * # Safety
 * Output pointers must be valid.
 */
enum RslStatus rsl_rho(enum RslRegime regime,
                       double pi,
                       double sigma,
                       double epsilon,
                       double lambda,
                       double tau,
                       size_t d,
                       double delta,
                       double c0,
                       double *out_rho,
                       int *out_branch);

/**
 * Cleaning count and read-out radius from the parameter calculators;
 * `out_feasible` reports `r <= rho`.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum RslStatus rsl_choose_parameters(enum RslRegime regime,
                                     double pi,
                                     double sigma,
                                     double epsilon,
                                     double lambda,
                                     double tau,
                                     size_t d,
                                     double delta,
                                     double c0,
                                     uint64_t n,
                                     uint64_t *out_k,
                                     double *out_r,
                                     bool *out_feasible);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSLTREE_H */
