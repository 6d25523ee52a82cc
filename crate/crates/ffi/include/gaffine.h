#ifndef GAFFINE_H
#define GAFFINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GaffineStatus {
  GAFFINE_STATUS_OK = 0,
  GAFFINE_STATUS_NULL_POINTER = 1,
  GAFFINE_STATUS_INVALID_ARGUMENT = 2,
  GAFFINE_STATUS_IO = 3,
  GAFFINE_STATUS_FORMAT = 4,
  GAFFINE_STATUS_IMAGE_TOO_SMALL = 5,
  GAFFINE_STATUS_CONFIG = 6,
  GAFFINE_STATUS_OUT_OF_RANGE = 7,
  GAFFINE_STATUS_PANIC = 8,
} GaffineStatus;

/**
 * Detector configuration handle.
 */
typedef struct GaffineConfig GaffineConfig;

/**
 * Detected feature list handle.
 */
typedef struct GaffineFeatures GaffineFeatures;

/**
 * Grayscale image handle.
 */
typedef struct GaffineImage GaffineImage;

/**
 * Parameters of a synthetic Gaussian blob.
 */
typedef struct GaffineSignalSpec {
  double cx;
  double cy;
  double alpha;
  double beta;
  double theta;
  double c;
  double d;
} GaffineSignalSpec;

/**
 * One detected feature, copied out of a [`GaffineFeatures`] list.
 *
 * `(sm_x, sm_y, sm_z)` is the symmetric shape matrix `[[sm_x, sm_y], [sm_y, sm_z]]`.
 */
typedef struct GaffineFeature {
  double x;
  double y;
  double sigma;
  double alpha;
  double beta;
  double theta;
  double c;
  double d;
  double dog_value;
  double sm_x;
  double sm_y;
  double sm_z;
} GaffineFeature;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if the last call succeeded.
 *
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *gaffine_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gaffine_version(void);

/**
 * Creates an image from `width * height` row-major gray values.
 *
 * # Safety
 * `pixels` must point to `width * height` readable doubles; `out` must be writable.
 */
enum GaffineStatus gaffine_image_new(size_t width,
                                     size_t height,
                                     const double *pixels,
                                     struct GaffineImage **out);

/**
 * Loads a binary PGM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GaffineStatus gaffine_image_load_pgm(const char *path, struct GaffineImage **out);

/**
 * Renders one synthetic Gaussian blob, quantized to integer gray levels.
 *
 * # Safety
 * `spec` must point to a valid spec; `out` must be writable.
 */
enum GaffineStatus gaffine_image_render(const struct GaffineSignalSpec *spec,
                                        size_t width,
                                        size_t height,
                                        struct GaffineImage **out);

/**
 * Width of an image, or 0 for a null handle.
 *
 * # Safety
 * `img` must be null or a live handle.
 */
size_t gaffine_image_width(const struct GaffineImage *img);

/**
 * Height of an image, or 0 for a null handle.
 *
 * # Safety
 * `img` must be null or a live handle.
 */
size_t gaffine_image_height(const struct GaffineImage *img);

/**
 * Pointer to the row-major pixel data, valid while the handle lives.
 *
 * # Safety
 * `img` must be null or a live handle.
 */
const double *gaffine_image_pixels(const struct GaffineImage *img);

/**
 * Releases an image. Null is ignored.
 *
 * # Safety
 * `img` must be null or a handle not yet freed.
 */
void gaffine_image_free(struct GaffineImage *img);

/**
 * Creates a configuration with default settings.
 */
struct GaffineConfig *gaffine_config_new(void);

/**
 * Sets one option by name, e.g. `("r_max", "100")`.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum GaffineStatus gaffine_config_set(struct GaffineConfig *cfg,
                                      const char *key,
                                      const char *value);

/**
 * Applies a `key = value` configuration file on top of the current settings.
 *
 * On error the configuration is left unchanged.
 *
 * # Safety
 * `cfg` must be a live handle; `path` a NUL-terminated string.
 */
enum GaffineStatus gaffine_config_load(struct GaffineConfig *cfg, const char *path);

/**
 * Releases a configuration. Null is ignored.
 *
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void gaffine_config_free(struct GaffineConfig *cfg);

/**
 * Runs the detector. A null `cfg` uses the default settings.
 *
 * # Safety
 * `img` must be a live handle, `cfg` null or a live handle, `out` writable.
 */
enum GaffineStatus gaffine_detect(const struct GaffineImage *img,
                                  const struct GaffineConfig *cfg,
                                  struct GaffineFeatures **out);

/**
 * Number of features in a list, or 0 for a null handle.
 *
 * # Safety
 * `feats` must be null or a live handle.
 */
size_t gaffine_features_len(const struct GaffineFeatures *feats);

/**
 * Copies feature `index` into `out`.
 *
 * # Safety
 * `feats` must be a live handle and `out` writable.
 */
enum GaffineStatus gaffine_features_get(const struct GaffineFeatures *feats,
                                        size_t index,
                                        struct GaffineFeature *out);

/**
 * Writes the list in the text feature-file format.
 *
 * # Safety
 * `feats` must be a live handle; `path` a NUL-terminated string.
 */
enum GaffineStatus gaffine_features_write(const struct GaffineFeatures *feats, const char *path);

/**
 * Releases a feature list. Null is ignored.
 *
 * # Safety
 * `feats` must be null or a handle not yet freed.
 */
void gaffine_features_free(struct GaffineFeatures *feats);

/**
 * `H = (α/σ)²` from the Hessian eigen ratio `r ≥ 1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GaffineStatus gaffine_solve_h(double r, double *out);

/**
 * `K = (β/α)²` from the eigen ratio and `H`.
 */
double gaffine_solve_k(double r, double h_sq);

/**
 * Aspect ratio admitted by an eigen-ratio threshold.
 */
double gaffine_k_from_r(double r);

/**
 * Eigen-ratio threshold that admits aspect ratio `k`.
 */
double gaffine_r_from_k(double k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAFFINE_H */
