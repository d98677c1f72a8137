#ifndef OADX_H
#define OADX_H

/* Generated by cbindgen from oadx-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum OadxStatus {
  OADX_STATUS_OK = 0,
  OADX_STATUS_NULL_POINTER = 1,
  OADX_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A numeric contract has no defined result (e.g. empty-mask boundary
   * distance).
   */
  OADX_STATUS_UNDEFINED = 3,
  OADX_STATUS_IO = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  OADX_STATUS_PANIC = 5,
} OadxStatus;

/**
 * Transducer array selector.
 */
typedef enum OadxArrayKind {
  OADX_ARRAY_KIND_SEMI_CIRCLE = 0,
  OADX_ARRAY_KIND_MULTISEGMENT = 1,
  OADX_ARRAY_KIND_LINEAR = 2,
  OADX_ARRAY_KIND_VIRTUAL_CIRCLE = 3,
} OadxArrayKind;

/**
 * Reconstruction mode selector.
 */
typedef enum OadxReconMode {
  OADX_RECON_MODE_DELAY_SUM = 0,
  OADX_RECON_MODE_DERIVATIVE_BP = 1,
} OadxReconMode;

/**
 * Opaque transducer array geometry.
 */
typedef struct OadxGeometry OadxGeometry;

/**
 * Opaque square image (row-major f64).
 */
typedef struct OadxImage OadxImage;

/**
 * Opaque channel mask.
 */
typedef struct OadxMask OadxMask;

/**
 * Opaque phantom: pressure map plus label map.
 */
typedef struct OadxPhantom OadxPhantom;

/**
 * Opaque raw signal matrix with its physics constants.
 */
typedef struct OadxSignals OadxSignals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *oadx_last_error(void);

/**
 * Construct one of the supported array geometries.
 */
enum OadxStatus oadx_geometry_new(enum OadxArrayKind kind, struct OadxGeometry **out);

void oadx_geometry_free(struct OadxGeometry *geom);

/**
 * Element count; 0 for a null handle.
 */
size_t oadx_geometry_n_elements(const struct OadxGeometry *geom);

/**
 * Copy element centers as interleaved (x0, y0, x1, y1, ...) meters into a
 * caller buffer of `len` doubles; `len` must be exactly 2·n_elements.
 */
enum OadxStatus oadx_geometry_positions(const struct OadxGeometry *geom,
                                        double *out_xy,
                                        size_t len);

/**
 * Uniform-stride sparse mask keeping `keep` elements.
 */
enum OadxStatus oadx_mask_sparse(const struct OadxGeometry *geom,
                                 size_t keep,
                                 struct OadxMask **out);

/**
 * Centered contiguous limited-view mask keeping `keep` elements.
 */
enum OadxStatus oadx_mask_limited_view(const struct OadxGeometry *geom,
                                       size_t keep,
                                       struct OadxMask **out);

/**
 * Mask selecting the 128 linear-part elements of the multisegment array.
 */
enum OadxStatus oadx_mask_linear_part(const struct OadxGeometry *geom, struct OadxMask **out);

void oadx_mask_free(struct OadxMask *mask);

/**
 * Number of active channels; 0 for a null handle.
 */
size_t oadx_mask_popcount(const struct OadxMask *mask);

/**
 * Generate a synthetic forearm scene with default parameters at the given
 * image side and pixel pitch. Deterministic in the seed.
 */
enum OadxStatus oadx_phantom_generate(uint64_t seed,
                                      size_t image_n,
                                      double pitch_m,
                                      struct OadxPhantom **out);

void oadx_phantom_free(struct OadxPhantom *phantom);

size_t oadx_phantom_image_n(const struct OadxPhantom *phantom);

/**
 * Row-major n×n pressure values in [0, 1]; null for a null handle.
 */
const double *oadx_phantom_pressure(const struct OadxPhantom *phantom);

/**
 * Row-major n×n labels (0 background, 1 vessel, 2 skin).
 */
const uint8_t *oadx_phantom_labels(const struct OadxPhantom *phantom);

/**
 * Simulate raw signals from a row-major grid_n×grid_n pressure map centered
 * on the array origin.
 */
enum OadxStatus oadx_simulate(const struct OadxGeometry *geom,
                              const double *pressure,
                              size_t grid_n,
                              double pitch_m,
                              double sos_mps,
                              double sampling_rate_hz,
                              size_t n_samples,
                              double grueneisen,
                              struct OadxSignals **out);

void oadx_signals_free(struct OadxSignals *signals);

size_t oadx_signals_n_samples(const struct OadxSignals *signals);

size_t oadx_signals_n_elements(const struct OadxSignals *signals);

/**
 * Row-major (n_samples × n_elements) signal values.
 */
const double *oadx_signals_data(const struct OadxSignals *signals);

/**
 * Backprojection reconstruction onto a centered grid_n×grid_n grid.
 *
 * `mask` may be null (all channels active). Pass `band_low_hz >= band_high_hz`
 * (e.g. both 0) to skip bandpass filtering.
 */
enum OadxStatus oadx_reconstruct(const struct OadxSignals *signals,
                                 const struct OadxGeometry *geom,
                                 size_t grid_n,
                                 double pitch_m,
                                 enum OadxReconMode mode,
                                 const struct OadxMask *mask,
                                 double band_low_hz,
                                 double band_high_hz,
                                 struct OadxImage **out);

void oadx_image_free(struct OadxImage *image);

size_t oadx_image_n(const struct OadxImage *image);

/**
 * Row-major n×n pixel values.
 */
const double *oadx_image_data(const struct OadxImage *image);

/**
 * Scale the image by its maximum and clip at −0.2, in place.
 */
enum OadxStatus oadx_image_normalize_clip(struct OadxImage *image);

/**
 * Mean absolute error between two row-major images.
 */
enum OadxStatus oadx_mae(const double *pred,
                         const double *target,
                         size_t rows,
                         size_t cols,
                         double *out);

/**
 * Root mean squared error between two row-major images.
 */
enum OadxStatus oadx_rmse(const double *pred,
                          const double *target,
                          size_t rows,
                          size_t cols,
                          double *out);

/**
 * Peak signal-to-noise ratio in dB; +infinity for identical images.
 */
enum OadxStatus oadx_psnr(const double *pred,
                          const double *target,
                          size_t rows,
                          size_t cols,
                          double data_range,
                          double *out);

/**
 * Structural similarity with a uniform `window`×`window` window.
 */
enum OadxStatus oadx_ssim(const double *pred,
                          const double *target,
                          size_t rows,
                          size_t cols,
                          size_t window,
                          double k1,
                          double k2,
                          double data_range,
                          double *out);

/**
 * Dice coefficient of one label class between two row-major label maps.
 */
enum OadxStatus oadx_dice(const uint8_t *pred,
                          const uint8_t *target,
                          size_t rows,
                          size_t cols,
                          uint8_t class_id,
                          double *out);

/**
 * Intersection-over-union of one label class.
 */
enum OadxStatus oadx_iou(const uint8_t *pred,
                         const uint8_t *target,
                         size_t rows,
                         size_t cols,
                         uint8_t class_id,
                         double *out);

/**
 * Symmetric 95-percentile Hausdorff boundary distance in pixels; returns
 * `OADX_STATUS_UNDEFINED` when either mask is empty.
 */
enum OadxStatus oadx_hd95(const uint8_t *pred,
                          const uint8_t *target,
                          size_t rows,
                          size_t cols,
                          uint8_t class_id,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OADX_H */
