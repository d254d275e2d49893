#ifndef MUGMATCH_H
#define MUGMATCH_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MmMethod {
  MM_METHOD_SIFT = 0,
  MM_METHOD_PCA = 1,
} MmMethod;

/**
 * Result code of every `mm_*` call.
 */
typedef enum MmStatus {
  MM_STATUS_OK = 0,
  MM_STATUS_NULL_POINTER = 1,
  MM_STATUS_INVALID_ARGUMENT = 2,
  MM_STATUS_IO = 3,
  MM_STATUS_DECODE = 4,
  MM_STATUS_DUPLICATE_IDENTITY = 5,
  MM_STATUS_EMPTY_GALLERY = 6,
  MM_STATUS_STALE_EIGEN_MODEL = 7,
  MM_STATUS_FORMAT = 8,
  MM_STATUS_PARAMS_MISMATCH = 9,
  MM_STATUS_OUT_OF_RANGE = 10,
  MM_STATUS_PANIC = 11,
} MmStatus;

/**
 * Extracted keypoints and descriptors of one image.
 */
typedef struct MmFeatureSet MmFeatureSet;

/**
 * Enrollment database handle.
 */
typedef struct MmGallery MmGallery;

/**
 * One ranked gallery entry. `inliers` and `raw_matches` are set for SIFT
 * queries, `distance` for PCA queries.
 */
typedef struct MmResult {
  size_t gallery_index;
  uint32_t inliers;
  uint32_t raw_matches;
  double distance;
} MmResult;

typedef struct MmKeypoint {
  float x;
  float y;
  float sigma;
  float orientation;
  float response;
  uint32_t octave;
} MmKeypoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated) and returns the full message length plus one.
 *
 * # Safety
 * `buf` must be NULL or point to `buf_len` writable bytes.
 */
size_t mm_last_error_message(char *buf, size_t buf_len);

/**
 * Creates an empty gallery with default SIFT parameters and a 300x300
 * canonical face size.
 *
 * # Safety
 * `out` must point to writable storage for one handle.
 */
enum MmStatus mm_gallery_new(struct MmGallery **out);

/**
 * # Safety
 * `dir` must be a NUL-terminated path and `out` writable.
 */
enum MmStatus mm_gallery_load(const char *dir, struct MmGallery **out);

/**
 * # Safety
 * `gallery` must be a live handle and `dir` a NUL-terminated path.
 */
enum MmStatus mm_gallery_save(const struct MmGallery *gallery, const char *dir);

/**
 * # Safety
 * `gallery` must be NULL or a handle not yet freed.
 */
void mm_gallery_free(struct MmGallery *gallery);

/**
 * Number of enrolled identities; 0 for a NULL handle.
 *
 * # Safety
 * `gallery` must be NULL or a live handle.
 */
size_t mm_gallery_len(const struct MmGallery *gallery);

/**
 * Copies the id of the identity at `index` into `buf`; `needed` receives
 * the id length plus one.
 *
 * # Safety
 * `gallery` must be live, `buf` NULL or `buf_len` writable bytes, `needed`
 * NULL or writable.
 */
enum MmStatus mm_gallery_identity_id(const struct MmGallery *gallery,
                                     size_t index,
                                     char *buf,
                                     size_t buf_len,
                                     size_t *needed);

/**
 * Enrolls an image file. `label` may be NULL (defaults to the id).
 *
 * # Safety
 * String arguments must be NUL-terminated; `gallery` live; `keypoints`
 * NULL or writable.
 */
enum MmStatus mm_gallery_enroll_file(struct MmGallery *gallery,
                                     const char *identity_id,
                                     const char *label,
                                     const char *path,
                                     size_t *keypoints);

/**
 * Enrolls a row-major grayscale raster with values in `[0, 1]`.
 *
 * # Safety
 * `pixels` must hold `width * height` values; other pointers as for
 * [`mm_gallery_enroll_file`].
 */
enum MmStatus mm_gallery_enroll_gray(struct MmGallery *gallery,
                                     const char *identity_id,
                                     const char *label,
                                     const double *pixels,
                                     size_t width,
                                     size_t height,
                                     size_t *keypoints);

/**
 * Fits the eigenface model; `k = 0` selects `min(N - 1, 40)`.
 *
 * # Safety
 * `gallery` must be a live handle.
 */
enum MmStatus mm_gallery_train_eigen(struct MmGallery *gallery, size_t k);

/**
 * Ranks every identity against a grayscale query. Up to `capacity` rows
 * are written to `results`; `count` receives the full gallery size.
 * `ratio = 0` selects the default ratio-test fraction (SIFT only).
 *
 * # Safety
 * `pixels` must hold `width * height` values; `results` must have room for
 * `capacity` rows; `count` must be writable.
 */
enum MmStatus mm_query_gray(const struct MmGallery *gallery,
                            enum MmMethod method,
                            const double *pixels,
                            size_t width,
                            size_t height,
                            double ratio,
                            struct MmResult *results,
                            size_t capacity,
                            size_t *count);

/**
 * As [`mm_query_gray`] with the query read from an image file.
 *
 * # Safety
 * `path` must be NUL-terminated; other pointers as for [`mm_query_gray`].
 */
enum MmStatus mm_query_file(const struct MmGallery *gallery,
                            enum MmMethod method,
                            const char *path,
                            double ratio,
                            struct MmResult *results,
                            size_t capacity,
                            size_t *count);

/**
 * Extracts SIFT features with default parameters.
 *
 * # Safety
 * `pixels` must hold `width * height` values and `out` be writable.
 */
enum MmStatus mm_extract_features(const double *pixels,
                                  size_t width,
                                  size_t height,
                                  struct MmFeatureSet **out);

/**
 * # Safety
 * `features` must be NULL or a live handle.
 */
size_t mm_features_len(const struct MmFeatureSet *features);

/**
 * # Safety
 * `features` must be live and `out` writable.
 */
enum MmStatus mm_features_keypoint(const struct MmFeatureSet *features,
                                   size_t index,
                                   struct MmKeypoint *out);

/**
 * Copies the 128 descriptor values of keypoint `index` into `out`.
 *
 * # Safety
 * `features` must be live and `out` must have room for 128 floats.
 */
enum MmStatus mm_features_descriptor(const struct MmFeatureSet *features, size_t index, float *out);

/**
 * # Safety
 * `features` must be NULL or a handle not yet freed.
 */
void mm_features_free(struct MmFeatureSet *features);

/**
 * Percentage of `true` entries in `outcomes`.
 *
 * # Safety
 * `outcomes` must hold `len` booleans and `out` be writable.
 */
enum MmStatus mm_identification_rate(const bool *outcomes, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MUGMATCH_H */
