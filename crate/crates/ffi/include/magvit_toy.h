#ifndef MAGVIT_TOY_H
#define MAGVIT_TOY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MG_SCHEDULE_COSINE 0

#define MG_SCHEDULE_UNIFORM 1

#define MG_SCHEDULE_EXPONENTIAL 2

/**
 * Pass as `label` when the task takes no class.
 */
#define MG_NO_LABEL -1

/**
 * Result code of every fallible call.
 */
typedef enum MgStatus {
  MG_STATUS_OK = 0,
  MG_STATUS_NULL_POINTER = 1,
  MG_STATUS_DOMAIN = 2,
  MG_STATUS_USAGE = 3,
  MG_STATUS_CONFIG = 4,
  MG_STATUS_DATA = 5,
  MG_STATUS_TRAINING = 6,
  MG_STATUS_IO = 7,
  /**
   * Output buffer length does not match the result.
   */
  MG_STATUS_BUFFER_SIZE = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  MG_STATUS_INTERNAL = 9,
} MgStatus;

/**
 * Opaque VQ codebook.
 */
typedef struct MgCodebook MgCodebook;

/**
 * Opaque trained predictor.
 */
typedef struct MgPredictor MgPredictor;

typedef struct MgDims {
  uint32_t frames;
  uint32_t height;
  uint32_t width;
  uint32_t channels;
} MgDims;

typedef struct MgLatent {
  uint32_t t;
  uint32_t h;
  uint32_t w;
} MgLatent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * Valid until the next call on the same thread.
 */
const char *mg_last_error(void);

/**
 * Pixel bits over token bits for a video and its latent lattice.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum MgStatus mg_compression_rate(struct MgDims video,
                                  struct MgLatent lattice,
                                  uint32_t bits_per_pixel,
                                  uint32_t bits_per_token,
                                  double *out);

/**
 * Mask ratio at progress `r` in [0, 1]. `lambda` is read only by the exponential schedule.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum MgStatus mg_gamma(uint32_t kind, double lambda, double r, double *out);

/**
 * Fraction of valid condition pixels for task `task_index` (0 = FP ... 9 = CFP)
 * at default task parameters.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum MgStatus mg_condition_fraction(uint32_t task_index, struct MgDims video, double *out);

/**
 * Autoregressive over non-autoregressive decoding step ratio.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum MgStatus mg_cost_step_ratio(uint32_t seq_len,
                                 uint32_t nar_steps,
                                 uint32_t ar_steps,
                                 double *out);

/**
 * Builds a codebook from `size * dim` row-major centroids.
 *
 * # Safety
 * `centroids` must point to `size * dim` doubles; `out` to a handle slot.
 */
enum MgStatus mg_codebook_new(uint32_t size,
                              uint32_t dim,
                              const double *centroids,
                              struct MgCodebook **out);

/**
 * Reads an `MGCB` codebook file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum MgStatus mg_codebook_load(const char *path_, struct MgCodebook **out);

/**
 * # Safety
 * `cb` must be null or a handle from this library that has not been freed.
 */
void mg_codebook_free(struct MgCodebook *cb);

/**
 * Number of codes, or 0 for a null handle.
 *
 * # Safety
 * `cb` must be null or a live handle.
 */
uint32_t mg_codebook_size(const struct MgCodebook *cb);

/**
 * Quantizes a video (row-major frames, rows, cols, channels) to token ids.
 *
 * # Safety
 * `pixels` must hold the video's element count; `tokens` must hold `tokens_len` ids.
 */
enum MgStatus mg_encode(const struct MgCodebook *cb,
                        struct MgDims video,
                        const double *pixels,
                        struct MgLatent lattice,
                        uint32_t *tokens,
                        size_t tokens_len);

/**
 * Maps token ids back to a piecewise-constant video.
 *
 * # Safety
 * `tokens` must hold the lattice's element count; `pixels` must hold `pixels_len` doubles.
 */
enum MgStatus mg_decode(const struct MgCodebook *cb,
                        struct MgLatent lattice,
                        const uint32_t *tokens,
                        struct MgDims video,
                        double *pixels,
                        size_t pixels_len);

/**
 * Reads an `MGPD` predictor checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum MgStatus mg_predictor_load(const char *path_, struct MgPredictor **out);

/**
 * # Safety
 * `p` must be null or a handle from this library that has not been freed.
 */
void mg_predictor_free(struct MgPredictor *p);

/**
 * Codebook size the predictor was trained for, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
uint32_t mg_predictor_codebook_size(const struct MgPredictor *p);

/**
 * Iterative non-autoregressive decoding from quantized condition tokens.
 *
 * `allpadded[i]` is nonzero where position `i` has no condition pixels.
 * `label` is the class for CG/CFP and [`MG_NO_LABEL`] otherwise.
 *
 * # Safety
 * `cond_tokens` and `allpadded` must hold the lattice's element count;
 * `out` must hold `out_len` ids.
 */
enum MgStatus mg_commit_decode(const struct MgPredictor *p,
                               uint32_t task_index,
                               int64_t label,
                               struct MgLatent lattice,
                               const uint32_t *cond_tokens,
                               const uint8_t *allpadded,
                               uint32_t steps,
                               double temperature,
                               uint32_t schedule_kind,
                               double lambda,
                               uint64_t seed,
                               uint32_t *out,
                               size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAGVIT_TOY_H */
