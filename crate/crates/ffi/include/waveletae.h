#ifndef WAVELETAE_H
#define WAVELETAE_H

/* Generated by cbindgen from the waveletae-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum WaeStatus {
  WAE_STATUS_OK = 0,
  WAE_STATUS_DIMENSION = 1,
  WAE_STATUS_LENGTH = 2,
  WAE_STATUS_LEVEL = 3,
  WAE_STATUS_CONTRACT = 4,
  WAE_STATUS_DOMAIN = 5,
  WAE_STATUS_CONFIG = 6,
  WAE_STATUS_DATA = 7,
  WAE_STATUS_CAPABILITY = 8,
  WAE_STATUS_INGESTION = 9,
  WAE_STATUS_FORMAT = 10,
  WAE_STATUS_IO = 11,
  WAE_STATUS_NULL_POINTER = 12,
  WAE_STATUS_INVALID_UTF8 = 13,
  WAE_STATUS_PANIC = 14,
} WaeStatus;

/**
 * What a push produced for the block leaving the window.
 */
typedef enum WaeVerdictKind {
  /**
   * No block left the window on this push.
   */
  WAE_VERDICT_KIND_NONE = 0,
  /**
   * The block collected every vote.
   */
  WAE_VERDICT_KIND_FINAL = 1,
  /**
   * The block left the window with a partial tally.
   */
  WAE_VERDICT_KIND_EXPIRED = 2,
} WaeVerdictKind;

/**
 * Wavelet family codes accepted by the transform entry points.
 */
typedef enum WaeWaveletFamily {
  WAE_WAVELET_FAMILY_HAAR = 0,
  WAE_WAVELET_FAMILY_DB4 = 1,
} WaeWaveletFamily;

/**
 * A trained detector loaded from a container file.
 */
typedef struct WaeDetector WaeDetector;

/**
 * Incremental sliding-window vote state for one stream.
 */
typedef struct WaeVoteStream WaeVoteStream;

typedef struct WaeBlockVerdict {
  size_t block_index;
  uint8_t verdict;
  size_t votes_positive;
  size_t votes_total;
} WaeBlockVerdict;

/**
 * Confusion counts and derived metrics. A `degenerate_*` flag of 1 means
 * the metric had a zero denominator and is reported as 0.
 */
typedef struct WaeMetrics {
  size_t tp;
  size_t fp;
  size_t tn;
  size_t fn_;
  double accuracy;
  double precision;
  double recall;
  double f1;
  uint8_t degenerate_precision;
  uint8_t degenerate_recall;
  uint8_t degenerate_f1;
} WaeMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none failed.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *wae_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *wae_version(void);

/**
 * Loads a detector container from `path`.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum WaeStatus wae_detector_load(const char *path, struct WaeDetector **out);

/**
 * Releases a detector. Null is ignored.
 *
 * # Safety
 * `det` must come from [`wae_detector_load`] and not be used afterwards.
 */
void wae_detector_free(struct WaeDetector *det);

/**
 * Channel count and fragment length the detector expects.
 *
 * # Safety
 * All pointers must be valid.
 */
enum WaeStatus wae_detector_info(const struct WaeDetector *det,
                                 size_t *channels,
                                 size_t *fragment_length);

/**
 * Labels one raw fragment of `channels × fragment_length` values laid out
 * channel-major. Writes the 0/1 label and the score it was cut from.
 *
 * # Safety
 * `data` must hold `len` values; `label` and `score` must be writable.
 */
enum WaeStatus wae_detector_predict(const struct WaeDetector *det,
                                    const double *data,
                                    size_t len,
                                    uint8_t *label,
                                    double *score);

/**
 * Creates a vote stream with window `window`, step `step` and vote
 * threshold `vote_threshold` for `channels`-channel blocks.
 *
 * # Safety
 * `out` must be writable.
 */
enum WaeStatus wae_vote_stream_new(size_t window,
                                   size_t step,
                                   double vote_threshold,
                                   size_t channels,
                                   struct WaeVoteStream **out);

/**
 * Releases a vote stream. Null is ignored.
 *
 * # Safety
 * `stream` must come from [`wae_vote_stream_new`] and not be used afterwards.
 */
void wae_vote_stream_free(struct WaeVoteStream *stream);

/**
 * Pushes one block of `channels × step` values, channel-major, and
 * classifies the window once it is full. When a block leaves the window,
 * `kind` says whether its tally was complete and `verdict` holds it.
 *
 * # Safety
 * `block` must hold `len` values; `verdict` and `kind` must be writable.
 */
enum WaeStatus wae_vote_stream_push(struct WaeVoteStream *stream,
                                    const struct WaeDetector *det,
                                    const double *block,
                                    size_t len,
                                    struct WaeBlockVerdict *verdict,
                                    enum WaeVerdictKind *kind);

/**
 * Blocks pushed into the stream so far.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum WaeStatus wae_vote_stream_blocks_pushed(const struct WaeVoteStream *stream, size_t *out);

/**
 * Majority decision: 1 when `positive / total >= vote_threshold`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WaeStatus wae_vote_decide(size_t positive, size_t total, double vote_threshold, uint8_t *out);

/**
 * One analysis step of a length-`len` signal. `family` is a
 * [`WaeWaveletFamily`] value. `approx` and `detail` must
 * each hold `len / 2` values.
 *
 * # Safety
 * Buffers must match the lengths above.
 */
enum WaeStatus wae_dwt_level(const double *signal,
                             size_t len,
                             uint32_t family,
                             double *approx,
                             double *detail);

/**
 * Inverse of [`wae_dwt_level`]: `approx` and `detail` hold `half` values
 * each, `family` is a [`WaeWaveletFamily`] value and `out` receives `2 * half`.
 *
 * # Safety
 * Buffers must match the lengths above.
 */
enum WaeStatus wae_idwt_level(const double *approx,
                              const double *detail,
                              size_t half,
                              uint32_t family,
                              double *out);

/**
 * Confusion counts and metrics of `n` 0/1 predictions against labels.
 *
 * # Safety
 * `preds` and `labels` must hold `n` values; `out` must be writable.
 */
enum WaeStatus wae_compute_metrics(const uint8_t *preds,
                                   const uint8_t *labels,
                                   size_t n,
                                   struct WaeMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVELETAE_H */
