#ifndef ECHOMARK_H
#define ECHOMARK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum EmStatus {
  EM_STATUS_OK = 0,
  EM_STATUS_NULL_POINTER = 1,
  EM_STATUS_INVALID_ARGUMENT = 2,
  EM_STATUS_CLIP_TOO_SHORT = 3,
  EM_STATUS_IO = 4,
  EM_STATUS_UNSUPPORTED_FORMAT = 5,
  EM_STATUS_INVALID_KEY = 6,
  EM_STATUS_CAPACITY_EXCEEDED = 7,
  // The requested value does not exist, e.g. a z-score at a lag outside the band.
  EM_STATUS_NOT_AVAILABLE = 8,
  EM_STATUS_PANIC = 99,
} EmStatus;

// Sample encoding for [`em_clip_save`].
typedef enum EmWavFormat {
  EM_WAV_FORMAT_PCM16 = 0,
  EM_WAV_FORMAT_FLOAT32 = 1,
} EmWavFormat;

// A mono audio clip.
typedef struct EmClip EmClip;

// The outcome of a detection.
typedef struct EmReport EmReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next failing call on the same thread; do not free.
const char *em_last_error(void);

// Library version as a static string.
const char *em_version(void);

// Copies `len` samples into a new clip.
//
// # Safety
// `samples` must point to `len` readable doubles and `out` must be writable.
enum EmStatus em_clip_new(const double *samples,
                          size_t len,
                          uint32_t sample_rate,
                          struct EmClip **out);

// Reads a WAV file as mono at its own rate.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum EmStatus em_clip_load(const char *path, struct EmClip **out);

// Writes a clip as a mono WAV file. `clipped` (may be null) receives the
// number of saturated samples.
//
// # Safety
// `clip` must come from this library; `path` must be NUL-terminated.
enum EmStatus em_clip_save(const struct EmClip *clip,
                           const char *path,
                           enum EmWavFormat format,
                           size_t *clipped);

// Sample count, or 0 for a null clip.
//
// # Safety
// `clip` must be null or come from this library.
size_t em_clip_len(const struct EmClip *clip);

// Sample rate in Hz, or 0 for a null clip.
//
// # Safety
// `clip` must be null or come from this library.
uint32_t em_clip_sample_rate(const struct EmClip *clip);

// Borrowed pointer to the samples, valid while the clip lives.
//
// # Safety
// `clip` must be null or come from this library.
const double *em_clip_samples(const struct EmClip *clip);

// # Safety
// `clip` must be null or come from this library, and not be used afterwards.
void em_clip_free(struct EmClip *clip);

// # Safety
// `clip` must come from this library and `out` be writable.
enum EmStatus em_resample(const struct EmClip *clip, uint32_t target_rate, struct EmClip **out);

// Adds `alpha` times the clip delayed by `delta` samples.
//
// # Safety
// `clip` must come from this library and `out` be writable.
enum EmStatus em_embed_single(const struct EmClip *clip,
                              size_t delta,
                              double alpha,
                              struct EmClip **out);

// Embeds a time-spread echo keyed by `len` pattern bits (each 0 or 1).
//
// # Safety
// `bits` must point to `len` bytes; `clip` must come from this library.
enum EmStatus em_embed_spread(const struct EmClip *clip,
                              const uint8_t *bits,
                              size_t len,
                              double alpha,
                              size_t delta,
                              struct EmClip **out);

// Single-echo detection over the inclusive band `[band_start, band_end]`.
// A negative `key_lag` means no key.
//
// # Safety
// `clip` must come from this library and `out` be writable.
enum EmStatus em_detect_single(const struct EmClip *clip,
                               size_t band_start,
                               size_t band_end,
                               int64_t key_lag,
                               struct EmReport **out);

// Spread-echo detection with the key's pattern, lag and strength.
//
// # Safety
// `bits` must point to `len` bytes; `clip` must come from this library.
enum EmStatus em_detect_spread(const struct EmClip *clip,
                               const uint8_t *bits,
                               size_t len,
                               double alpha,
                               size_t delta,
                               bool enhanced,
                               struct EmReport **out);

// Lag with the largest z-score.
//
// # Safety
// `report` must come from this library and `out` be writable.
enum EmStatus em_report_argmax_lag(const struct EmReport *report, size_t *out);

// z-score at the key lag; `NotAvailable` without a key or when degenerate.
//
// # Safety
// `report` must come from this library and `out` be writable.
enum EmStatus em_report_z_at_key(const struct EmReport *report, double *out);

// z-score at any lag inside the report's band.
//
// # Safety
// `report` must come from this library and `out` be writable.
enum EmStatus em_report_z_at(const struct EmReport *report, size_t lag, double *out);

// Serializes the report (with its full profile) to a JSON string that the
// caller frees with [`em_string_free`].
//
// # Safety
// `report` must come from this library and `out` be writable.
enum EmStatus em_report_to_json(const struct EmReport *report, char **out);

// # Safety
// `report` must be null or come from this library, and not be used afterwards.
void em_report_free(struct EmReport *report);

// # Safety
// `s` must be null or a string returned by this library.
void em_string_free(char *s);

// Writes the clip's real cepstrum into `out`, which must hold
// `em_clip_len(clip)` doubles (`capacity` says how many it holds).
//
// # Safety
// `out` must point to `capacity` writable doubles.
enum EmStatus em_real_cepstrum(const struct EmClip *clip, double *out, size_t capacity);

// Area under the ROC curve separating `true_scores` from `false_scores`.
//
// # Safety
// The score pointers must cover their lengths and `out` be writable.
enum EmStatus em_roc_auc(const double *true_scores,
                         size_t n_true,
                         const double *false_scores,
                         size_t n_false,
                         double *out);

// Fills `bits` with a seeded pattern of `len` bits (0 or 1) whose runs of
// equal bits never exceed two.
//
// # Safety
// `bits` must point to `len` writable bytes.
enum EmStatus em_generate_pattern(size_t len, uint64_t seed, uint8_t *bits);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECHOMARK_H */
