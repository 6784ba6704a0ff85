#ifndef STRESSBENCH_H
#define STRESSBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_ARGUMENT = 2,
  SB_STATUS_IO = 3,
  SB_STATUS_FORMAT = 4,
  SB_STATUS_NUMERIC = 5,
  SB_STATUS_BUFFER_TOO_SMALL = 6,
  SB_STATUS_PANIC = 7,
} SbStatus;

/**
 * Trained classifier with its normalisation.
 */
typedef struct SbModel SbModel;

/**
 * Mono audio signal.
 */
typedef struct SbWaveform SbWaveform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *sb_last_error(void);

/**
 * Library version, static and nul-terminated.
 */
const char *sb_version(void);

/**
 * Copies `len` samples into a new waveform.
 *
 * # Safety
 * `samples` must point to `len` readable doubles; `out` must be writable.
 */
enum SbStatus sb_waveform_new(const double *samples,
                              size_t len,
                              uint32_t sample_rate,
                              struct SbWaveform **out);

/**
 * Reads a 16 kHz mono PCM16 WAV file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum SbStatus sb_waveform_read(const char *path, struct SbWaveform **out);

/**
 * Writes the waveform as PCM16 WAV.
 *
 * # Safety
 * `w` must be a live handle; `path` a nul-terminated string.
 */
enum SbStatus sb_waveform_write(const struct SbWaveform *w, const char *path);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `w` must be null or a live handle.
 */
size_t sb_waveform_len(const struct SbWaveform *w);

/**
 * Sample rate in Hz; 0 for a null handle.
 *
 * # Safety
 * `w` must be null or a live handle.
 */
uint32_t sb_waveform_sample_rate(const struct SbWaveform *w);

/**
 * Copies the samples into `buf`, which must hold `sb_waveform_len(w)` doubles.
 *
 * # Safety
 * `w` must be a live handle; `buf` must have room for `cap` doubles.
 */
enum SbStatus sb_waveform_samples(const struct SbWaveform *w, double *buf, size_t cap);

/**
 * # Safety
 * `w` must be null or a handle not yet freed.
 */
void sb_waveform_free(struct SbWaveform *w);

/**
 * White Gaussian noise at `snr_db` relative to the whole signal. Writes the
 * realised SNR to `measured_snr_db` when it is not null.
 *
 * # Safety
 * `clean` must be a live handle; `out` must be writable.
 */
enum SbStatus sb_add_noise(const struct SbWaveform *clean,
                           double snr_db,
                           uint64_t seed,
                           struct SbWaveform **out,
                           double *measured_snr_db);

/**
 * Magnitude spectral subtraction with over-subtraction `alpha` and spectral
 * floor `beta`; the noise profile comes from the first `head_ms` ms.
 *
 * # Safety
 * `noisy` must be a live handle; `out` must be writable.
 */
enum SbStatus sb_enhance_spectral_subtraction(const struct SbWaveform *noisy,
                                              double alpha,
                                              double beta,
                                              double head_ms,
                                              struct SbWaveform **out);

/**
 * Decision-directed Wiener filter with a-priori SNR smoothing `smoothing`.
 *
 * # Safety
 * `noisy` must be a live handle; `out` must be writable.
 */
enum SbStatus sb_enhance_wiener(const struct SbWaveform *noisy,
                                double smoothing,
                                double head_ms,
                                struct SbWaveform **out);

/**
 * Loads a model checkpoint written by `stressbench train`.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum SbStatus sb_model_load(const char *path, struct SbModel **out);

/**
 * Feature count per row; 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t sb_model_input_dim(const struct SbModel *m);

/**
 * Stressed-class probabilities for `rows` row-major feature rows.
 *
 * # Safety
 * `x` must hold `rows * sb_model_input_dim(m)` doubles and `probs` `rows`.
 */
enum SbStatus sb_model_predict(const struct SbModel *m,
                               const double *x,
                               size_t rows,
                               double *probs);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void sb_model_free(struct SbModel *m);

/**
 * One-stress-per-word labels for a word's syllable probabilities: 1 at the
 * most probable syllable (earliest on ties), 0 elsewhere.
 *
 * # Safety
 * `probs` and `labels` must each hold `n` elements.
 */
enum SbStatus sb_postprocess(const double *probs, size_t n, uint8_t *labels);

/**
 * Percentage of positions where `predicted` equals `gold`.
 *
 * # Safety
 * `predicted` and `gold` must hold `n` bytes; `out` must be writable.
 */
enum SbStatus sb_accuracy(const uint8_t *predicted, const uint8_t *gold, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STRESSBENCH_H */
