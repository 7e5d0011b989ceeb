#ifndef CPA_H
#define CPA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CpaStatus {
  CPA_STATUS_OK = 0,
  CPA_STATUS_NULL_POINTER = 1,
  CPA_STATUS_INVALID_ARGUMENT = 2,
  CPA_STATUS_IO = 3,
  CPA_STATUS_FORMAT = 4,
  CPA_STATUS_SIZE = 5,
  CPA_STATUS_EMPTY = 6,
  CPA_STATUS_SAMPLE = 7,
  CPA_STATUS_MODEL = 8,
  CPA_STATUS_PANIC = 9,
} CpaStatus;

/**
 * A loaded checkpoint. Create with [`cpa_model_load`], release with
 * [`cpa_model_free`].
 */
typedef struct CpaModel CpaModel;

/**
 * Intent and capability use index order: intent 0 deceptive, 1 disruptive,
 * 2 non-adversarial; capability 0 high, 1 moderate, 2 low.
 */
typedef struct CpaAssessment {
  uint8_t intent;
  uint8_t capability;
  uint8_t scale;
  double rho_hat;
  double ber_hat;
} CpaAssessment;

/**
 * Free-space optical link parameters; see `cpa_channel_gain`.
 */
typedef struct CpaLinkBudget {
  double tx_power_watts;
  double distance_m;
  double drift_m_per_sample;
  double wavelength_m;
  double tx_aperture_m;
  double rx_aperture_m;
  double tx_efficiency;
  double rx_efficiency;
  double jitter_rad;
  double divergence_rad;
} CpaLinkBudget;

/**
 * OFDM frame layout; `qam_order` is 4, 16 or 64.
 */
typedef struct CpaFrame {
  size_t n_subcarriers;
  size_t cp_len;
  size_t n_symbols;
  size_t qam_order;
} CpaFrame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap - 1` bytes). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t cpa_last_error(char *buf, size_t cap);

/**
 * NUL-terminated crate version; static storage.
 */
const char *cpa_version(void);

/**
 * Loads a checkpoint file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CpaStatus cpa_model_load(const char *path, struct CpaModel **out);

/**
 * Releases a handle from [`cpa_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a live handle not freed before.
 */
void cpa_model_free(struct CpaModel *model);

/**
 * Network input shape `channels x height x width`; inputs are channel-first.
 *
 * # Safety
 * All pointers must be valid.
 */
enum CpaStatus cpa_model_input_shape(const struct CpaModel *model,
                                     size_t *channels,
                                     size_t *height,
                                     size_t *width);

/**
 * Number of complex samples (CP included) expected by [`cpa_assess_series`].
 *
 * # Safety
 * All pointers must be valid.
 */
enum CpaStatus cpa_model_series_len(const struct CpaModel *model, size_t *out);

/**
 * Full pipeline on one received series of `len` samples.
 *
 * # Safety
 * `re` and `im` must be valid for `len` reads; `out` must be writable.
 */
enum CpaStatus cpa_assess_series(const struct CpaModel *model,
                                 const double *re,
                                 const double *im,
                                 size_t len,
                                 double high_ber,
                                 double low_ber,
                                 struct CpaAssessment *out);

/**
 * Assesses `n` prepared channel-first inputs, `n * c * h * w` values.
 *
 * # Safety
 * `inputs` must be valid for `len` reads; `out` for `n` writes.
 */
enum CpaStatus cpa_assess_inputs(const struct CpaModel *model,
                                 const double *inputs,
                                 size_t len,
                                 size_t n,
                                 double high_ber,
                                 double low_ber,
                                 struct CpaAssessment *out);

/**
 * Decision logic on raw network outputs: 3 class probabilities and the
 * predicted `log10` BER.
 *
 * # Safety
 * `probs` must be valid for 3 reads; `out` must be writable.
 */
enum CpaStatus cpa_assess_outputs(const double *probs,
                                  double rho_hat,
                                  double high_ber,
                                  double low_ber,
                                  struct CpaAssessment *out);

/**
 * Threat scale 0..=7 from one-hot intent and capability vectors of length 3.
 *
 * # Safety
 * `intent` and `capability` must be valid for 3 reads; `out` writable.
 */
enum CpaStatus cpa_threat_scale(const uint8_t *intent, const uint8_t *capability, uint8_t *out);

/**
 * Amplitude gain of `link` at sample index `n`.
 *
 * # Safety
 * `link` must be readable and `out` writable.
 */
enum CpaStatus cpa_channel_gain(const struct CpaLinkBudget *link, size_t n, double *out);

/**
 * Normalized `(S, S_sup, S_inf)` tensor of a received series, channel-last,
 * `n_symbols * n_subcarriers * 3` values. `ranges` receives the 3 channel
 * minima followed by the 3 maxima.
 *
 * # Safety
 * `re`/`im` valid for `len` reads, `out` for `out_len` writes, `ranges` for
 * 6 writes (or null).
 */
enum CpaStatus cpa_feature_tensor(const struct CpaFrame *frame,
                                  size_t disk_radius,
                                  const double *re,
                                  const double *im,
                                  size_t len,
                                  double *out,
                                  size_t out_len,
                                  double *ranges);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CPA_H */
