#ifndef SDHAWKES_H
#define SDHAWKES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SdhStatus {
  SDH_STATUS_OK = 0,
  SDH_STATUS_NULL_POINTER = 1,
  SDH_STATUS_INVALID_ARGUMENT = 2,
  SDH_STATUS_INVALID_MODEL = 3,
  SDH_STATUS_PARSE = 4,
  SDH_STATUS_NUMERICAL = 5,
  SDH_STATUS_EXPLOSION = 6,
  SDH_STATUS_IO = 7,
  SDH_STATUS_PANIC = 8,
} SdhStatus;

/**
 * Opaque model handle.
 */
typedef struct SdhModel SdhModel;

/**
 * Opaque marked sequence handle.
 */
typedef struct SdhSequence SdhSequence;

/**
 * Log-likelihood terms.
 */
typedef struct SdhLogLikelihood {
  double transition_term;
  double l_plus;
  double l_minus;
  double total;
  /**
   * Nonzero when the sequence contains a transition of probability zero.
   */
  int32_t impossible_transition;
} SdhLogLikelihood;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *sdh_last_error_message(void);

/**
 * Library version, a static string.
 */
const char *sdh_version(void);

/**
 * Parses a model from its JSON document.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum SdhStatus sdh_model_from_json(const char *json, struct SdhModel **out);

/**
 * Serialises a model; free the string with [`sdh_string_free`].
 *
 * # Safety
 * `model` must come from this library; `out` must be writable.
 */
enum SdhStatus sdh_model_to_json(const struct SdhModel *model, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void sdh_string_free(char *s);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed once.
 */
void sdh_model_free(struct SdhModel *model);

/**
 * # Safety
 * Pointers must be valid.
 */
enum SdhStatus sdh_model_dims(const struct SdhModel *model, size_t *n_events, size_t *n_states);

/**
 * Perron root of the kernel norm matrix in `state`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SdhStatus sdh_spectral_radius(const struct SdhModel *model, size_t state, double *out);

/**
 * Simulates on `(0, horizon]`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SdhStatus sdh_simulate(const struct SdhModel *model,
                            double horizon,
                            uint64_t seed,
                            size_t initial_state,
                            struct SdhSequence **out);

/**
 * Builds a sequence from `n` rows. Array pointers may be null when `n == 0`.
 *
 * # Safety
 * Each array must hold `n` elements.
 */
enum SdhStatus sdh_sequence_new(const double *times,
                                const size_t *events,
                                const size_t *states,
                                size_t n,
                                size_t initial_state,
                                double t0,
                                double t_end,
                                struct SdhSequence **out);

/**
 * Number of events; 0 for a null handle.
 *
 * # Safety
 * `seq` must be null or a valid handle.
 */
size_t sdh_sequence_len(const struct SdhSequence *seq);

/**
 * Row `i` of the sequence.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SdhStatus sdh_sequence_get(const struct SdhSequence *seq,
                                size_t i,
                                double *time,
                                size_t *event,
                                size_t *state);

/**
 * # Safety
 * `seq` must be null or a handle from this library, freed once.
 */
void sdh_sequence_free(struct SdhSequence *seq);

/**
 * # Safety
 * Pointers must be valid.
 */
enum SdhStatus sdh_log_likelihood(const struct SdhModel *model,
                                  const struct SdhSequence *seq,
                                  struct SdhLogLikelihood *out);

/**
 * Left-limit intensities `lambda_e(t)` of all event types into `out[0..out_len]`;
 * `out_len` must equal the number of event types.
 *
 * # Safety
 * `out` must hold `out_len` doubles.
 */
enum SdhStatus sdh_intensity_at(const struct SdhModel *model,
                                const struct SdhSequence *seq,
                                double t,
                                double *out,
                                size_t out_len);

/**
 * Maximum-likelihood fit with numbered dimensions. `log_likelihood` may be null.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SdhStatus sdh_fit(const struct SdhSequence *seq,
                       size_t n_events,
                       size_t n_states,
                       size_t random_starts,
                       uint64_t seed,
                       struct SdhModel **out,
                       double *log_likelihood);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDHAWKES_H */
