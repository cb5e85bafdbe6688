#ifndef HYFHE_H
#define HYFHE_H

#include <stddef.h>
#include <stdint.h>

typedef enum HyfheStatus {
  HYFHE_STATUS_OK = 0,
  HYFHE_STATUS_NULL_POINTER = 1,
  HYFHE_STATUS_INVALID_ARGUMENT = 2,
  HYFHE_STATUS_IO = 3,
  HYFHE_STATUS_MODEL = 4,
  HYFHE_STATUS_CRYPTO = 5,
  HYFHE_STATUS_PROTOCOL = 6,
  HYFHE_STATUS_WIRE = 7,
  /**
   * The amplification bound's precondition does not hold.
   */
  HYFHE_STATUS_DP_INAPPLICABLE = 8,
  HYFHE_STATUS_BUFFER_TOO_SMALL = 9,
  HYFHE_STATUS_PANIC = 10,
} HyfheStatus;

/**
 * A loaded quantized model.
 */
typedef struct HyfheModel HyfheModel;

/**
 * A client bound to a server (in process or remote). Each inference
 * opens a fresh protocol session with newly generated keys.
 */
typedef struct HyfheSession HyfheSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated) into
 * `buf`. Returns the buffer size needed, including the terminator; `0`
 * when no error has been recorded.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t hyfhe_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hyfhe_version(void);

/**
 * Loads a model from its JSON manifest (the weights blob is read from
 * next to it).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HyfheStatus hyfhe_model_load(const char *path, struct HyfheModel **out);

/**
 * Builds the built-in toy CNN for accumulator width `b` (8, 12 or 16).
 *
 * # Safety
 * `out` must be writable.
 */
enum HyfheStatus hyfhe_model_toy(uint32_t b, uint64_t seed, struct HyfheModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, not yet freed.
 */
void hyfhe_model_free(struct HyfheModel *model);

/**
 * Input length, or `0` for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t hyfhe_model_input_len(const struct HyfheModel *model);

/**
 * Cleartext integer forward pass (the oracle the encrypted path matches).
 *
 * # Safety
 * `model` must be live; `input` valid for `len` values; `scores` valid
 * for `cap` values; `written` null or writable.
 */
enum HyfheStatus hyfhe_model_forward(const struct HyfheModel *model,
                                     const int64_t *input,
                                     size_t len,
                                     int64_t *scores,
                                     size_t cap,
                                     size_t *written);

/**
 * Starts an in-process server for `model` (the handle may be freed
 * afterwards) and a client using the preset for `(b, gamma)`.
 *
 * # Safety
 * `model` must be live; `out` writable.
 */
enum HyfheStatus hyfhe_session_local(const struct HyfheModel *model,
                                     uint32_t b,
                                     uint32_t gamma,
                                     uint64_t seed,
                                     struct HyfheSession **out);

/**
 * Connects to a remote server at `addr` (`host:port`).
 *
 * # Safety
 * `addr` must be a NUL-terminated string; `out` writable.
 */
enum HyfheStatus hyfhe_session_connect(const char *addr,
                                       uint32_t b,
                                       uint32_t gamma,
                                       uint64_t seed,
                                       struct HyfheSession **out);

/**
 * # Safety
 * `session` must be null or a live handle.
 */
void hyfhe_session_free(struct HyfheSession *session);

/**
 * One encrypted inference. Writes the final integer scores and, when
 * `argmax` is non-null, the predicted class.
 *
 * # Safety
 * `session` must be live and not used concurrently; pointer arguments as
 * for [`hyfhe_model_forward`].
 */
enum HyfheStatus hyfhe_session_infer(struct HyfheSession *session,
                                     const int64_t *input,
                                     size_t len,
                                     int64_t *scores,
                                     size_t cap,
                                     size_t *written,
                                     size_t *argmax);

/**
 * Shuffle-model amplification: `(eps0, delta0)`-local reports from `n`
 * users give `(eps, delta_total)` central privacy at target `delta`.
 *
 * # Safety
 * `eps` and `delta_total` must be writable.
 */
enum HyfheStatus hyfhe_dp_amplify(double eps0,
                                  double delta0,
                                  uint64_t n,
                                  double delta,
                                  double *eps,
                                  double *delta_total);

/**
 * The permutation images `σ(0..size)` for a round, from a 32-byte master
 * secret and a 16-byte session id.
 *
 * # Safety
 * `master` must point to 32 bytes, `session_id` to 16, `out` to `size`
 * writable values.
 */
enum HyfheStatus hyfhe_derive_permutation(const uint8_t *master,
                                          const uint8_t *session_id,
                                          uint32_t round,
                                          size_t size,
                                          uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYFHE_H */
