#ifndef DUALPATH_H
#define DUALPATH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DP_INPUT_VACUUM 0

#define DP_INPUT_THERMAL 1

#define DP_INPUT_COHERENT 2

#define DP_INPUT_SQUEEZED 3

#define DP_LOSS_NONE 0

#define DP_LOSS_BEFORE_AMP 1

#define DP_LOSS_AFTER_AMP 2

typedef enum DpStatus {
  DP_OK = 0,
  DP_ERR_NULL = 1,
  DP_ERR_INVALID = 2,
  DP_ERR_UNPHYSICAL = 3,
  DP_ERR_ORDER = 4,
  DP_ERR_MISSING = 5,
  DP_ERR_FORMAT = 6,
  DP_ERR_IO = 7,
  DP_ERR_BUFFER = 8,
  DP_ERR_PANIC = 9,
} DpStatus;

typedef struct DpModel DpModel;

typedef struct DpReconstruction DpReconstruction;

typedef struct DpShots DpShots;

/**
 * Mirrors `ChainConfig`; `eta` is ignored when `loss_placement` is
 * `DP_LOSS_NONE`.
 */
typedef struct DpChainConfig {
  double g1;
  double g2;
  double n_amp1;
  double n_amp2;
  double n_anc;
  double n_iq1;
  double n_iq2;
  double eta;
  int32_t loss_placement;
  double loss_n;
  bool large_gain_approx;
} DpChainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *dp_last_error_message(void);

/**
 * Static, NUL-terminated library version.
 */
const char *dp_version(void);

struct DpChainConfig dp_chain_config_default(void);

/**
 * Builds a detection model. `dual` selects the beam-splitter setup;
 * `(p0, p1)` is `n` for thermal input, or the real and imaginary parts of
 * the coherent amplitude or squeezing parameter.
 *
 * # Safety
 * `config` must point to a valid `DpChainConfig` and `out` to writable
 * storage for one pointer.
 */
enum DpStatus dp_model_new(int32_t input_kind,
                           double p0,
                           double p1,
                           const struct DpChainConfig *config,
                           bool dual,
                           struct DpModel **out);

/**
 * # Safety
 * `model` must be null or a handle from `dp_model_new` not yet freed.
 */
void dp_model_free(struct DpModel *model);

/**
 * Effective gain of chain `chain` (0 or 1).
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DpStatus dp_model_gain(const struct DpModel *model, size_t chain, double *out);

/**
 * Samples `n` shots; identical seeds give identical shots.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DpStatus dp_sample(const struct DpModel *model, size_t n, uint64_t seed, struct DpShots **out);

/**
 * Wraps caller data: `n_values` row-major values of `channels` (2 or 4)
 * columns, with one effective gain per chain.
 *
 * # Safety
 * `data` must hold `n_values` doubles, `gains` `n_gains` doubles, and
 * `out` must be writable.
 */
enum DpStatus dp_shots_new(size_t channels,
                           const double *data,
                           size_t n_values,
                           const double *gains,
                           size_t n_gains,
                           struct DpShots **out);

/**
 * # Safety
 * `shots` must be a live handle; the outputs must be writable.
 */
enum DpStatus dp_shots_shape(const struct DpShots *shots, size_t *n_shots, size_t *channels);

/**
 * Copies the row-major data into `buf`, which must hold at least
 * `n_shots * channels` doubles (`len`).
 *
 * # Safety
 * `shots` must be a live handle and `buf` must hold `len` doubles.
 */
enum DpStatus dp_shots_copy(const struct DpShots *shots, double *buf, size_t len);

/**
 * # Safety
 * `shots` must be null or a live handle.
 */
void dp_shots_free(struct DpShots *shots);

/**
 * Dual-path reconstruction to `order`, with standard errors from `blocks`
 * contiguous blocks (0 disables them). The ancilla is thermal with `n_anc`.
 *
 * # Safety
 * `shots` must be a live 4-column handle and `out` writable.
 */
enum DpStatus dp_reconstruct_dpm(const struct DpShots *shots,
                                 double n_anc,
                                 size_t order,
                                 size_t blocks,
                                 struct DpReconstruction **out);

/**
 * Single-path reconstruction from a signal run and a vacuum reference run
 * through the same chain (2-column shots with gains attached).
 *
 * # Safety
 * Both shot handles must be live and `out` writable.
 */
enum DpStatus dp_reconstruct_spm(const struct DpShots *signal,
                                 const struct DpShots *reference,
                                 size_t order,
                                 size_t blocks,
                                 struct DpReconstruction **out);

/**
 * Normally ordered signal moment `⟨a†^l a^m⟩`.
 *
 * # Safety
 * `rec` must be a live handle; `re` and `im` writable.
 */
enum DpStatus dp_reconstruction_signal(const struct DpReconstruction *rec,
                                       size_t l,
                                       size_t m,
                                       double *re,
                                       double *im);

/**
 * Standard error of the signal moment; `DP_ERR_MISSING` without blocks.
 *
 * # Safety
 * `rec` must be a live handle; `re` and `im` writable.
 */
enum DpStatus dp_reconstruction_signal_error(const struct DpReconstruction *rec,
                                             size_t l,
                                             size_t m,
                                             double *re,
                                             double *im);

/**
 * Full result as JSON; release with `dp_string_free`.
 *
 * # Safety
 * `rec` must be a live handle and `out` writable.
 */
enum DpStatus dp_reconstruction_to_json(const struct DpReconstruction *rec, char **out);

/**
 * # Safety
 * `rec` must be null or a live handle.
 */
void dp_reconstruction_free(struct DpReconstruction *rec);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void dp_string_free(char *s);

/**
 * Negativity and kernel of a two-mode state from its row-major 4×4
 * covariance in `(x1, p1, x2, p2)` order, vacuum variance 1/2.
 *
 * # Safety
 * `cov` must hold 16 doubles; the outputs must be writable.
 */
enum DpStatus dp_negativity(const double *cov, double *negativity, double *kernel);

/**
 * Copies a message into a caller buffer, for bindings that cannot hold the
 * thread-local pointer. Returns the full message length.
 *
 * # Safety
 * `buf` must be null or hold `len` bytes.
 */
size_t dp_last_error_copy(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALPATH_H */
