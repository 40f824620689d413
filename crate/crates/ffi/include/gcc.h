#ifndef GCC_FFI_H
#define GCC_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GccStatus {
  GCC_STATUS_OK = 0,
  GCC_STATUS_NULL_POINTER = 1,
  GCC_STATUS_INVALID_ARGUMENT = 2,
  GCC_STATUS_CONFIG = 3,
  GCC_STATUS_RUNTIME = 4,
  GCC_STATUS_PANIC = 5,
} GccStatus;

/**
 * Experiment configuration handle.
 */
typedef struct GccConfig GccConfig;

/**
 * Finished training run handle.
 */
typedef struct GccRun GccRun;

/**
 * Final metrics of a run. Ring-task fields are -1 (counts) or NaN when the
 * task has none.
 */
typedef struct GccMetrics {
  uint64_t teacher_macs;
  uint64_t student_macs;
  double compression_ratio;
  uint64_t d_full_macs;
  uint64_t d_active_macs;
  int64_t covered_modes;
  int64_t teacher_covered_modes;
  double high_quality;
  double mmd;
  double mean_gap_difference;
} GccMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call or [`gcc_clear_last_error`] on the same
 * thread.
 */
const char *gcc_last_error_message(void);

void gcc_clear_last_error(void);

/**
 * Static version string.
 */
const char *gcc_version(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void gcc_string_free(char *s);

/**
 * PSNR in dB between two channel-major images of equal shape.
 *
 * # Safety
 * `a` and `b` must each point to `channels * height * width` doubles.
 */
enum GccStatus gcc_psnr(const double *a,
                        const double *b,
                        size_t channels,
                        size_t height,
                        size_t width,
                        double max_value,
                        double *out_db);

/**
 * Mean SSIM over channels, Gaussian window, pixel range [0, 1].
 *
 * # Safety
 * `a` and `b` must each point to `channels * height * width` doubles.
 */
enum GccStatus gcc_ssim(const double *a,
                        const double *b,
                        size_t channels,
                        size_t height,
                        size_t width,
                        double *out_ssim);

/**
 * Mode coverage of `n` row-major samples of dimension `dim` against `k`
 * centers of the same dimension.
 *
 * # Safety
 * `samples` holds `n * dim` doubles, `centers` holds `k * dim`.
 */
enum GccStatus gcc_mode_coverage(const double *samples,
                                 size_t n,
                                 const double *centers,
                                 size_t k,
                                 size_t dim,
                                 double radius,
                                 size_t min_count,
                                 size_t *out_covered,
                                 double *out_high_quality);

/**
 * One update of the equilibrium target with β = epoch / epoch_total.
 *
 * # Safety
 * `out_target` must be writable.
 */
enum GccStatus gcc_ema_update(double target,
                              double gap,
                              size_t epoch,
                              size_t epoch_total,
                              double *out_target);

/**
 * Binary gates `alpha >= tau`, written as 0/1 bytes.
 *
 * # Safety
 * `alpha` holds `n` doubles and `out_gates` has room for `n` bytes.
 */
enum GccStatus gcc_gate_mask(const double *alpha, size_t n, double tau, uint8_t *out_gates);

/**
 * Percentage of MACs removed going from `original` to `compressed`.
 *
 * # Safety
 * `out_percent` must be writable.
 */
enum GccStatus gcc_compression_ratio(double original, double compressed, double *out_percent);

/**
 * MACs of a reference generator: "cyclegan", "pix2pix", "sagan" or "srgan".
 *
 * # Safety
 * `key` is a NUL-terminated string; `out_macs` must be writable.
 */
enum GccStatus gcc_reference_macs(const char *key, uint64_t *out_macs);

/**
 * Defaults for a task name ("ring8", "blobs", "sagan", ...).
 *
 * # Safety
 * `task` is a NUL-terminated string; `out_config` must be writable.
 */
enum GccStatus gcc_config_default(const char *task, struct GccConfig **out_config);

/**
 * Parses and validates TOML config text.
 *
 * # Safety
 * `text` is a NUL-terminated string; `out_config` must be writable.
 */
enum GccStatus gcc_config_from_toml(const char *text, struct GccConfig **out_config);

/**
 * Loads a config file, resolving a relative output directory against
 * `GCC_OUTPUT_ROOT`.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out_config` must be writable.
 */
enum GccStatus gcc_config_load(const char *path, struct GccConfig **out_config);

/**
 * Serializes a config to TOML. Free the string with [`gcc_string_free`].
 *
 * # Safety
 * `config` is a live handle; `out_text` must be writable.
 */
enum GccStatus gcc_config_to_toml(const struct GccConfig *config, char **out_text);

/**
 * Replaces the seed and the epoch schedule, then revalidates.
 *
 * # Safety
 * `config` is a live handle.
 */
enum GccStatus gcc_config_set_schedule(struct GccConfig *config,
                                       uint64_t seed,
                                       size_t epochs_const,
                                       size_t epochs_decay,
                                       size_t steps_per_epoch);

/**
 * # Safety
 * `config` is NULL or a handle not yet freed.
 */
void gcc_config_free(struct GccConfig *config);

/**
 * Runs pruning and joint training. With a non-NULL `out_dir` the record,
 * logs and checkpoints are written there.
 *
 * # Safety
 * `config` is a live handle, `out_dir` is NULL or a NUL-terminated string,
 * `out_run` must be writable.
 */
enum GccStatus gcc_train(const struct GccConfig *config,
                         const char *out_dir,
                         struct GccRun **out_run);

/**
 * Loads a run directory written by training.
 *
 * # Safety
 * `run_dir` is a NUL-terminated string; `out_run` must be writable.
 */
enum GccStatus gcc_run_load(const char *run_dir, struct GccRun **out_run);

/**
 * # Safety
 * `run` is a live handle; `out_metrics` must be writable.
 */
enum GccStatus gcc_run_metrics(const struct GccRun *run, struct GccMetrics *out_metrics);

/**
 * Number of logged training iterations.
 *
 * # Safety
 * `run` is a live handle; `out_count` must be writable.
 */
enum GccStatus gcc_run_iterations(const struct GccRun *run, size_t *out_count);

/**
 * # Safety
 * `run` is NULL or a handle not yet freed.
 */
void gcc_run_free(struct GccRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GCC_FFI_H */
