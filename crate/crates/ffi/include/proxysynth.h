#ifndef PROXYSYNTH_H
#define PROXYSYNTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every `ps_*` call.
 */
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PS_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  PS_STATUS_INVALID_UTF8 = 2,
  /**
   * A JSON or counts document failed to parse.
   */
  PS_STATUS_PARSE = 3,
  /**
   * Input parsed but violates a documented constraint.
   */
  PS_STATUS_INVALID_INPUT = 4,
  /**
   * A quantity is mathematically undefined (zero denominator, zero variance).
   */
  PS_STATUS_UNDEFINED = 5,
  /**
   * The solver or alignment loop could not produce a result.
   */
  PS_STATUS_SOLVER = 6,
  PS_STATUS_IO = 7,
  /**
   * A bug inside the library; the message carries the panic payload.
   */
  PS_STATUS_INTERNAL = 8,
} PsStatus;

/**
 * A block library.
 */
typedef struct PsLibrary PsLibrary;

/**
 * A proxy program: block ids with execution counts.
 */
typedef struct PsProgram PsProgram;

/**
 * A validated set of target metrics.
 */
typedef struct PsTargets PsTargets;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or the empty string after a
 * successful one. Valid until the next `ps_*` call on the same thread.
 */
const char *ps_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or a string from this library that has not been freed.
 */
void ps_string_free(char *s);

/**
 * The built-in calibrated library with synthetic profiles.
 *
 * # Safety
 * `out` is valid for a pointer write.
 */
enum PsStatus ps_library_default(struct PsLibrary **out);

/**
 * Parses and validates a library document.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is valid for a pointer write.
 */
enum PsStatus ps_library_from_json(const char *json, struct PsLibrary **out);

/**
 * Serializes a library to its canonical JSON document.
 *
 * # Safety
 * `library` is a live handle; `out` is valid for a pointer write.
 */
enum PsStatus ps_library_to_json(const struct PsLibrary *library, char **out);

/**
 * Number of blocks in the library.
 *
 * # Safety
 * `library` is a live handle; `out` is valid for a write.
 */
enum PsStatus ps_library_len(const struct PsLibrary *library, size_t *out);

/**
 * # Safety
 * `library` is null or a live handle, which becomes invalid.
 */
void ps_library_free(struct PsLibrary *library);

/**
 * Parses a target document (`{"metrics": {"cpi": 1.2, ...}}`) against the builtin
 * metric set.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is valid for a pointer write.
 */
enum PsStatus ps_targets_from_json(const char *json, struct PsTargets **out);

/**
 * # Safety
 * `targets` is null or a live handle, which becomes invalid.
 */
void ps_targets_free(struct PsTargets *targets);

/**
 * # Safety
 * `json` is a NUL-terminated string; `out` is valid for a pointer write.
 */
enum PsStatus ps_program_from_json(const char *json, struct PsProgram **out);

/**
 * # Safety
 * `program` is a live handle; `out` is valid for a pointer write.
 */
enum PsStatus ps_program_to_json(const struct PsProgram *program, char **out);

/**
 * # Safety
 * `program` is null or a live handle, which becomes invalid.
 */
void ps_program_free(struct PsProgram *program);

/**
 * Runs the alignment loop on the simulated machine.
 *
 * `config_json` is an alignment config document (`{"rounds": 10, "growth": 0.2, ...}`,
 * missing fields take defaults) and `noise_json` a noise model document
 * (`{"noise": {"kind": "uniform", "epsilon": 0.03}, "seed": 1}`). Either may be null
 * for the defaults. On success `*out_program` receives the final program and, when
 * the pointers are non-null, `*out_report` the accuracy report and `*out_trace` the
 * full round trace as JSON.
 *
 * # Safety
 * Handles are live; strings are null or NUL-terminated; out pointers are null
 * (optional ones) or valid for a write.
 */
enum PsStatus ps_align(const struct PsLibrary *library,
                       const struct PsTargets *targets,
                       const char *config_json,
                       const char *noise_json,
                       struct PsProgram **out_program,
                       char **out_report,
                       char **out_trace);

/**
 * Renders a program as a C translation unit.
 *
 * # Safety
 * Handles are live; `out` is valid for a pointer write.
 */
enum PsStatus ps_render(const struct PsLibrary *library,
                        const struct PsProgram *program,
                        char **out);

/**
 * Noise-free predicted event counts of a program, in `.counts` text form.
 *
 * # Safety
 * Handles are live; `out` is valid for a pointer write.
 */
enum PsStatus ps_predict_counts(const struct PsLibrary *library,
                                const struct PsProgram *program,
                                char **out);

/**
 * `1 - |real - proxy| / |real|`. `PS_STATUS_UNDEFINED` when `real` is zero.
 *
 * # Safety
 * `out` is valid for a write.
 */
enum PsStatus ps_accuracy(double real, double proxy, double *out);

/**
 * Pearson correlation of `x[0..n]` and `y[0..n]`.
 *
 * # Safety
 * `x` and `y` are valid for `n` reads; `out` is valid for a write.
 */
enum PsStatus ps_pearson(const double *x, const double *y, size_t n, double *out);

/**
 * Mean of `|y_i - x_i| / |x_i|` over `n` pairs, `x` being the reference.
 *
 * # Safety
 * `x` and `y` are valid for `n` reads; `out` is valid for a write.
 */
enum PsStatus ps_mean_abs_rel_error(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROXYSYNTH_H */
