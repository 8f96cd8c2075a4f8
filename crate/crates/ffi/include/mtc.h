#ifndef MTC_H
#define MTC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum MtcStatus {
  MTC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MTC_STATUS_ERR_NULL = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MTC_STATUS_ERR_UTF8 = 2,
  /**
   * The input text could not be parsed.
   */
  MTC_STATUS_ERR_PARSE = 3,
  /**
   * The input parsed but cannot be checked at the requested level.
   */
  MTC_STATUS_ERR_INPUT = 4,
  /**
   * A file could not be read.
   */
  MTC_STATUS_ERR_IO = 5,
  /**
   * The library panicked; the handle arguments are still valid.
   */
  MTC_STATUS_ERR_PANIC = 6,
} MtcStatus;

typedef enum MtcLevel {
  MTC_LEVEL_SSER = 0,
  MTC_LEVEL_SER = 1,
  MTC_LEVEL_SI = 2,
} MtcLevel;

/**
 * A parsed transactional history.
 */
typedef struct MtcHistory MtcHistory;

/**
 * A parsed set of lightweight-transaction operations.
 */
typedef struct MtcLwt MtcLwt;

/**
 * The outcome of a check.
 */
typedef struct MtcVerdict MtcVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread, or an empty
 * string. Valid until the next call into the library on this thread.
 */
const char *mtc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mtc_version(void);

/**
 * Parses a JSON-lines history.
 *
 * # Safety
 * `jsonl` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MtcStatus mtc_history_parse(const char *jsonl, struct MtcHistory **out);

/**
 * Reads and parses a JSON-lines history file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MtcStatus mtc_history_load(const char *path, struct MtcHistory **out);

/**
 * # Safety
 * `h` must be null or a handle from this library not yet freed.
 */
void mtc_history_free(struct MtcHistory *h);

/**
 * Number of recorded transactions, committed or aborted, excluding the
 * initial one. Returns 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t mtc_history_txn_count(const struct MtcHistory *h);

/**
 * Validates, screens and checks `h` at `level`. A history that is not made
 * of mini-transactions, or lacks timestamps for `MTC_LEVEL_SSER`, yields
 * `MTC_STATUS_ERR_INPUT`.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum MtcStatus mtc_check(const struct MtcHistory *h, enum MtcLevel level, struct MtcVerdict **out);

/**
 * Preflight anomalies of `h` as a JSON array. Free the string with
 * [`mtc_string_free`].
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum MtcStatus mtc_screen_json(const struct MtcHistory *h, char **out);

/**
 * Parses JSON-lines LWT operations.
 *
 * # Safety
 * `jsonl` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MtcStatus mtc_lwt_parse(const char *jsonl, struct MtcLwt **out);

/**
 * # Safety
 * `l` must be null or a handle from this library not yet freed.
 */
void mtc_lwt_free(struct MtcLwt *l);

/**
 * Checks linearizability of every object in `l`.
 *
 * # Safety
 * `l` must be a live handle and `out` a valid pointer.
 */
enum MtcStatus mtc_lwt_check(const struct MtcLwt *l, struct MtcVerdict **out);

/**
 * Whether the verdict passed. False for a null handle.
 *
 * # Safety
 * `v` must be null or a live handle.
 */
bool mtc_verdict_ok(const struct MtcVerdict *v);

/**
 * The verdict as JSON, or null for a null handle. Free the string with
 * [`mtc_string_free`].
 *
 * # Safety
 * `v` must be null or a live handle.
 */
char *mtc_verdict_json(const struct MtcVerdict *v);

/**
 * # Safety
 * `v` must be null or a handle from this library not yet freed.
 */
void mtc_verdict_free(struct MtcVerdict *v);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void mtc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTC_H */
