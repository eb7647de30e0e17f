#ifndef ISLANDS_H
#define ISLANDS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Reply buffer size handed to inference callbacks.
 */
#define ISLANDS_REPLY_CAPACITY 1024

/**
 * Result code of every call.
 */
typedef enum IslandsStatus {
  ISLANDS_STATUS_OK = 0,
  ISLANDS_STATUS_NULL_ARGUMENT = 1,
  ISLANDS_STATUS_INVALID_UTF8 = 2,
  ISLANDS_STATUS_INVALID_ARGUMENT = 3,
  /**
   * A navigation guard refused the action (wrong mode, unknown island,
   * orb out of range).
   */
  ISLANDS_STATUS_GUARD_REJECTED = 4,
  /**
   * The utterance was logged but could not be categorized.
   */
  ISLANDS_STATUS_INFERENCE_FAILED = 5,
  ISLANDS_STATUS_STORAGE = 6,
  ISLANDS_STATUS_SESSION_CLOSED = 7,
  ISLANDS_STATUS_INTERNAL = 8,
} IslandsStatus;

/**
 * Opaque session handle.
 */
typedef struct IslandsSession IslandsSession;

/**
 * Inference callback. Write a NUL-terminated `CATEGORY;SUMMARY` line into
 * `out` (capacity `out_len`) and return 0; return 1 for a timeout and any
 * other value for a failure.
 */
typedef int32_t (*IslandsInferFn)(void *user_data,
                                  const char *prompt,
                                  const char *transcript,
                                  char *out,
                                  size_t out_len);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * call on the same thread; do not free.
 */
const char *islands_last_error_message(void);

/**
 * Creates a session. `topic` is a preset name or a topic file path;
 * `log_path` may be null for an in-memory session. Categorization uses the
 * topic's keyword table until a callback is installed.
 *
 * # Safety
 * String arguments must be null or valid NUL-terminated strings; `out`
 * must be a valid pointer.
 */
enum IslandsStatus islands_session_new(const char *topic,
                                       const char *log_path,
                                       struct IslandsSession **out);

/**
 * Routes categorization through `callback`. Passing a null callback
 * restores the keyword table.
 *
 * # Safety
 * `session` must come from [`islands_session_new`]; `user_data` must stay
 * valid for as long as the callback is installed.
 */
enum IslandsStatus islands_session_set_inference(struct IslandsSession *session,
                                                 IslandsInferFn callback,
                                                 void *user_data);

/**
 * # Safety
 * `session` must be null or come from [`islands_session_new`], and must not
 * be used afterwards.
 */
void islands_session_free(struct IslandsSession *session);

/**
 * Submits an utterance and categorizes it synchronously. The produced
 * events go to `out_events` (JSON array; may be null). Returns
 * `InferenceFailed` when the utterance was logged but not placed.
 *
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_submit(struct IslandsSession *session,
                                  const char *transcript,
                                  double t,
                                  char **out_events);

/**
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_dive_in(struct IslandsSession *session,
                                   uint32_t island_id,
                                   double t,
                                   char **out_events);

/**
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_dive_out(struct IslandsSession *session, double t, char **out_events);

/**
 * Activates the orb leading to island `orb_id`.
 *
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_trigger(struct IslandsSession *session,
                                   uint32_t orb_id,
                                   double t,
                                   char **out_events);

/**
 * Tracked room-space pose. `out_events` receives an empty array when the
 * update was throttled.
 *
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_pose(struct IslandsSession *session,
                                double x,
                                double y,
                                double heading,
                                double t,
                                char **out_events);

/**
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_end(struct IslandsSession *session, double t, char **out_events);

/**
 * Current scene state as JSON.
 *
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_snapshot_json(struct IslandsSession *session, char **out);

/**
 * Events with seq greater than `since_seq`, as a JSON array.
 *
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_events_json(struct IslandsSession *session,
                                       uint64_t since_seq,
                                       char **out);

/**
 * Metrics for the session so far, as `name=value` lines.
 *
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_metrics_text(struct IslandsSession *session, char **out);

/**
 * Metrics for a session file, as `name=value` lines.
 *
 * # Safety
 * Pointers must be valid as described in the module docs.
 */
enum IslandsStatus islands_report_from_log(const char *path, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void islands_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISLANDS_H */
