#ifndef ONTODISTILL_H
#define ONTODISTILL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OdStatus {
  OD_STATUS_OK = 0,
  OD_STATUS_NULL_ARGUMENT = 1,
  OD_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed DOT, JSON or transcript input.
   */
  OD_STATUS_PARSE = 3,
  /**
   * Unknown task name or invalid configuration.
   */
  OD_STATUS_INVALID_ARGUMENT = 4,
  /**
   * An edit or operation the ontology refused.
   */
  OD_STATUS_ONTOLOGY = 5,
  /**
   * The command is not allowed in the task's current state.
   */
  OD_STATUS_INVALID_TRANSITION = 6,
  OD_STATUS_UNKNOWN_ITERATION = 7,
  /**
   * Gateway, prompt or repeated-failure errors while stepping.
   */
  OD_STATUS_EXECUTION = 8,
  OD_STATUS_IO = 9,
  OD_STATUS_PANIC = 10,
} OdStatus;

/**
 * An ontology value owned by the caller.
 */
typedef struct OdOntology OdOntology;

/**
 * A distillation session plus the gateway it steps through.
 */
typedef struct OdSession OdSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread; do not free.
 */
const char *od_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void od_string_free(char *s);

/**
 * Library version; static, do not free.
 */
const char *od_version(void);

/**
 * Parses a DOT hierarchy (`parent -> child` edges).
 *
 * # Safety
 * `dot` must be a NUL-terminated string; `out` must be writable.
 */
enum OdStatus od_ontology_from_dot(const char *dot, struct OdOntology **out);

/**
 * Reads a canonical ontology document (JSON).
 *
 * # Safety
 * `doc` must be a NUL-terminated string; `out` must be writable.
 */
enum OdStatus od_ontology_from_json(const char *doc, struct OdOntology **out);

/**
 * # Safety
 * `onto` must come from this library and not have been freed. Null is ignored.
 */
void od_ontology_free(struct OdOntology *onto);

/**
 * # Safety
 * `onto` must be a live handle; `out` must be writable.
 */
enum OdStatus od_ontology_to_dot(const struct OdOntology *onto, char **out);

/**
 * Canonical document, including its checksum.
 *
 * # Safety
 * `onto` must be a live handle; `out` must be writable.
 */
enum OdStatus od_ontology_to_json(const struct OdOntology *onto, char **out);

/**
 * Content checksum (hex sha256), independent of the version counter.
 *
 * # Safety
 * `onto` must be a live handle; `out` must be writable.
 */
enum OdStatus od_ontology_checksum(const struct OdOntology *onto, char **out);

/**
 * # Safety
 * `onto` must be a live handle; `out` must be writable.
 */
enum OdStatus od_ontology_concept_count(const struct OdOntology *onto, size_t *out);

/**
 * Validation report as JSON. `strict` non-zero selects the strict policy.
 *
 * # Safety
 * `onto` must be a live handle; `out` must be writable.
 */
enum OdStatus od_ontology_validate(const struct OdOntology *onto, int strict, char **out);

/**
 * Applies a JSON array of manual edits in place. On failure the ontology is
 * unchanged.
 *
 * # Safety
 * `onto` must be a live handle; `edits_json` a NUL-terminated string.
 */
enum OdStatus od_ontology_apply_edits(struct OdOntology *onto, const char *edits_json);

/**
 * Starts a session from `seed` (copied). `config_json` may be null for
 * defaults. The session answers from an empty replay transcript until
 * [`od_session_use_transcript`] or [`od_session_connect`] is called.
 *
 * # Safety
 * `domain` must be a NUL-terminated string, `seed` a live handle, `out` writable.
 */
enum OdStatus od_session_new(const char *domain,
                             const struct OdOntology *seed,
                             const char *config_json,
                             struct OdSession **out);

/**
 * Opens a saved session directory. Its transcript becomes the replay source.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` writable.
 */
enum OdStatus od_session_open(const char *dir, struct OdSession **out);

/**
 * # Safety
 * `s` must come from this library and not have been freed. Null is ignored.
 */
void od_session_free(struct OdSession *s);

/**
 * Answers future requests from a JSONL transcript.
 *
 * # Safety
 * `s` must be a live handle; `jsonl` a NUL-terminated string.
 */
enum OdStatus od_session_use_transcript(struct OdSession *s, const char *jsonl);

/**
 * Builds the gateway the session configuration describes (live or record
 * over HTTP, or replay of the current transcript).
 *
 * # Safety
 * `s` must be a live handle.
 */
enum OdStatus od_session_connect(struct OdSession *s);

/**
 * Executes one iteration of `task`; `out` receives the outcome as JSON.
 *
 * # Safety
 * `s` must be a live handle; `task_name` a NUL-terminated string; `out` writable.
 */
enum OdStatus od_session_step(struct OdSession *s, const char *task_name, char **out);

/**
 * Applies a control command such as `{"command":"revert","to_iteration":9}`;
 * `out` receives the task state as JSON.
 *
 * # Safety
 * `s` must be a live handle; string arguments NUL-terminated; `out` writable.
 */
enum OdStatus od_session_control(struct OdSession *s,
                                 const char *task_name,
                                 const char *command_json,
                                 char **out);

/**
 * Iteration log of `task` as JSON.
 *
 * # Safety
 * `s` must be a live handle; `task_name` NUL-terminated; `out` writable.
 */
enum OdStatus od_session_task(const struct OdSession *s, const char *task_name, char **out);

/**
 * Copies the committed ontology into a new handle.
 *
 * # Safety
 * `s` must be a live handle; `out` writable.
 */
enum OdStatus od_session_ontology(const struct OdSession *s, struct OdOntology **out);

/**
 * Writes the session and the gateway's transcript to `dir`.
 *
 * # Safety
 * `s` must be a live handle; `dir` NUL-terminated.
 */
enum OdStatus od_session_save(const struct OdSession *s, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ONTODISTILL_H */
