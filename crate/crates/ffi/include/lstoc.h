#ifndef LSTOC_H
#define LSTOC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LstocStatus {
  LSTOC_STATUS_OK = 0,
  LSTOC_STATUS_NULL_POINTER = 1,
  LSTOC_STATUS_INVALID_UTF8 = 2,
  LSTOC_STATUS_SYNTAX = 3,
  LSTOC_STATUS_INVALID_ARGUMENT = 4,
  LSTOC_STATUS_EPISODE_DONE = 5,
  LSTOC_STATUS_IO = 6,
  LSTOC_STATUS_BUDGET = 7,
  LSTOC_STATUS_INTERNAL = 8,
  LSTOC_STATUS_PANIC = 9,
} LstocStatus;

// Environment with its current episode.
typedef struct LstocEnv LstocEnv;

// Compiled task machine.
typedef struct LstocFsm LstocFsm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on this thread.
const char *lstoc_last_error(void);

// # Safety
// `s` must come from this library and not have been freed.
void lstoc_string_free(char *s);

// Parses `formula` over lowercase letters and compiles it.
//
// # Safety
// `formula` must be a nul-terminated string; `out_fsm` must be writable.
enum LstocStatus lstoc_fsm_compile(const char *formula, struct LstocFsm **out_fsm);

// # Safety
// `fsm` must come from [`lstoc_fsm_compile`] and not have been freed.
void lstoc_fsm_free(struct LstocFsm *fsm);

// Does the machine accept the word, one symbol per character?
//
// # Safety
// `fsm` must be live; `word` nul-terminated; `out_accepted` writable.
enum LstocStatus lstoc_fsm_accepts(const struct LstocFsm *fsm,
                                   const char *word,
                                   bool *out_accepted);

// Is the label trace accepted, one state per character and `.` for an
// unlabeled state?
//
// # Safety
// `fsm` must be live; `trace` nul-terminated; `out_satisfied` writable.
enum LstocStatus lstoc_fsm_satisfies(const struct LstocFsm *fsm,
                                     const char *trace,
                                     bool *out_satisfied);

// The machine in DOT; free with [`lstoc_string_free`].
//
// # Safety
// `fsm` must be live; `out_dot` writable.
enum LstocStatus lstoc_fsm_dot(const struct LstocFsm *fsm, char **out_dot);

// Loads a bundled environment by name or a spec file by path.
//
// # Safety
// `name_or_path` nul-terminated; `out_env` writable.
enum LstocStatus lstoc_env_load(const char *name_or_path, struct LstocEnv **out_env);

// # Safety
// `env` must come from [`lstoc_env_load`] and not have been freed.
void lstoc_env_free(struct LstocEnv *env);

// Starts an episode and reports the agent cell.
//
// # Safety
// `env` must be live; `out_x` and `out_y` writable.
enum LstocStatus lstoc_env_reset(struct LstocEnv *env,
                                 uint64_t seed,
                                 uint32_t *out_x,
                                 uint32_t *out_y);

// Takes `action` (0 north, 1 south, 2 east, 3 west). `out_label` is -1 while
// the episode runs, then 1 on task completion and 0 at the horizon.
//
// # Safety
// `env` must be live; every out-pointer writable.
enum LstocStatus lstoc_env_step(struct LstocEnv *env,
                                uint32_t action,
                                uint32_t *out_x,
                                uint32_t *out_y,
                                bool *out_done,
                                int32_t *out_label);

// Grounds key states to the formula's symbols. `sequences_json` is an array
// of arrays of hex keys and `keys_json` an array of hex keys; the verdict is
// written as JSON.
//
// # Safety
// Strings nul-terminated; `out_json` writable.
enum LstocStatus lstoc_label_solve(const char *formula,
                                   const char *sequences_json,
                                   const char *keys_json,
                                   char **out_json);

// Runs the full method from a JSON run configuration and writes the report
// summary as JSON.
//
// # Safety
// `config_json` nul-terminated; `out_json` writable.
enum LstocStatus lstoc_run(const char *config_json, char **out_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* LSTOC_H */
