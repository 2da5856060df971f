#ifndef PISTAM_H
#define PISTAM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PistamStatus {
  PISTAM_STATUS_OK = 0,
  PISTAM_STATUS_NULL_POINTER = 1,
  PISTAM_STATUS_INVALID_ARGUMENT = 2,
  PISTAM_STATUS_INVALID_ACTION = 3,
  PISTAM_STATUS_CORRUPTED_SNAPSHOT = 4,
  PISTAM_STATUS_PARSE = 5,
  PISTAM_STATUS_IO = 6,
  PISTAM_STATUS_UNTRAINED = 7,
  PISTAM_STATUS_BUFFER_TOO_SMALL = 8,
  PISTAM_STATUS_INTERNAL = 9,
} PistamStatus;

// A handover environment.
typedef struct PistamEnv PistamEnv;

// A trained policy.
typedef struct PistamPolicy PistamPolicy;

// Per-action affordance models.
typedef struct PistamSignature PistamSignature;

// A saved environment state.
typedef struct PistamSnapshot PistamSnapshot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The last error message of the calling thread. The pointer stays valid
// until the next failing call on the same thread.
const char *pistam_last_error(void);

uint32_t pistam_num_actions(void);

uint32_t pistam_state_dim(void);

// Static name of action `index`, or null when out of range.
const char *pistam_action_name(uint32_t index);

// # Safety
// `name` must be a NUL-terminated string and `out` writable.
enum PistamStatus pistam_action_from_name(const char *name, uint32_t *out);

// Resets a default-configured environment with distance drawn from
// `[delta_min, delta_max]`.
//
// # Safety
// `out` must be writable.
enum PistamStatus pistam_env_new(uint64_t seed,
                                 double delta_min,
                                 double delta_max,
                                 struct PistamEnv **out);

// Like [`pistam_env_new`] with an environment configuration in TOML.
//
// # Safety
// `config_toml` must be a NUL-terminated string and `out` writable.
enum PistamStatus pistam_env_new_with_config(const char *config_toml,
                                             uint64_t seed,
                                             double delta_min,
                                             double delta_max,
                                             struct PistamEnv **out);

// # Safety
// `env` must be null or a handle from `pistam_env_new*` not yet freed.
void pistam_env_free(struct PistamEnv *env);

// # Safety
// `env` must be a live handle.
enum PistamStatus pistam_env_step(struct PistamEnv *env, uint32_t action);

// Copies the state vector into `out[0..len]`; `len` must be at least the
// state dimension.
//
// # Safety
// `env` must be a live handle and `out` writable for `len` doubles.
enum PistamStatus pistam_env_state(const struct PistamEnv *env, double *out, size_t len);

// # Safety
// `env` must be a live handle and `out` writable.
enum PistamStatus pistam_env_reward(const struct PistamEnv *env, double *out);

// # Safety
// `env` must be a live handle and `out` writable.
enum PistamStatus pistam_env_is_success(const struct PistamEnv *env, bool *out);

// # Safety
// `env` must be a live handle and `out` writable.
enum PistamStatus pistam_env_snapshot(const struct PistamEnv *env, struct PistamSnapshot **out);

// # Safety
// `env` and `snapshot` must be live handles.
enum PistamStatus pistam_env_restore(struct PistamEnv *env, const struct PistamSnapshot *snapshot);

// Restores from a byte token written by [`pistam_snapshot_to_bytes`].
//
// # Safety
// `env` must be a live handle and `bytes` readable for `len` bytes.
enum PistamStatus pistam_env_restore_bytes(struct PistamEnv *env, const uint8_t *bytes, size_t len);

// # Safety
// `snapshot` must be null or a handle from `pistam_env_snapshot` not yet freed.
void pistam_snapshot_free(struct PistamSnapshot *snapshot);

// Serializes a snapshot. `out_len` always receives the token length; when
// `capacity` is smaller the call returns `BufferTooSmall` and writes
// nothing else, so a null `buf` with zero capacity queries the size.
//
// # Safety
// `snapshot` must be a live handle, `buf` writable for `capacity` bytes
// and `out_len` writable.
enum PistamStatus pistam_snapshot_to_bytes(const struct PistamSnapshot *snapshot,
                                           uint8_t *buf,
                                           size_t capacity,
                                           size_t *out_len);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum PistamStatus pistam_signature_load(const char *path, struct PistamSignature **out);

// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum PistamStatus pistam_signature_from_json(const char *json, struct PistamSignature **out);

// # Safety
// `signature` must be null or a handle not yet freed.
void pistam_signature_free(struct PistamSignature *signature);

// Affordance density of `action` at a state of `len` values.
//
// # Safety
// `signature` must be a live handle, `state` readable for `len` doubles
// and `out` writable.
enum PistamStatus pistam_signature_value(const struct PistamSignature *signature,
                                         const double *state,
                                         size_t len,
                                         uint32_t action,
                                         double *out);

// Legal action set at a state as a bit mask (bit `i` is action `i`).
// Below-threshold actions are admitted with probability `epsilon` from a
// stream seeded by `seed`.
//
// # Safety
// `signature` must be a live handle, `state` readable for `len` doubles
// and `out_bits` writable.
enum PistamStatus pistam_signature_legal(const struct PistamSignature *signature,
                                         const double *state,
                                         size_t len,
                                         double epsilon,
                                         uint64_t seed,
                                         uint32_t *out_bits);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum PistamStatus pistam_policy_load(const char *path, struct PistamPolicy **out);

// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum PistamStatus pistam_policy_from_json(const char *json, struct PistamPolicy **out);

// # Safety
// `policy` must be null or a handle not yet freed.
void pistam_policy_free(struct PistamPolicy *policy);

// The policy's action at a state of `len` values.
//
// # Safety
// `policy` must be a live handle, `state` readable for `len` doubles and
// `out` writable.
enum PistamStatus pistam_policy_act(const struct PistamPolicy *policy,
                                    const double *state,
                                    size_t len,
                                    uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PISTAM_H */
