#ifndef ORSENSE_H
#define ORSENSE_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OrsStatus {
  ORS_STATUS_OK = 0,
  ORS_STATUS_NULL_POINTER = 1,
  ORS_STATUS_INVALID_ARGUMENT = 2,
  ORS_STATUS_IO = 3,
  ORS_STATUS_FORMAT = 4,
  ORS_STATUS_GENERATION = 5,
  ORS_STATUS_PANIC = 6,
} OrsStatus;

typedef enum OrsSizeClass {
  ORS_SIZE_CLASS_SMALL = 0,
  ORS_SIZE_CLASS_LARGE = 1,
} OrsSizeClass;

typedef enum OrsSensingMode {
  ORS_SENSING_MODE_MAS = 0,
  ORS_SENSING_MODE_IAS_SAS = 1,
  ORS_SENSING_MODE_IAS_FAS = 2,
  ORS_SENSING_MODE_IAS = 3,
  ORS_SENSING_MODE_DIAS = 4,
} OrsSensingMode;

typedef enum OrsPlannerMode {
  ORS_PLANNER_MODE_OR = 0,
  ORS_PLANNER_MODE_SS = 1,
} OrsPlannerMode;

typedef enum OrsFailure {
  ORS_FAILURE_NONE = 0,
  ORS_FAILURE_TARGET_NOT_DETECTED = 1,
  ORS_FAILURE_NO_GRASP = 2,
  ORS_FAILURE_NO_RETRIEVAL_PATH = 3,
  ORS_FAILURE_UNSOLVED = 4,
  ORS_FAILURE_REPLAY_INVALID = 5,
} OrsFailure;

/**
 * Episode configuration.
 */
typedef struct OrsConfig OrsConfig;

/**
 * Ground-truth shelf scene.
 */
typedef struct OrsScene OrsScene;

typedef struct OrsEpisodeSummary {
  bool success;
  /**
   * One of the OrsFailure values.
   */
  int32_t failure;
  uint32_t attempts;
  uint32_t objects_moved;
  uint32_t viewpoints;
  /**
   * Meters.
   */
  double relocation_distance;
  /**
   * Seconds.
   */
  double planning_time;
} OrsEpisodeSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *ors_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ors_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum OrsStatus ors_scene_generate(uint64_t seed,
                                  enum OrsSizeClass size_class,
                                  uint32_t n_obstacles,
                                  struct OrsScene **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum OrsStatus ors_scene_load(const char *path, struct OrsScene **out);

/**
 * # Safety
 * `scene` must come from this library; `path` must be NUL-terminated.
 */
enum OrsStatus ors_scene_save(const struct OrsScene *scene, const char *path);

/**
 * Number of objects including the target, or 0 for a null handle.
 *
 * # Safety
 * `scene` must be null or come from this library.
 */
size_t ors_scene_object_count(const struct OrsScene *scene);

/**
 * # Safety
 * `scene` must be null or a handle not yet freed.
 */
void ors_scene_free(struct OrsScene *scene);

/**
 * Default configuration: MAS sensing, OR planner, seed 0.
 */
struct OrsConfig *ors_config_new(void);

/**
 * Parses a TOML episode configuration; omitted fields keep their defaults.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` a valid handle slot.
 */
enum OrsStatus ors_config_from_toml(const char *text, struct OrsConfig **out);

/**
 * # Safety
 * `config` must come from this library.
 */
enum OrsStatus ors_config_set_modes(struct OrsConfig *config,
                                    enum OrsSensingMode sensing,
                                    enum OrsPlannerMode planner);

/**
 * Seed of the sensing random stream.
 *
 * # Safety
 * `config` must come from this library.
 */
enum OrsStatus ors_config_set_seed(struct OrsConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void ors_config_free(struct OrsConfig *config);

/**
 * Runs one episode on `scene`. A failed retrieval is a normal outcome
 * reported through `out`; the status only reflects API errors. When
 * `trace_path` is non-null the episode trace is written there.
 *
 * # Safety
 * Handles must come from this library, `out` must be writable, and
 * `trace_path` must be null or NUL-terminated.
 */
enum OrsStatus ors_run_episode(const struct OrsScene *scene,
                               const struct OrsConfig *config,
                               const char *trace_path,
                               struct OrsEpisodeSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORSENSE_H */
