#ifndef MIGSCHED_H
#define MIGSCHED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible call.
typedef enum MigschedStatus {
  MIGSCHED_STATUS_OK = 0,
  MIGSCHED_STATUS_NULL_POINTER = 1,
  MIGSCHED_STATUS_INVALID_ARGUMENT = 2,
  MIGSCHED_STATUS_UNKNOWN_PROFILE = 3,
  MIGSCHED_STATUS_INFEASIBLE_INDEX = 4,
  MIGSCHED_STATUS_SLICE_CONFLICT = 5,
  MIGSCHED_STATUS_UNKNOWN_INSTANCE = 6,
  MIGSCHED_STATUS_BUFFER_TOO_SMALL = 7,
  MIGSCHED_STATUS_INTERNAL = 8,
} MigschedStatus;

// Opaque cluster handle.
typedef struct MigschedCluster MigschedCluster;

// Outcome of `migsched_cluster_schedule`. `gpu_id` and `start_index` are only set when accepted.
typedef struct MigschedDecision {
  bool accepted;
  size_t gpu_id;
  size_t start_index;
} MigschedDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a cluster of `gpus` empty GPUs driven by `scheduler` ("mfi", "ff", "rr", "bf-bi", "wf-bi").
// Returns null on an unknown scheduler name or zero GPUs.
//
// # Safety
// `scheduler` must be null or a nul-terminated string.
struct MigschedCluster *migsched_cluster_new(size_t gpus,
                                             const char *scheduler,
                                             bool strict_first_choice);

// # Safety
// `cluster` must be null or a handle from `migsched_cluster_new` not yet freed.
void migsched_cluster_free(struct MigschedCluster *cluster);

// Number of GPUs; 0 for a null handle.
//
// # Safety
// `cluster` must be null or a live handle.
size_t migsched_cluster_len(const struct MigschedCluster *cluster);

// Asks the handle's scheduler to place `profile` and commits an accepted placement under `workload_id`.
//
// # Safety
// `cluster` must be a live handle, `profile` a nul-terminated string and `out` writable.
enum MigschedStatus migsched_cluster_schedule(struct MigschedCluster *cluster,
                                              const char *profile,
                                              uint64_t workload_id,
                                              struct MigschedDecision *out);

// Places `profile` at an explicit position, bypassing the scheduler.
//
// # Safety
// `cluster` must be a live handle and `profile` a nul-terminated string.
enum MigschedStatus migsched_cluster_allocate(struct MigschedCluster *cluster,
                                              size_t gpu_id,
                                              size_t start_index,
                                              const char *profile,
                                              uint64_t workload_id);

// # Safety
// `cluster` must be a live handle.
enum MigschedStatus migsched_cluster_release(struct MigschedCluster *cluster,
                                             size_t gpu_id,
                                             uint64_t workload_id);

// Mean fragmentation score over all GPUs.
//
// # Safety
// `cluster` must be a live handle and `out` writable.
enum MigschedStatus migsched_cluster_severity(const struct MigschedCluster *cluster, double *out);

// Writes the occupancy of one GPU as 8 characters plus a nul (`.` free, `#` allocated).
// `buf` must hold at least 9 bytes.
//
// # Safety
// `cluster` must be a live handle and `buf` writable for `len` bytes.
enum MigschedStatus migsched_cluster_occupancy(const struct MigschedCluster *cluster,
                                               size_t gpu_id,
                                               char *buf,
                                               size_t len);

// Fragmentation score of an 8-character occupancy string.
//
// # Safety
// `occupancy` must be a nul-terminated string and `out` writable.
enum MigschedStatus migsched_frag_score(const char *occupancy, uint32_t *out);

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *migsched_last_error(void);

const char *migsched_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIGSCHED_H */
