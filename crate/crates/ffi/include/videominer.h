/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef VIDEOMINER_H
#define VIDEOMINER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VmAction {
  VM_ACTION_ACCEPT = 0,
  VM_ACTION_CONTINUE = 1,
  VM_ACTION_DELETE = 2,
  VM_ACTION_INVALID = 3,
} VmAction;

typedef enum VmFormat {
  VM_FORMAT_MAX = 0,
  VM_FORMAT_CORR = 1,
  VM_FORMAT_NONE = 2,
} VmFormat;

typedef enum VmStatus {
  VM_STATUS_OK = 0,
  VM_STATUS_NULL_POINTER = 1,
  VM_STATUS_INVALID_ARGUMENT = 2,
  VM_STATUS_INVALID_UTF8 = 3,
  VM_STATUS_BUFFER_TOO_SMALL = 4,
  VM_STATUS_DOMAIN = 5,
  VM_STATUS_PANIC = 99,
} VmStatus;

/*
 Grayscale frames accumulated in temporal order.
 */
typedef struct VmFrames VmFrames;

/*
 Linear softmax policy, 4 features by 3 actions.
 */
typedef struct VmPolicy VmPolicy;

/*
 Closed 1-based frame interval.
 */
typedef struct VmInterval {
  size_t start;
  size_t end;
} VmInterval;

/*
 Reward constants; see `vm_reward_config_default`.
 */
typedef struct VmRewardConfig {
  double delta_max;
  double delta_corr;
  double rho;
  double sigma;
  double l_target;
  double delta_d;
  double delta_a;
  double delta_c;
} VmRewardConfig;

typedef struct VmRewardBreakdown {
  double r_format;
  double r_length;
  double r_action;
  double r_tree;
  double r_total;
} VmRewardBreakdown;

typedef struct VmParsedOutput {
  enum VmFormat format;
  size_t length;
  enum VmAction action;
} VmParsedOutput;

/*
 One judged node for the objective: features are
 `[question cosine, depth / max_depth, ln(1 + frames), 1]`.
 */
typedef struct VmSample {
  double features[4];
  uint32_t action;
  double old_logprob;
  double advantage;
} VmSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty after a success.
 The pointer stays valid until the next library call on this thread.
 */
const char *vm_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *vm_version(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void vm_string_free(char *s);

struct VmFrames *vm_frames_new(void);

/*
 # Safety
 `frames` must come from `vm_frames_new` and not be used afterwards.
 */
void vm_frames_free(struct VmFrames *frames);

/*
 Appends a `width * height` 8-bit grayscale frame with original index
 `index`. Indices must strictly increase.

 # Safety
 `pixels` must point to `len` readable bytes.
 */
enum VmStatus vm_frames_push_gray(struct VmFrames *frames,
                                  size_t index,
                                  uint32_t width,
                                  uint32_t height,
                                  const uint8_t *pixels,
                                  size_t len);

/*
 # Safety
 `frames` must be a live handle.
 */
size_t vm_frames_len(const struct VmFrames *frames);

/*
 Splits the frames into `k` scenes at the largest histogram changes.
 Writes at most `capacity` intervals and the actual count to `out_len`;
 returns `BufferTooSmall` when `capacity` is insufficient.

 # Safety
 `out` must have room for `capacity` intervals.
 */
enum VmStatus vm_segment(const struct VmFrames *frames,
                         size_t k,
                         size_t min_event_frames,
                         struct VmInterval *out,
                         size_t capacity,
                         size_t *out_len);

/*
 DBSCAN over `n` row-major points of dimension `dim`. Labels are numbered
 by first appearance; with `drop_noise` set, noise points get -1,
 otherwise each becomes its own cluster.

 # Safety
 `points` must hold `n * dim` values and `labels` room for `n`.
 */
enum VmStatus vm_dbscan(const double *points,
                        size_t n,
                        size_t dim,
                        double eps,
                        size_t min_pts,
                        bool drop_noise,
                        int64_t *labels,
                        size_t *cluster_count);

struct VmRewardConfig vm_reward_config_default(void);

/*
 Node reward. `format` is a `VmFormat` value, `action` a `VmAction`
 value and `r_tree` is 0 or 1.

 # Safety
 `cfg` and `out` must be valid pointers.
 */
enum VmStatus vm_node_reward(const struct VmRewardConfig *cfg,
                             uint32_t format,
                             size_t length,
                             uint32_t action,
                             double r_tree,
                             struct VmRewardBreakdown *out);

/*
 `(delta_d + delta_a) / (2 * delta_c)`; `Domain` when `delta_c` is not positive.

 # Safety
 `cfg` and `out` must be valid pointers.
 */
enum VmStatus vm_growth_rate(const struct VmRewardConfig *cfg, double *out);

/*
 Population z-scores of `rewards`; all zeros when their spread is below
 `std_floor`. `out` may alias `rewards`.

 # Safety
 `rewards` and `out` must hold `n` values.
 */
enum VmStatus vm_group_advantages(const double *rewards, size_t n, double std_floor, double *out);

/*
 Classifies a raw policy response.

 # Safety
 `text` must be NUL-terminated; `out` must be valid.
 */
enum VmStatus vm_parse_node_output(const char *text_ptr, struct VmParsedOutput *out);

/*
 Policy with weights uniform in `[-scale, scale]` drawn from `seed`.
 */
struct VmPolicy *vm_policy_new_random(double scale, uint64_t seed);

/*
 Policy from 12 row-major weights (feature by action).

 # Safety
 `weights` must hold 12 values; `out` must be valid.
 */
enum VmStatus vm_policy_from_weights(const double *weights, struct VmPolicy **out);

/*
 Parses the JSON weight file format written by the command line tool.

 # Safety
 `json` must be NUL-terminated; `out` must be valid.
 */
enum VmStatus vm_policy_from_json(const char *json, struct VmPolicy **out);

/*
 Serializes the policy; free the result with `vm_string_free`.

 # Safety
 `policy` must be live; `out` must be valid.
 */
enum VmStatus vm_policy_to_json(const struct VmPolicy *policy, char **out);

/*
 Copies the 12 row-major weights into `out`.

 # Safety
 `out` must have room for 12 values.
 */
enum VmStatus vm_policy_weights(const struct VmPolicy *policy, double *out);

/*
 Action probabilities (accept, continue, delete) for one feature vector.

 # Safety
 `features` must hold 4 values and `out` room for 3.
 */
enum VmStatus vm_policy_probs(const struct VmPolicy *policy, const double *features, double *out);

/*
 # Safety
 `policy` must come from this library and not be used afterwards.
 */
void vm_policy_free(struct VmPolicy *policy);

/*
 Group objective `J` and the gradient of `-J` (12 row-major values).

 # Safety
 `samples` must hold `n` entries, `grad` room for 12 values.
 */
enum VmStatus vm_objective(const struct VmSample *samples,
                           size_t n,
                           const struct VmPolicy *policy,
                           const struct VmPolicy *reference,
                           double clip_eps,
                           double kl_beta,
                           double *objective,
                           double *grad);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* VIDEOMINER_H */
