#ifndef ITAL_H
#define ITAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ItalStatus {
  ITAL_STATUS_OK = 0,
  ITAL_STATUS_NULL_POINTER = 1,
  ITAL_STATUS_INVALID_ARGUMENT = 2,
  ITAL_STATUS_SHAPE_MISMATCH = 3,
  ITAL_STATUS_INVALID_INDEX = 4,
  ITAL_STATUS_NON_FINITE = 5,
  ITAL_STATUS_NOT_CONVERGED = 6,
  ITAL_STATUS_NOT_FOUND = 7,
  ITAL_STATUS_FINISHED = 8,
  ITAL_STATUS_BUFFER_TOO_SMALL = 9,
  ITAL_STATUS_PANIC = 99,
} ItalStatus;

typedef enum ItalLoss {
  ITAL_LOSS_SQUARED = 0,
  ITAL_LOSS_CROSS_ENTROPY = 1,
} ItalLoss;

/**
 * A gridworld with the standard noisy transitions and a fixed reward map.
 */
typedef struct ItalGridworld ItalGridworld;

/**
 * A gradient learner over a linear model with `rows x (dim + 1)` parameters.
 */
typedef struct ItalLearner ItalLearner;

typedef struct ItalSession ItalSession;

/**
 * Options for [`ital_learner_new`].
 */
typedef struct ItalLearnerOptions {
  enum ItalLoss loss;
  /**
   * Ignored for the squared loss.
   */
  size_t classes;
  size_t dim;
  double lambda;
  double eta;
  double beta;
} ItalLearnerOptions;

/**
 * One displayed arrow: grid `state` (row-major) and action 0..4 for up, down, left, right.
 */
typedef struct ItalArrow {
  uint32_t index;
  uint32_t state;
  uint32_t row;
  uint32_t col;
  uint32_t action;
} ItalArrow;

typedef struct ItalMetrics {
  uint64_t step;
  double distance;
  double policy_tv;
  double expected_return;
} ItalMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Why the most recent call on this thread failed, or null if it succeeded.
 * Valid until the next call into the library on the same thread.
 */
const char *ital_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ital_version(void);

/**
 * Writes `softmax(beta * volumes)` into `out`.
 *
 * # Safety
 * `volumes` must point to `len` doubles and `out` to room for `len` doubles.
 */
enum ItalStatus ital_selection_distribution(const double *volumes,
                                            size_t len,
                                            double beta,
                                            double *out);

/**
 * Creates a learner. `init` may be null for zero parameters; otherwise it
 * must hold `rows * (dim + 1)` values, row-major with the bias last.
 *
 * # Safety
 * `opts` and `out` must be valid; `init`, if not null, must point to
 * `init_len` doubles.
 */
enum ItalStatus ital_learner_new(const struct ItalLearnerOptions *opts,
                                 const double *init,
                                 size_t init_len,
                                 struct ItalLearner **out);

/**
 * # Safety
 * `learner` must come from [`ital_learner_new`] and not be used afterwards.
 */
void ital_learner_free(struct ItalLearner *learner);

/**
 * Number of parameters, or 0 for a null handle.
 *
 * # Safety
 * `learner` must be null or a live handle.
 */
size_t ital_learner_params_len(const struct ItalLearner *learner);

/**
 * Copies the current parameters into `out`.
 *
 * # Safety
 * `learner` must be a live handle and `out` must hold `cap` doubles.
 */
enum ItalStatus ital_learner_params(const struct ItalLearner *learner, double *out, size_t cap);

/**
 * One learner update on a batch of `batch_len` examples (`features` is
 * row-major `batch_len x dim`). With `subset_len == 0` this is a plain
 * gradient step on example `chosen`; otherwise it is the teacher-aware
 * update using `subset` as the unchosen examples.
 *
 * # Safety
 * `learner` must be a live handle; the arrays must have the stated lengths.
 */
enum ItalStatus ital_learner_step(struct ItalLearner *learner,
                                  const double *features,
                                  const double *labels,
                                  size_t batch_len,
                                  size_t chosen,
                                  const size_t *subset,
                                  size_t subset_len);

/**
 * Feedback teaching volumes of every example in the batch for a target
 * model given as a parameter array shaped like the learner's.
 *
 * # Safety
 * `learner` must be a live handle; `target` must hold `target_len` doubles,
 * the batch arrays their stated lengths, and `out` room for `batch_len`.
 */
enum ItalStatus ital_learner_feedback_volumes(const struct ItalLearner *learner,
                                              const double *target,
                                              size_t target_len,
                                              const double *features,
                                              const double *labels,
                                              size_t batch_len,
                                              double *out);

/**
 * # Safety
 * `out` must be valid.
 */
enum ItalStatus ital_gridworld_new(size_t width,
                                   size_t height,
                                   double discount,
                                   struct ItalGridworld **out);

/**
 * # Safety
 * `world` must come from [`ital_gridworld_new`] and not be used afterwards.
 */
void ital_gridworld_free(struct ItalGridworld *world);

/**
 * Number of grids, or 0 for a null handle.
 *
 * # Safety
 * `world` must be null or a live handle.
 */
size_t ital_gridworld_num_states(const struct ItalGridworld *world);

/**
 * Overrides the soft planner's sharpness `k` and Boltzmann rationality.
 *
 * # Safety
 * `world` must be a live handle.
 */
enum ItalStatus ital_gridworld_set_planner(struct ItalGridworld *world,
                                           double sharpness,
                                           double rationality);

/**
 * Soft state-action values for per-grid `rewards`, written row-major
 * `states x 4` (up, down, left, right) into `q_out`.
 *
 * # Safety
 * `world` must be a live handle; `rewards` must hold one value per grid and
 * `q_out` room for `4 * states`.
 */
enum ItalStatus ital_gridworld_soft_q(const struct ItalGridworld *world,
                                      const double *rewards,
                                      size_t rewards_len,
                                      double *q_out,
                                      size_t q_cap);

/**
 * Boltzmann policy for `rewards`, row-major `states x 4`.
 *
 * # Safety
 * As for [`ital_gridworld_soft_q`].
 */
enum ItalStatus ital_gridworld_policy(const struct ItalGridworld *world,
                                      const double *rewards,
                                      size_t rewards_len,
                                      double *out,
                                      size_t cap);

/**
 * Starts a teaching session on a built-in map (`"A"` to `"E"`). `aware`
 * selects the teacher-aware learner; `beta` and `eta` override the defaults
 * when positive.
 *
 * # Safety
 * `map_id` must be a NUL-terminated string and `out` valid.
 */
enum ItalStatus ital_session_new(const char *map_id,
                                 bool aware,
                                 uint64_t seed,
                                 double beta,
                                 double eta,
                                 struct ItalSession **out);

/**
 * # Safety
 * `session` must come from [`ital_session_new`] and not be used afterwards.
 */
void ital_session_free(struct ItalSession *session);

/**
 * Writes the current candidates into `out` and their count into `written`.
 * A finished session has no candidates.
 *
 * # Safety
 * `session` must be a live handle, `out` must hold `cap` arrows and
 * `written` must be valid.
 */
enum ItalStatus ital_session_candidates(const struct ItalSession *session,
                                        struct ItalArrow *out,
                                        size_t cap,
                                        size_t *written);

/**
 * Applies the teacher's choice of candidate and reports the new metrics.
 * `metrics` may be null.
 *
 * # Safety
 * `session` must be a live handle; `metrics` null or valid.
 */
enum ItalStatus ital_session_select(struct ItalSession *session,
                                    size_t candidate_index,
                                    struct ItalMetrics *metrics);

/**
 * Copies the learner's current reward estimates (one per grid).
 *
 * # Safety
 * `session` must be a live handle and `out` must hold `cap` doubles.
 */
enum ItalStatus ital_session_estimates(const struct ItalSession *session, double *out, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ITAL_H */
