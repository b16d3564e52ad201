#ifndef RELAY_PLACEMENT_H
#define RELAY_PLACEMENT_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_NULL_POINTER = 1,
  RP_STATUS_INVALID_PARAMETER = 2,
  RP_STATUS_INFEASIBLE = 3,
  RP_STATUS_INVALID_SET = 4,
  RP_STATUS_INVALID_STEP = 5,
  RP_STATUS_SESSION_ENDED = 6,
  RP_STATUS_SOLVER_FAILURE = 7,
  RP_STATUS_PANIC = 8,
} RpStatus;

typedef enum RpSolutionKind {
  RP_SOLUTION_KIND_PURE = 0,
  RP_SOLUTION_KIND_MIXED = 1,
  RP_SOLUTION_KIND_UNCONSTRAINED_AT_ZERO = 2,
} RpSolutionKind;

typedef enum RpDirection {
  RP_DIRECTION_EAST = 0,
  RP_DIRECTION_NORTH = 1,
  /**
   * No move; only valid together with `ended`.
   */
  RP_DIRECTION_STAY = 2,
} RpDirection;

typedef enum RpOverride {
  RP_OVERRIDE_FOLLOW = 0,
  RP_OVERRIDE_PLACE = 1,
  RP_OVERRIDE_SKIP = 2,
} RpOverride;

typedef enum RpAdvice {
  RP_ADVICE_CONTINUE = 0,
  RP_ADVICE_PLACE = 1,
  RP_ADVICE_SOURCE_PLACED = 2,
} RpAdvice;

/**
 * Relay-budget-constrained policy.
 */
typedef struct RpConstrained RpConstrained;

/**
 * A live deployment following a fixed placement set.
 */
typedef struct RpSession RpSession;

/**
 * Optimal unconstrained policy.
 */
typedef struct RpSolution RpSolution;

/**
 * Corridor, cost and relay price.
 */
typedef struct RpParams {
  double p;
  double q;
  double lambda;
  double eta;
  double p_m;
  double gamma;
} RpParams;

/**
 * Exact evaluation of a placement set.
 */
typedef struct RpEvaluation {
  double g;
  double expected_relays;
  double expected_cost;
  double end_mass;
  double continue_mass;
  double identity_residual;
} RpEvaluation;

/**
 * Summary of a constrained solution.
 */
typedef struct RpConstrainedInfo {
  enum RpSolutionKind kind;
  double lambda;
  /**
   * Probability of using the over-budget set.
   */
  double alpha;
  double achieved_relays;
  double achieved_cost;
} RpConstrainedInfo;

/**
 * Snapshot of a session's counters.
 */
typedef struct RpSessionState {
  /**
   * Offset from the last relay.
   */
  uint64_t rel_m;
  uint64_t rel_n;
  uint64_t abs_m;
  uint64_t abs_n;
  uint64_t steps;
  uint64_t relays;
  double accumulated_cost;
  /**
   * `accumulated_cost + lambda * relays`.
   */
  double objective;
  bool ended;
} RpSessionState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *rp_last_error_message(void);

/**
 * Parameters with the default cost (`p_m = 0.1`, `gamma = 0.01`, `eta = 2`).
 */
struct RpParams rp_params_default(double p, double q, double lambda);

/**
 * Solves the relay-priced problem.
 *
 * # Safety
 * `params` must point to a valid `RpParams`; `out` must be writable.
 */
enum RpStatus rp_solve(const struct RpParams *params, struct RpSolution **out);

/**
 * # Safety
 * `sol` must come from [`rp_solve`] and not be used afterwards.
 */
void rp_solution_free(struct RpSolution *sol);

/**
 * `g*`, or NaN for a null handle.
 *
 * # Safety
 * `sol` must be null or a live handle.
 */
double rp_solution_g_star(const struct RpSolution *sol);

/**
 * # Safety
 * `sol` must be null or a live handle.
 */
size_t rp_solution_iterations(const struct RpSolution *sol);

/**
 * # Safety
 * `sol` must be null or a live handle; `out` must be writable.
 */
enum RpStatus rp_solution_evaluation(const struct RpSolution *sol, struct RpEvaluation *out);

/**
 * Writes up to `cap` boundary rows `m*(0), m*(1), ...` into `out` and
 * returns the total row count. Pass a null `out` to query the length.
 *
 * # Safety
 * `sol` must be null or a live handle; `out` must hold `cap` values.
 */
size_t rp_solution_boundary(const struct RpSolution *sol, uint64_t *out, size_t cap);

/**
 * Evaluates the set with boundary rows `rows[..len]`.
 *
 * # Safety
 * `params` must be valid, `rows` must hold `len` values, `out` writable.
 */
enum RpStatus rp_evaluate_set(const struct RpParams *params,
                              const uint64_t *rows,
                              size_t len,
                              struct RpEvaluation *out);

/**
 * Solves for the least-cost policy with at most `rho` expected relays;
 * `params.lambda` is ignored.
 *
 * # Safety
 * `params` must be valid; `out` must be writable.
 */
enum RpStatus rp_solve_constrained(const struct RpParams *params,
                                   double rho,
                                   struct RpConstrained **out);

/**
 * # Safety
 * `sol` must come from [`rp_solve_constrained`] and not be used afterwards.
 */
void rp_constrained_free(struct RpConstrained *sol);

/**
 * # Safety
 * `sol` must be a live handle; `out` must be writable.
 */
enum RpStatus rp_constrained_info(const struct RpConstrained *sol, struct RpConstrainedInfo *out);

/**
 * Boundary rows of the under-budget set (`over == false`) or the
 * over-budget set; returns 0 when there is no over-budget set.
 *
 * # Safety
 * `sol` must be null or a live handle; `out` must hold `cap` values.
 */
size_t rp_constrained_boundary(const struct RpConstrained *sol,
                               bool over,
                               uint64_t *out,
                               size_t cap);

/**
 * Starts a session that follows the optimal set for `params`.
 *
 * # Safety
 * `params` must be valid; `out` must be writable.
 */
enum RpStatus rp_session_new(const struct RpParams *params, struct RpSession **out);

/**
 * Starts a session that follows the set with boundary rows `rows[..len]`.
 *
 * # Safety
 * `params` must be valid, `rows` must hold `len` values, `out` writable.
 */
enum RpStatus rp_session_new_with_set(const struct RpParams *params,
                                      const uint64_t *rows,
                                      size_t len,
                                      struct RpSession **out);

/**
 * # Safety
 * `s` must come from `rp_session_new*` and not be used afterwards.
 */
void rp_session_free(struct RpSession *s);

/**
 * Reports one step of the path. The advice for the reached point is
 * written to `advice`; the hop cost charged by this step (zero unless a
 * relay or the source is placed) to `step_cost`. Either may be null.
 *
 * # Safety
 * `s` must be a live handle; `advice` and `step_cost` null or writable.
 */
enum RpStatus rp_session_step(struct RpSession *s,
                              enum RpDirection direction,
                              bool ended,
                              enum RpOverride override_action,
                              enum RpAdvice *advice,
                              double *step_cost);

/**
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum RpStatus rp_session_state(const struct RpSession *s, struct RpSessionState *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELAY_PLACEMENT_H */
