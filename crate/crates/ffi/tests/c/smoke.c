#include <math.h>
#include <stdio.h>
#include "relay_placement.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "check failed at line %d: %s\n", __LINE__, #cond); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    RpParams params = rp_params_default(0.02, 0.5, 41.0);
    RpSolution *sol = NULL;
    CHECK(rp_solve(&params, &sol) == RP_STATUS_OK);
    double g = rp_solution_g_star(sol);
    size_t rows = rp_solution_boundary(sol, NULL, 0);
    CHECK(rows > 0);
    uint64_t boundary[4096];
    CHECK(rows <= 4096);
    rp_solution_boundary(sol, boundary, rows);

    RpEvaluation ev;
    CHECK(rp_evaluate_set(&params, boundary, rows, &ev) == RP_STATUS_OK);
    CHECK(fabs(ev.g - g) <= 1e-9 * g);

    RpSession *s = NULL;
    CHECK(rp_session_new(&params, &s) == RP_STATUS_OK);
    RpAdvice advice;
    double cost;
    for (uint64_t m = 1; m <= boundary[0]; m++) {
        CHECK(rp_session_step(s, RP_DIRECTION_EAST, false, RP_OVERRIDE_FOLLOW, &advice, &cost) == RP_STATUS_OK);
        CHECK(advice == (m == boundary[0] ? RP_ADVICE_PLACE : RP_ADVICE_CONTINUE));
    }
    RpSessionState st;
    CHECK(rp_session_state(s, &st) == RP_STATUS_OK);
    CHECK(st.relays == 1 && st.rel_m == 0 && st.abs_m == boundary[0]);

    params.p = 2.0;
    RpSolution *bad = NULL;
    CHECK(rp_solve(&params, &bad) == RP_STATUS_INVALID_PARAMETER);
    CHECK(bad == NULL);
    CHECK(rp_last_error_message() != NULL);

    rp_session_free(s);
    rp_solution_free(sol);
    printf("g* = %.6f, %zu rows\n", g, rows);
    return 0;
}
