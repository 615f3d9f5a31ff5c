#include <math.h>
#include <stdio.h>
#include <string.h>

#include "ising_moments.h"

#define CHECK(expr)                                                        \
    do {                                                                   \
        IsmStatus s_ = (expr);                                             \
        if (s_ != ISM_STATUS_OK) {                                         \
            fprintf(stderr, "%s -> %d: %s\n", #expr, (int)s_,              \
                    ism_last_error() ? ism_last_error() : "");            \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    const char *json =
        "{\"p\": 3, \"couplings\": [[0, 1, 0.5], [1, 2, -0.3]],"
        " \"fields\": [0.1, 0.0, -0.2]}";
    IsmModel *model = NULL;
    IsmMomentTable *table = NULL;
    IsmEstimate *est = NULL;
    IsmEdgeSet *edges = NULL;

    CHECK(ism_model_from_json(json, &model));
    CHECK(ism_table_exact(model, 3, &table));

    IsmScheduleOptions opts = ism_schedule_options_default();
    opts.d = 12;
    opts.iterations = 3000;
    opts.eta = 1.0;
    CHECK(ism_learn_couplings(table, 1.0, opts, &est));

    double j01 = 0.0, j02 = 0.0;
    CHECK(ism_estimate_coupling(est, 0, 1, &j01));
    CHECK(ism_estimate_coupling(est, 0, 2, &j02));
    if (fabs(j01 - 0.5) > 1e-2 || fabs(j02) > 1e-2) {
        fprintf(stderr, "bad couplings %g %g\n", j01, j02);
        return 1;
    }

    CHECK(ism_threshold_edges(est, 0.3, &edges));
    if (ism_edges_len(edges) != 2) {
        fprintf(stderr, "expected 2 edges, got %zu\n", ism_edges_len(edges));
        return 1;
    }
    char *text = NULL;
    CHECK(ism_edges_to_json(edges, &text));
    if (strcmp(text, "[[0,1],[1,2]]") != 0) {
        fprintf(stderr, "edges json %s\n", text);
        return 1;
    }
    ism_string_free(text);

    size_t idx[2] = {0, 1};
    double m = 0.0;
    if (ism_table_query(table, idx, 2, &m) != ISM_STATUS_OK) return 1;
    size_t deep[4] = {0, 1, 2, 0};
    if (ism_table_query(table, deep, 4, &m) != ISM_STATUS_OK) return 1;

    ism_edges_free(edges);
    ism_estimate_free(est);
    ism_table_free(table);
    ism_model_free(model);
    printf("ok\n");
    return 0;
}
