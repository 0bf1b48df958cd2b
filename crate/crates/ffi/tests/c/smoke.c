#include <stdio.h>
#include <math.h>
#include "delayq.h"

static const char *MODEL =
    "{\"k\":1,\"interarrival\":{\"family\":\"exponential\",\"rate\":1.0},"
    "\"delays\":[{\"family\":\"exponential\",\"rate\":1.0}],\"delta\":0.0,"
    "\"batch\":{\"kind\":\"constant\",\"values\":[1.0]}}";

int main(void) {
    DelayqModel *model = NULL;
    DelayqMoments *table = NULL;
    if (delayq_model_from_json(MODEL, &model) != DELAYQ_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", delayq_last_error_message());
        return 1;
    }
    if (delayq_moments_new(model, &table) != DELAYQ_STATUS_OK) return 2;
    const double want[] = {1.0, 2.0, 5.0, 15.0, 52.0};
    for (uint32_t n = 1; n <= 5; n++) {
        double chi = 0.0;
        if (delayq_chi(table, &n, 1, &chi) != DELAYQ_STATUS_OK) return 3;
        if (fabs(chi - want[n - 1]) > 1e-9 * want[n - 1]) return 4;
    }
    uint32_t bad[2] = {1, 1};
    double chi = 0.0;
    if (delayq_chi(table, bad, 2, &chi) != DELAYQ_STATUS_DIMENSION) return 5;
    if (delayq_last_error_message() == NULL) return 6;
    delayq_moments_free(table);
    delayq_model_free(model);
    printf("ok %s\n", delayq_version());
    return 0;
}
