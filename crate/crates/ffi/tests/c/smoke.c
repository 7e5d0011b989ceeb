#include <math.h>
#include <stdio.h>
#include <string.h>

#include "cpa.h"

int main(void) {
    CpaLinkBudget link = {0.5, 500e3, 0.0, 1500e-9, 0.1, 0.2, 1.0, 1.0, 0.002, 0.02};
    double g = 0.0;
    if (cpa_channel_gain(&link, 0, &g) != CPA_STATUS_OK || !(g > 0.0)) return 1;
    double pr = 10.0 * log10(link.tx_power_watts * g * g);
    if (fabs(pr + 36.94) > 0.01) return 2;

    uint8_t intent[3] = {1, 0, 0}, cap[3] = {0, 0, 1}, scale = 0;
    if (cpa_threat_scale(intent, cap, &scale) != CPA_STATUS_OK || scale != 7) return 3;

    CpaModel *m = NULL;
    if (cpa_model_load("/nonexistent.ckpt", &m) != CPA_STATUS_IO || m != NULL) return 4;
    char msg[128];
    if (cpa_last_error(msg, sizeof msg) == 0 || strlen(msg) == 0) return 5;
    if (cpa_threat_scale(NULL, cap, &scale) != CPA_STATUS_NULL_POINTER) return 6;
    cpa_model_free(NULL);
    printf("ok %s\n", cpa_version());
    return 0;
}
