#include <stdio.h>
#include <string.h>

#include "spotsched.h"

#define CHECK(call)                                                          \
    do {                                                                     \
        SpotschedStatus s_ = (call);                                         \
        if (s_ != SPOTSCHED_STATUS_OK) {                                     \
            const char *m_ = spotsched_last_error();                         \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, m_ ? m_ : ""); \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(void) {
    SpotschedCapacity cap;
    CHECK(spotsched_capacity(3.0, 80, 0.5, &cap));
    if (cap.k != 120 || cap.t != 160) return 2;

    SpotschedConfig *cfg = NULL;
    CHECK(spotsched_config_new("desk", &cfg));
    if (spotsched_config_set(cfg, "no-such-key", "1") != SPOTSCHED_STATUS_CONFIG) return 3;
    if (strstr(spotsched_last_error(), "no-such-key") == NULL) return 4;
    CHECK(spotsched_config_set(cfg, "generate", "horizon-s=3600"));
    CHECK(spotsched_config_set(cfg, "seed", "2"));

    SpotschedResult *res = NULL;
    CHECK(spotsched_run(cfg, NULL, &res));
    SpotschedStats st;
    CHECK(spotsched_result_stats(res, &st));
    if (st.tasks == 0 || st.k != 12) return 5;
    printf("tasks=%llu short_mean=%.3f\n", (unsigned long long)st.tasks, st.short_mean_s);

    spotsched_result_free(res);
    spotsched_config_free(cfg);
    return 0;
}
