/* cc examples/place.c -Iinclude -L../../target/release -lmigsched_ffi -lm -lpthread -ldl */
#include <stdio.h>
#include "migsched.h"

int main(void) {
    MigschedCluster *c = migsched_cluster_new(4, "mfi", false);
    if (!c) {
        fprintf(stderr, "%s\n", migsched_last_error());
        return 1;
    }
    const char *requests[] = {"1g.10gb", "3g.40gb", "2g.20gb", "1g.20gb", "7g.80gb"};
    for (uint64_t id = 0; id < 5; id++) {
        MigschedDecision d;
        if (migsched_cluster_schedule(c, requests[id], id, &d) != MIGSCHED_STATUS_OK) {
            fprintf(stderr, "%s\n", migsched_last_error());
            return 1;
        }
        if (d.accepted)
            printf("%-8s -> gpu %zu index %zu\n", requests[id], d.gpu_id, d.start_index);
        else
            printf("%-8s -> rejected\n", requests[id]);
    }
    char occ[9];
    for (size_t g = 0; g < migsched_cluster_len(c); g++) {
        migsched_cluster_occupancy(c, g, occ, sizeof occ);
        printf("gpu %zu %s\n", g, occ);
    }
    double sev;
    migsched_cluster_severity(c, &sev);
    printf("severity %.3f\n", sev);
    migsched_cluster_free(c);
    return 0;
}
