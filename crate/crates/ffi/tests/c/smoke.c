#include <stdio.h>
#include <string.h>

#include "mtc.h"

static const char *LOST_UPDATE =
    "{\"id\":1,\"session\":\"s1\",\"status\":\"committed\",\"ops\":[{\"t\":\"r\",\"k\":\"x\",\"v\":0},{\"t\":\"w\",\"k\":\"x\",\"v\":1}]}\n"
    "{\"id\":2,\"session\":\"s2\",\"status\":\"committed\",\"ops\":[{\"t\":\"r\",\"k\":\"x\",\"v\":0},{\"t\":\"w\",\"k\":\"x\",\"v\":2}]}\n";

int main(void) {
    MtcHistory *h = NULL;
    if (mtc_history_parse(LOST_UPDATE, &h) != MTC_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", mtc_last_error_message());
        return 1;
    }
    if (mtc_history_txn_count(h) != 2) {
        return 2;
    }

    MtcVerdict *v = NULL;
    if (mtc_check(h, MTC_LEVEL_SI, &v) != MTC_STATUS_OK) {
        fprintf(stderr, "check: %s\n", mtc_last_error_message());
        return 3;
    }
    char *json = mtc_verdict_json(v);
    printf("%d %s\n", mtc_verdict_ok(v), json);
    int fork = strstr(json, "\"type\":\"fork\"") != NULL;
    mtc_string_free(json);
    mtc_verdict_free(v);

    if (mtc_check(h, MTC_LEVEL_SSER, &v) != MTC_STATUS_ERR_INPUT) {
        return 4;
    }
    mtc_history_free(h);
    return fork ? 0 : 5;
}
