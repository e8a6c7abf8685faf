#include <stdio.h>
#include <string.h>

#include "pcpshare.h"

#define CHECK(expr)                                                  \
    do {                                                             \
        if (!(expr)) {                                               \
            char msg[256];                                           \
            pcp_last_error(msg, sizeof msg);                         \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,  \
                    #expr, msg);                                     \
            return 1;                                                \
        }                                                            \
    } while (0)

static const char *SCENARIO =
    "{\"k\":0,\"area\":100,"
    "\"buyers\":[{\"id\":1,\"x\":0,\"y\":0,\"price\":10,\"d_max\":50,"
    "\"demands\":[],\"demand_prices\":[],"
    "\"weights\":{\"w_d\":1,\"w_r\":1,\"w_alpha\":[]},\"arrival_round\":0}],"
    "\"sellers\":[{\"id\":7,\"x\":3,\"y\":4,\"price\":8,"
    "\"demands\":[],\"demand_prices\":[],\"arrival_round\":0}]}";

int main(void) {
    PcpKeyPair *kp = NULL;
    PcpCiphertext *a = NULL, *b = NULL, *sum = NULL;
    int64_t v = 0;

    CHECK(pcp_keypair_generate(128, PCP_MODE_N_PLUS_ONE, 5, &kp) == PCP_STATUS_OK);
    CHECK(pcp_encrypt_i64(kp, -40, &a) == PCP_STATUS_OK);
    CHECK(pcp_encrypt_i64(kp, 2, &b) == PCP_STATUS_OK);
    CHECK(pcp_he_add(kp, a, b, &sum) == PCP_STATUS_OK);
    CHECK(pcp_decrypt_i64(kp, sum, &v) == PCP_STATUS_OK);
    CHECK(v == -38);
    CHECK(pcp_keypair_generate(128, 42, 5, NULL) == PCP_STATUS_INVALID_ARGUMENT);

    PcpMarketConfig cfg = pcp_market_config_default();
    cfg.bits = 128;
    PcpMarket *m = NULL;
    size_t n = 0;
    PcpMatch hit;
    CHECK(pcp_market_new(SCENARIO, &cfg, &m) == PCP_STATUS_OK);
    CHECK(pcp_market_run(m) == PCP_STATUS_OK);
    CHECK(pcp_market_match_count(m, &n) == PCP_STATUS_OK);
    CHECK(n == 1);
    CHECK(pcp_market_match_get(m, 0, &hit) == PCP_STATUS_OK);
    /* distance 5, price difference 2 */
    CHECK(hit.buyer_id == 1 && hit.seller_id == 7 && hit.w_index_lo == 7);

    pcp_market_free(m);
    pcp_ciphertext_free(a);
    pcp_ciphertext_free(b);
    pcp_ciphertext_free(sum);
    pcp_keypair_free(kp);
    printf("ok %s\n", pcp_version());
    return 0;
}
