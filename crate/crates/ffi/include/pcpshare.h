#ifndef PCPSHARE_H
#define PCPSHARE_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PCP_MODE_RANDOM_G 0

#define PCP_MODE_N_PLUS_ONE 1

#define PCP_POLICY_RELAXED 0

#define PCP_POLICY_STRICT 1

#define PCP_KEY_ID_LEN 16

/**
 * Result code of every fallible call.
 */
typedef enum PcpStatus {
  PCP_STATUS_OK = 0,
  PCP_STATUS_NULL_POINTER = 1,
  PCP_STATUS_INVALID_ARGUMENT = 2,
  PCP_STATUS_KEY_MISMATCH = 3,
  PCP_STATUS_OUT_OF_RANGE = 4,
  PCP_STATUS_CRYPTO = 5,
  PCP_STATUS_PROTOCOL = 6,
  PCP_STATUS_BUFFER_TOO_SMALL = 7,
  PCP_STATUS_PANIC = 8,
} PcpStatus;

typedef struct PcpCiphertext PcpCiphertext;

/**
 * A Paillier key pair plus the randomness used for its encryptions.
 */
typedef struct PcpKeyPair PcpKeyPair;

typedef struct PcpMarket PcpMarket;

typedef struct PcpMarketConfig {
  /**
   * Round key size in bits.
   */
  uint32_t bits;
  /**
   * `PCP_POLICY_*`.
   */
  uint32_t policy;
  uint32_t proxies;
  uint64_t seed;
} PcpMarketConfig;

/**
 * One match. The index is 128 bits wide, split into halves.
 */
typedef struct PcpMatch {
  uint32_t buyer_id;
  uint32_t seller_id;
  uint32_t round;
  uint64_t w_index_hi;
  uint64_t w_index_lo;
} PcpMatch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length including
 * the terminator, so a caller can size the buffer and retry.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t pcp_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pcp_version(void);

/**
 * Generates a key pair. `mode` is one of `PCP_MODE_*`. The seed drives both
 * key generation and later encryptions under this handle.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PcpStatus pcp_keypair_generate(uint32_t bits,
                                    uint32_t mode,
                                    uint64_t seed,
                                    struct PcpKeyPair **out);

/**
 * # Safety
 * `kp` must come from `pcp_keypair_generate` and not be freed twice.
 */
void pcp_keypair_free(struct PcpKeyPair *kp);

/**
 * Writes the `PCP_KEY_ID_LEN`-byte key fingerprint to `out`.
 *
 * # Safety
 * `kp` must be a live handle; `out` must hold `PCP_KEY_ID_LEN` bytes.
 */
enum PcpStatus pcp_keypair_key_id(const struct PcpKeyPair *kp, uint8_t *out);

/**
 * Encrypts a signed value.
 *
 * # Safety
 * `kp` must be a live handle; `out` must be a valid pointer.
 */
enum PcpStatus pcp_encrypt_i64(struct PcpKeyPair *kp, int64_t value, struct PcpCiphertext **out);

/**
 * Decrypts to a signed value. Fails with `OUT_OF_RANGE` if the plaintext
 * does not fit in 64 bits.
 *
 * # Safety
 * `kp` and `ct` must be live handles; `out` must be a valid pointer.
 */
enum PcpStatus pcp_decrypt_i64(const struct PcpKeyPair *kp,
                               const struct PcpCiphertext *ct,
                               int64_t *out);

/**
 * Ciphertext of the sum of the two plaintexts.
 *
 * # Safety
 * All handles must be live; `out` must be a valid pointer.
 */
enum PcpStatus pcp_he_add(const struct PcpKeyPair *kp,
                          const struct PcpCiphertext *a,
                          const struct PcpCiphertext *b,
                          struct PcpCiphertext **out);

/**
 * Ciphertext of `a - b`.
 *
 * # Safety
 * All handles must be live; `out` must be a valid pointer.
 */
enum PcpStatus pcp_he_sub(const struct PcpKeyPair *kp,
                          const struct PcpCiphertext *a,
                          const struct PcpCiphertext *b,
                          struct PcpCiphertext **out);

/**
 * Serializes a ciphertext. `written` always receives the encoded length; if
 * `len` is smaller the call returns `BUFFER_TOO_SMALL` and writes nothing.
 *
 * # Safety
 * `ct` must be a live handle; `buf` must be valid for `len` bytes.
 */
enum PcpStatus pcp_ciphertext_to_bytes(const struct PcpCiphertext *ct,
                                       uint8_t *buf,
                                       size_t len,
                                       size_t *written);

/**
 * Parses a ciphertext and checks that it belongs to `kp`.
 *
 * # Safety
 * `kp` must be a live handle; `buf` must be valid for `len` bytes.
 */
enum PcpStatus pcp_ciphertext_from_bytes(const struct PcpKeyPair *kp,
                                         const uint8_t *buf,
                                         size_t len,
                                         struct PcpCiphertext **out);

/**
 * # Safety
 * `ct` must be a live handle or null.
 */
void pcp_ciphertext_free(struct PcpCiphertext *ct);

struct PcpMarketConfig pcp_market_config_default(void);

/**
 * Opens a market on a JSON scenario and issues the round-0 keys.
 *
 * # Safety
 * `scenario_json` must be a NUL-terminated string; `cfg` and `out` must be
 * valid pointers.
 */
enum PcpStatus pcp_market_new(const char *scenario_json,
                              const struct PcpMarketConfig *cfg,
                              struct PcpMarket **out);

/**
 * Runs one full round. `finished` is set once no further round will open.
 *
 * # Safety
 * `m` must be a live handle; `finished` must be a valid pointer.
 */
enum PcpStatus pcp_market_step(struct PcpMarket *m, bool *finished);

/**
 * Runs rounds until the market finishes.
 *
 * # Safety
 * `m` must be a live handle.
 */
enum PcpStatus pcp_market_run(struct PcpMarket *m);

/**
 * Number of completed rounds.
 *
 * # Safety
 * `m` must be a live handle; `out` must be a valid pointer.
 */
enum PcpStatus pcp_market_round_count(const struct PcpMarket *m, size_t *out);

/**
 * Number of matches over all completed rounds.
 *
 * # Safety
 * `m` must be a live handle; `out` must be a valid pointer.
 */
enum PcpStatus pcp_market_match_count(const struct PcpMarket *m, size_t *out);

/**
 * The `index`-th match, in round then buyer order.
 *
 * # Safety
 * `m` must be a live handle; `out` must be a valid pointer.
 */
enum PcpStatus pcp_market_match_get(const struct PcpMarket *m, size_t index, struct PcpMatch *out);

/**
 * The message log as JSON lines. Free the string with `pcp_string_free`.
 *
 * # Safety
 * `m` must be a live handle; `out` must be a valid pointer.
 */
enum PcpStatus pcp_market_log_jsonl(const struct PcpMarket *m, char **out);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
void pcp_market_free(struct PcpMarket *m);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void pcp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCPSHARE_H */
