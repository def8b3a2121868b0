#ifndef SPECSTEER_H
#define SPECSTEER_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SpecsteerStatus {
  SPECSTEER_STATUS_OK = 0,
  SPECSTEER_STATUS_NULL_POINTER = 1,
  SPECSTEER_STATUS_INVALID_ARGUMENT = 2,
  SPECSTEER_STATUS_INVALID_CONFIG = 3,
  SPECSTEER_STATUS_PROTOCOL = 4,
  SPECSTEER_STATUS_WIRE = 5,
  SPECSTEER_STATUS_IO = 6,
  SPECSTEER_STATUS_BUFFER_TOO_SMALL = 7,
  SPECSTEER_STATUS_PANIC = 8,
} SpecsteerStatus;

// A loaded experiment: vocabulary, the three models and protocol settings.
typedef struct SpecsteerEngine SpecsteerEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The last error message on this thread, or null. Valid until the next
// failing call on the same thread.
const char *specsteer_last_error(void);

// Loads a TOML experiment config (corpora or tables) and builds all models.
//
// # Safety
// `config_path` must be a NUL-terminated string; `out` must be writable.
enum SpecsteerStatus specsteer_engine_open(const char *config_path, struct SpecsteerEngine **out);

// Releases an engine. Null is ignored.
//
// # Safety
// `engine` must come from [`specsteer_engine_open`] and not be used afterwards.
void specsteer_engine_free(struct SpecsteerEngine *engine);

// # Safety
// `engine` must be a live engine; `out` must be writable.
enum SpecsteerStatus specsteer_engine_vocab_size(const struct SpecsteerEngine *engine, size_t *out);

// Overrides the threshold λ and steering strength β for later sessions.
//
// # Safety
// `engine` must be a live engine.
enum SpecsteerStatus specsteer_engine_set_params(struct SpecsteerEngine *engine,
                                                 double lambda,
                                                 double beta);

// Runs one in-process session on `prompt` (in-vocabulary words separated by
// spaces) and writes the generated token ids.
//
// # Safety
// `engine` must be a live engine, `prompt` NUL-terminated, `out_ids` valid
// for `cap` writes and `out_len` writable.
enum SpecsteerStatus specsteer_engine_generate(const struct SpecsteerEngine *engine,
                                               const char *prompt,
                                               uint64_t seed,
                                               uint32_t *out_ids,
                                               size_t cap,
                                               size_t *out_len);

// Writes the space-joined text of `ids` plus a terminating NUL. `out_len`
// receives the byte count including the NUL.
//
// # Safety
// `ids` must hold `n` values, `buf` be valid for `cap` bytes and `out_len`
// writable.
enum SpecsteerStatus specsteer_engine_decode(const struct SpecsteerEngine *engine,
                                             const uint32_t *ids,
                                             size_t n,
                                             char *buf,
                                             size_t cap,
                                             size_t *out_len);

// Fused target P* ∝ P_LLM·P⁺/P⁻ over `n` tokens, and its normalizer Z.
//
// # Safety
// The three inputs and `out_target` must hold `n` values; `out_partition`
// may be null.
enum SpecsteerStatus specsteer_fused_target(const double *p_llm,
                                            const double *p_plus,
                                            const double *p_minus,
                                            size_t n,
                                            double *out_target,
                                            double *out_partition);

// Per-token acceptance probability min(1, P_LLM/(λ·P⁻)).
//
// # Safety
// Inputs and `out_alpha` must hold `n` values.
enum SpecsteerStatus specsteer_acceptance(const double *p_llm,
                                          const double *p_minus,
                                          size_t n,
                                          double lambda,
                                          double *out_alpha);

// Exact law of one protocol step from three logit vectors.
//
// # Safety
// Inputs and `out_probs` must hold `n` values; `out_rejection` may be null.
enum SpecsteerStatus specsteer_one_step_law(const double *h_llm,
                                            const double *h_plus,
                                            const double *h_minus,
                                            size_t n,
                                            double lambda,
                                            double beta,
                                            double *out_probs,
                                            double *out_rejection);

// Softmax of `n` logits.
//
// # Safety
// `logits_in` and `out_probs` must hold `n` values.
enum SpecsteerStatus specsteer_softmax(const double *logits_in, size_t n, double *out_probs);

// Encodes a DRAFT frame. `delta` may be null when no recovery token is
// carried.
//
// # Safety
// `ids` must hold `n` values, `buf` be valid for `cap` bytes and `out_len`
// writable.
enum SpecsteerStatus specsteer_encode_draft(uint32_t seq_no,
                                            const uint32_t *ids,
                                            size_t n,
                                            const uint32_t *delta,
                                            uint8_t *buf,
                                            size_t cap,
                                            size_t *out_len);

// Decodes one DRAFT frame. `out_has_delta` is set to 1 and `out_delta`
// written when the frame carries a recovery token.
//
// # Safety
// `bytes` must hold `len` bytes, `out_ids` be valid for `cap` writes and
// every other output writable.
enum SpecsteerStatus specsteer_decode_draft(const uint8_t *bytes,
                                            size_t len,
                                            uint32_t *out_seq_no,
                                            uint32_t *out_ids,
                                            size_t cap,
                                            size_t *out_n,
                                            uint8_t *out_has_delta,
                                            uint32_t *out_delta);

// Size in bytes of a DRAFT frame with `n` tokens.
size_t specsteer_draft_frame_len(size_t n, bool has_delta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECSTEER_H */
