#ifndef R2D2_H
#define R2D2_H

/*
 * C interface to the r2d2 pipeline: configuration sessions that run the
 * data/training/evaluation stages, plus the pure loss kernels.
 *
 * All functions are thread-compatible: distinct sessions may be used from
 * distinct threads, one session must not be shared concurrently.
 */

#include <stddef.h>

#if defined _WIN32
#define R2D2_API __declspec(dllexport)
#else
#define R2D2_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum r2d2_status {
  R2D2_OK = 0,
  R2D2_INVALID_ARGUMENT = 1,
  R2D2_IO = 2,
  R2D2_CONFIG = 3,
  R2D2_RUNTIME = 4
} r2d2_status;

/* Opaque handle holding a configuration tree and the last error message. */
typedef struct r2d2_session r2d2_session;

R2D2_API const char* r2d2_version(void);

R2D2_API r2d2_session* r2d2_session_new(void);
R2D2_API void r2d2_session_free(r2d2_session* session);

/* Message of the last failed call on this session; empty string if none.
 * The pointer stays valid until the next call on the session. */
R2D2_API const char* r2d2_session_last_error(const r2d2_session* session);

/* Sets one dotted config key, e.g. ("train.lr", "0.001").  The value is
 * parsed as JSON when possible and treated as a string otherwise. */
R2D2_API r2d2_status r2d2_config_set(r2d2_session* session, const char* dotted_key,
                                     const char* value);

/* Merges a JSON config file over the current configuration. */
R2D2_API r2d2_status r2d2_config_load_file(r2d2_session* session, const char* path);

/* Resolved configuration as a JSON document.  Caller frees the returned
 * buffer with r2d2_string_free.  Returns NULL on invalid session. */
R2D2_API char* r2d2_config_resolved(const r2d2_session* session);

/* Runs one pipeline stage: "synth", "perturb", "train-warmup",
 * "train-r2d2", "evaluate", "contaminate" or "report".  If summary is
 * non-NULL it receives a malloc'd one-line result message on success
 * (free with r2d2_string_free). */
R2D2_API r2d2_status r2d2_run(r2d2_session* session, const char* stage, char** summary);

R2D2_API void r2d2_string_free(char* str);

/*
 * Loss kernels.  Probabilities are clamped to [1e-7, 1 - 1e-7] before any
 * logarithm.  Labels and span masks must be 0 or 1.  On any contract
 * violation (NULL pointers with n > 0, bad labels, mismatched lengths,
 * lambda outside [0, 1]) the functions return NaN.
 */

/* Binary cross-entropy of the sentence-level entailment probability. */
R2D2_API double r2d2_loss_rd_sentence(double p_entailed, int label);

/* Per-step binary cross-entropy, summed. */
R2D2_API double r2d2_loss_rd_token(const double* probs, const int* labels, size_t n);

/* -log(1-p) on masked steps, -log(p) elsewhere, summed. */
R2D2_API double r2d2_loss_unlikelihood(const double* gold_probs, const int* span_mask, size_t n);

/* Sum of -log(p). */
R2D2_API double r2d2_loss_nll(const double* gold_probs, size_t n);

/* (lambda (nll + sum ul) + (1-lambda)(rd_true + sum rd_false)) / (n + 1)
 * where ul and rd_false both have length n. */
R2D2_API double r2d2_loss_combined(double nll, const double* ul, size_t n_ul, double rd_true,
                                   const double* rd_false, size_t n_rd_false, double lambda);

#ifdef __cplusplus
}
#endif

#endif /* R2D2_H */
