#ifndef PSYFORGE_H
#define PSYFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PSY_TOKENIZER_CJK 0

#define PSY_TOKENIZER_WHITESPACE 1

#define PSY_BOUNDARY_SENTENCE 0

#define PSY_BOUNDARY_PARAGRAPH 1

typedef enum PsyStatus {
  PSY_STATUS_OK = 0,
  PSY_STATUS_NULL_ARGUMENT = 1,
  PSY_STATUS_INVALID_UTF8 = 2,
  PSY_STATUS_INVALID_ARGUMENT = 3,
  PSY_STATUS_NOT_FOUND = 4,
  PSY_STATUS_CONFLICT = 5,
  PSY_STATUS_IO = 6,
  PSY_STATUS_BUFFER_TOO_SMALL = 7,
  PSY_STATUS_PANIC = 8,
} PsyStatus;

/**
 * Opaque handle to a retrieval index.
 */
typedef struct PsyIndex PsyIndex;

/**
 * Opaque handle to a review store.
 */
typedef struct PsyReviewStore PsyReviewStore;

typedef struct PsyBertScore {
  double precision;
  double recall;
  double f1;
} PsyBertScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *psy_last_error(void);

/**
 * Library version, a static string.
 */
const char *psy_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 */
void psy_string_free(char *s);

/**
 * Standard (0 or 1) and elastic scores of a multiple-answer response.
 * Letter sets are strings such as "AC"; an empty `extracted` means the
 * model gave no answer.
 */
enum PsyStatus psy_score_mmcq(const char *extracted,
                              const char *correct,
                              double *standard,
                              double *elastic);

enum PsyStatus psy_score_smcq(const char *extracted, const char *correct, double *score);

enum PsyStatus psy_rouge1_f1(const char *cand,
                             const char *reference,
                             uint32_t tokenizer,
                             double *out);

enum PsyStatus psy_rouge_l_f1(const char *cand,
                              const char *reference,
                              uint32_t tokenizer,
                              double *out);

enum PsyStatus psy_bleu4(const char *cand, const char *reference, uint32_t tokenizer, double *out);

/**
 * BERTScore under one-hot token embeddings: token-overlap precision,
 * recall and F1.
 */
enum PsyStatus psy_bertscore_stub(const char *cand,
                                  const char *reference,
                                  uint32_t tokenizer_mode,
                                  struct PsyBertScore *dst);

/**
 * Reads the declared answer letters out of a model reply. `options` lists
 * the item's option letters, e.g. "ABCD". The result is the letters in
 * order ("AC"), or "" when nothing was found.
 */
enum PsyStatus psy_extract_choices(const char *reply,
                                   const char *options,
                                   bool multiple,
                                   char **dst);

/**
 * Segments `text` and writes the end offset (in characters) of each span
 * into `ends`. With `ends` null or too small, only `count` is set and
 * `BufferTooSmall` is returned.
 */
enum PsyStatus psy_segment(const char *book,
                           size_t target_len,
                           uint32_t boundary,
                           size_t *ends,
                           size_t capacity,
                           size_t *count);

/**
 * Builds a retrieval index over `n` documents.
 */
enum PsyStatus psy_index_new(const char *const *texts,
                             size_t n,
                             uint32_t tokenizer_mode,
                             struct PsyIndex **dst);

/**
 * Top-`k` documents for `query`, best first. Writes up to `k` document
 * positions and scores; `count` receives how many were written.
 */
enum PsyStatus psy_index_retrieve(const struct PsyIndex *index,
                                  const char *query,
                                  size_t k,
                                  size_t *docs,
                                  double *scores,
                                  size_t *count);

void psy_index_free(struct PsyIndex *index);

/**
 * Opens (or creates) a review store in `dir`.
 */
enum PsyStatus psy_review_open(const char *dir, struct PsyReviewStore **dst);

void psy_review_free(struct PsyReviewStore *store);

/**
 * Queues a payload given as JSON (`{"kind": "dialogue", "item": {...}}`).
 * Writes the task id; `created` tells whether it is new.
 */
enum PsyStatus psy_review_enqueue(const struct PsyReviewStore *store,
                                  const char *payload_json,
                                  char **task_id,
                                  bool *created);

/**
 * Applies a decision given as JSON (`{"action": "accept", "reviewer_id": "..."}`)
 * and writes the updated task as JSON.
 */
enum PsyStatus psy_review_decide(const struct PsyReviewStore *store,
                                 const char *task_id,
                                 const char *decision_json,
                                 uint64_t expected_version,
                                 char **task_json);

/**
 * Tasks with the given status ("pending", "accepted", ...; null for all),
 * as a JSON array in enqueue order.
 */
enum PsyStatus psy_review_list(const struct PsyReviewStore *store,
                               const char *status,
                               char **tasks_json);

/**
 * Counts by status and kind, as JSON.
 */
enum PsyStatus psy_review_stats(const struct PsyReviewStore *store, char **stats_json);

/**
 * Accepted and edited items as chat-format JSONL.
 */
enum PsyStatus psy_review_export_sft(const struct PsyReviewStore *store, char **jsonl);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PSYFORGE_H */
