/* C interface to latdiff. Every function returns a LatdiffStatus; on failure, latdiff_last_error_message() describes the error. */

#ifndef LATDIFF_H
#define LATDIFF_H

/* Generated by cbindgen from crates/ffi/src. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LatdiffStatus {
  LATDIFF_STATUS_OK = 0,
  LATDIFF_STATUS_NULL_POINTER = 1,
  LATDIFF_STATUS_INVALID_UTF8 = 2,
  LATDIFF_STATUS_INPUT = 3,
  LATDIFF_STATUS_SCHEMA = 4,
  LATDIFF_STATUS_CONFIG = 5,
  LATDIFF_STATUS_PREREQUISITE = 6,
  LATDIFF_STATUS_NUMERIC = 7,
  LATDIFF_STATUS_UNDEFINED_METRIC = 8,
  LATDIFF_STATUS_RARE_CONDITION = 9,
  LATDIFF_STATUS_IO = 10,
  LATDIFF_STATUS_JSON = 11,
  LATDIFF_STATUS_BUFFER_TOO_SMALL = 12,
  LATDIFF_STATUS_OUT_OF_RANGE = 13,
  LATDIFF_STATUS_PANIC = 14,
} LatdiffStatus;

/**
 * A set of patient stays with their conditions and outcomes.
 */
typedef struct LatdiffCohort LatdiffCohort;

/**
 * A trained two-phase generator.
 */
typedef struct LatdiffGenerator LatdiffGenerator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *latdiff_version(void);

/**
 * Message for the most recent failed call on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *latdiff_last_error_message(void);

/**
 * Generate a cohort of `n` stays from the built-in toy process.
 */
enum LatdiffStatus latdiff_cohort_toy(size_t n, uint64_t seed, struct LatdiffCohort **out);

/**
 * Load a dataset directory (`meta.json` + `records.ndjson`).
 */
enum LatdiffStatus latdiff_cohort_load(const char *dir, struct LatdiffCohort **out);

enum LatdiffStatus latdiff_cohort_save(const struct LatdiffCohort *cohort, const char *dir);

/**
 * Number of stays, hours per stay and features per hour.
 */
enum LatdiffStatus latdiff_cohort_shape(const struct LatdiffCohort *cohort,
                                        size_t *n,
                                        size_t *t,
                                        size_t *f);

/**
 * Copy the T×F values of stay `index` row-major into `buf`, which must
 * hold at least T·F doubles. Values are in the cohort's own units.
 */
enum LatdiffStatus latdiff_cohort_values(const struct LatdiffCohort *cohort,
                                         size_t index,
                                         double *buf,
                                         size_t len);

/**
 * Write each stay's binary outcome (0 or 1) into `buf` of length `len`.
 */
enum LatdiffStatus latdiff_cohort_outcomes(const struct LatdiffCohort *cohort,
                                           uint8_t *buf,
                                           size_t len);

void latdiff_cohort_free(struct LatdiffCohort *cohort);

/**
 * Load a generator checkpoint, either as written by the command-line tool
 * or as a bare bundle checkpoint.
 */
enum LatdiffStatus latdiff_generator_load(const char *path, struct LatdiffGenerator **out);

/**
 * One synthetic stay per stay of `template`, with the template's conditions
 * and units. The template must be normalized like the generator's
 * training data.
 */
enum LatdiffStatus latdiff_generator_synthesize(const struct LatdiffGenerator *generator,
                                                const struct LatdiffCohort *template_,
                                                uint64_t seed,
                                                struct LatdiffCohort **out);

void latdiff_generator_free(struct LatdiffGenerator *generator);

/**
 * Area under the ROC curve with ties counted as one half. `labels` holds
 * 0 or non-zero per score.
 */
enum LatdiffStatus latdiff_auroc(const double *scores,
                                 const uint8_t *labels,
                                 size_t n,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATDIFF_H */
