#ifndef COLIBRI_SIM_H
#define COLIBRI_SIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ColibriOutcome {
  COLIBRI_OUTCOME_RUNNING = 0,
  COLIBRI_OUTCOME_COMPLETED = 1,
  COLIBRI_OUTCOME_BUDGET_EXHAUSTED = 2,
  COLIBRI_OUTCOME_DEADLOCK = 3,
} ColibriOutcome;

typedef enum ColibriStatus {
  COLIBRI_STATUS_OK = 0,
  COLIBRI_STATUS_NULL_POINTER = 1,
  COLIBRI_STATUS_INVALID_UTF8 = 2,
  COLIBRI_STATUS_CONFIG = 3,
  COLIBRI_STATUS_SIM = 4,
  /**
   * A verified property failed or a run did not complete.
   */
  COLIBRI_STATUS_PROPERTY_FAILED = 5,
  COLIBRI_STATUS_BUFFER_TOO_SMALL = 6,
  COLIBRI_STATUS_PANIC = 7,
} ColibriStatus;

/**
 * A configured machine.
 */
typedef struct ColibriSim ColibriSim;

typedef struct ColibriStats {
  uint64_t cycles;
  uint64_t ops;
  uint64_t retries;
  uint64_t hops;
  uint64_t bank_accesses;
} ColibriStats;

typedef struct ColibriVerifyReport {
  uint64_t states;
  uint32_t violated;
  uint32_t inconclusive;
} ColibriVerifyReport;

typedef struct ColibriCost {
  uint64_t identifier_bits;
  uint64_t control_bits;
  uint64_t total_bits;
} ColibriCost;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message behind the last failed call on this thread; empty after a
 * success. Valid until the next call on the same thread.
 */
const char *colibri_last_error(void);

/**
 * Build a simulator from TOML configuration text. With `record_trace` set
 * the event trace is kept for [`colibri_sim_trace`].
 */
enum ColibriStatus colibri_sim_new(const char *toml, bool record_trace, struct ColibriSim **out);

void colibri_sim_free(struct ColibriSim *sim);

/**
 * Run to completion, deadlock or the cycle budget. `max_cycles` of 0 uses
 * the configured budget. A run that does not complete returns
 * `PROPERTY_FAILED` with the outcome still written.
 */
enum ColibriStatus colibri_sim_run(struct ColibriSim *sim,
                                   uint64_t max_cycles,
                                   enum ColibriOutcome *outcome);

enum ColibriStatus colibri_sim_stats(const struct ColibriSim *sim, struct ColibriStats *out);

enum ColibriStatus colibri_sim_read_word(const struct ColibriSim *sim,
                                         uint32_t addr,
                                         uint32_t *out);

/**
 * Copy the recorded trace text, NUL terminated, into `buf`. `needed`
 * receives the size including the terminator; pass a null `buf` to query
 * it.
 */
enum ColibriStatus colibri_sim_trace(const struct ColibriSim *sim,
                                     char *buf,
                                     size_t len,
                                     size_t *needed);

/**
 * Explore every delay interleaving of the configured scenario, also
 * comparing with the ideal queue when the adapter is Colibri. Returns
 * `PROPERTY_FAILED` if any property is violated or undecided.
 */
enum ColibriStatus colibri_verify(const char *toml, struct ColibriVerifyReport *report);

/**
 * Storage bits of `scheme` (`ideal`, `bounded:Q`, `colibri:A`).
 */
enum ColibriStatus colibri_cost_model(const char *scheme,
                                      uint64_t n_cores,
                                      uint64_t n_banks,
                                      struct ColibriCost *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLIBRI_SIM_H */
