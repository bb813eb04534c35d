#ifndef EMSIM_H
#define EMSIM_H

/* Generated by cbindgen from crates/ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a library call.
 */
enum EmsimStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  EMSIM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  EMSIM_STATUS_NULL_POINTER = -1,
  /**
   * A string argument was not valid UTF-8.
   */
  EMSIM_STATUS_INVALID_UTF8 = -2,
  /**
   * Rejected settings (bad TOML, unknown labels, out-of-range values).
   */
  EMSIM_STATUS_CONFIG = -3,
  /**
   * The power or measurement simulation failed.
   */
  EMSIM_STATUS_SIMULATION = -4,
  /**
   * The statistical analysis could not run on the given data.
   */
  EMSIM_STATUS_ANALYSIS = -5,
  /**
   * Trace file reading or writing failed.
   */
  EMSIM_STATUS_STORAGE = -6,
  /**
   * An internal invariant failed; the handle should be discarded.
   */
  EMSIM_STATUS_PANIC = -7,
};
#ifndef __cplusplus
typedef int32_t EmsimStatus;
#endif // __cplusplus

/**
 * Campaign settings handle.
 */
typedef struct EmsimScenario EmsimScenario;

/**
 * Recorded (or loaded) campaign handle.
 */
typedef struct EmsimTraceSet EmsimTraceSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; never freed.
 */
const char *emsim_version(void);

/**
 * Message for the most recent failure on this thread, or an empty string.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *emsim_last_error_message(void);

/**
 * Frees a string returned through a `char **` out-pointer.
 */
void emsim_string_free(char *s);

/**
 * Creates a scenario populated with the library defaults.
 */
EmsimStatus emsim_scenario_new(struct EmsimScenario **out);

/**
 * Parses a scenario from TOML text (same schema as the CLI config files).
 */
EmsimStatus emsim_scenario_from_toml(const char *text, struct EmsimScenario **out);

/**
 * Serializes the scenario to TOML; release the string with
 * `emsim_string_free`.
 */
EmsimStatus emsim_scenario_to_toml(const struct EmsimScenario *scenario, char **out);

/**
 * Power mode: 0 standalone, 1 baseline regulator, 2 randomized regulator.
 */
EmsimStatus emsim_scenario_set_mode(struct EmsimScenario *scenario, uint8_t mode);

/**
 * Crypto engine: 0 full-round-per-cycle, 1 byte-serial low-power.
 */
EmsimStatus emsim_scenario_set_engine(struct EmsimScenario *scenario, uint8_t engine);

EmsimStatus emsim_scenario_set_trace_count(struct EmsimScenario *scenario, uint32_t n_traces);

EmsimStatus emsim_scenario_set_seed(struct EmsimScenario *scenario, uint64_t seed);

EmsimStatus emsim_scenario_set_noise_sigma(struct EmsimScenario *scenario, double sigma);

/**
 * Probe placement label, e.g. "node_vss_aes" or "small_loop_loc1".
 */
EmsimStatus emsim_scenario_set_probe(struct EmsimScenario *scenario, const char *label);

void emsim_scenario_free(struct EmsimScenario *scenario);

/**
 * Simulates a campaign. Policy: 0 random plaintexts, 1 interleaved
 * fixed-vs-random classes.
 */
EmsimStatus emsim_generate(const struct EmsimScenario *scenario,
                           uint8_t policy,
                           struct EmsimTraceSet **out);

EmsimStatus emsim_traceset_shape(const struct EmsimTraceSet *set,
                                 uint32_t *n_traces,
                                 uint32_t *n_samples);

EmsimStatus emsim_traceset_sample_rate(const struct EmsimTraceSet *set, double *rate);

/**
 * Borrows one trace row. The pointer is valid while the handle lives and
 * no mutating call (relabel, free) intervenes.
 */
EmsimStatus emsim_traceset_trace(const struct EmsimTraceSet *set,
                                 uint32_t index,
                                 const double **data,
                                 size_t *len);

/**
 * Copies the 16-byte plaintext of one trace into `out`.
 */
EmsimStatus emsim_traceset_plaintext(const struct EmsimTraceSet *set, uint32_t index, uint8_t *out);

/**
 * Copies the 16-byte ciphertext of one trace into `out`.
 */
EmsimStatus emsim_traceset_ciphertext(const struct EmsimTraceSet *set,
                                      uint32_t index,
                                      uint8_t *out);

/**
 * Rebuilds fixed/random class labels by matching plaintexts against the
 * standard fixed input. Needed after loading an assessment campaign, since
 * trace files do not carry labels.
 */
EmsimStatus emsim_traceset_relabel_fixed(struct EmsimTraceSet *set);

/**
 * Writes the campaign to a trace file. The probe label records where the
 * campaign was measured.
 */
EmsimStatus emsim_traceset_save(const struct EmsimTraceSet *set,
                                const char *path,
                                uint8_t mode,
                                const char *probe_label);

/**
 * Reads a trace file. `mode_out` and `probe_label_out` may be null; a
 * returned label string is released with `emsim_string_free`.
 */
EmsimStatus emsim_traceset_load(const char *path,
                                struct EmsimTraceSet **out,
                                uint8_t *mode_out,
                                char **probe_label_out);

void emsim_traceset_free(struct EmsimTraceSet *set);

/**
 * Correlation key-recovery attack; writes the smallest trace count at which
 * the correct key byte locks into first rank, or -1 when the budget never
 * discloses it. `config_toml` may be null for the default attack settings.
 */
EmsimStatus emsim_cema_mtd(const struct EmsimTraceSet *set,
                           const char *config_toml,
                           int64_t *mtd_out);

/**
 * Fixed-vs-random leakage assessment; writes the worst |t| over all cells
 * and whether any cell crossed the decision threshold. Labels must be
 * present (simulate with policy 1, or relabel after loading).
 */
EmsimStatus emsim_tvla(const struct EmsimTraceSet *set,
                       const char *config_toml,
                       double *max_abs_t,
                       uint8_t *leaks);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* EMSIM_H */
