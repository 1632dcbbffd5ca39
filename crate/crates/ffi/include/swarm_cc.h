#ifndef SWARM_CC_H
#define SWARM_CC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum SccStatus {
  SCC_STATUS_OK = 0,
  SCC_STATUS_NULL_POINTER = 1,
  SCC_STATUS_INVALID_ARGUMENT = 2,
  SCC_STATUS_CONFIG = 3,
  SCC_STATUS_DOMAIN = 4,
  SCC_STATUS_PROTOCOL = 5,
  SCC_STATUS_NUMERIC = 6,
  SCC_STATUS_SHAPE = 7,
  SCC_STATUS_CHECKPOINT = 8,
  SCC_STATUS_PARSE = 9,
  SCC_STATUS_IO = 10,
  SCC_STATUS_BUFFER_TOO_SMALL = 11,
  SCC_STATUS_PANIC = 12,
} SccStatus;

/**
 * Run configuration.
 */
typedef struct SccConfig SccConfig;

/**
 * One swarm stepped slot by slot under a scheme.
 */
typedef struct SccSimulator SccSimulator;

/**
 * Agent population plus training state.
 */
typedef struct SccTrainer SccTrainer;

/**
 * Outcome of one slot.
 */
typedef struct SccStep {
  double reward;
  /**
   * Slot energy in broadcast-slot units.
   */
  double cost;
  bool terminal;
  size_t n_success;
  size_t slot;
} SccStep;

/**
 * Per-episode training metrics.
 */
typedef struct SccMetrics {
  size_t episode;
  double mean_success;
  double mean_energy;
  double lambda_mean;
  /**
   * NaN when no learning step ran.
   */
  double loss;
  double epsilon;
} SccMetrics;

/**
 * Greedy evaluation summary with 95% half-widths.
 */
typedef struct SccEval {
  size_t rounds;
  double mean_success;
  double success_ci95;
  double mean_energy;
  double energy_ci95;
} SccEval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message of the calling thread, or null when the last call succeeded.
 * Valid until the next call on the same thread.
 */
const char *scc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *scc_version(void);

/**
 * Number of features per node row in an observation.
 */
size_t scc_node_features(void);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SccStatus scc_config_new_default(struct SccConfig **out);

/**
 * Parses a config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SccStatus scc_config_from_file(const char *path, struct SccConfig **out);

/**
 * Parses config text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SccStatus scc_config_from_str(const char *text, struct SccConfig **out);

/**
 * Sets one dotted key, e.g. `("e_c", "1")`, then revalidates. On error the config is unchanged.
 *
 * # Safety
 * `cfg` must come from an `scc_config_*` constructor; strings must be NUL-terminated.
 */
enum SccStatus scc_config_set(struct SccConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void scc_config_free(struct SccConfig *cfg);

/**
 * Simulator with a freshly placed swarm.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum SccStatus scc_simulator_new(const struct SccConfig *cfg,
                                 uint64_t seed,
                                 struct SccSimulator **out);

/**
 * Runs Phase I of a new round and reports how many UAVs decoded the GBS broadcast.
 *
 * # Safety
 * `sim` must be a live simulator handle; `out_phase1_success` may be null.
 */
enum SccStatus scc_simulator_begin_round(struct SccSimulator *sim, size_t *out_phase1_success);

/**
 * Moves the swarm by one inter-round interval.
 *
 * # Safety
 * `sim` must be a live simulator handle.
 */
enum SccStatus scc_simulator_advance(struct SccSimulator *sim);

/**
 * Ids of the UAVs that act in the next slot (empty once the round is over).
 * `out_len` always receives the required length.
 *
 * # Safety
 * `buf` must hold `capacity` elements; `out_len` must be valid.
 */
enum SccStatus scc_simulator_acting_agents(const struct SccSimulator *sim,
                                           size_t *buf,
                                           size_t capacity,
                                           size_t *out_len);

/**
 * Current node table, row-major, `n_uavs * scc_node_features()` values.
 *
 * # Safety
 * `buf` must hold `capacity` elements; `out_len` must be valid.
 */
enum SccStatus scc_simulator_observation(const struct SccSimulator *sim,
                                         double *buf,
                                         size_t capacity,
                                         size_t *out_len);

/**
 * Executes one slot. `agents[k]` takes action index `actions[k]`.
 *
 * # Safety
 * `agents` and `actions` must each hold `len` elements; `out` must be valid.
 */
enum SccStatus scc_simulator_step(struct SccSimulator *sim,
                                  const size_t *agents,
                                  const size_t *actions,
                                  size_t len,
                                  struct SccStep *out);

/**
 * # Safety
 * `sim` must be null or a handle not yet freed.
 */
void scc_simulator_free(struct SccSimulator *sim);

/**
 * Fresh trainer seeded from the config.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum SccStatus scc_trainer_new(const struct SccConfig *cfg, struct SccTrainer **out);

/**
 * Trains one episode.
 *
 * # Safety
 * `trainer` must be a live handle; `out` may be null.
 */
enum SccStatus scc_trainer_run_episode(struct SccTrainer *trainer, struct SccMetrics *out);

/**
 * Episodes completed so far.
 *
 * # Safety
 * `trainer` must be a live handle and `out` valid.
 */
enum SccStatus scc_trainer_episodes_done(const struct SccTrainer *trainer, size_t *out);

/**
 * Current multiplier of every agent.
 *
 * # Safety
 * `buf` must hold `capacity` elements; `out_len` must be valid.
 */
enum SccStatus scc_trainer_lambdas(const struct SccTrainer *trainer,
                                   double *buf,
                                   size_t capacity,
                                   size_t *out_len);

/**
 * Writes a bit-exact snapshot.
 *
 * # Safety
 * `trainer` must be a live handle; `path` NUL-terminated.
 */
enum SccStatus scc_trainer_save(const struct SccTrainer *trainer, const char *path);

/**
 * Restores a snapshot written by `scc_trainer_save` under a matching config.
 *
 * # Safety
 * `cfg` must be a live config handle; `path` NUL-terminated; `out` valid.
 */
enum SccStatus scc_trainer_load(const struct SccConfig *cfg,
                                const char *path,
                                struct SccTrainer **out);

/**
 * Evaluates the trainer's agents greedily without changing them.
 *
 * # Safety
 * `trainer` must be a live handle and `out` valid.
 */
enum SccStatus scc_trainer_evaluate(const struct SccTrainer *trainer,
                                    size_t episodes,
                                    uint64_t seed,
                                    struct SccEval *out);

/**
 * # Safety
 * `trainer` must be null or a handle not yet freed.
 */
void scc_trainer_free(struct SccTrainer *trainer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWARM_CC_H */
