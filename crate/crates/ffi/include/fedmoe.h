#ifndef FEDMOE_H
#define FEDMOE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every API call.
 */
typedef enum FedmoeStatus {
  FEDMOE_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  FEDMOE_STATUS_NULL_POINTER = 1,
  /**
   * Invalid configuration value or unparsable config text.
   */
  FEDMOE_STATUS_CONFIG = 2,
  /**
   * Client, expert or round index out of range.
   */
  FEDMOE_STATUS_INDEX = 3,
  /**
   * Malformed arguments (duplicates, length mismatches, bad UTF-8).
   */
  FEDMOE_STATUS_INVALID_ARGUMENT = 4,
  /**
   * File system failure.
   */
  FEDMOE_STATUS_IO = 5,
  /**
   * Malformed file contents.
   */
  FEDMOE_STATUS_FORMAT = 6,
  /**
   * Results contained NaN or infinity.
   */
  FEDMOE_STATUS_NON_FINITE = 7,
  /**
   * Internal panic caught at the boundary.
   */
  FEDMOE_STATUS_PANIC = 8,
} FedmoeStatus;

typedef enum FedmoeStrategy {
  FEDMOE_STRATEGY_LOAD_BALANCED = 0,
  FEDMOE_STRATEGY_GREEDY = 1,
  FEDMOE_STRATEGY_RANDOM = 2,
} FedmoeStrategy;

/**
 * One round's client-expert assignment.
 */
typedef struct FedmoePlan FedmoePlan;

/**
 * Fitness matrix and usage vector.
 */
typedef struct FedmoeScores FedmoeScores;

/**
 * A finished simulation run.
 */
typedef struct FedmoeSimulation FedmoeSimulation;

/**
 * Mirrors `RewardObservation`.
 */
typedef struct FedmoeReward {
  size_t client_id;
  size_t expert_id;
  double reward;
  uint64_t sample_contribution;
} FedmoeReward;

/**
 * Mirrors `ClientCapacityProfile`.
 */
typedef struct FedmoeCapacity {
  double compute_rate;
  double memory_budget;
  double bandwidth_down;
  double bandwidth_up;
  double latency;
} FedmoeCapacity;

/**
 * Mirrors `ExpertResourceSpec`.
 */
typedef struct FedmoeExpertSpec {
  double memory_cost;
  uint64_t param_bytes;
  double compute_cost;
} FedmoeExpertSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread, or NULL after a success.
 */
const char *fedmoe_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fedmoe_version(void);

/**
 * Creates a score state with every fitness at 0.5 and usage at 0.
 */
enum FedmoeStatus fedmoe_scores_new(size_t num_clients,
                                    size_t num_experts,
                                    double alpha,
                                    double delta,
                                    double gamma,
                                    struct FedmoeScores **out_scores);

void fedmoe_scores_free(struct FedmoeScores *scores);

enum FedmoeStatus fedmoe_scores_fitness(const struct FedmoeScores *scores,
                                        size_t client,
                                        size_t expert,
                                        double *out_value);

enum FedmoeStatus fedmoe_scores_usage(const struct FedmoeScores *scores,
                                      size_t expert,
                                      double *out_value);

/**
 * `w_f * fitness - w_u * normalized usage`.
 */
enum FedmoeStatus fedmoe_scores_desirability(const struct FedmoeScores *scores,
                                             size_t client,
                                             size_t expert,
                                             double w_f,
                                             double w_u,
                                             double *out_value);

/**
 * Applies one round of reward observations. On error the state is unchanged.
 */
enum FedmoeStatus fedmoe_scores_update_fitness(struct FedmoeScores *scores,
                                               const struct FedmoeReward *rewards,
                                               size_t num_rewards);

/**
 * Applies one round of per-expert contributions (`num_experts` values).
 */
enum FedmoeStatus fedmoe_scores_update_usage(struct FedmoeScores *scores,
                                             const double *contributions,
                                             size_t num_experts);

/**
 * Computes one round's assignment for `participants`.
 *
 * `profiles` holds one entry per client known to `scores`; every expert
 * shares `spec`. `coverage_repair` only affects load_balanced.
 */
enum FedmoeStatus fedmoe_assign_round(const struct FedmoeScores *scores,
                                      const struct FedmoeCapacity *profiles,
                                      size_t num_profiles,
                                      const struct FedmoeExpertSpec *spec,
                                      size_t system_cap,
                                      const size_t *participants,
                                      size_t num_participants,
                                      enum FedmoeStrategy strategy,
                                      double w_f,
                                      double w_u,
                                      uint64_t seed,
                                      bool coverage,
                                      struct FedmoePlan **out_plan);

void fedmoe_plan_free(struct FedmoePlan *plan);

/**
 * Number of clients in the plan.
 */
enum FedmoeStatus fedmoe_plan_num_clients(const struct FedmoePlan *plan, size_t *out_count);

/**
 * The `position`-th client of the plan (ascending id), its capacity limit
 * and how many experts it was given.
 */
enum FedmoeStatus fedmoe_plan_client(const struct FedmoePlan *plan,
                                     size_t position,
                                     size_t *out_client,
                                     size_t *out_limit,
                                     size_t *out_num_experts);

/**
 * Copies the experts assigned to `client` (ascending) into `buffer`.
 * `out_len` receives the full count; at most `capacity` ids are written.
 */
enum FedmoeStatus fedmoe_plan_experts(const struct FedmoePlan *plan,
                                      size_t client,
                                      size_t *buffer,
                                      size_t capacity,
                                      size_t *out_len);

/**
 * Coefficient of variation and Gini coefficient of a load vector.
 */
enum FedmoeStatus fedmoe_load_stats(const double *values,
                                    size_t len,
                                    double *out_cv,
                                    double *out_gini);

/**
 * Runs a full simulation from TOML config text (empty text = defaults).
 */
enum FedmoeStatus fedmoe_simulation_run(const char *config_toml, struct FedmoeSimulation **out_sim);

void fedmoe_simulation_free(struct FedmoeSimulation *sim);

enum FedmoeStatus fedmoe_simulation_num_rounds(const struct FedmoeSimulation *sim,
                                               size_t *out_rounds);

/**
 * Test accuracy and loss after round `round` (0-based) and its modelled duration.
 */
enum FedmoeStatus fedmoe_simulation_round(const struct FedmoeSimulation *sim,
                                          size_t round,
                                          double *out_accuracy,
                                          double *out_loss,
                                          double *out_round_time);

/**
 * Fraction of clients whose best-fitness expert is their planted expert.
 */
enum FedmoeStatus fedmoe_simulation_alignment_recovery(const struct FedmoeSimulation *sim,
                                                       double *out_rate);

/**
 * Writes the final parameters as a checkpoint file.
 */
enum FedmoeStatus fedmoe_simulation_write_checkpoint(const struct FedmoeSimulation *sim,
                                                     const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDMOE_H */
