#pragma once

// Synthetic alternating-event chains with Poisson emissions.
//
// Survival mode: from state s, a sojourn v ~ Exp(lambda_s) competes with a
// censoring time r ~ U(0, h_max); the step lasts min(v, r) and the state
// flips only when v wins. Discrete mode: every step lasts one hour and the
// state flips with probability expit(eta_s).
//
// The covariate is x(t) = sin(2 pi t / 24), optionally multiplied by binary
// individual attributes (population designs), with the intercept first.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phhmm/model.hpp"
#include "phhmm/rng.hpp"

namespace phhmm {

enum class SimMode { survival, discrete };

/// Which timestamp the stored covariate of a survival-mode step refers to.
/// `step_start` stores the covariate that generated the sojourn (evaluated
/// at the previous timestamp); `step_end` stores x at the new timestamp
/// while the sojourn was still drawn from the previous one.
enum class CovariateTiming { step_start, step_end };

struct SimConfig {
  SimMode mode = SimMode::survival;
  double h_max = 10.0;
  int n_transitions = 25;
  int n_individuals = 50;
  Vector beta1;  // exit coefficients of state 1 (active)
  Vector beta2;  // exit coefficients of state 2 (rest)
  double mu1 = 10.0;
  double mu2 = 1.0;
  std::uint64_t seed = 0;

  /// Number of binary individual attributes; attribute k of individual i is
  /// bit k of i. Each adds an x * attribute column after the sine.
  int n_interactions = 0;
  /// Standard deviations of per-individual random intercepts (state 1, 2).
  double random_intercept_sd1 = 0.0;
  double random_intercept_sd2 = 0.0;
  CovariateTiming covariate_timing = CovariateTiming::step_start;

  int n_covariates() const { return 2 + n_interactions; }
  bool has_random_intercepts() const { return random_intercept_sd1 > 0.0 || random_intercept_sd2 > 0.0; }
};

void validate_sim_config(const SimConfig& config);

struct SimulatedChain {
  Chain chain;
  std::vector<int> states;  // true labels, 0 = active, one per observation
  Vector random_intercepts;  // per-state b for this individual (zeros when unused)
};

/// Covariate row [1, x(t), x(t) * a_1, ...] for individual `individual`.
Vector sim_covariates(const SimConfig& config, int individual, double t);

SimulatedChain simulate_survival_chain(const SimConfig& config, int individual);
SimulatedChain simulate_discrete_chain(const SimConfig& config, int individual);

/// Dispatches on config.mode.
SimulatedChain simulate_chain(const SimConfig& config, int individual);

/// All config.n_individuals chains; individual i uses stream seed ^ i.
std::vector<SimulatedChain> simulate_dataset(const SimConfig& config);

/// Independent Poisson(mu_{state}) counts, one per label.
std::vector<int> simulate_emissions(std::span<const int> states, double mu1, double mu2,
                                    std::uint64_t seed);

struct CompetingExit {
  double time;
  int destination;  // index into the rate list
};

/// First of several independent exponential clocks.
CompetingExit draw_competing_exit(std::span<const double> rates, Rng& rng);

struct SimCase {
  std::string id;  // "1.1" ... "4.3"
  SimConfig config;
};

/// The twelve simulation designs: four parameter sets crossed with
/// {survival h_max = 10, survival h_max = 1, logistic}.
std::vector<SimCase> case_catalog();

/// Throws InputError for an unknown id.
SimCase find_case(const std::string& id);

}  // namespace phhmm
