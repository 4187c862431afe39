#pragma once

// Monte Carlo replication of the simulation tables: every replicate
// simulates one dataset per case and fits all requested methods to it.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phhmm/em.hpp"
#include "phhmm/simulate.hpp"

namespace phhmm {

struct ReplicateConfig {
  std::vector<std::string> cases;  // empty means all twelve
  std::vector<Method> methods = {Method::pmm, Method::dt, Method::ct, Method::ph};
  int replicates = 100;
  int jobs = 1;
  std::uint64_t seed = 1;
  int n_individuals = 50;
  int n_transitions = 25;
  double tol = 1e-4;
  int max_iters = 500;
};

struct ReplicateRecord {
  std::string case_id;
  Method method = Method::ph;
  int replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  double mu1 = 0.0, mu2 = 0.0;
  Vector beta1, beta2;  // exits of state 1 and state 2
  Vector se1, se2;      // asymptotic SEs
  bool converged = false;
  int iterations = 0;
  bool monotone = true;
  double max_decrease = 0.0;  // largest one-step drop of the log-likelihood
};

/// Replicate r of every case uses seed base + r. Results come back ordered
/// by (case, replicate, method) whatever the number of jobs.
std::vector<ReplicateRecord> run_replicates(const ReplicateConfig& config);

/// Fits one method to one simulated dataset.
ReplicateRecord fit_replicate(const SimCase& sim_case, const std::vector<SimulatedChain>& data, Method method,
                              const ReplicateConfig& config);

struct CellSummary {
  std::string case_id;
  Method method = Method::ph;
  std::string parameter;  // "accuracy", "mu1", "beta10", ...
  double truth = 0.0;     // NaN for accuracy
  double mean = 0.0;
  double se = 0.0;        // empirical SD over replicates, NaN when n < 2
  double mse = 0.0;
  int n = 0;
  int failures = 0;
};

/// Table 1 is accuracy, table 2 the state-1 parameters (mu1, beta1), table 3
/// the state-2 parameters.
std::vector<CellSummary> summarize(const std::vector<ReplicateRecord>& records, int table);

void write_raw_csv(const std::filesystem::path& path, const std::vector<ReplicateRecord>& records);
void write_table_csv(const std::filesystem::path& path, const std::vector<CellSummary>& cells);

}  // namespace phhmm
