#pragma once

// EM drivers for the four estimators: the two-step Poisson mixture (PMM)
// and the three HMMs that differ only in how the transition matrix is
// built and how its regression is refitted.
//
//   dt  Gamma = expit(eta), weighted logistic M-step
//   ct  Gamma = exp(Q Delta), weighted generator M-step
//   ph  Gamma = expit(eta), weighted exponential PH M-step on augmented rows

#include <span>
#include <string>
#include <vector>

#include "phhmm/estep.hpp"
#include "phhmm/model.hpp"

namespace phhmm {

enum class Method { pmm, dt, ct, ph };
enum class RandomEffects { none, hour_of_day, per_individual };

const char* to_string(Method method);
const char* to_string(RandomEffects effects);
Method parse_method(const std::string& text);
RandomEffects parse_random_effects(const std::string& text);

/// Transition-matrix flavour used by a method's E-step.
TransitionMode transition_mode(Method method);

struct EmConfig {
  Method method = Method::ph;
  double tol = 1e-4;
  int max_iters = 500;
  RandomEffects random_effects = RandomEffects::none;
  int n_states = 2;
  /// Transition model refitted on the PMM hard labels; ph for heterogeneous
  /// event times, dt (logistic) for discrete data.
  Method pmm_transition = Method::ph;
};

void validate_em_config(const EmConfig& config);

/// Per-hazard regression summary, indexed like StateModel::exits.
struct HazardReport {
  int from = 0;
  int to = 1;
  Vector se;           // asymptotic SEs of beta
  bool separation = false;
  bool sigma2_at_floor = false;
};

struct FitResult {
  Method method = Method::ph;
  RandomEffects random_effects = RandomEffects::none;
  ModelParams params;
  std::vector<double> loglik_trace;
  std::vector<HazardReport> hazards;
  std::vector<PosteriorWeights> posterior;
  std::vector<std::vector<int>> decoded;
  std::vector<std::string> chain_ids;
  int iterations = 0;
  bool converged = false;
  double final_change = 0.0;
  bool monotone = true;   // no trace decrease beyond the tolerance
  long clamp_events = 0;
  std::vector<std::string> warnings;

  const HazardReport& hazard(int from, int to) const;
};

/// Copies of the chains with random-effect groups assigned. Returns q, the
/// number of random-intercept columns (0 for none).
int assign_groups(std::vector<Chain>& chains, RandomEffects effects);

/// Two-step PMM estimator (mixture EM on counts, MAP labels, transition fit
/// on the hard labels). Throws DegenerateMixtureError on collapse.
FitResult fit_pmm(std::span<const Chain> chains, const EmConfig& config = {});

/// Pooled EM fit: the likelihood is the product over all chains and the
/// regression coefficients are shared.
FitResult fit_em(std::span<const Chain> chains, const EmConfig& config);

/// One fit per individual id (chains split by gaps stay together).
std::vector<FitResult> fit_em_individuals(std::span<const Chain> chains, const EmConfig& config);

/// Per-observation argmax of u; ties go to the lower state index.
std::vector<int> map_decode(std::span<const Vector> u);

/// Most probable state path, computed in log space. Ties go to the lower
/// state index.
std::vector<int> viterbi_decode(const Chain& chain, const ModelParams& params, TransitionMode mode,
                                std::size_t chain_index = 0);

double accuracy(std::span<const int> truth, std::span<const int> decoded);

/// Posterior weights of a hard-labelled chain (one-hot w and u).
PosteriorWeights hard_posteriors(std::span<const int> labels, int n_states);

}  // namespace phhmm
