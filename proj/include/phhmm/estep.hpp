#pragma once

// Scaled forward-backward recursions.
//
// Indexing: observations run j = 0..n (u, alpha, nu, emission) and steps
// run k = 0..n-1, where step k is the transition from observation k to
// observation k+1 (records[k], gamma[k], w[k]).

#include <cstddef>
#include <span>
#include <vector>

#include "phhmm/model.hpp"

namespace phhmm {

double poisson_log_pmf(int y, double mu);

/// Diagonal of P(t): Poisson pmf of y under each state's mean. Throws
/// DegenerateEmissionError when every entry is zero.
Vector emission_matrix(int y, std::span<const double> mus);

struct ForwardBackwardResult {
  std::vector<Vector> alpha;       // per observation, sums to 1
  std::vector<Vector> nu;          // per observation, sums to 1
  std::vector<double> scale;       // forward normalisers
  std::vector<double> nu_scale;    // backward normalisers
  std::vector<Vector> emission;    // per observation
  std::vector<Matrix> gamma;       // per step
  Vector initial;                  // delta used for alpha[0]
  double log_lik = 0.0;
  long clamp_events = 0;
};

/// Forward and backward passes for one chain. `chain_index` selects the
/// chain's initial distribution in params.delta0 (uniform when absent).
ForwardBackwardResult forward_backward(const Chain& chain, const ModelParams& params,
                                       TransitionMode mode, std::size_t chain_index = 0);

/// Redoes the forward pass with a new initial distribution; the backward
/// quantities do not depend on it.
void refresh_forward(ForwardBackwardResult& fb, const Vector& initial);

/// log Pr(Y = y) evaluated through the split alpha(k)' Gamma(k) nu(k+1).
/// Must equal fb.log_lik for every step k.
double split_log_likelihood(const ForwardBackwardResult& fb, std::size_t step);

struct PosteriorWeights {
  std::vector<Matrix> w;  // per step, K x K, entries sum to 1
  std::vector<Vector> u;  // per observation, sums to 1
};

PosteriorWeights transition_posteriors(const ForwardBackwardResult& fb);

/// Shares (stay, move to each destination) = (1, lambda_1, ...) / (1 + sum).
Vector multinomial_estep_weight(std::span<const double> lambdas);

}  // namespace phhmm
