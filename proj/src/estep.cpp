#include "phhmm/estep.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "phhmm/errors.hpp"

namespace phhmm {

double poisson_log_pmf(int y, double mu) {
  if (y < 0) throw DomainError("counts must be non-negative");
  if (mu == 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return y * std::log(mu) - mu - std::lgamma(y + 1.0);
}

Vector emission_matrix(int y, std::span<const double> mus) {
  Vector p(static_cast<Eigen::Index>(mus.size()));
  for (std::size_t s = 0; s < mus.size(); ++s) p(s) = std::exp(poisson_log_pmf(y, mus[s]));
  if (!(p.maxCoeff() > 0.0)) {
    throw DegenerateEmissionError(0, "count " + std::to_string(y) + " has zero probability under every state");
  }
  return p;
}

namespace {

[[noreturn]] void degenerate(const Chain& chain, std::size_t j, const char* why) {
  std::ostringstream msg;
  msg << "chain '" << chain.id << "' observation " << j << ": " << why;
  throw DegenerateEmissionError(j, msg.str());
}

}  // namespace

void refresh_forward(ForwardBackwardResult& fb, const Vector& initial) {
  const std::size_t n = fb.emission.size();
  fb.initial = initial;
  fb.alpha.resize(n);
  fb.scale.resize(n);
  Vector a = initial.cwiseProduct(fb.emission[0]);
  double log_lik = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j > 0) a = (fb.gamma[j - 1].transpose() * fb.alpha[j - 1]).cwiseProduct(fb.emission[j]);
    const double c = a.sum();
    if (!(c > 0.0)) throw DegenerateEmissionError(j, "observation " + std::to_string(j) + " is unreachable");
    fb.scale[j] = c;
    fb.alpha[j] = a / c;
    log_lik += std::log(c);
  }
  fb.log_lik = log_lik;
}

ForwardBackwardResult forward_backward(const Chain& chain, const ModelParams& params,
                                       TransitionMode mode, std::size_t chain_index) {
  const auto k = static_cast<Eigen::Index>(params.n_states());
  const std::size_t n = chain.n_states();
  std::vector<double> mus(params.n_states());
  for (std::size_t s = 0; s < mus.size(); ++s) mus[s] = params.states[s].mu;

  ForwardBackwardResult fb;
  fb.emission.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    Vector p(k);
    for (Eigen::Index s = 0; s < k; ++s) p(s) = std::exp(poisson_log_pmf(chain.count(j), mus[s]));
    if (!(p.maxCoeff() > 0.0)) degenerate(chain, j, "count has zero probability under every state");
    fb.emission[j] = std::move(p);
  }

  ClampCounter clamps;
  fb.gamma.resize(chain.n_steps());
  for (std::size_t s = 0; s < chain.n_steps(); ++s) {
    const auto& rec = chain.records[s];
    fb.gamma[s] = transition_matrix(step_etas(params, rec), mode, rec.delta, &clamps);
  }
  fb.clamp_events = clamps.events;

  fb.nu.resize(n);
  fb.nu_scale.resize(n);
  Vector v = fb.emission[n - 1];
  for (std::size_t j = n; j-- > 0;) {
    if (j + 1 < n) v = (fb.gamma[j] * fb.nu[j + 1]).cwiseProduct(fb.emission[j]);
    const double d = v.sum();
    if (!(d > 0.0)) degenerate(chain, j, "no continuation is compatible with the observations");
    fb.nu_scale[j] = d;
    fb.nu[j] = v / d;
  }

  Vector initial = chain_index < params.delta0.size() ? params.delta0[chain_index]
                                                      : Vector::Constant(k, 1.0 / static_cast<double>(k));
  refresh_forward(fb, initial);
  return fb;
}

double split_log_likelihood(const ForwardBackwardResult& fb, std::size_t step) {
  double out = std::log(fb.alpha[step].dot(fb.gamma[step] * fb.nu[step + 1]));
  for (std::size_t m = 0; m <= step; ++m) out += std::log(fb.scale[m]);
  for (std::size_t m = step + 1; m < fb.nu_scale.size(); ++m) out += std::log(fb.nu_scale[m]);
  return out;
}

PosteriorWeights transition_posteriors(const ForwardBackwardResult& fb) {
  const std::size_t n = fb.alpha.size();
  PosteriorWeights out;
  out.w.resize(n - 1);
  out.u.resize(n);
  for (std::size_t s = 0; s + 1 < n; ++s) {
    Matrix w = (fb.alpha[s] * fb.nu[s + 1].transpose()).cwiseProduct(fb.gamma[s]);
    w /= w.sum();
    out.w[s] = std::move(w);

    Vector u = fb.alpha[s].cwiseProduct(fb.gamma[s] * fb.nu[s + 1]);
    u /= u.sum();
    out.u[s] = std::move(u);
  }
  out.u[n - 1] = fb.alpha[n - 1] / fb.alpha[n - 1].sum();
  return out;
}

Vector multinomial_estep_weight(std::span<const double> lambdas) {
  Vector shares(static_cast<Eigen::Index>(lambdas.size() + 1));
  shares(0) = 1.0;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (lambdas[k] < 0.0) throw DomainError("rates must be non-negative");
    shares(k + 1) = lambdas[k];
  }
  return shares / shares.sum();
}

}  // namespace phhmm
