#include "phhmm/simulate.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "phhmm/errors.hpp"

namespace phhmm {

namespace {

constexpr std::uint64_t kEmissionStream = 0xA5A5'5A5A'C3C3'3C3CULL;

std::uint64_t chain_seed(std::uint64_t base, int individual) {
  return mix_seed(base) ^ static_cast<std::uint64_t>(individual);
}

double sine_covariate(double t) { return std::sin(2.0 * std::numbers::pi * t / 24.0); }

struct ChainStart {
  Rng rng;
  int state;
  Vector b;
};

ChainStart start_chain(const SimConfig& config, int individual) {
  ChainStart s{Rng(chain_seed(config.seed, individual)), 0, Vector::Zero(2)};
  s.state = s.rng.uniform() < 0.5 ? 0 : 1;
  if (config.has_random_intercepts()) {
    s.b(0) = config.random_intercept_sd1 * s.rng.normal();
    s.b(1) = config.random_intercept_sd2 * s.rng.normal();
  }
  return s;
}

void attach_emissions(const SimConfig& config, int individual, SimulatedChain& out) {
  const auto counts = simulate_emissions(out.states, config.mu1, config.mu2,
                                         chain_seed(config.seed, individual) ^ kEmissionStream);
  out.chain.y0 = counts[0];
  for (std::size_t j = 0; j < out.chain.records.size(); ++j) out.chain.records[j].y = counts[j + 1];
}

}  // namespace

void validate_sim_config(const SimConfig& config) {
  if (config.mode == SimMode::survival && !(config.h_max > 0.0)) throw DomainError("h_max must be positive");
  if (config.n_transitions < 1) throw DomainError("n_transitions must be >= 1");
  if (config.n_individuals < 1) throw DomainError("n_individuals must be >= 1");
  if (config.beta1.size() != config.n_covariates() || config.beta2.size() != config.n_covariates()) {
    throw DomainError("coefficient vectors must have length 2 + n_interactions");
  }
  if (config.mu1 < 0.0 || config.mu2 < 0.0) throw DomainError("emission means must be non-negative");
}

Vector sim_covariates(const SimConfig& config, int individual, double t) {
  Vector x(config.n_covariates());
  const double s = sine_covariate(t);
  x(0) = 1.0;
  x(1) = s;
  for (int k = 0; k < config.n_interactions; ++k) {
    x(2 + k) = ((individual >> k) & 1) ? s : 0.0;
  }
  return x;
}

SimulatedChain simulate_survival_chain(const SimConfig& config, int individual) {
  validate_sim_config(config);
  if (config.mode != SimMode::survival) throw DomainError("simulate_survival_chain needs survival mode");
  auto [rng, state, b] = start_chain(config, individual);

  SimulatedChain out;
  out.chain.id = std::to_string(individual + 1);
  out.random_intercepts = b;
  out.states.reserve(config.n_transitions + 1);
  out.states.push_back(state);
  out.chain.records.reserve(config.n_transitions);
  const bool grouped = config.has_random_intercepts();

  double t = 0.0;
  for (int j = 0; j < config.n_transitions; ++j) {
    const Vector x_start = sim_covariates(config, individual, t);
    const Vector& beta = state == 0 ? config.beta1 : config.beta2;
    const double lambda = hazard(x_start.dot(beta) + b(state));
    const double v = rng.exponential(lambda);
    const double r = rng.uniform(0.0, config.h_max);
    const double delta = std::min(v, r);
    const bool event = v < r;
    t += delta;
    if (event) state = 1 - state;

    ObservationRecord rec;
    rec.t = t;
    rec.delta = delta;
    rec.x = config.covariate_timing == CovariateTiming::step_start ? x_start
                                                                   : sim_covariates(config, individual, t);
    rec.group = grouped ? individual : -1;
    out.chain.records.push_back(std::move(rec));
    out.states.push_back(state);
  }
  attach_emissions(config, individual, out);
  return out;
}

SimulatedChain simulate_discrete_chain(const SimConfig& config, int individual) {
  validate_sim_config(config);
  if (config.mode != SimMode::discrete) throw DomainError("simulate_discrete_chain needs discrete mode");
  auto [rng, state, b] = start_chain(config, individual);

  SimulatedChain out;
  out.chain.id = std::to_string(individual + 1);
  out.random_intercepts = b;
  out.states.reserve(config.n_transitions + 1);
  out.states.push_back(state);
  out.chain.records.reserve(config.n_transitions);
  const bool grouped = config.has_random_intercepts();

  double t = 0.0;
  for (int j = 0; j < config.n_transitions; ++j) {
    t += 1.0;
    Vector x = sim_covariates(config, individual, t);
    const Vector& beta = state == 0 ? config.beta1 : config.beta2;
    if (rng.bernoulli(expit(x.dot(beta) + b(state)))) state = 1 - state;

    ObservationRecord rec;
    rec.t = t;
    rec.delta = 1.0;
    rec.x = std::move(x);
    rec.group = grouped ? individual : -1;
    out.chain.records.push_back(std::move(rec));
    out.states.push_back(state);
  }
  attach_emissions(config, individual, out);
  return out;
}

SimulatedChain simulate_chain(const SimConfig& config, int individual) {
  return config.mode == SimMode::survival ? simulate_survival_chain(config, individual)
                                          : simulate_discrete_chain(config, individual);
}

std::vector<SimulatedChain> simulate_dataset(const SimConfig& config) {
  std::vector<SimulatedChain> out;
  out.reserve(config.n_individuals);
  for (int i = 0; i < config.n_individuals; ++i) out.push_back(simulate_chain(config, i));
  return out;
}

std::vector<int> simulate_emissions(std::span<const int> states, double mu1, double mu2,
                                    std::uint64_t seed) {
  if (mu1 < 0.0 || mu2 < 0.0) throw DomainError("emission means must be non-negative");
  Rng rng(seed);
  std::vector<int> counts;
  counts.reserve(states.size());
  for (int s : states) counts.push_back(rng.poisson(s == 0 ? mu1 : mu2));
  return counts;
}

CompetingExit draw_competing_exit(std::span<const double> rates, Rng& rng) {
  CompetingExit best{std::numeric_limits<double>::infinity(), -1};
  for (std::size_t k = 0; k < rates.size(); ++k) {
    const double v = rng.exponential(rates[k]);
    if (v < best.time) best = {v, static_cast<int>(k)};
  }
  return best;
}

std::vector<SimCase> case_catalog() {
  struct ParamSet {
    double b10, b11, b20, b21, mu1, mu2;
  };
  const ParamSet sets[4] = {
      {-3, -1, -3, 1, 10, 1},
      {-2, -5, -2, 5, 10, 1},
      {-3, -1, -3, 1, 5, 1},
      {-2, -5, -2, 5, 5, 1},
  };
  std::vector<SimCase> cases;
  for (int s = 0; s < 4; ++s) {
    for (int v = 0; v < 3; ++v) {
      SimConfig c;
      c.mode = v == 2 ? SimMode::discrete : SimMode::survival;
      c.h_max = v == 0 ? 10.0 : 1.0;
      c.n_transitions = 25;
      c.n_individuals = 50;
      c.beta1 = Vector{{sets[s].b10, sets[s].b11}};
      c.beta2 = Vector{{sets[s].b20, sets[s].b21}};
      c.mu1 = sets[s].mu1;
      c.mu2 = sets[s].mu2;
      cases.push_back({std::to_string(s + 1) + "." + std::to_string(v + 1), c});
    }
  }
  return cases;
}

SimCase find_case(const std::string& id) {
  for (auto& c : case_catalog()) {
    if (c.id == id) return c;
  }
  throw InputError("unknown simulation case '" + id + "'");
}

}  // namespace phhmm
