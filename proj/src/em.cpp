#include "phhmm/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "phhmm/errors.hpp"
#include "phhmm/inference.hpp"
#include "phhmm/mstep.hpp"
#include "phhmm/optimize.hpp"

namespace phhmm {

const char* to_string(Method method) {
  switch (method) {
    case Method::pmm: return "pmm";
    case Method::dt: return "dt";
    case Method::ct: return "ct";
    case Method::ph: return "ph";
  }
  return "?";
}

const char* to_string(RandomEffects effects) {
  switch (effects) {
    case RandomEffects::none: return "none";
    case RandomEffects::hour_of_day: return "hour";
    case RandomEffects::per_individual: return "individual";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  if (text == "pmm") return Method::pmm;
  if (text == "dt") return Method::dt;
  if (text == "ct") return Method::ct;
  if (text == "ph") return Method::ph;
  throw InputError("unknown method '" + text + "' (expected pmm, dt, ct or ph)");
}

RandomEffects parse_random_effects(const std::string& text) {
  if (text == "none") return RandomEffects::none;
  if (text == "hour") return RandomEffects::hour_of_day;
  if (text == "individual") return RandomEffects::per_individual;
  throw InputError("unknown random-effects option '" + text + "' (expected none, hour or individual)");
}

TransitionMode transition_mode(Method method) {
  switch (method) {
    case Method::ct: return TransitionMode::ct;
    case Method::dt: return TransitionMode::dt;
    default: return TransitionMode::ph;
  }
}

void validate_em_config(const EmConfig& config) {
  if (!(config.tol > 0.0)) throw DomainError("tol must be positive");
  if (config.max_iters < 1) throw DomainError("max_iters must be at least 1");
  if (config.n_states < 2) throw DomainError("at least two states are needed");
  if ((config.method == Method::dt || config.method == Method::ct) && config.n_states != 2) {
    throw DomainError(std::string(to_string(config.method)) + " fits support two states only");
  }
  if (config.method == Method::ct && config.random_effects != RandomEffects::none) {
    throw DomainError("continuous-time fits do not support random effects");
  }
  if (config.pmm_transition == Method::pmm) throw DomainError("pmm_transition must name a transition model");
}

const HazardReport& FitResult::hazard(int from, int to) const {
  for (const auto& h : hazards) {
    if (h.from == from && h.to == to) return h;
  }
  throw DomainError("no hazard report for the requested transition");
}

int assign_groups(std::vector<Chain>& chains, RandomEffects effects) {
  std::map<std::string, int> ids;
  if (effects == RandomEffects::per_individual) {
    for (const auto& c : chains) ids.emplace(c.id, 0);
    int k = 0;
    for (auto& [id, index] : ids) index = k++;
  }
  for (auto& c : chains) {
    for (auto& rec : c.records) {
      switch (effects) {
        case RandomEffects::none: rec.group = -1; break;
        case RandomEffects::hour_of_day: {
          double h = std::fmod(rec.t, 24.0);
          if (h < 0.0) h += 24.0;
          rec.group = std::min(23, static_cast<int>(std::floor(h)));
          break;
        }
        case RandomEffects::per_individual: rec.group = ids.at(c.id); break;
      }
    }
  }
  switch (effects) {
    case RandomEffects::none: return 0;
    case RandomEffects::hour_of_day: return 24;
    case RandomEffects::per_individual: return static_cast<int>(ids.size());
  }
  return 0;
}

PosteriorWeights hard_posteriors(std::span<const int> labels, int n_states) {
  PosteriorWeights out;
  out.u.reserve(labels.size());
  for (int s : labels) {
    Vector u = Vector::Zero(n_states);
    u(s) = 1.0;
    out.u.push_back(std::move(u));
  }
  for (std::size_t k = 0; k + 1 < labels.size(); ++k) {
    Matrix w = Matrix::Zero(n_states, n_states);
    w(labels[k], labels[k + 1]) = 1.0;
    out.w.push_back(std::move(w));
  }
  return out;
}

std::vector<int> map_decode(std::span<const Vector> u) {
  std::vector<int> out;
  out.reserve(u.size());
  for (const auto& v : u) {
    int best = 0;
    for (Eigen::Index s = 1; s < v.size(); ++s) {
      if (v(s) > v(best)) best = static_cast<int>(s);
    }
    out.push_back(best);
  }
  return out;
}

std::vector<int> viterbi_decode(const Chain& chain, const ModelParams& params, TransitionMode mode,
                                std::size_t chain_index) {
  const int k = static_cast<int>(params.n_states());
  const std::size_t n = chain.n_states();
  std::vector<double> mus(k);
  for (int s = 0; s < k; ++s) mus[s] = params.states[s].mu;
  const Vector initial = chain_index < params.delta0.size() ? params.delta0[chain_index]
                                                            : Vector::Constant(k, 1.0 / k);

  std::vector<std::vector<int>> back(n, std::vector<int>(k, 0));
  Vector score(k);
  for (int s = 0; s < k; ++s) score(s) = std::log(initial(s)) + poisson_log_pmf(chain.count(0), mus[s]);
  for (std::size_t j = 1; j < n; ++j) {
    const auto& rec = chain.records[j - 1];
    const Matrix gamma = transition_matrix(step_etas(params, rec), mode, rec.delta);
    Vector next(k);
    for (int r = 0; r < k; ++r) {
      int arg = 0;
      double best = score(0) + std::log(gamma(0, r));
      for (int q = 1; q < k; ++q) {
        const double v = score(q) + std::log(gamma(q, r));
        if (v > best) {
          best = v;
          arg = q;
        }
      }
      back[j][r] = arg;
      next(r) = best + poisson_log_pmf(chain.count(j), mus[r]);
    }
    score = next;
  }
  std::vector<int> path(n);
  int s = 0;
  for (int r = 1; r < k; ++r) {
    if (score(r) > score(s)) s = r;
  }
  for (std::size_t j = n; j-- > 0;) {
    path[j] = s;
    s = back[j][s];
  }
  return path;
}

double accuracy(std::span<const int> truth, std::span<const int> decoded) {
  if (truth.size() != decoded.size()) throw DomainError("label sequences differ in length");
  if (truth.empty()) return 1.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == decoded[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

namespace {

struct Prepared {
  std::vector<Chain> chains;
  int q = 0;
  int p = 0;
};

Prepared prepare(std::span<const Chain> chains, RandomEffects effects) {
  if (chains.empty()) throw DomainError("no chains to fit");
  Prepared out;
  out.chains.assign(chains.begin(), chains.end());
  out.q = assign_groups(out.chains, effects);
  out.p = static_cast<int>(out.chains.front().n_covariates());
  for (const auto& c : out.chains) {
    if (!c.records.empty() && static_cast<int>(c.n_covariates()) != out.p) {
      throw InputError("chains do not share the covariate dimension");
    }
  }
  if (out.p == 0) throw InputError("chains carry no covariates (an intercept column is required)");
  return out;
}

std::vector<int> all_counts(std::span<const Chain> chains) {
  std::vector<int> y;
  for (const auto& c : chains) {
    for (std::size_t j = 0; j < c.n_states(); ++j) y.push_back(c.count(j));
  }
  return y;
}

// Refits every transition regression given posteriors.
// Returns false when an inner optimiser stopped short of convergence (the
// step is then a generalised EM step).
bool fit_transitions(std::span<const Chain> chains, std::span<const PosteriorWeights> posts, Method method, int q,
                     ModelParams& params) {
  const int k = static_cast<int>(params.n_states());
  if (method == Method::ct) {
    auto& h12 = params.hazard(0, 1);
    auto& h21 = params.hazard(1, 0);
    const CtFit fit = fit_ct_generator(chains, posts, h12.beta, h21.beta, 200, true);
    h12.beta = fit.beta12;
    h21.beta = fit.beta21;
    return fit.converged;
  }
  bool converged = true;
  const Family family = method == Method::dt ? Family::logistic : Family::exponential_ph;
  for (int from = 0; from < k; ++from) {
    for (int to = 0; to < k; ++to) {
      if (to == from) continue;
      auto& h = params.hazard(from, to);
      const AugmentedRows rows = augment(chains, posts, from, to);
      if (q > 0) {
        FrailtyFit warm;
        warm.beta = h.beta;
        warm.b = h.b.size() == q ? h.b : Vector::Zero(q);
        warm.sigma2 = h.sigma2;
        const FrailtyFit fit = fit_frailty(rows, family, q, &warm);
        h.beta = fit.beta;
        h.b = fit.b;
        h.sigma2 = fit.sigma2;
        converged = converged && fit.converged;
      } else {
        const GlmFit fit = fit_glm(rows, family, h.beta);
        h.beta = fit.beta;
        converged = converged && fit.converged;
      }
    }
  }
  return converged;
}

// Standard errors and boundary flags of the current regressions, from the
// information of the weighted complete-data likelihood.
std::vector<HazardReport> report_transitions(std::span<const Chain> chains, std::span<const PosteriorWeights> posts,
                                             Method method, int q, const ModelParams& params,
                                             std::vector<std::string>& warnings) {
  const int k = static_cast<int>(params.n_states());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<HazardReport> out;
  if (method == Method::ct) {
    const Vector& b12 = params.hazard(0, 1).beta;
    const Vector& b21 = params.hazard(1, 0).beta;
    const Eigen::Index p = b12.size();
    Vector theta(2 * p);
    theta << b12, b21;
    auto f = [&](const Vector& th) { return ct_expected_loglik(chains, posts, th.head(p), th.tail(p)); };
    const Matrix info = -central_hessian(f, theta);
    HazardReport r12{0, 1, Vector::Constant(p, nan)};
    HazardReport r21{1, 0, r12.se};
    Eigen::LDLT<Matrix> ldlt(info);
    bool ok = false;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      const Vector var = ldlt.solve(Matrix::Identity(2 * p, 2 * p)).diagonal();
      if ((var.array() > 0.0).all()) {
        r12.se = var.head(p).cwiseSqrt();
        r21.se = var.tail(p).cwiseSqrt();
        ok = true;
      }
    }
    if (!ok) warnings.push_back("continuous-time information is not positive definite; SEs unavailable");
    out.push_back(std::move(r12));
    out.push_back(std::move(r21));
    return out;
  }
  const Family family = method == Method::dt ? Family::logistic : Family::exponential_ph;
  for (int from = 0; from < k; ++from) {
    for (int to = 0; to < k; ++to) {
      if (to == from) continue;
      const auto& h = params.hazard(from, to);
      const AugmentedRows rows = augment(chains, posts, from, to);
      HazardReport rep{from, to, Vector::Constant(h.beta.size(), nan)};
      rep.separation = h.beta.lpNorm<Eigen::Infinity>() > GlmOptions{}.separation_bound;
      InformationMatrix info;
      try {
        if (q > 0) {
          FrailtyFit fit;
          fit.beta = h.beta;
          fit.b = h.b;
          fit.sigma2 = h.sigma2;
          rep.sigma2_at_floor = h.sigma2 <= FrailtyOptions{}.sigma2_floor;
          info = observed_information(rows, fit, family);
        } else {
          info = observed_information(rows, h.beta, family);
        }
        rep.se = asymptotic_se(info);
        if (info.ill_conditioned) {
          warnings.push_back("information for " + std::to_string(from + 1) + "->" + std::to_string(to + 1) +
                             " is ill-conditioned (condition " + std::to_string(info.condition) + ")");
        }
      } catch (const Error& e) {
        warnings.push_back("SEs unavailable for " + std::to_string(from + 1) + "->" + std::to_string(to + 1) + ": " +
                           e.what());
      }
      out.push_back(std::move(rep));
    }
  }
  return out;
}

// Mixture EM on the pooled counts. Returns state means sorted decreasing
// and per-observation responsibilities.
struct MixtureFit {
  Vector mu;
  Vector weight;
  std::vector<Vector> resp;
  std::vector<double> trace;
};

MixtureFit poisson_mixture_em(std::span<const int> y, int k) {
  const std::size_t n = y.size();
  std::vector<int> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  MixtureFit fit;
  fit.mu.resize(k);
  fit.weight = Vector::Constant(k, 1.0 / k);
  for (int s = 0; s < k; ++s) {
    // Component s starts at the mean of the s-th quantile band from the top.
    const std::size_t lo = n * static_cast<std::size_t>(k - 1 - s) / static_cast<std::size_t>(k);
    const std::size_t hi = std::max(lo + 1, n * static_cast<std::size_t>(k - s) / static_cast<std::size_t>(k));
    double m = 0.0;
    for (std::size_t i = lo; i < hi && i < n; ++i) m += sorted[i];
    fit.mu(s) = m / static_cast<double>(hi - lo) + 1e-3 * (k - s);
  }
  fit.resp.assign(n, Vector::Zero(k));
  for (int it = 0; it < 2000; ++it) {
    double ll = 0.0;
    Vector mass = Vector::Zero(k), total = Vector::Zero(k);
    for (std::size_t i = 0; i < n; ++i) {
      Vector lp(k);
      for (int s = 0; s < k; ++s) lp(s) = std::log(fit.weight(s)) + poisson_log_pmf(y[i], fit.mu(s));
      const double m = lp.maxCoeff();
      const Vector e = (lp.array() - m).exp();
      const double z = e.sum();
      ll += m + std::log(z);
      fit.resp[i] = e / z;
      mass += fit.resp[i];
      total += fit.resp[i] * static_cast<double>(y[i]);
    }
    fit.trace.push_back(ll);
    const Vector mu_new = total.cwiseQuotient(mass.cwiseMax(1e-300));
    fit.weight = (mass / static_cast<double>(n)).cwiseMax(1e-300);
    const double change = (mu_new - fit.mu).cwiseAbs().maxCoeff();
    fit.mu = mu_new;
    if (change < 1e-10) break;
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      if (std::abs(fit.mu(a) - fit.mu(b)) < 1e-6) {
        throw DegenerateMixtureError("Poisson mixture collapsed: two components share mean " + std::to_string(fit.mu(a)));
      }
    }
  }
  // Sort by decreasing mean.
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fit.mu(a) > fit.mu(b); });
  Vector mu(k), w(k);
  for (int s = 0; s < k; ++s) {
    mu(s) = fit.mu(order[s]);
    w(s) = fit.weight(order[s]);
  }
  for (auto& r : fit.resp) {
    Vector v(k);
    for (int s = 0; s < k; ++s) v(s) = r(order[s]);
    r = v;
  }
  fit.mu = mu;
  fit.weight = w;
  return fit;
}

std::vector<std::vector<int>> split_labels(std::span<const Chain> chains, const std::vector<int>& flat) {
  std::vector<std::vector<int>> out;
  std::size_t pos = 0;
  for (const auto& c : chains) {
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                     flat.begin() + static_cast<std::ptrdiff_t>(pos + c.n_states()));
    pos += c.n_states();
  }
  return out;
}

// Initial parameters from hard labels: state means from the labels unless
// supplied, regressions from the method's own M-step.
ModelParams params_from_labels(std::span<const Chain> chains, const std::vector<std::vector<int>>& labels,
                               const Vector* mus, Method method, int k, int p, int q) {
  ModelParams params = make_params(k, p, q, chains.size());
  std::vector<PosteriorWeights> posts;
  for (const auto& l : labels) posts.push_back(hard_posteriors(l, k));
  Vector mu(k);
  if (mus) {
    mu = *mus;
  } else {
    std::vector<Vector> u;
    std::vector<int> y;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      for (std::size_t j = 0; j < chains[c].n_states(); ++j) {
        u.push_back(posts[c].u[j]);
        y.push_back(chains[c].count(j));
      }
    }
    mu = fit_poisson_mixture(u, y);
  }
  for (int s = 0; s < k; ++s) params.states[s].mu = mu(s);
  if (q > 0) {
    // Random-intercept fits start from the fixed-effect fit of the labels.
    fit_transitions(chains, posts, method == Method::dt ? Method::dt : Method::ph, 0, params);
    for (auto& st : params.states) {
      for (auto& h : st.exits) h.sigma2 = 0.1;
    }
  }
  if (method == Method::ct) {
    // The CT likelihood can have a second mode at very large rates where
    // Gamma sits at the stationary distribution; start from the PH fit of
    // the same labels, which lies in the basin of the low-rate mode.
    fit_transitions(chains, posts, Method::ph, q, params);
  }
  fit_transitions(chains, posts, method, q, params);
  return params;
}

double l1_change(const ModelParams& a, const ModelParams& b, bool with_sigma2) {
  double d = 0.0;
  for (std::size_t s = 0; s < a.n_states(); ++s) {
    d += std::abs(a.states[s].mu - b.states[s].mu);
    for (std::size_t e = 0; e < a.states[s].exits.size(); ++e) {
      const auto& ha = a.states[s].exits[e];
      const auto& hb = b.states[s].exits[e];
      d += (ha.beta - hb.beta).cwiseAbs().sum();
      if (with_sigma2) d += std::abs(ha.sigma2 - hb.sigma2);
    }
  }
  return d;
}

std::vector<int> quantile_labels(std::span<const int> y, int k) {
  std::vector<int> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> cut(k - 1);
  for (int s = 1; s < k; ++s) cut[s - 1] = sorted[sorted.size() * static_cast<std::size_t>(s) / k];
  std::vector<int> out;
  for (int v : y) {
    int band = 0;
    for (int c : cut) band += v >= c;
    out.push_back(k - 1 - std::min(band, k - 1));
  }
  return out;
}

}  // namespace

FitResult fit_pmm(std::span<const Chain> chains, const EmConfig& config) {
  EmConfig cfg = config;
  cfg.method = Method::pmm;
  validate_em_config(cfg);
  Prepared prep = prepare(chains, cfg.random_effects);
  const int k = cfg.n_states;
  const std::vector<int> y = all_counts(prep.chains);
  const MixtureFit mix = poisson_mixture_em(y, k);

  FitResult out;
  out.method = Method::pmm;
  out.random_effects = cfg.random_effects;
  out.loglik_trace = mix.trace;
  out.iterations = static_cast<int>(mix.trace.size());
  out.converged = true;
  const std::vector<int> flat = map_decode(mix.resp);
  out.decoded = split_labels(prep.chains, flat);
  out.params = params_from_labels(prep.chains, out.decoded, &mix.mu, cfg.pmm_transition, k, prep.p, prep.q);
  std::size_t pos = 0;
  for (std::size_t c = 0; c < prep.chains.size(); ++c) {
    PosteriorWeights pw = hard_posteriors(out.decoded[c], k);
    for (std::size_t j = 0; j < prep.chains[c].n_states(); ++j) pw.u[j] = mix.resp[pos + j];
    pos += prep.chains[c].n_states();
    out.posterior.push_back(std::move(pw));
    out.chain_ids.push_back(prep.chains[c].id);
  }
  out.hazards = report_transitions(prep.chains, std::span<const PosteriorWeights>(out.posterior),
                                   cfg.pmm_transition, prep.q, out.params, out.warnings);
  return out;
}

FitResult fit_em(std::span<const Chain> chains, const EmConfig& config) {
  if (config.method == Method::pmm) return fit_pmm(chains, config);
  validate_em_config(config);
  Prepared prep = prepare(chains, config.random_effects);
  const int k = config.n_states;
  const TransitionMode mode = transition_mode(config.method);
  const bool frailty = prep.q > 0;

  FitResult out;
  out.method = config.method;
  out.random_effects = config.random_effects;
  for (const auto& c : prep.chains) out.chain_ids.push_back(c.id);

  // Initialisation from PMM MAP labels.
  {
    std::vector<std::vector<int>> labels;
    Vector mus;
    bool have_mus = false;
    try {
      const MixtureFit mix = poisson_mixture_em(all_counts(prep.chains), k);
      labels = split_labels(prep.chains, map_decode(mix.resp));
      mus = mix.mu;
      have_mus = true;
    } catch (const DegenerateMixtureError& e) {
      out.warnings.push_back(std::string(e.what()) + "; initialising from a quantile split of the counts");
      labels = split_labels(prep.chains, quantile_labels(all_counts(prep.chains), k));
    }
    out.params = params_from_labels(prep.chains, labels, have_mus ? &mus : nullptr, config.method, k, prep.p,
                                    prep.q);
  }

  std::vector<ForwardBackwardResult> fbs(prep.chains.size());
  auto e_step = [&]() {
    double ll = 0.0;
    long clamps = 0;
    out.posterior.resize(prep.chains.size());
    for (std::size_t c = 0; c < prep.chains.size(); ++c) {
      fbs[c] = forward_backward(prep.chains[c], out.params, mode, c);
      out.params.delta0[c] = update_delta(fbs[c], out.params.delta0[c]);
      refresh_forward(fbs[c], out.params.delta0[c]);
      ll += fbs[c].log_lik;
      clamps += fbs[c].clamp_events;
      out.posterior[c] = transition_posteriors(fbs[c]);
    }
    out.clamp_events = clamps;
    out.loglik_trace.push_back(ll);
  };

  int partial_steps = 0;
  std::vector<Vector> u_all;
  std::vector<int> y_all = all_counts(prep.chains);
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    e_step();
    const ModelParams before = out.params;
    try {
      u_all.clear();
      for (const auto& pw : out.posterior) u_all.insert(u_all.end(), pw.u.begin(), pw.u.end());
      const Vector mu = fit_poisson_mixture(u_all, y_all);
      for (int s = 0; s < k; ++s) out.params.states[s].mu = mu(s);
      if (!fit_transitions(prep.chains, out.posterior, config.method, prep.q, out.params)) ++partial_steps;
    } catch (const StateStarvationError& e) {
      throw StateStarvationError(e.state(), std::string(e.what()) + " at EM iteration " + std::to_string(iter));
    }
    sort_states_by_mu(out.params);
    out.iterations = iter;
    out.final_change = l1_change(before, out.params, frailty);
    if (out.final_change <= config.tol) {
      out.converged = true;
      break;
    }
  }
  e_step();
  out.hazards = report_transitions(prep.chains, out.posterior, config.method, prep.q, out.params, out.warnings);

  for (std::size_t c = 0; c < prep.chains.size(); ++c) out.decoded.push_back(map_decode(out.posterior[c].u));

  const double allowed = frailty ? 1e-3 : 1e-8;
  for (std::size_t i = 1; i < out.loglik_trace.size(); ++i) {
    if (out.loglik_trace[i] < out.loglik_trace[i - 1] - allowed) {
      out.monotone = false;
      std::ostringstream msg;
      msg << "log-likelihood decreased by " << out.loglik_trace[i - 1] - out.loglik_trace[i] << " at iteration "
          << i;
      out.warnings.push_back(msg.str());
      break;
    }
  }
  if (partial_steps > 0) {
    out.warnings.push_back("the transition M-step stopped short of convergence in " + std::to_string(partial_steps) +
                           " iteration(s)");
  }
  if (!out.converged) {
    out.warnings.push_back("EM did not converge in " + std::to_string(config.max_iters) + " iterations (last L1 change " +
                           std::to_string(out.final_change) + ")");
  }
  return out;
}

std::vector<FitResult> fit_em_individuals(std::span<const Chain> chains, const EmConfig& config) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<Chain>> by_id;
  for (const auto& c : chains) {
    auto [it, fresh] = by_id.try_emplace(c.id);
    if (fresh) order.push_back(c.id);
    it->second.push_back(c);
  }
  std::vector<FitResult> out;
  for (const auto& id : order) out.push_back(fit_em(by_id.at(id), config));
  return out;
}

}  // namespace phhmm
