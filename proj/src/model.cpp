#include "phhmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "phhmm/errors.hpp"

namespace phhmm {

double clamp_eta(double eta, ClampCounter* counter) {
  if (eta > kEtaClamp || eta < -kEtaClamp) {
    if (counter) ++counter->events;
    return std::clamp(eta, -kEtaClamp, kEtaClamp);
  }
  return eta;
}

double hazard(double eta, ClampCounter* counter) { return std::exp(clamp_eta(eta, counter)); }

double exp_density(double delta, double lambda) {
  if (!(delta > 0.0) || !(lambda > 0.0)) {
    throw DomainError("exp_density requires delta > 0 and lambda > 0");
  }
  return lambda * std::exp(-lambda * delta);
}

double exp_survival(double delta, double lambda) {
  if (!(delta > 0.0) || lambda < 0.0) {
    throw DomainError("exp_survival requires delta > 0 and lambda >= 0");
  }
  return std::exp(-lambda * delta);
}

double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double log1p_exp(double eta) {
  if (eta > 35.0) return eta + std::exp(-eta);
  if (eta < -35.0) return std::exp(eta);
  return std::log1p(std::exp(eta));
}

const char* to_string(TransitionMode mode) {
  switch (mode) {
    case TransitionMode::ph: return "ph";
    case TransitionMode::dt: return "dt";
    case TransitionMode::ct: return "ct";
  }
  return "?";
}

Matrix ct_closed_form(double q12, double q21, double delta) {
  // exp(Q d) = I + (1 - e^{-s d}) / s * Q  with s = q12 + q21.
  const double s = q12 + q21;
  const double factor = s > 0.0 ? -std::expm1(-s * delta) / s : delta;
  Matrix g(2, 2);
  g(0, 1) = q12 * factor;
  g(0, 0) = 1.0 - g(0, 1);
  g(1, 0) = q21 * factor;
  g(1, 1) = 1.0 - g(1, 0);
  return g;
}

Matrix expm_pade6(const Matrix& a) {
  constexpr int q = 6;
  const Eigen::Index n = a.rows();
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
  const Matrix x = a / std::ldexp(1.0, squarings);

  Matrix numer = Matrix::Identity(n, n);
  Matrix denom = Matrix::Identity(n, n);
  Matrix power = Matrix::Identity(n, n);
  double c = 1.0;
  for (int k = 1; k <= q; ++k) {
    c *= static_cast<double>(q - k + 1) / static_cast<double>(k * (2 * q - k + 1));
    power = power * x;
    numer += c * power;
    denom += ((k % 2) ? -c : c) * power;
  }
  Matrix e = denom.partialPivLu().solve(numer);
  for (int i = 0; i < squarings; ++i) e = e * e;
  return e;
}

Matrix transition_matrix(const Matrix& etas, TransitionMode mode, double delta,
                         ClampCounter* counter) {
  const Eigen::Index k = etas.rows();
  Matrix g(k, k);
  if (mode == TransitionMode::ct) {
    if (k == 2) {
      return ct_closed_form(hazard(etas(0, 1), counter), hazard(etas(1, 0), counter), delta);
    }
    Matrix gen = Matrix::Zero(k, k);
    for (Eigen::Index q = 0; q < k; ++q) {
      for (Eigen::Index r = 0; r < k; ++r) {
        if (r == q) continue;
        gen(q, r) = hazard(etas(q, r), counter);
        gen(q, q) -= gen(q, r);
      }
    }
    g = expm_pade6(gen * delta);
    for (Eigen::Index q = 0; q < k; ++q) {
      g.row(q) = g.row(q).cwiseMax(0.0);
      g.row(q) /= g.row(q).sum();
    }
    return g;
  }

  // Multinomial logit with the "stay" category as reference (expit for K=2).
  for (Eigen::Index q = 0; q < k; ++q) {
    double top = 0.0;
    for (Eigen::Index r = 0; r < k; ++r) {
      if (r != q) top = std::max(top, clamp_eta(etas(q, r), counter));
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < k; ++r) {
      const double logit = r == q ? 0.0 : std::clamp(etas(q, r), -kEtaClamp, kEtaClamp);
      g(q, r) = std::exp(logit - top);
      total += g(q, r);
    }
    g.row(q) /= total;
  }
  return g;
}

namespace {

// exp(eta) - log(1 + exp(eta)), accurate when exp(eta) is tiny.
double penalty_term(double eta) {
  const double z = std::exp(eta);
  if (z < 1e-2) {
    double sum = 0.0;
    double power = z;
    for (int k = 2; k <= 14; ++k) {
      power *= z;
      sum += ((k % 2) ? -power : power) / k;
    }
    return sum;
  }
  return z - std::log1p(z);
}

}  // namespace

double ph_penalty(std::span<const double> etas) {
  double total = 0.0;
  for (double eta : etas) total += penalty_term(clamp_eta(eta));
  return total;
}

PenaltyHessianCheck penalty_hessian_check(const Matrix& design, const Vector& beta) {
  if (design.rows() == 0) throw DomainError("penalty_hessian_check needs a non-empty design");
  PenaltyHessianCheck out;
  const Vector eta = design * beta;
  out.omega.resize(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double z = std::exp(clamp_eta(eta(i)));
    out.omega(i) = z * (1.0 - 1.0 / ((1.0 + z) * (1.0 + z)));
  }
  out.hessian = design.transpose() * out.omega.asDiagonal() * design;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(out.hessian, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = eig.eigenvalues().minCoeff();
  out.psd = out.min_eigenvalue >= -1e-10;
  return out;
}

void validate_chain(const Chain& chain, bool discrete) {
  const auto p = chain.n_covariates();
  double previous = chain.t0;
  for (std::size_t j = 0; j < chain.records.size(); ++j) {
    const auto& r = chain.records[j];
    std::ostringstream where;
    where << "chain '" << chain.id << "' record " << (j + 1);
    if (!(r.t > previous)) throw InputError(where.str() + ": timestamps must be strictly increasing");
    if (!(r.delta > 0.0)) throw InputError(where.str() + ": elapsed time must be positive");
    if (discrete && r.delta != 1.0) throw InputError(where.str() + ": discrete mode requires unit spacing");
    if (static_cast<std::size_t>(r.x.size()) != p) throw InputError(where.str() + ": covariate dimension mismatch");
    if (r.y < 0) throw InputError(where.str() + ": negative count");
    previous = r.t;
  }
  if (chain.y0 < 0) throw InputError("chain '" + chain.id + "': negative initial count");
}

ModelParams make_params(int n_states, int p, int q, std::size_t n_chains) {
  ModelParams params;
  params.states.resize(static_cast<std::size_t>(n_states));
  for (auto& state : params.states) {
    state.exits.resize(static_cast<std::size_t>(n_states - 1));
    for (auto& h : state.exits) {
      h.beta = Vector::Zero(p);
      h.b = Vector::Zero(q);
      h.sigma2 = 1.0;
    }
  }
  params.delta0.assign(n_chains, Vector::Constant(n_states, 1.0 / n_states));
  return params;
}

void validate_params(const ModelParams& params) {
  const auto k = params.n_states();
  if (k < 2) throw DomainError("a model needs at least two states");
  for (const auto& state : params.states) {
    if (!(state.mu >= 0.0)) throw DomainError("emission means must be non-negative");
    if (state.exits.size() != k - 1) throw DomainError("each state needs K-1 exit hazards");
    for (const auto& h : state.exits) {
      if (h.b.size() > 0 && !(h.sigma2 > 0.0)) throw DomainError("random-intercept variance must be positive");
    }
  }
  for (const auto& d : params.delta0) {
    if (static_cast<std::size_t>(d.size()) != k) throw DomainError("initial distribution has wrong length");
    if (d.minCoeff() < 0.0 || std::abs(d.sum() - 1.0) > 1e-12) {
      throw DomainError("initial distribution must lie on the simplex");
    }
  }
}

double linear_predictor(const TransitionHazard& hazard, const ObservationRecord& record) {
  double eta = record.x.dot(hazard.beta);
  if (record.group >= 0 && record.group < hazard.b.size()) eta += hazard.b(record.group);
  return eta;
}

Matrix step_etas(const ModelParams& params, const ObservationRecord& record) {
  const auto k = static_cast<int>(params.n_states());
  Matrix etas = Matrix::Zero(k, k);
  for (int q = 0; q < k; ++q) {
    for (int r = 0; r < k; ++r) {
      if (r != q) etas(q, r) = linear_predictor(params.hazard(q, r), record);
    }
  }
  return etas;
}

std::vector<int> sort_states_by_mu(ModelParams& params) {
  const auto k = static_cast<int>(params.n_states());
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return params.states[a].mu > params.states[b].mu; });
  if (std::is_sorted(perm.begin(), perm.end())) return perm;

  const ModelParams old = params;
  for (int i = 0; i < k; ++i) {
    params.states[i].mu = old.states[perm[i]].mu;
    for (int j = 0; j < k; ++j) {
      if (j != i) params.hazard(i, j) = old.hazard(perm[i], perm[j]);
    }
  }
  for (std::size_t c = 0; c < params.delta0.size(); ++c) {
    for (int i = 0; i < k; ++i) params.delta0[c](i) = old.delta0[c](perm[i]);
  }
  return perm;
}

}  // namespace phhmm
