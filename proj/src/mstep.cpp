#include "phhmm/mstep.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "phhmm/errors.hpp"

namespace phhmm {

void AugmentedRows::push_back(const Vector& x, int group, double delta, bool is_event, double weight) {
  if (x.size() != p_) throw DomainError("augmented row has the wrong covariate dimension");
  x_.insert(x_.end(), x.data(), x.data() + x.size());
  group_.push_back(group);
  delta_.push_back(delta);
  event_.push_back(is_event ? 1.0 : 0.0);
  weight_.push_back(weight);
  n_groups_ = std::max(n_groups_, group + 1);
}

void AugmentedRows::append(const AugmentedRows& other) {
  if (other.empty()) return;
  if (empty() && p_ != other.p_) p_ = other.p_;
  if (other.p_ != p_) throw DomainError("cannot append rows of a different covariate dimension");
  x_.insert(x_.end(), other.x_.begin(), other.x_.end());
  group_.insert(group_.end(), other.group_.begin(), other.group_.end());
  delta_.insert(delta_.end(), other.delta_.begin(), other.delta_.end());
  event_.insert(event_.end(), other.event_.begin(), other.event_.end());
  weight_.insert(weight_.end(), other.weight_.begin(), other.weight_.end());
  n_groups_ = std::max(n_groups_, other.n_groups_);
}

void AugmentedRows::reserve(std::size_t n) {
  x_.reserve(n * static_cast<std::size_t>(p_));
  group_.reserve(n);
  delta_.reserve(n);
  event_.reserve(n);
  weight_.reserve(n);
}

AugmentedRow AugmentedRows::row(std::size_t i) const {
  AugmentedRow r;
  r.x = Eigen::Map<const Vector>(x_.data() + i * static_cast<std::size_t>(p_), p_);
  r.group = group_[i];
  r.delta = delta_[i];
  r.is_event = event_[i] > 0.5;
  r.weight = weight_[i];
  return r;
}

double AugmentedRows::total_weight() const {
  double s = 0.0;
  for (double w : weight_) s += w;
  return s;
}

AugmentedRows augment(const Chain& chain, const PosteriorWeights& posterior, int from, int to,
                      double weight_floor) {
  AugmentedRows rows(static_cast<Eigen::Index>(chain.n_covariates()));
  rows.reserve(2 * chain.n_steps());
  for (std::size_t k = 0; k < chain.n_steps(); ++k) {
    const auto& rec = chain.records[k];
    const Matrix& w = posterior.w[k];
    const double moved = w(from, to);
    const double rest = std::max(0.0, w.row(from).sum() - moved);
    if (moved >= weight_floor) rows.push_back(rec.x, rec.group, rec.delta, true, moved);
    if (rest >= weight_floor) rows.push_back(rec.x, rec.group, rec.delta, false, rest);
  }
  return rows;
}

AugmentedRows augment(const Chain& chain, const PosteriorWeights& posterior, int state, double weight_floor) {
  return augment(chain, posterior, state, 1 - state, weight_floor);
}

AugmentedRows augment(std::span<const Chain> chains, std::span<const PosteriorWeights> posteriors, int from,
                      int to, double weight_floor) {
  AugmentedRows rows(chains.empty() ? 0 : static_cast<Eigen::Index>(chains.front().n_covariates()));
  for (std::size_t c = 0; c < chains.size(); ++c) rows.append(augment(chains[c], posteriors[c], from, to, weight_floor));
  return rows;
}

Vector fit_poisson_mixture(std::span<const Vector> u, std::span<const int> y) {
  if (u.empty()) throw DomainError("no observations for the emission fit");
  const Eigen::Index k = u.front().size();
  Vector mass = Vector::Zero(k), total = Vector::Zero(k);
  for (std::size_t i = 0; i < u.size(); ++i) {
    mass += u[i];
    total += u[i] * static_cast<double>(y[i]);
  }
  for (Eigen::Index s = 0; s < k; ++s) {
    if (mass(s) < 1e-8) {
      throw StateStarvationError(static_cast<int>(s), "state " + std::to_string(s + 1) + " received no posterior mass");
    }
  }
  return total.cwiseQuotient(mass);
}

// ---------------------------------------------------------------------------

namespace {

// Psi and its first three derivatives for one row.
struct PsiTerms {
  double psi, d1, d2, d3;
};

inline PsiTerms psi_terms(Family family, double eta, double delta) {
  eta = clamp_eta(eta);
  if (family == Family::exponential_ph) {
    const double v = delta * std::exp(eta);
    return {v, v, v, v};
  }
  const double p = expit(eta);
  const double v = p * (1.0 - p);
  return {log1p_exp(eta), p, v, v * (1.0 - 2.0 * p)};
}

Vector etas_of(const AugmentedRows& rows, const Vector& beta) {
  if (beta.size() != rows.n_covariates()) throw DomainError("coefficient vector has the wrong dimension");
  return rows.x() * beta;
}

}  // namespace

double glm_loglik(const AugmentedRows& rows, Family family, const Vector& beta) {
  const Vector eta = etas_of(rows, beta);
  double ll = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto t = psi_terms(family, eta(i), rows.delta()[i]);
    ll += rows.weight()[i] * (rows.event()[i] * clamp_eta(eta(i)) - t.psi);
  }
  return ll;
}

Vector glm_gradient(const AugmentedRows& rows, Family family, const Vector& beta) {
  const Vector eta = etas_of(rows, beta);
  Vector r(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto t = psi_terms(family, eta(i), rows.delta()[i]);
    r(i) = rows.weight()[i] * (rows.event()[i] - t.d1);
  }
  return rows.x().transpose() * r;
}

Matrix glm_information(const AugmentedRows& rows, Family family, const Vector& beta) {
  const Vector eta = etas_of(rows, beta);
  Vector d(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d(i) = rows.weight()[i] * psi_terms(family, eta(i), rows.delta()[i]).d2;
  }
  const auto x = rows.x();
  return x.transpose() * d.asDiagonal() * x;
}

namespace {

double intercept_start(const AugmentedRows& rows, Family family) {
  double events = 0.0, exposure = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    events += rows.weight()[i] * rows.event()[i];
    exposure += rows.weight()[i] * (family == Family::exponential_ph ? rows.delta()[i] : 1.0);
  }
  if (!(exposure > 0.0)) return 0.0;
  const double rate = std::clamp(events / exposure, 1e-12, family == Family::logistic ? 1.0 - 1e-12 : 1e12);
  return family == Family::exponential_ph ? std::log(rate) : std::log(rate / (1.0 - rate));
}

Vector newton_direction(const Matrix& info, const Vector& grad) {
  Eigen::LDLT<Matrix> ldlt(info);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
    const Vector dir = ldlt.solve(grad);
    if (dir.allFinite()) return dir;
  }
  // Rank-deficient information: fall back to a small ridge.
  const double ridge = 1e-8 * std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
  Matrix reg = info;
  reg.diagonal().array() += ridge;
  Eigen::LDLT<Matrix> fallback(reg);
  if (fallback.info() != Eigen::Success) throw SingularDesignError("weighted design matrix is singular");
  return fallback.solve(grad);
}

// Rank check on the weighted Gram matrix X' diag(w) X, which is the
// information up to the positive Psi'' factors.
void check_design_rank(const AugmentedRows& rows) {
  const auto x = rows.x();
  const Eigen::Map<const Vector> w(rows.weight().data(), static_cast<Eigen::Index>(rows.size()));
  const Matrix gram = x.transpose() * w.asDiagonal() * x;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(eig.eigenvalues()(0) > 1e-12 * std::max(top, 1e-300))) {
    std::ostringstream msg;
    msg << "weighted design matrix is rank deficient; null direction (" << eig.eigenvectors().col(0).transpose()
        << ")";
    throw SingularDesignError(msg.str());
  }
}

// Logistic fitted probabilities within ~1e-13 of 0 or 1.
constexpr double kSeparationEta = 30.0;

}  // namespace

GlmFit fit_glm(const AugmentedRows& rows, Family family, const Vector& init, const GlmOptions& options) {
  const Eigen::Index p = rows.n_covariates();
  GlmFit fit;
  if (init.size() == p) {
    fit.beta = init;
  } else {
    fit.beta = Vector::Zero(p);
    if (p > 0) fit.beta(0) = intercept_start(rows, family);
  }
  if (rows.empty() || rows.total_weight() <= 0.0) {
    fit.converged = true;
    return fit;
  }
  check_design_rank(rows);

  fit.loglik = glm_loglik(rows, family, fit.beta);
  Vector grad = glm_gradient(rows, family, fit.beta);
  fit.grad_norm = grad.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < options.max_iter; ++it) {
    if (fit.grad_norm <= options.grad_tol) {
      fit.converged = true;
      break;
    }
    fit.iterations = it + 1;
    const Vector dir = newton_direction(glm_information(rows, family, fit.beta), grad);
    const double decrement = grad.dot(dir);
    if (decrement < 1e-20) {
      fit.converged = true;
      break;
    }
    if (decrement < 1e-8) {
      // Inside the quadratic basin the full step is safe; the likelihood can
      // no longer discriminate candidates, so judge progress by the gradient.
      const Vector cand = fit.beta + dir;
      const Vector g = glm_gradient(rows, family, cand);
      const double gn = g.lpNorm<Eigen::Infinity>();
      if (!(gn < fit.grad_norm)) {
        fit.converged = decrement < 1e-12;
        break;
      }
      fit.beta = cand;
      fit.loglik = glm_loglik(rows, family, cand);
      grad = g;
      fit.grad_norm = gn;
      continue;
    }
    double step = 1.0;
    bool improved = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      const Vector cand = fit.beta + step * dir;
      const double ll = glm_loglik(rows, family, cand);
      if (std::isfinite(ll) && ll >= fit.loglik) {
        fit.beta = cand;
        fit.loglik = ll;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    grad = glm_gradient(rows, family, fit.beta);
    fit.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (fit.beta.lpNorm<Eigen::Infinity>() > options.separation_bound) {
      fit.separation = true;
      break;
    }
  }
  if (!fit.converged && !fit.separation && fit.iterations >= options.max_iter) {
    throw ConvergenceError("Newton-Raphson did not converge in " + std::to_string(options.max_iter) +
                           " iterations (gradient norm " + std::to_string(fit.grad_norm) + ")");
  }
  const Vector eta = etas_of(rows, fit.beta);
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (std::abs(eta(i)) > kEtaClamp) ++fit.clamp_events;
    // The gradient of a separated logistic fit decays geometrically, so
    // Newton can meet grad_tol long before |beta| crosses the bound.
    if (family == Family::logistic && std::abs(eta(i)) > kSeparationEta) fit.separation = true;
  }
  return fit;
}

GlmFit fit_weighted_exp_ph(const AugmentedRows& rows, const Vector& init, const GlmOptions& options) {
  return fit_glm(rows, Family::exponential_ph, init, options);
}

GlmFit fit_weighted_logistic(const AugmentedRows& rows, const Vector& init, const GlmOptions& options) {
  return fit_glm(rows, Family::logistic, init, options);
}

Vector update_delta(const ForwardBackwardResult& fb, const Vector& delta_old) {
  Vector d = delta_old.cwiseProduct(fb.emission[0]);
  if (!fb.gamma.empty()) d = d.cwiseProduct(fb.gamma[0] * fb.nu[1]);
  const double s = d.sum();
  if (!(s > 0.0)) return delta_old;
  return d / s;
}

}  // namespace phhmm
