// Random-intercept fits. The design is one-hot in the groups, so the
// Hessian of the inner problem is diagonal and every group's mode is a
// one-dimensional Newton problem.

#include <algorithm>
#include <cmath>

#include "phhmm/errors.hpp"
#include "phhmm/mstep.hpp"
#include "phhmm/optimize.hpp"

namespace phhmm {

namespace {

struct GroupSums {
  Vector ll;    // sum w (y eta - Psi)
  Vector score; // sum w (y - Psi')
  Vector a;     // sum w Psi''
  Vector t;     // sum w Psi'''
};

inline void terms(Family family, double eta, double delta, double& psi, double& d1, double& d2, double& d3) {
  eta = clamp_eta(eta);
  if (family == Family::exponential_ph) {
    psi = d1 = d2 = d3 = delta * std::exp(eta);
  } else {
    const double p = expit(eta);
    psi = log1p_exp(eta);
    d1 = p;
    d2 = p * (1.0 - p);
    d3 = d2 * (1.0 - 2.0 * p);
  }
}

GroupSums group_sums(const AugmentedRows& rows, Family family, const Vector& fixed_eta, const Vector& b, int q) {
  GroupSums g{Vector::Zero(q), Vector::Zero(q), Vector::Zero(q), Vector::Zero(q)};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int k = rows.group()[i];
    if (k < 0) continue;
    const double eta = fixed_eta(i) + b(k);
    double psi, d1, d2, d3;
    terms(family, eta, rows.delta()[i], psi, d1, d2, d3);
    const double w = rows.weight()[i], y = rows.event()[i];
    g.ll(k) += w * (y * clamp_eta(eta) - psi);
    g.score(k) += w * (y - d1);
    g.a(k) += w * d2;
    g.t(k) += w * d3;
  }
  return g;
}

double ungrouped_loglik(const AugmentedRows& rows, Family family, const Vector& fixed_eta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows.group()[i] >= 0) continue;
    double psi, d1, d2, d3;
    terms(family, fixed_eta(i), rows.delta()[i], psi, d1, d2, d3);
    ll += rows.weight()[i] * (rows.event()[i] * clamp_eta(fixed_eta(i)) - psi);
  }
  return ll;
}

}  // namespace

LaplaceEvaluation laplace_objective(const AugmentedRows& rows, Family family, int q, const Vector& beta,
                                    double sigma2, const Vector* b_start, const FrailtyOptions& options) {
  if (!(sigma2 > 0.0)) throw DomainError("random-intercept variance must be positive");
  if (rows.n_groups() > q) throw DomainError("row group index exceeds the number of random intercepts");
  const auto x = rows.x();
  const Vector fixed_eta = x * beta;
  const double inv_s2 = 1.0 / sigma2;

  Vector b = (b_start && b_start->size() == q) ? *b_start : Vector::Zero(q);
  GroupSums g = group_sums(rows, family, fixed_eta, b, q);
  Vector obj = g.ll - 0.5 * inv_s2 * b.cwiseAbs2();
  Vector grad = g.score - inv_s2 * b;

  for (int it = 0; it < options.max_inner; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() <= options.inner_grad_tol) break;
    const Vector step = grad.cwiseQuotient(g.a.array().matrix() + Vector::Constant(q, inv_s2));
    Vector scale = Vector::Ones(q);
    Vector cand = b + step;
    // Per-group step halving: groups are independent given beta.
    for (int h = 0; h < 30; ++h) {
      const GroupSums gc = group_sums(rows, family, fixed_eta, cand, q);
      const Vector oc = gc.ll - 0.5 * inv_s2 * cand.cwiseAbs2();
      bool all_ok = true;
      for (int k = 0; k < q; ++k) {
        if (scale(k) == 0.0) continue;
        if (std::isfinite(oc(k)) && oc(k) >= obj(k) - 1e-12 * std::abs(obj(k))) {
          scale(k) = 0.0;  // accepted
        } else {
          all_ok = false;
          scale(k) *= 0.5;
          cand(k) = b(k) + scale(k) * step(k);
        }
      }
      if (all_ok) break;
    }
    b = cand;
    g = group_sums(rows, family, fixed_eta, b, q);
    obj = g.ll - 0.5 * inv_s2 * b.cwiseAbs2();
    const Vector new_grad = g.score - inv_s2 * b;
    if ((new_grad - grad).lpNorm<Eigen::Infinity>() == 0.0) {
      grad = new_grad;
      break;
    }
    grad = new_grad;
  }

  LaplaceEvaluation out;
  out.inner_grad_norm = grad.lpNorm<Eigen::Infinity>();
  const Vector h = g.a + Vector::Constant(q, inv_s2);
  out.value = ungrouped_loglik(rows, family, fixed_eta) + obj.sum() - 0.5 * q * std::log(sigma2) -
              0.5 * h.array().log().sum();

  // Total derivatives, accounting for the dependence of the modes on
  // (beta, sigma2) through the log-determinant.
  const Eigen::Index p = beta.size();
  Vector score = Vector::Zero(p);
  Matrix bk = Matrix::Zero(q, p), ck = Matrix::Zero(q, p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int k = rows.group()[i];
    const double eta = fixed_eta(i) + (k >= 0 ? b(k) : 0.0);
    double psi, d1, d2, d3;
    terms(family, eta, rows.delta()[i], psi, d1, d2, d3);
    const double w = rows.weight()[i];
    const auto xi = x.row(static_cast<Eigen::Index>(i));
    score += (w * (rows.event()[i] - d1)) * xi.transpose();
    if (k >= 0) {
      bk.row(k) += (w * d2) * xi;
      ck.row(k) += (w * d3) * xi;
    }
  }
  Vector grad_beta = score;
  double grad_tau = 0.5 * inv_s2 * b.squaredNorm() - 0.5 * q;
  for (int k = 0; k < q; ++k) {
    const Vector dh_dbeta = (ck.row(k) - (g.t(k) / h(k)) * bk.row(k)).transpose();
    grad_beta -= 0.5 * dh_dbeta / h(k);
    const double dh_dtau = -inv_s2 + g.t(k) * b(k) * inv_s2 / h(k);
    grad_tau -= 0.5 * dh_dtau / h(k);
  }
  out.grad_beta = std::move(grad_beta);
  out.grad_log_sigma2 = grad_tau;
  out.b = std::move(b);
  return out;
}

FrailtyFit fit_frailty(const AugmentedRows& rows, Family family, int q, const FrailtyFit* init,
                       const FrailtyOptions& options) {
  const Eigen::Index p = rows.n_covariates();
  Vector beta0 = (init && init->beta.size() == p) ? init->beta : fit_glm(rows, family).beta;
  Vector b_warm = (init && init->b.size() == q) ? init->b : Vector::Zero(q);
  const bool fixed = options.fixed_sigma2.has_value();
  double sigma2_0 = fixed ? *options.fixed_sigma2 : (init ? init->sigma2 : 0.1);
  // The floor guards the estimated variance only; a fixed value is used as given.
  if (!fixed) sigma2_0 = std::max(sigma2_0, options.sigma2_floor);
  if (!(sigma2_0 > 0.0)) throw DomainError("random-intercept variance must be positive");

  const Eigen::Index n = fixed ? p : p + 1;
  Vector x0(n);
  x0.head(p) = beta0;
  if (!fixed) x0(p) = std::log(sigma2_0);

  LaplaceEvaluation last;
  auto objective = [&](const Vector& theta, Vector* grad) {
    const double raw = fixed ? sigma2_0 : std::exp(theta(p));
    const double s2 = fixed ? raw : std::max(raw, options.sigma2_floor);
    LaplaceEvaluation ev = laplace_objective(rows, family, q, theta.head(p), s2, &b_warm, options);
    // Only a solved inner problem is a safe start for the next evaluation.
    if (ev.b.allFinite() && ev.inner_grad_norm <= 1e-6) b_warm = ev.b;
    if (grad) {
      grad->resize(n);
      grad->head(p) = -ev.grad_beta;
      if (!fixed) (*grad)(p) = raw < options.sigma2_floor ? 0.0 : -ev.grad_log_sigma2;
    }
    const double v = -ev.value;
    last = std::move(ev);
    return v;
  };

  BfgsOptions bopt;
  bopt.max_iter = options.max_outer;
  bopt.grad_tol = options.outer_grad_tol;
  const BfgsResult res = minimize_bfgs(objective, x0, bopt);
  objective(res.x, nullptr);  // leave `last` at the optimum

  FrailtyFit fit;
  fit.beta = res.x.head(p);
  fit.b = last.b;
  const double raw = fixed ? sigma2_0 : std::exp(res.x(p));
  fit.sigma2 = fixed ? raw : std::max(raw, options.sigma2_floor);
  fit.at_floor = !fixed && raw <= options.sigma2_floor;
  fit.laplace_loglik = last.value;
  fit.inner_grad_norm = last.inner_grad_norm;
  fit.iterations = res.iterations;
  fit.converged = res.converged;
  return fit;
}

FrailtyFit fit_weighted_exp_ph_frailty(const AugmentedRows& rows, int q, const FrailtyFit* init,
                                       const FrailtyOptions& options) {
  return fit_frailty(rows, Family::exponential_ph, q, init, options);
}

}  // namespace phhmm
