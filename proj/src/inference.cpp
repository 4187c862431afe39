#include "phhmm/inference.hpp"

#include <cmath>
#include <sstream>

#include "phhmm/errors.hpp"

namespace phhmm {

namespace {

double psi2(Family family, double eta, double delta) {
  eta = clamp_eta(eta);
  if (family == Family::exponential_ph) return delta * std::exp(eta);
  const double p = expit(eta);
  return p * (1.0 - p);
}

InformationMatrix finish(Matrix info, Eigen::Index p) {
  InformationMatrix out;
  info = 0.5 * (info + info.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
  const Vector ev = eig.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  // Conditions between 1e12 and 1e15 only raise the ill_conditioned flag.
  if (!(ev(0) > 1e-15 * std::max(top, 1e-300))) {
    std::ostringstream msg;
    msg << "observed information is singular; null direction (" << eig.eigenvectors().col(0).transpose() << ")";
    throw SingularDesignError(msg.str());
  }
  out.condition = top / ev(0);
  out.ill_conditioned = out.condition > 1e12;
  const Matrix inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  out.beta_block_inverse = inv.topLeftCorner(p, p);
  out.matrix = std::move(info);
  return out;
}

}  // namespace

InformationMatrix observed_information(const AugmentedRows& rows, const Vector& beta, Family family) {
  const Vector eta = rows.x() * beta;
  Vector d(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) d(i) = rows.weight()[i] * psi2(family, eta(i), rows.delta()[i]);
  const auto x = rows.x();
  return finish(x.transpose() * d.asDiagonal() * x, beta.size());
}

InformationMatrix observed_information(const AugmentedRows& rows, const FrailtyFit& fit, Family family) {
  const Eigen::Index p = fit.beta.size();
  const Eigen::Index q = fit.b.size();
  if (!(fit.sigma2 > 0.0)) throw DomainError("random-intercept variance must be positive");
  Matrix info = Matrix::Zero(p + q, p + q);
  const auto x = rows.x();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int g = rows.group()[i];
    const auto xi = x.row(static_cast<Eigen::Index>(i));
    const double eta = xi.dot(fit.beta) + (g >= 0 ? fit.b(g) : 0.0);
    const double d = rows.weight()[i] * psi2(family, eta, rows.delta()[i]);
    info.topLeftCorner(p, p).noalias() += d * xi.transpose() * xi;
    if (g >= 0) {
      info.block(0, p + g, p, 1) += d * xi.transpose();
      info(p + g, p + g) += d;
    }
  }
  info.bottomLeftCorner(q, p) = info.topRightCorner(p, q).transpose();
  info.bottomRightCorner(q, q).diagonal().array() += 1.0 / fit.sigma2;
  return finish(std::move(info), p);
}

Vector asymptotic_se(const InformationMatrix& info) {
  const Vector diag = info.beta_block_inverse.diagonal();
  if ((diag.array() < 0.0).any()) throw DomainError("negative variance: the information is not at an optimum");
  return diag.cwiseSqrt();
}

double ph_negloglik(const AugmentedRows& rows, const Vector& beta) {
  return -glm_loglik(rows, Family::exponential_ph, beta);
}

double logistic_negloglik(const AugmentedRows& rows, const Vector& beta) {
  return -glm_loglik(rows, Family::logistic, beta);
}

double weighted_penalty(const AugmentedRows& rows, const Vector& beta) {
  const Vector eta = rows.x() * beta;
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double e = eta(i);
    total += rows.weight()[i] * ph_penalty(std::span<const double>(&e, 1));
  }
  return total;
}

ShrinkageReport shrinkage_report(const AugmentedRows& rows) {
  for (double d : rows.delta()) {
    if (d != 1.0) throw DomainError("shrinkage report needs unit-spaced (discrete) rows");
  }
  ShrinkageReport out;
  out.logistic_beta = fit_weighted_logistic(rows).beta;
  out.ph_beta = fit_weighted_exp_ph(rows).beta;
  out.penalty_at_ph = weighted_penalty(rows, out.ph_beta);
  out.identity_gap =
      ph_negloglik(rows, out.ph_beta) - logistic_negloglik(rows, out.ph_beta) - out.penalty_at_ph;
  return out;
}

}  // namespace phhmm
