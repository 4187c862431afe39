#pragma once

// Observed information for the regression of one hazard, assembled from
// the augmented rows:
//
//   I(beta, b) = U' diag(w Psi''(eta)) U + diag(0, I / sigma2),
//
// where U stacks (x, z) of every augmented row. For the exponential PH
// family Psi'' = Delta * lambda.

#include <span>
#include <string>
#include <vector>

#include "phhmm/mstep.hpp"

namespace phhmm {

struct InformationMatrix {
  Matrix matrix;              // (p + q) x (p + q)
  Matrix beta_block_inverse;  // p x p
  double condition = 1.0;
  bool ill_conditioned = false;  // condition number above 1e12
};

/// Fixed effects only (q = 0).
InformationMatrix observed_information(const AugmentedRows& rows, const Vector& beta,
                                       Family family = Family::exponential_ph);

/// Fixed effects plus one-hot random intercepts b with prior variance sigma2.
InformationMatrix observed_information(const AugmentedRows& rows, const FrailtyFit& fit,
                                       Family family = Family::exponential_ph);

/// Square roots of the diagonal of the beta block of the inverse.
Vector asymptotic_se(const InformationMatrix& info);

/// Negative log-likelihoods of the two GLMs on the same rows.
double ph_negloglik(const AugmentedRows& rows, const Vector& beta);
double logistic_negloglik(const AugmentedRows& rows, const Vector& beta);

/// Weighted penalty sum w (exp(eta) - log(1 + exp(eta))).
double weighted_penalty(const AugmentedRows& rows, const Vector& beta);

struct ShrinkageReport {
  Vector logistic_beta;
  Vector ph_beta;
  double penalty_at_ph = 0.0;  // P(beta_ph)
  double identity_gap = 0.0;   // J_PH - J_log - P at beta_ph
};

/// Fits both GLMs to discrete (unit Delta) rows and reports the pair.
ShrinkageReport shrinkage_report(const AugmentedRows& rows);

}  // namespace phhmm
