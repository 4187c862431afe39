#pragma once

// Elementary model mathematics and the domain types shared across the
// library.
//
// Transition matrices come in three flavours. In `ph` and `dt` mode the
// one-step matrix is the row-normalised exponential survival kernel,
// f / (f + S) = expit(eta), which does not depend on the elapsed time:
// Delta only enters the M-step likelihood of the PH fit. In `ct` mode the
// matrix is the exponential of a generator scaled by Delta.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace phhmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Linear predictors are clamped to [-kEtaClamp, kEtaClamp] before
/// exponentiation.
inline constexpr double kEtaClamp = 700.0;

/// Counts how often a linear predictor had to be clamped.
struct ClampCounter {
  long events = 0;
};

double clamp_eta(double eta, ClampCounter* counter = nullptr);

/// Transition rate exp(eta), with eta clamped first.
double hazard(double eta, ClampCounter* counter = nullptr);

/// Exponential density lambda * exp(-lambda * delta). Throws DomainError for
/// non-positive arguments.
double exp_density(double delta, double lambda);

/// Exponential survival exp(-lambda * delta). lambda == 0 is the no-hazard
/// boundary and returns 1.
double exp_survival(double delta, double lambda);

double expit(double eta);

/// log(1 + exp(eta)) without overflow.
double log1p_exp(double eta);

enum class TransitionMode { ph, dt, ct };

const char* to_string(TransitionMode mode);

/// Row-stochastic K x K transition matrix. `etas(q, r)` holds the linear
/// predictor of the q -> r rate; the diagonal is ignored. `delta` is only
/// used in ct mode.
Matrix transition_matrix(const Matrix& etas, TransitionMode mode, double delta,
                         ClampCounter* counter = nullptr);

/// exp(Q * delta) for the two-state generator with off-diagonal rates
/// q12 and q21.
Matrix ct_closed_form(double q12, double q21, double delta);

/// Matrix exponential by scaling and squaring with a degree-6 Pade
/// approximant.
Matrix expm_pade6(const Matrix& a);

/// Sum over eta of exp(eta) - log(1 + exp(eta)): the gap between the PH and
/// logistic negative log-likelihoods on unit-spaced data.
double ph_penalty(std::span<const double> etas);

struct PenaltyHessianCheck {
  Vector omega;           // diagonal of Omega, one entry per design row
  Matrix hessian;         // X' Omega X
  double min_eigenvalue;
  bool psd;               // min_eigenvalue >= -1e-10
};

PenaltyHessianCheck penalty_hessian_check(const Matrix& design, const Vector& beta);

// ---------------------------------------------------------------------------
// Domain types

/// One step of a chain: the record observed at time t after an elapsed time
/// delta. The random-effect indicator z is stored as the index of its single
/// non-zero entry (`group`), or -1 for the all-zero vector.
struct ObservationRecord {
  double t = 0.0;
  double delta = 1.0;
  Vector x;        // fixed-effect covariates, intercept first
  int group = -1;  // random-effect column, -1 when none
  int y = 0;       // emission count
};

/// One individual's time-ordered records. The initial observation (t0, y0)
/// has no transition attached; `records` holds steps j = 1..n.
struct Chain {
  std::string id;
  int segment = 0;
  double t0 = 0.0;
  int y0 = 0;
  std::vector<ObservationRecord> records;

  std::size_t n_steps() const { return records.size(); }
  std::size_t n_states() const { return records.size() + 1; }
  int count(std::size_t j) const { return j == 0 ? y0 : records[j - 1].y; }
  double time(std::size_t j) const { return j == 0 ? t0 : records[j - 1].t; }
  std::size_t n_covariates() const { return records.empty() ? 0 : static_cast<std::size_t>(records.front().x.size()); }
};

/// Checks ordering, positive gaps and shared covariate dimension. In
/// discrete mode every delta must equal 1.
void validate_chain(const Chain& chain, bool discrete);

/// Regression model of one exit rate out of a state.
struct TransitionHazard {
  Vector beta;          // fixed effects
  Vector b;             // random intercepts, empty when q == 0
  double sigma2 = 1.0;  // random-intercept variance
};

struct StateModel {
  double mu = 0.0;  // Poisson emission mean
  /// Exit hazards ordered by destination, skipping the state itself. A
  /// two-state model has exactly one.
  std::vector<TransitionHazard> exits;
};

/// Index into StateModel::exits for the hazard from -> to.
inline std::size_t exit_index(int from, int to) {
  return static_cast<std::size_t>(to < from ? to : to - 1);
}
inline int exit_destination(int from, std::size_t index) {
  const int k = static_cast<int>(index);
  return k < from ? k : k + 1;
}

struct ModelParams {
  std::vector<StateModel> states;
  std::vector<Vector> delta0;  // one initial distribution per chain

  std::size_t n_states() const { return states.size(); }
  TransitionHazard& hazard(int from, int to) { return states[from].exits[exit_index(from, to)]; }
  const TransitionHazard& hazard(int from, int to) const {
    return states[from].exits[exit_index(from, to)];
  }
};

/// Builds a K-state parameter set with zero coefficients, p covariates,
/// q random intercepts per hazard and uniform initial distributions.
ModelParams make_params(int n_states, int p, int q, std::size_t n_chains);

void validate_params(const ModelParams& params);

double linear_predictor(const TransitionHazard& hazard, const ObservationRecord& record);

/// K x K matrix of linear predictors for one record (diagonal zero).
Matrix step_etas(const ModelParams& params, const ObservationRecord& record);

/// Relabels states so that mu is strictly decreasing (state 0 is the active
/// state). Returns the permutation applied: new index i came from old
/// index perm[i].
std::vector<int> sort_states_by_mu(ModelParams& params);

}  // namespace phhmm
