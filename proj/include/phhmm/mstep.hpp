#pragma once

// Weighted maximisation steps.
//
// Survival fits run on augmented data: every step of a chain is duplicated
// into an event copy weighted by the posterior probability of the
// transition and a censored copy weighted by the probability of staying (or
// of leaving to any other destination, for K >= 3). Both copies carry the
// same covariates and exposure Delta, so the weighted exponential PH
// log-likelihood is
//
//   sum_i weight_i * (is_event_i * eta_i - Delta_i * exp(eta_i)).
//
// The logistic family (discrete-time competitor) uses the same rows with
// Psi(eta) = log(1 + exp(eta)) in place of Delta * exp(eta).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "phhmm/estep.hpp"
#include "phhmm/model.hpp"

namespace phhmm {

enum class Family { exponential_ph, logistic };

struct AugmentedRow {
  Vector x;
  int group = -1;
  double delta = 1.0;
  bool is_event = false;
  double weight = 0.0;
};

/// Column-oriented store of augmented rows.
class AugmentedRows {
 public:
  explicit AugmentedRows(Eigen::Index p = 0) : p_(p) {}

  void push_back(const Vector& x, int group, double delta, bool is_event, double weight);
  void push_back(const AugmentedRow& row) { push_back(row.x, row.group, row.delta, row.is_event, row.weight); }
  void append(const AugmentedRows& other);
  void reserve(std::size_t n);

  std::size_t size() const { return weight_.size(); }
  bool empty() const { return weight_.empty(); }
  Eigen::Index n_covariates() const { return p_; }
  /// One past the largest group index (0 when no row has a group).
  int n_groups() const { return n_groups_; }

  AugmentedRow row(std::size_t i) const;

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x() const {
    return {x_.data(), static_cast<Eigen::Index>(size()), p_};
  }
  const std::vector<int>& group() const { return group_; }
  const std::vector<double>& delta() const { return delta_; }
  const std::vector<double>& event() const { return event_; }
  const std::vector<double>& weight() const { return weight_; }
  double total_weight() const;

 private:
  Eigen::Index p_;
  int n_groups_ = 0;
  std::vector<double> x_;
  std::vector<int> group_;
  std::vector<double> delta_;
  std::vector<double> event_;
  std::vector<double> weight_;
};

/// Rows with weight below this are dropped during augmentation.
inline constexpr double kWeightFloor = 1e-12;

/// Augmented rows for the hazard from -> to of one chain. Event copies carry
/// w(from, to); censored copies carry the rest of the row mass of w.
AugmentedRows augment(const Chain& chain, const PosteriorWeights& posterior, int from, int to,
                      double weight_floor = kWeightFloor);

/// Two-state shorthand: exits of state s.
AugmentedRows augment(const Chain& chain, const PosteriorWeights& posterior, int state,
                      double weight_floor = kWeightFloor);

/// Pooled augmentation over many chains.
AugmentedRows augment(std::span<const Chain> chains, std::span<const PosteriorWeights> posteriors, int from,
                      int to, double weight_floor = kWeightFloor);

/// Weighted Poisson means: mu_s = sum(u_s * y) / sum(u_s). Throws
/// StateStarvationError when a state's total weight is below 1e-8.
Vector fit_poisson_mixture(std::span<const Vector> u, std::span<const int> y);

// ---------------------------------------------------------------------------
// Fixed-effect GLM fits

double glm_loglik(const AugmentedRows& rows, Family family, const Vector& beta);
Vector glm_gradient(const AugmentedRows& rows, Family family, const Vector& beta);
/// Negative Hessian, sum_i w_i Psi''(eta_i) x_i x_i'.
Matrix glm_information(const AugmentedRows& rows, Family family, const Vector& beta);

struct GlmOptions {
  int max_iter = 100;
  double grad_tol = 1e-10;
  int max_halvings = 30;
  double separation_bound = 50.0;
};

struct GlmFit {
  Vector beta;
  double loglik = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separation = false;  // |beta| exceeded the separation bound
  long clamp_events = 0;
};

/// Newton-Raphson with step halving. `init` may be empty, in which case the
/// intercept starts at its closed-form intercept-only value.
GlmFit fit_glm(const AugmentedRows& rows, Family family, const Vector& init = {},
               const GlmOptions& options = {});

GlmFit fit_weighted_exp_ph(const AugmentedRows& rows, const Vector& init = {}, const GlmOptions& options = {});
GlmFit fit_weighted_logistic(const AugmentedRows& rows, const Vector& init = {},
                             const GlmOptions& options = {});

// ---------------------------------------------------------------------------
// Random-intercept (frailty) fits by Laplace approximation

struct FrailtyOptions {
  double sigma2_floor = 1e-6;
  std::optional<double> fixed_sigma2;  // profile only beta when set
  int max_outer = 200;
  double outer_grad_tol = 1e-6;
  int max_inner = 100;
  double inner_grad_tol = 1e-8;
};

struct FrailtyFit {
  Vector beta;
  Vector b;
  double sigma2 = 1.0;
  double laplace_loglik = 0.0;
  double inner_grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool at_floor = false;
};

struct LaplaceEvaluation {
  double value = 0.0;       // Laplace-approximated marginal log-likelihood
  Vector b;                 // posterior modes
  Vector grad_beta;         // total derivative with respect to beta
  double grad_log_sigma2 = 0.0;
  double inner_grad_norm = 0.0;
};

/// Laplace approximation of log integral exp(loglik(beta, b)) N(b; 0, sigma2 I) db
/// for one-hot random-intercept designs with q groups. `b_start` (optional)
/// seeds the inner Newton iterations.
LaplaceEvaluation laplace_objective(const AugmentedRows& rows, Family family, int q, const Vector& beta,
                                    double sigma2, const Vector* b_start = nullptr,
                                    const FrailtyOptions& options = {});

/// Maximises the Laplace objective over (beta, log sigma2). `init` supplies
/// warm starts; q is the number of random-intercept groups.
FrailtyFit fit_frailty(const AugmentedRows& rows, Family family, int q, const FrailtyFit* init = nullptr,
                       const FrailtyOptions& options = {});

FrailtyFit fit_weighted_exp_ph_frailty(const AugmentedRows& rows, int q, const FrailtyFit* init = nullptr,
                                       const FrailtyOptions& options = {});

// ---------------------------------------------------------------------------
// Continuous-time generator fit (two states)

struct CtFit {
  Vector beta12;  // log-rate coefficients of the 1 -> 2 generator entry
  Vector beta21;
  double objective = 0.0;  // sum of w_qr log Gamma_qr
  int iterations = 0;
  bool converged = false;
};

/// Expected complete-data log-likelihood of the CT transition model, with
/// its analytic gradient (beta12 then beta21) when `grad` is non-null.
double ct_expected_loglik(std::span<const Chain> chains, std::span<const PosteriorWeights> posteriors,
                          const Vector& beta12, const Vector& beta21, Vector* grad = nullptr);

/// Maximises ct_expected_loglik by BFGS. Throws ConvergenceError after
/// `max_iter` outer iterations unless `allow_partial` is set, in which case
/// the last (improved) iterate is returned with converged == false.
CtFit fit_ct_generator(std::span<const Chain> chains, std::span<const PosteriorWeights> posteriors,
                       const Vector& init12, const Vector& init21, int max_iter = 200,
                       bool allow_partial = false);

// ---------------------------------------------------------------------------

/// Initial-distribution update, proportional to
/// (delta_old * P(t0)) elementwise (Gamma(t1) nu(t1)).
Vector update_delta(const ForwardBackwardResult& fb, const Vector& delta_old);

}  // namespace phhmm
