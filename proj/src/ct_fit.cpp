// Two-state continuous-time transition fit: maximise sum w_qr log Gamma_qr
// with Gamma = exp(Q Delta) in closed form. For s = a + b,
//   f(s) = (1 - exp(-s Delta)) / s,  Gamma_12 = a f, Gamma_21 = b f,
// and f'(s) = (Delta exp(-s Delta) - f) / s.

#include <algorithm>
#include <cmath>
#include <sstream>

#include "phhmm/errors.hpp"
#include "phhmm/mstep.hpp"
#include "phhmm/optimize.hpp"

namespace phhmm {

namespace {

void f_and_derivative(double s, double delta, double& f, double& df) {
  const double z = s * delta;
  if (z < 1e-4) {
    f = delta * (1.0 - z / 2.0 + z * z / 6.0);
    df = delta * delta * (-0.5 + z / 3.0 - z * z / 8.0);
  } else {
    f = -std::expm1(-z) / s;
    df = (delta * std::exp(-z) - f) / s;
  }
}

inline double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

}  // namespace

double ct_expected_loglik(std::span<const Chain> chains, std::span<const PosteriorWeights> posteriors,
                          const Vector& beta12, const Vector& beta21, Vector* grad) {
  const Eigen::Index p = beta12.size();
  if (grad) grad->setZero(2 * p);
  double total = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const Chain& chain = chains[c];
    for (std::size_t k = 0; k < chain.n_steps(); ++k) {
      const auto& rec = chain.records[k];
      const Matrix& w = posteriors[c].w[k];
      const double a = hazard(rec.x.dot(beta12));
      const double b = hazard(rec.x.dot(beta21));
      double f, df;
      f_and_derivative(a + b, rec.delta, f, df);
      const double g11 = 1.0 - a * f, g12 = a * f, g21 = b * f, g22 = 1.0 - b * f;
      total += w(0, 0) * safe_log(g11) + w(0, 1) * safe_log(g12) + w(1, 0) * safe_log(g21) +
               w(1, 1) * safe_log(g22);
      if (!grad) continue;
      // dGamma/da and dGamma/db; the rates are exp(x beta), so da/dbeta = a x.
      const double d12_da = f + a * df, d12_db = a * df;
      const double d21_da = b * df, d21_db = f + b * df;
      const double da = -w(0, 0) * d12_da / std::max(g11, 1e-300) + w(0, 1) * d12_da / std::max(g12, 1e-300) +
                        w(1, 0) * d21_da / std::max(g21, 1e-300) - w(1, 1) * d21_da / std::max(g22, 1e-300);
      const double db = -w(0, 0) * d12_db / std::max(g11, 1e-300) + w(0, 1) * d12_db / std::max(g12, 1e-300) +
                        w(1, 0) * d21_db / std::max(g21, 1e-300) - w(1, 1) * d21_db / std::max(g22, 1e-300);
      grad->head(p) += (da * a) * rec.x;
      grad->tail(p) += (db * b) * rec.x;
    }
  }
  return total;
}

CtFit fit_ct_generator(std::span<const Chain> chains, std::span<const PosteriorWeights> posteriors,
                       const Vector& init12, const Vector& init21, int max_iter, bool allow_partial) {
  const Eigen::Index p = init12.size();
  Vector x0(2 * p);
  x0 << init12, init21;
  auto objective = [&](const Vector& theta, Vector* grad) {
    const double v = ct_expected_loglik(chains, posteriors, theta.head(p), theta.tail(p), grad);
    if (grad) *grad = -*grad;
    return -v;
  };
  // Gradient tolerance scaled by the number of weighted steps: the
  // objective is a sum over steps, and near-flat high-rate ridges leave
  // gradients of order 1e-6 that BFGS cannot reduce further in reasonable
  // time.
  double steps = 0.0;
  for (const auto& c : chains) steps += static_cast<double>(c.n_steps());
  BfgsOptions opt;
  opt.max_iter = max_iter;
  opt.grad_tol = 1e-8 * std::max(100.0, steps);
  const BfgsResult res = minimize_bfgs(objective, x0, opt);
  if (res.iterations >= max_iter && !res.converged && !allow_partial) {
    std::ostringstream msg;
    msg << "continuous-time generator fit did not converge in " << max_iter << " iterations (gradient norm "
        << res.grad.lpNorm<Eigen::Infinity>() << " at beta = " << res.x.transpose() << ")";
    throw ConvergenceError(msg.str());
  }
  CtFit fit;
  fit.beta12 = res.x.head(p);
  fit.beta21 = res.x.tail(p);
  fit.objective = -res.value;
  fit.iterations = res.iterations;
  fit.converged = res.converged;
  return fit;
}

}  // namespace phhmm
