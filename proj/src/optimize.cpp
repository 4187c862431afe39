#include "phhmm/optimize.hpp"

#include <cmath>

namespace phhmm {

BfgsResult minimize_bfgs(const Objective& f, Vector x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult out;
  out.x = std::move(x0);
  out.grad.resize(n);
  out.value = f(out.x, &out.grad);
  Matrix inv_h = Matrix::Identity(n, n);
  bool unscaled = true;  // inv_h is still the identity

  for (int it = 0; it < options.max_iter; ++it) {
    out.iterations = it;
    if (out.grad.lpNorm<Eigen::Infinity>() <= options.grad_tol) {
      out.converged = true;
      return out;
    }
    Vector dir = -inv_h * out.grad;
    double slope = dir.dot(out.grad);
    if (!(slope < 0.0)) {
      inv_h.setIdentity();
      unscaled = true;
      dir = -out.grad;
      slope = dir.dot(out.grad);
    }
    // Without curvature information the raw gradient can be far too long a
    // trial step; cap it at unit length in the largest coordinate.
    if (unscaled) {
      const double len = dir.lpNorm<Eigen::Infinity>();
      if (len > 1.0) {
        dir /= len;
        slope /= len;
      }
    }

    double step = 1.0;
    Vector x_new(n), g_new(n);
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < options.max_line_search; ++ls) {
      x_new = out.x + step * dir;
      f_new = f(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= out.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No further decrease is representable along any direction we can
      // build; treat a tiny gradient relative to the objective as converged.
      out.converged = out.grad.lpNorm<Eigen::Infinity>() <= options.grad_tol * std::max(1.0, std::abs(out.value));
      return out;
    }

    const Vector s = x_new - out.x;
    const Vector y = g_new - out.grad;
    const double sy = s.dot(y);
    out.x = std::move(x_new);
    out.grad = std::move(g_new);
    out.value = f_new;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Matrix i_n = Matrix::Identity(n, n);
      if (unscaled) inv_h *= sy / y.squaredNorm();
      unscaled = false;
      inv_h = (i_n - rho * s * y.transpose()) * inv_h * (i_n - rho * y * s.transpose()) + rho * s * s.transpose();
    }
  }
  out.iterations = options.max_iter;
  out.converged = out.grad.lpNorm<Eigen::Infinity>() <= options.grad_tol;
  return out;
}

Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + step;
    const double fp = f(xp);
    xp(i) = x(i) - step;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

Matrix central_hessian(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  const Eigen::Index n = x.size();
  Matrix hess(n, n);
  Vector xp = x;
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = h * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + hi;
    const double fp = f(xp);
    xp(i) = x(i) - hi;
    const double fm = f(xp);
    xp(i) = x(i);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = h * std::max(1.0, std::abs(x(j)));
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          xp(i) = x(i) + si * hi;
          xp(j) = x(j) + sj * hj;
          acc += si * sj * f(xp);
        }
      }
      xp(i) = x(i);
      xp(j) = x(j);
      hess(i, j) = hess(j, i) = acc / (4.0 * hi * hj);
    }
  }
  return hess;
}

}  // namespace phhmm
