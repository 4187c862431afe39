#pragma once

#include <functional>

#include "phhmm/model.hpp"

namespace phhmm {

/// Objective to minimise. When `grad` is non-null it must be filled.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct BfgsOptions {
  int max_iter = 200;
  double grad_tol = 1e-8;  // on the infinity norm
  int max_line_search = 40;
};

struct BfgsResult {
  Vector x;
  double value = 0.0;
  Vector grad;
  int iterations = 0;
  bool converged = false;
};

/// Quasi-Newton minimisation with an Armijo backtracking line search.
BfgsResult minimize_bfgs(const Objective& f, Vector x0, const BfgsOptions& options = {});

/// Central finite-difference gradient with step h * max(1, |x_i|).
Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6);

/// Central finite-difference Hessian of a scalar function.
Matrix central_hessian(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5);

}  // namespace phhmm
