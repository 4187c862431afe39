#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "phhmm/errors.hpp"
#include "phhmm/model.hpp"

using namespace phhmm;

TEST_CASE("hazard and exponential kernels") {
  CHECK(hazard(0.0) == doctest::Approx(1.0));
  CHECK(hazard(-3.0) == doctest::Approx(0.0497870684).epsilon(1e-9));
  CHECK(hazard(std::log(2.0)) == doctest::Approx(2.0));

  CHECK(exp_density(1.0, 1.0) == doctest::Approx(0.3678794412).epsilon(1e-10));
  CHECK(exp_density(2.0, 0.5) == doctest::Approx(0.1839397206).epsilon(1e-10));
  const double lam = 0.0497870684;
  CHECK(exp_density(1.0, lam) == doctest::Approx(lam * std::exp(-lam)).epsilon(1e-12));
  CHECK_THROWS_AS(exp_density(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(exp_density(1.0, -1.0), DomainError);

  CHECK(exp_survival(1.0, 0.0) == 1.0);
  CHECK(exp_survival(1.0, 1.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(exp_survival(10.0, 0.1) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("eta clamp counts events") {
  ClampCounter c;
  CHECK(hazard(800.0, &c) == doctest::Approx(std::exp(700.0)));
  CHECK(c.events == 1);
  CHECK(std::isfinite(hazard(-1e6, &c)));
  CHECK(c.events == 2);
}

TEST_CASE("transition matrices") {
  Matrix etas = Matrix::Zero(2, 2);
  const Matrix ph = transition_matrix(etas, TransitionMode::ph, 3.0);
  CHECK(ph(0, 0) == doctest::Approx(0.5));
  CHECK(ph(1, 0) == doctest::Approx(0.5));

  const Matrix ct = transition_matrix(etas, TransitionMode::ct, 1.0);
  CHECK(ct(0, 0) == doctest::Approx(0.5 * (1.0 + std::exp(-2.0))).epsilon(1e-12));
  CHECK(ct(0, 0) == doctest::Approx(0.5676676).epsilon(1e-6));
  const Matrix far = transition_matrix(etas, TransitionMode::ct, 50.0);
  CHECK(far(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(far(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("Delta cancels in the normalised survival kernel") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> e(-8.0, 3.0), d(0.01, 20.0);  // lambda * Delta < 420: no subnormals
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double eta = e(gen), delta = d(gen);
    const double lam = std::exp(eta);
    const double f = exp_density(delta, lam), s = exp_survival(delta, lam);
    worst = std::max(worst, std::abs(f / (f + s) - expit(eta)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("transition matrices are row-stochastic") {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> e(-6.0, 3.0), d(0.01, 12.0);
  std::uniform_int_distribution<int> kd(2, 4);
  const TransitionMode modes[] = {TransitionMode::ph, TransitionMode::dt, TransitionMode::ct};
  double worst = 0.0;
  double min_entry = 1.0;
  for (int i = 0; i < 10000; ++i) {
    const int k = kd(gen);
    Matrix etas(k, k);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) etas(a, b) = a == b ? 0.0 : e(gen);
    const Matrix g = transition_matrix(etas, modes[i % 3], d(gen));
    worst = std::max(worst, (g.rowwise().sum().array() - 1.0).abs().maxCoeff());
    min_entry = std::min(min_entry, g.minCoeff());
  }
  CHECK(worst < 1e-12);
  CHECK(min_entry >= -1e-15);
}

TEST_CASE("two-state closed form agrees with scaling and squaring") {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> r(-5.0, 2.0), d(0.001, 30.0);
  double worst = 0.0, worst_oracle = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double q12 = std::exp(r(gen)), q21 = std::exp(r(gen)), delta = d(gen);
    Matrix q(2, 2);
    q << -q12, q12, q21, -q21;
    const Matrix closed = ct_closed_form(q12, q21, delta);
    worst = std::max(worst, (closed - expm_pade6(q * delta)).cwiseAbs().maxCoeff());
    worst_oracle = std::max(worst_oracle, (closed - oracle::expm_taylor(q * delta)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-10);
  CHECK(worst_oracle < 1e-10);
}

TEST_CASE("Pade exponential on three states matches the Taylor oracle") {
  std::mt19937_64 gen(14);
  std::uniform_real_distribution<double> r(-3.0, 1.5);
  for (int i = 0; i < 200; ++i) {
    Matrix q = Matrix::Zero(3, 3);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) {
          q(a, b) = std::exp(r(gen));
          q(a, a) -= q(a, b);
        }
    CHECK((expm_pade6(q) - oracle::expm_taylor(q)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("PH penalty") {
  const double one[] = {0.0};
  CHECK(ph_penalty(one) == doctest::Approx(1.0 - std::log(2.0)).epsilon(1e-12));
  const double two[] = {0.0, 0.0};
  CHECK(ph_penalty(two) == doctest::Approx(2.0 * (1.0 - std::log(2.0))).epsilon(1e-12));
  // exp(eta) - log1p(exp(eta)) = e^{2 eta}/2 + O(e^{3 eta}), so eta = -20 gives about 2.1e-18.
  const double far[] = {-20.0};
  const double x = std::exp(-20.0);
  CHECK(ph_penalty(far) == doctest::Approx(x * x / 2.0 - x * x * x / 3.0).epsilon(1e-6));
  CHECK(ph_penalty(far) >= 0.0);
}

TEST_CASE("penalty Hessian check") {
  Matrix x1(1, 1);
  x1 << 1.0;
  const auto one = penalty_hessian_check(x1, Vector::Zero(1));
  CHECK(one.omega(0) == doctest::Approx(0.75));
  Matrix x2(2, 1);
  x2 << 1.0, 1.0;
  const auto two = penalty_hessian_check(x2, Vector::Zero(1));
  CHECK(two.hessian(0, 0) == doctest::Approx(1.5));

  std::mt19937_64 gen(15);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    Matrix x(20, 3);
    for (Eigen::Index a = 0; a < x.size(); ++a) x.data()[a] = n(gen);
    Vector beta(3);
    for (int c = 0; c < 3; ++c) beta(c) = n(gen) / 3.0;
    CHECK(penalty_hessian_check(x, beta).psd);
  }
}

TEST_CASE("state relabelling orders by decreasing mean") {
  ModelParams p = make_params(3, 1, 0, 2);
  p.states[0].mu = 1.0;
  p.states[1].mu = 7.0;
  p.states[2].mu = 3.0;
  p.hazard(1, 0).beta(0) = -1.0;
  p.hazard(1, 2).beta(0) = -2.0;
  p.delta0[0] = Vector{{0.2, 0.5, 0.3}};
  const auto perm = sort_states_by_mu(p);
  CHECK(perm == std::vector<int>{1, 2, 0});
  CHECK(p.states[0].mu == 7.0);
  CHECK(p.states[2].mu == 1.0);
  CHECK(p.hazard(0, 2).beta(0) == -1.0);  // old 1 -> 0
  CHECK(p.hazard(0, 1).beta(0) == -2.0);  // old 1 -> 2
  CHECK(p.delta0[0](0) == 0.5);
  CHECK(p.delta0[0](2) == 0.2);
}

TEST_CASE("chain and parameter validation") {
  Chain c;
  c.records.resize(2);
  c.records[0].t = 1.0;
  c.records[0].delta = 1.0;
  c.records[0].x = Vector::Ones(2);
  c.records[1].t = 1.0;
  c.records[1].delta = 0.0;
  c.records[1].x = Vector::Ones(2);
  CHECK_THROWS_AS(validate_chain(c, false), InputError);
  c.records[1].t = 2.5;
  c.records[1].delta = 1.5;
  CHECK_NOTHROW(validate_chain(c, false));
  CHECK_THROWS_AS(validate_chain(c, true), InputError);

  ModelParams p = make_params(2, 2, 0, 1);
  CHECK_NOTHROW(validate_params(p));
  p.delta0[0] = Vector{{0.7, 0.7}};
  CHECK_THROWS_AS(validate_params(p), DomainError);
}
