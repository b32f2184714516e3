#include <cmath>

#include "doctest.h"
#include "sdemem/error.hpp"
#include "sdemem/filters.hpp"
#include "sdemem/models.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace sdemem;

TEST_CASE("LNA moment equations are exact for a linear system") {
  Eigen::Matrix2d a;
  a << -1.0, 0.4, -0.3, -0.5;
  Eigen::Matrix2d q;
  q << 0.5, 0.1, 0.1, 0.3;
  LnaSystem sys;
  sys.drift = [a](const Eigen::VectorXd& m) -> Eigen::VectorXd { return a * m; };
  sys.diffusion = [q](const Eigen::VectorXd&) -> Eigen::MatrixXd { return q; };
  sys.jacobian = [a](const Eigen::VectorXd&) -> Eigen::MatrixXd { return a; };

  Eigen::VectorXd m = Eigen::Vector2d(1.0, -2.0);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2);
  const double t = 1.5;
  lna_ode_step(m, h, sys, 0.0, t, 200);

  const Eigen::Vector2d m_exact = oracle::expm(a * t) * Eigen::Vector2d(1.0, -2.0);
  // Van Loan: exp([[-A, Q], [0, A^T]] t) = [[., F12], [0, F22]], H = F22^T F12
  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(4, 4);
  big.topLeftCorner(2, 2) = -a;
  big.topRightCorner(2, 2) = q;
  big.bottomRightCorner(2, 2) = a.transpose();
  const Eigen::MatrixXd f = oracle::expm(big * t);
  const Eigen::MatrixXd h_exact = f.bottomRightCorner(2, 2).transpose() * f.topRightCorner(2, 2);

  CHECK((m - m_exact).norm() < 1e-10);
  CHECK((h - h_exact).norm() < 1e-10);
  CHECK((h - h.transpose()).norm() == 0.0);
}

TEST_CASE("LNA forward filter equals the Kalman filter for OU") {
  OuModel ou;
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    const auto sim = fixtures::ou_data(1, 30, 100 + static_cast<std::uint64_t>(k));
    const UnitData& u = sim.data.units[0];
    const Eigen::VectorXd phi = Eigen::Vector3d(0.5 * standard_normal(rng), 2.0 + 0.3 * standard_normal(rng),
                                                0.5 * standard_normal(rng));
    const Eigen::VectorXd xi = Eigen::VectorXd::Constant(1, 0.3);
    const double lna = evaluate_unit(ou, FilterSpec{FilterKind::lna}, u, {}, phi, xi, nullptr).loglik;
    const double kal = kalman_loglik(u, ou, {}, phi, xi);
    CHECK(std::abs(lna - kal) <= 1e-6 * std::abs(kal));
  }
}

TEST_CASE("tumor LNA collapses to the ODE solution without intrinsic noise") {
  TumorModel tumor;
  const auto sim = fixtures::tumor_data(1, 3);
  const UnitData& u = sim.data.units[0];
  const double beta = 0.29, delta = 0.09;
  const Eigen::VectorXd phi = Eigen::Vector4d(std::log(beta), -40.0, std::log(delta), -40.0);
  const auto sys = tumor.lna_system({}, phi, u);
  REQUIRE(sys.has_value());
  const double lna = lna_forward_filter(u, *sys, 0.4, 50);
  const double ode = odemem_loglik(u, Eigen::Vector2d(std::log(beta), std::log(delta)), 0.4, Eigen::Vector2d(75, 75));
  CHECK(lna == doctest::Approx(ode).epsilon(1e-8));
}

TEST_CASE("tumor LNA moments track exact simulation over short horizons") {
  TumorModel tumor;
  const Eigen::Vector4d nat(0.29, 0.25, 0.09, 0.34);
  const Eigen::VectorXd phi = nat.array().log().matrix();
  UnitData probe{"", {0.0}, Eigen::MatrixXd::Zero(1, 1)};
  const auto sys = tumor.lna_system({}, phi, probe);
  REQUIRE(sys.has_value());
  Eigen::VectorXd m = sys->initial_mean;
  Eigen::MatrixXd h = sys->initial_cov;
  lna_ode_step(m, h, *sys, 0.0, 1.0, 100);

  Rng rng(42);
  const int paths = 200000;
  double s = 0.0, ss = 0.0;
  for (int k = 0; k < paths; ++k) {
    const auto [x1, x2] = gbm_exact_propagate(75, 75, nat, 1.0, standard_normal(rng), standard_normal(rng));
    const double lv = std::log(x1 + x2);
    s += lv;
    ss += lv * lv;
  }
  const double mc_mean = s / paths, mc_var = ss / paths - mc_mean * mc_mean;
  CHECK(m[0] == doctest::Approx(mc_mean).epsilon(2e-3));
  CHECK(h(0, 0) == doctest::Approx(mc_var).epsilon(0.05));
  CHECK(m[1] == doctest::Approx(std::log(75.0) + 0.29).epsilon(1e-10));
  CHECK(h(1, 1) == doctest::Approx(0.0625).epsilon(1e-10));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("LNA filter handles failures") {
  TumorModel tumor;
  UnitData u{"", {0.0, 1.0}, Eigen::MatrixXd::Constant(2, 1, 5.0)};
  const Eigen::VectorXd phi = Eigen::Vector4d(8.0, 8.0, 8.0, 8.0);  // explosive rates
  const auto r = evaluate_unit(tumor, FilterSpec{FilterKind::lna}, u, {}, phi, Eigen::VectorXd::Constant(1, 0.4), nullptr);
  CHECK(r.loglik == -INFINITY);
  LnaSystem sys = *tumor.lna_system({}, Eigen::Vector4d::Zero(), u);
  Eigen::VectorXd m = sys.initial_mean;
  Eigen::MatrixXd h = sys.initial_cov;
  CHECK_THROWS_AS(lna_ode_step(m, h, sys, 0.0, 1.0, 0), InvalidConfiguration);
}
