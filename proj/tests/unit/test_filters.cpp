#include <cmath>

#include "doctest.h"
#include "sdemem/error.hpp"
#include "sdemem/filters.hpp"
#include "sdemem/models.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace sdemem;

namespace {

Eigen::VectorXd log3(double a, double b, double c) { return Eigen::Vector3d(std::log(a), std::log(b), std::log(c)); }

UnitData ou_unit(std::size_t n, std::uint64_t seed, double sigma = 0.3) {
  return fixtures::ou_data(1, n, seed, sigma).data.units[0];
}

AuxStream fresh(const Model& m, const FilterSpec& spec, const UnitData& u, std::size_t n, Rng& rng) {
  return init_stream(0, stream_shape(m, spec, u, n), rng);
}

}  // namespace

TEST_CASE("log_sum_exp") {
  const double inf = INFINITY;
  CHECK(log_sum_exp(std::vector<double>{-inf, -inf}) == -inf);
  CHECK(log_sum_exp(std::vector<double>{0.0, 0.0}) == doctest::Approx(std::log(2.0)));
  CHECK(log_sum_exp(std::vector<double>{1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
  CHECK(log_sum_exp(std::vector<double>{-inf, 3.0}) == 3.0);
}

TEST_CASE("sort_particles") {
  Eigen::MatrixXd x(1, 4);
  x << 3, -1, 2, 0;
  CHECK(sort_particles(x) == std::vector<std::size_t>{1, 3, 2, 0});
  Eigen::MatrixXd y(2, 3);
  y << 0, 10, 1, 0, 10, 1;  // mean (11/3, 11/3)
  CHECK(sort_particles(y) == std::vector<std::size_t>{2, 0, 1});
}

TEST_CASE("kalman filter matches the dense Gaussian oracle") {
  OuModel ou;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const UnitData u = ou_unit(40, seed);
    Eigen::VectorXd y = u.obs.col(0);
    const double kal = kalman_loglik(u, OuParameters{1.3, 2.0, 0.8}, 0.3, y[0]);
    const double dense = oracle::ou_dense_loglik(u.times, y, 1.3, 2.0, 0.8, 0.3, y[0]);
    CHECK(kal == doctest::Approx(dense).epsilon(1e-9));
    const double via_model = kalman_loglik(u, ou, Eigen::VectorXd(0), log3(1.3, 2.0, 0.8), Eigen::VectorXd::Constant(1, 0.3));
    // the model path conditions on the first observation instead of weighting it
    CHECK(via_model == doctest::Approx(kal - normal_logpdf(y[0], y[0], 0.09)).epsilon(1e-12));
  }
  // irregular times
  UnitData u;
  u.times = {0.0, 0.1, 0.35, 1.0, 1.05};
  u.obs = Eigen::MatrixXd(5, 1);
  u.obs << 0.5, 0.7, 0.2, 1.9, 1.4;
  CHECK(kalman_loglik(u, OuParameters{0.7, 1.0, 1.1}, 0.2, 0.5) ==
        doctest::Approx(oracle::ou_dense_loglik(u.times, u.obs.col(0), 0.7, 1.0, 1.1, 0.2, 0.5)).epsilon(1e-9));
}

TEST_CASE("particle filters are deterministic given the stream") {
  OuModel ou;
  const UnitData u = ou_unit(30, 4);
  Rng rng(3);
  for (FilterKind k : {FilterKind::bootstrap, FilterKind::bridge}) {
    FilterSpec spec{k, 1, false, 10};
    const AuxStream s = fresh(ou, spec, u, 25, rng);
    const auto a = evaluate_unit(ou, spec, u, {}, log3(1, 2, 1), Eigen::VectorXd::Constant(1, 0.3), &s);
    const auto b = evaluate_unit(ou, spec, u, {}, log3(1, 2, 1), Eigen::VectorXd::Constant(1, 0.3), &s);
    CHECK(a.loglik == b.loglik);
    CHECK(std::isfinite(a.loglik));
  }
}

TEST_CASE("likelihood estimators are unbiased on the natural scale") {
  OuModel ou;
  const UnitData u = ou_unit(15, 7);
  const Eigen::VectorXd phi = log3(1.0, 2.0, 1.0), xi = Eigen::VectorXd::Constant(1, 0.3);
  const double exact = kalman_loglik(u, ou, {}, phi, xi);
  Rng rng(11);
  for (FilterKind k : {FilterKind::bootstrap, FilterKind::bridge}) {
    for (bool sort : {false, true}) {
      FilterSpec spec{k, 1, sort, 10};
      const int reps = 4000;
      std::vector<double> ratio;
      for (int r = 0; r < reps; ++r) {
        const AuxStream s = fresh(ou, spec, u, 20, rng);
        ratio.push_back(std::exp(evaluate_unit(ou, spec, u, {}, phi, xi, &s).loglik - exact));
      }
      const double m = oracle::mean(ratio);
      const double se = std::sqrt(oracle::variance(ratio) / reps);
      CHECK_MESSAGE(std::abs(m - 1.0) < 4.0 * se, "filter ", to_string(k), " sort ", sort, " mean ", m, " se ", se);
    }
  }
}

TEST_CASE("bootstrap variance shrinks like 1/N") {
  OuModel ou;
  const UnitData u = ou_unit(25, 8);
  const Eigen::VectorXd phi = log3(1.0, 2.0, 1.0), xi = Eigen::VectorXd::Constant(1, 0.3);
  FilterSpec spec{FilterKind::bootstrap, 1, false, 10};
  Rng rng(2);
  auto var_at = [&](std::size_t n) {
    std::vector<double> v;
    for (int r = 0; r < 800; ++r) {
      const AuxStream s = fresh(ou, spec, u, n, rng);
      v.push_back(evaluate_unit(ou, spec, u, {}, phi, xi, &s).loglik);
    }
    return oracle::variance(v);
  };
  const double v50 = var_at(50), v400 = var_at(400);
  CHECK(v50 / v400 > 4.0);
  CHECK(v50 / v400 < 16.0);
}

TEST_CASE("bridge filter with one particle follows the fully adapted recursion") {
  OuModel ou;
  const UnitData u = ou_unit(20, 5);
  const Eigen::VectorXd phi = log3(1.2, 2.0, 0.9), xi = Eigen::VectorXd::Constant(1, 0.3);
  FilterSpec spec{FilterKind::bridge, 1, false, 10};
  Rng rng(6);
  const AuxStream s = fresh(ou, spec, u, 1, rng);
  const double got = bridge_filter(u, ou, {}, phi, xi, s, false).loglik;

  const OuParameters th = ou.ou_parameters(phi);
  double x = u.obs(0, 0);
  double ll = 0.0;  // the initial state is the first observation
  for (std::size_t t = 1; t < u.size(); ++t) {
    const LinearGaussianStep st = th.step(u.times[t] - u.times[t - 1]);
    const double y = u.obs(static_cast<Eigen::Index>(t), 0);
    ll += normal_logpdf(y, st.scale * x + st.offset, st.variance + 0.09);
    const BridgeProposal p = bridge_proposal(st, x, y, 0.09);
    x = p.mean + std::sqrt(p.var) * s.propagation(t, 0)[0];
  }
  CHECK(got == doctest::Approx(ll).epsilon(1e-10));
}

TEST_CASE("bridge_proposal") {
  const LinearGaussianStep st{0.5, 1.0, 2.0};
  const BridgeProposal p = bridge_proposal(st, 2.0, 4.0, 2.0);
  CHECK(p.mean == doctest::Approx(3.0));
  CHECK(p.var == doctest::Approx(1.0));
  const BridgeProposal z = bridge_proposal(LinearGaussianStep{0.5, 1.0, 0.0}, 2.0, 4.0, 2.0);
  CHECK(z.mean == 2.0);
  CHECK(z.var == 0.0);
  const BridgeProposal noiseless = bridge_proposal(st, 2.0, 4.0, 0.0);
  CHECK(noiseless.mean == doctest::Approx(4.0));
  CHECK(noiseless.var == 0.0);
}

TEST_CASE("bridge beats the bootstrap filter when observation noise is small") {
  OuModel ou;
  const UnitData u = ou_unit(50, 12, 0.01);
  const Eigen::VectorXd phi = log3(1.0, 2.0, 1.0), xi = Eigen::VectorXd::Constant(1, 0.01);
  Rng rng(8);
  std::vector<double> br, bs;
  for (int r = 0; r < 300; ++r) {
    FilterSpec sb{FilterKind::bridge, 1, false, 10};
    FilterSpec so{FilterKind::bootstrap, 1, false, 10};
    const AuxStream a = fresh(ou, sb, u, 1, rng);
    const AuxStream b = fresh(ou, so, u, 100, rng);
    br.push_back(evaluate_unit(ou, sb, u, {}, phi, xi, &a).loglik);
    bs.push_back(evaluate_unit(ou, so, u, {}, phi, xi, &b).loglik);
  }
  CHECK(oracle::variance(br) < oracle::variance(bs));
}

TEST_CASE("degenerate weights give -inf") {
  OuModel ou;
  UnitData u;
  u.times = {0.0, 0.05};
  u.obs = Eigen::MatrixXd(2, 1);
  u.obs << 0.0, 1e200;  // squared residual overflows
  FilterSpec spec{FilterKind::bootstrap, 1, false, 10};
  Rng rng(1);
  const AuxStream s = fresh(ou, spec, u, 10, rng);
  const auto r = evaluate_unit(ou, spec, u, {}, log3(1, 2, 1), Eigen::VectorXd::Constant(1, 0.01), &s);
  CHECK(r.loglik == -INFINITY);
  CHECK(r.degenerate);
}

TEST_CASE("Euler-Maruyama filter approaches the exact-transition filter") {
  const auto sim = fixtures::tumor_data(1, 4);
  const UnitData& u = sim.data.units[0];
  TumorModel exact(Eigen::Vector2d(75, 75), true);
  TumorModel em(Eigen::Vector2d(75, 75), false);
  const Eigen::VectorXd phi = sim.truth.phi.row(0).transpose();
  const Eigen::VectorXd xi = Eigen::VectorXd::Constant(1, std::sqrt(0.2));
  Rng rng(4);
  auto mean_ll = [&](const Model& m, std::size_t l) {
    FilterSpec spec{FilterKind::bootstrap, l, false, 10};
    std::vector<double> v;
    for (int r = 0; r < 300; ++r) {
      const AuxStream s = fresh(m, spec, u, 200, rng);
      v.push_back(evaluate_unit(m, spec, u, {}, phi, xi, &s).loglik);
    }
    return std::pair{oracle::mean(v), std::sqrt(oracle::variance(v) / v.size())};
  };
  const auto [me, se_e] = mean_ll(exact, 1);
  const auto [m20, se_20] = mean_ll(em, 20);
  CHECK(std::abs(me - m20) < 4 * std::hypot(se_e, se_20) + 0.05);
}

TEST_CASE("filter compatibility") {
  auto ou = make_model("ou");
  auto tumor = make_model("tumor");
  auto ode = make_model("tumor-ode");
  CHECK_NOTHROW(validate_filter(*ou, FilterSpec{FilterKind::kalman}));
  CHECK_NOTHROW(validate_filter(*ou, FilterSpec{FilterKind::bridge}));
  CHECK_NOTHROW(validate_filter(*tumor, FilterSpec{FilterKind::lna}));
  CHECK_NOTHROW(validate_filter(*ode, FilterSpec{FilterKind::closed_form}));
  CHECK_THROWS_AS(validate_filter(*tumor, FilterSpec{FilterKind::bridge}), UnsupportedModel);
  CHECK_THROWS_AS(validate_filter(*tumor, FilterSpec{FilterKind::kalman}), UnsupportedModel);
  CHECK_THROWS_AS(validate_filter(*ou, FilterSpec{FilterKind::closed_form}), UnsupportedModel);
  CHECK_THROWS_AS(validate_filter(*ode, FilterSpec{FilterKind::lna}), UnsupportedModel);
  CHECK_THROWS_AS(filter_kind_from_string("magic"), InvalidConfiguration);
  CHECK(filter_kind_from_string("bridge") == FilterKind::bridge);

  const UnitData u = ou_unit(5, 1);
  CHECK_THROWS_AS(evaluate_unit(*ou, FilterSpec{FilterKind::bootstrap}, u, {}, log3(1, 1, 1),
                                Eigen::VectorXd::Constant(1, 0.3), nullptr),
                  InvalidConfiguration);
}

TEST_CASE("correlated streams give correlated likelihood estimates") {
  OuModel ou;
  const UnitData u = ou_unit(40, 10);
  const Eigen::VectorXd phi = log3(1.0, 2.0, 1.0), xi = Eigen::VectorXd::Constant(1, 0.3);
  FilterSpec spec{FilterKind::bootstrap, 1, true, 10};
  Rng rng(12);
  auto corr = [&](double rho) {
    std::vector<double> a, b;
    for (int r = 0; r < 300; ++r) {
      const AuxStream s = fresh(ou, spec, u, 30, rng);
      const AuxStream t = crank_nicolson(s, Correlation(rho), rng);
      a.push_back(evaluate_unit(ou, spec, u, {}, phi, xi, &s).loglik);
      b.push_back(evaluate_unit(ou, spec, u, {}, phi, xi, &t).loglik);
    }
    const double ma = oracle::mean(a), mb = oracle::mean(b);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      sab += (a[k] - ma) * (b[k] - mb);
      saa += (a[k] - ma) * (a[k] - ma);
      sbb += (b[k] - mb) * (b[k] - mb);
    }
    return sab / std::sqrt(saa * sbb);
  };
  const double c0 = corr(0.0), c99 = corr(0.999);
  CHECK(std::abs(c0) < 0.2);
  CHECK(c99 > 0.9);
}
