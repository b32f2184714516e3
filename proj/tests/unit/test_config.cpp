#include "doctest.h"
#include "sdemem/config.hpp"
#include "sdemem/error.hpp"

using namespace sdemem;

TEST_CASE("key-value parsing") {
  const auto kv = KeyValueConfig::parse("# comment\nmodel.name = tumor\n\nscheme.N = 5, 6 ,7\nmcmc.adapt = false\n");
  CHECK(kv.get_string("model.name", "") == "tumor");
  CHECK(kv.get_list("scheme.N", {}) == std::vector<double>{5, 6, 7});
  CHECK(kv.get_bool("mcmc.adapt", true) == false);
  CHECK(kv.get_int("missing", 3) == 3);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), InvalidConfiguration);
  CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), InvalidConfiguration);
  const auto bad = KeyValueConfig::parse("x.y = abc\n");
  CHECK_THROWS_AS(bad.get_double("x.y", 0), InvalidConfiguration);
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/file.cfg"), InputError);
}

TEST_CASE("defaults per model") {
  const RunConfig ou = build_run_config(KeyValueConfig{});
  CHECK(ou.model_name == "ou");
  CHECK(ou.scheme == Scheme::cpmmh);
  CHECK(ou.rho == 0.999);
  CHECK(ou.sort);
  CHECK(ou.units == 40);

  const RunConfig ode = default_run_config("tumor-ode");
  CHECK(ode.scheme == Scheme::closed_form);
  CHECK(ode.eta.mu.size() == 2);
  CHECK_THROWS_AS(default_run_config("bogus"), InvalidConfiguration);
}

TEST_CASE("scheme mapping") {
  auto cfg = [](const std::string& text) { return build_run_config(KeyValueConfig::parse(text)); };
  const RunConfig pm = cfg("scheme.name = pmmh\n");
  CHECK(pm.gibbs_config().rho == 0.0);
  CHECK(pm.gibbs_config().independent_streams);
  CHECK(pm.gibbs_config().scheme == GibbsConfig::Scheme::blocked);
  CHECK(!pm.sort);

  const RunConfig naive = cfg("scheme.name = pmmh-naive\n");
  CHECK(naive.gibbs_config().scheme == GibbsConfig::Scheme::naive);

  const RunConfig cp = cfg("scheme.name = cpmmh\nscheme.rho = 0.9\nscheme.N = 3\n");
  CHECK(cp.gibbs_config().rho == 0.9);
  CHECK(!cp.gibbs_config().independent_streams);
  CHECK(cp.gibbs_config().particles == std::vector<std::size_t>{3});

  const RunConfig kal = cfg("scheme.name = kalman\n");
  CHECK(kal.filter_spec().kind == FilterKind::kalman);
  CHECK(kal.gibbs_config().rho == 0.0);
}

TEST_CASE("compatibility matrix") {
  auto cfg = [](const std::string& text) { return build_run_config(KeyValueConfig::parse(text)); };
  CHECK_THROWS_AS(cfg("model.name = tumor\nscheme.name = kalman\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("model.name = tumor\nscheme.filter = bridge\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("model.name = tumor-ode\nscheme.name = lna\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("model.name = tumor-ode\nscheme.name = cpmmh\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("model.name = ou\nscheme.name = closed-form\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("scheme.rho = 1.5\n"), InvalidConfiguration);
  CHECK_NOTHROW(cfg("scheme.rho = 1.0\n"));
  CHECK_THROWS_AS(cfg("scheme.rho = -0.5\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("scheme.N = 0\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("model.mu = 1, 2\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("mcmc.burn_in = 50\nmcmc.iters = 10\n"), InvalidConfiguration);
  CHECK_THROWS_AS(cfg("scheme.nmae = cpmmh\n"), InvalidConfiguration);
  CHECK_NOTHROW(cfg("model.name = tumor\nscheme.name = lna\n"));
  CHECK_NOTHROW(cfg("model.name = neuronal-ou\nscheme.name = kalman\n"));
  CHECK_NOTHROW(cfg("model.name = tumor-em\nscheme.L = 10\n"));
  try {
    cfg("model.name = tumor\nscheme.name = kalman\n");
  } catch (const InvalidConfiguration& e) {
    CHECK(std::string(e.what()).find("kalman") != std::string::npos);
  }
}

TEST_CASE("priors from configuration") {
  const RunConfig c = build_run_config(KeyValueConfig::parse(
      "prior.kind = independent\nprior.mu0 = 1,2,3\nprior.m0 = 1,1,1\nprior.alpha = 2,2,2\nprior.beta = 1,1,1\n"
      "prior.sigma = gamma:2,3\n"));
  CHECK(c.priors.eta.kind == NormalGammaPrior::Kind::independent);
  CHECK(c.priors.eta.components[2].mu0 == 3.0);
  CHECK(c.priors.xi[0].kind == ScalarPrior::Kind::gamma);
  CHECK(c.priors.xi[0].b == 3.0);
  CHECK_THROWS_AS(build_run_config(KeyValueConfig::parse("prior.sigma = weird:1,2\n")), InvalidConfiguration);
}

TEST_CASE("initial state") {
  RunConfig c = default_run_config("tumor");
  const ParameterState s = c.initial_state(4);
  CHECK(s.phi.rows() == 4);
  CHECK(s.phi.cols() == 4);
  CHECK(s.phi(2, 1) == -2.0);
  CHECK(s.xi[0] == 1.0);
  CHECK_NOTHROW(s.validate());
}
