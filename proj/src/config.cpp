#include "sdemem/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sdemem/dataset_io.hpp"
#include "sdemem/error.hpp"

namespace sdemem {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> from_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

ScalarPrior parse_scalar_prior(const std::string& key, const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw InvalidConfiguration(key + ": expected kind:a,b");
  const std::string kind = trim(text.substr(0, colon));
  const auto parts = split_csv_line(text.substr(colon + 1));
  if (parts.size() != 2) throw InvalidConfiguration(key + ": expected two numbers after '" + kind + ":'");
  ScalarPrior p;
  if (kind == "gamma") p.kind = ScalarPrior::Kind::gamma;
  else if (kind == "lognormal") p.kind = ScalarPrior::Kind::log_normal;
  else if (kind == "normal") p.kind = ScalarPrior::Kind::normal;
  else throw InvalidConfiguration(key + ": unknown prior kind '" + kind + "'");
  try {
    p.a = std::stod(parts[0]);
    p.b = std::stod(parts[1]);
  } catch (const std::exception&) {
    throw InvalidConfiguration(key + ": malformed prior parameters");
  }
  p.validate();
  return p;
}

NormalGammaPrior make_eta_prior(NormalGammaPrior::Kind kind, const std::vector<double>& mu0, const std::vector<double>& m0,
                                const std::vector<double>& alpha, const std::vector<double>& beta) {
  NormalGammaPrior p;
  p.kind = kind;
  for (std::size_t j = 0; j < mu0.size(); ++j) p.components.push_back({mu0[j], m0[j], alpha[j], beta[j]});
  return p;
}

}  // namespace

// ----------------------------------------------------------------------------

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig kv;
  std::istringstream is(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfiguration("config line " + std::to_string(row) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty() || key.find('.') == std::string::npos)
      throw InvalidConfiguration("config line " + std::to_string(row) + ": keys look like section.name");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key, "");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw InvalidConfiguration(key + ": '" + s + "' is not a number");
  return v;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key, "");
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw InvalidConfiguration(key + ": '" + s + "' is not an integer");
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string s = get_string(key, "");
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidConfiguration(key + ": '" + s + "' is not a boolean");
}

std::vector<double> KeyValueConfig::get_list(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key, "");
  if (s.empty()) return {};
  std::vector<double> out;
  for (const auto& part : split_csv_line(s)) {
    char* end = nullptr;
    const double v = std::strtod(part.c_str(), &end);
    if (part.empty() || end != part.c_str() + part.size())
      throw InvalidConfiguration(key + ": '" + part + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> KeyValueConfig::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

// ----------------------------------------------------------------------------

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::kalman: return "kalman";
    case Scheme::lna: return "lna";
    case Scheme::pmmh_naive: return "pmmh-naive";
    case Scheme::pmmh: return "pmmh";
    case Scheme::cpmmh: return "cpmmh";
    case Scheme::closed_form: return "closed-form";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& name) {
  for (auto s : {Scheme::kalman, Scheme::lna, Scheme::pmmh_naive, Scheme::pmmh, Scheme::cpmmh, Scheme::closed_form})
    if (name == to_string(s)) return s;
  throw InvalidConfiguration("unknown scheme '" + name + "' (expected kalman, lna, pmmh-naive, pmmh, cpmmh or closed-form)");
}

RunConfig default_run_config(const std::string& name) {
  RunConfig c;
  c.model_name = name;
  c.kappa = Eigen::VectorXd(0);
  ScalarPrior lognormal01{ScalarPrior::Kind::log_normal, 0.0, 1.0};
  if (name == "ou") {
    c.units = 40;
    c.observations = 200;
    c.dt = 0.05;
    c.eta.mu = Eigen::Vector3d(-0.7, 2.3, -0.9);
    c.eta.tau = Eigen::Vector3d(4.0, 10.0, 4.0);
    c.xi = Eigen::VectorXd::Constant(1, 0.3);
    c.priors.eta = make_eta_prior(NormalGammaPrior::Kind::normal_gamma, {0, 1, 0}, {1, 1, 1}, {2, 2, 2}, {1, 0.5, 1});
    c.priors.xi = {ScalarPrior{ScalarPrior::Kind::gamma, 1.0, 0.4}};
    c.scheme = Scheme::cpmmh;
    c.rho = 0.999;
    c.particles = {50};
  } else if (name == "neuronal-ou") {
    c.units = 10;
    c.observations = 500;
    c.dt = 0.15;
    c.sim_start = 0.0;
    c.eta.mu = Eigen::Vector3d(std::log(0.036), std::log(4.06), std::log(4.33));
    c.eta.tau = Eigen::Vector3d(10.0, 10.0, 10.0);
    c.xi = Eigen::VectorXd::Constant(1, 0.01);
    c.priors.eta = make_eta_prior(NormalGammaPrior::Kind::normal_gamma,
                                  {std::log(0.036), std::log(4.06), std::log(4.33)}, {1, 1, 1}, {2, 2, 2}, {0.5, 0.5, 0.5});
    c.priors.xi = {ScalarPrior{ScalarPrior::Kind::log_normal, std::log(0.01), 1.0}};
    c.scheme = Scheme::cpmmh;
    c.particle_filter = FilterKind::bridge;
    c.rho = 0.999;
    c.particles = {1};
  } else if (name == "tumor" || name == "tumor-em" || name == "tumor-ode") {
    c.units = 10;
    c.observations = 21;
    c.dt = 1.0;
    const bool ode = name == "tumor-ode";
    if (ode) {
      c.eta.mu = Eigen::Vector2d(std::log(0.29), std::log(0.09));
      c.eta.tau = Eigen::Vector2d(10.0, 10.0);
      c.priors.eta = make_eta_prior(NormalGammaPrior::Kind::independent, {-2, -2}, {1, 1}, {2, 2}, {0.2, 0.2});
      c.scheme = Scheme::closed_form;
    } else {
      c.eta.mu = Eigen::Vector4d(std::log(0.29), std::log(0.25), std::log(0.09), std::log(0.34));
      c.eta.tau = Eigen::Vector4d(10.0, 10.0, 10.0, 10.0);
      c.priors.eta = make_eta_prior(NormalGammaPrior::Kind::independent, {-2, -2, -2, -2}, {1, 1, 1, 1}, {2, 2, 2, 2},
                                    {0.2, 0.2, 0.2, 0.2});
      c.scheme = Scheme::cpmmh;
      c.rho = 0.999;
      c.particles = {10};
      if (name == "tumor-em") c.substeps = 5;
    }
    c.xi = Eigen::VectorXd::Constant(1, std::sqrt(0.2));
    c.priors.xi = {lognormal01};
    c.init_sigma = 1.0;
  } else {
    throw InvalidConfiguration("unknown model '" + name + "'");
  }
  c.sort = c.rho > 0.0;
  c.tuning.rule = c.scheme == Scheme::cpmmh ? TuningRule::cpmmh : TuningRule::pmmh;
  c.tuning.rho = c.rho;
  return c;
}

RunConfig build_run_config(const KeyValueConfig& kv) {
  RunConfig c = default_run_config(kv.get_string("model.name", "ou"));

  if (kv.has("model.x0")) c.sim_start = kv.get_double("model.x0", 0.0);
  c.units = static_cast<std::size_t>(kv.get_int("model.units", static_cast<std::int64_t>(c.units)));
  c.observations = static_cast<std::size_t>(kv.get_int("model.observations", static_cast<std::int64_t>(c.observations)));
  c.dt = kv.get_double("model.dt", c.dt);
  c.t0 = kv.get_double("model.t0", c.t0);
  c.sim_substeps = static_cast<std::size_t>(kv.get_int("model.sim_substeps", static_cast<std::int64_t>(c.sim_substeps)));
  c.eta.mu = to_vector(kv.get_list("model.mu", from_vector(c.eta.mu)));
  c.eta.tau = to_vector(kv.get_list("model.tau", from_vector(c.eta.tau)));
  c.xi = to_vector(kv.get_list("model.sigma", from_vector(c.xi)));
  c.kappa = to_vector(kv.get_list("model.kappa", from_vector(c.kappa)));

  if (kv.has("scheme.name")) {
    c.scheme = scheme_from_string(kv.get_string("scheme.name", ""));
    if (c.scheme == Scheme::pmmh || c.scheme == Scheme::pmmh_naive) c.rho = 0.0;
  }
  if (kv.has("scheme.filter")) c.particle_filter = filter_kind_from_string(kv.get_string("scheme.filter", ""));
  c.rho = kv.get_double("scheme.rho", c.rho);
  if (kv.has("scheme.N")) {
    c.particles.clear();
    for (double v : kv.get_list("scheme.N", {})) {
      if (!(v >= 1.0) || v != std::floor(v)) throw InvalidConfiguration("scheme.N must hold positive integers");
      c.particles.push_back(static_cast<std::size_t>(v));
    }
  }
  c.substeps = static_cast<std::size_t>(kv.get_int("scheme.L", static_cast<std::int64_t>(c.substeps)));
  c.sort = kv.get_bool("scheme.sort", c.rho > 0.0);
  c.lna_substeps = static_cast<std::size_t>(kv.get_int("scheme.lna_substeps", static_cast<std::int64_t>(c.lna_substeps)));

  if (kv.has("prior.kind")) {
    const std::string k = kv.get_string("prior.kind", "");
    if (k == "normal-gamma") c.priors.eta.kind = NormalGammaPrior::Kind::normal_gamma;
    else if (k == "independent") c.priors.eta.kind = NormalGammaPrior::Kind::independent;
    else throw InvalidConfiguration("prior.kind must be normal-gamma or independent");
  }
  {
    std::vector<double> mu0, m0, alpha, beta;
    for (const auto& comp : c.priors.eta.components) {
      mu0.push_back(comp.mu0);
      m0.push_back(comp.m0);
      alpha.push_back(comp.alpha);
      beta.push_back(comp.beta);
    }
    mu0 = kv.get_list("prior.mu0", mu0);
    m0 = kv.get_list("prior.m0", m0);
    alpha = kv.get_list("prior.alpha", alpha);
    beta = kv.get_list("prior.beta", beta);
    if (m0.size() != mu0.size() || alpha.size() != mu0.size() || beta.size() != mu0.size())
      throw InvalidConfiguration("prior.mu0, prior.m0, prior.alpha and prior.beta must have equal lengths");
    c.priors.eta = make_eta_prior(c.priors.eta.kind, mu0, m0, alpha, beta);
  }
  if (kv.has("prior.sigma")) c.priors.xi = {parse_scalar_prior("prior.sigma", kv.get_string("prior.sigma", ""))};
  if (kv.has("prior.kappa")) {
    c.priors.kappa.clear();
    std::istringstream is(kv.get_string("prior.kappa", ""));
    std::string item;
    while (std::getline(is, item, ';'))
      if (!trim(item).empty()) c.priors.kappa.push_back(parse_scalar_prior("prior.kappa", trim(item)));
  }

  c.n_iters = static_cast<std::size_t>(kv.get_int("mcmc.iters", static_cast<std::int64_t>(c.n_iters)));
  c.burn_in = static_cast<std::size_t>(kv.get_int("mcmc.burn_in", static_cast<std::int64_t>(c.burn_in)));
  c.seed = static_cast<std::uint64_t>(kv.get_int("mcmc.seed", static_cast<std::int64_t>(c.seed)));
  c.init = kv.get_string("mcmc.init", c.init);
  c.truth_path = kv.get_string("mcmc.truth", c.truth_path);
  c.init_sigma = kv.get_double("mcmc.init_sigma", c.init_sigma);
  c.adaptation.enabled = kv.get_bool("mcmc.adapt", c.adaptation.enabled);
  c.adaptation.freeze_after_burn_in = kv.get_bool("mcmc.freeze_after_burn_in", c.adaptation.freeze_after_burn_in);
  c.adaptation.cov_start = static_cast<std::size_t>(kv.get_int("mcmc.cov_start", static_cast<std::int64_t>(c.adaptation.cov_start)));
  c.adaptation.initial_sd = kv.get_double("mcmc.init_sd", c.adaptation.initial_sd);
  c.adaptation.target = kv.get_double("mcmc.target_accept", c.adaptation.target);
  c.joint_common = kv.get_bool("mcmc.joint_common", c.joint_common);
  c.flush_every = static_cast<std::size_t>(kv.get_int("mcmc.flush_every", static_cast<std::int64_t>(c.flush_every)));

  c.tuning.rule = c.scheme == Scheme::cpmmh ? TuningRule::cpmmh : TuningRule::pmmh;
  if (kv.has("tune.rule")) {
    const std::string r = kv.get_string("tune.rule", "");
    if (r == "pmmh") c.tuning.rule = TuningRule::pmmh;
    else if (r == "cpmmh") c.tuning.rule = TuningRule::cpmmh;
    else throw InvalidConfiguration("tune.rule must be pmmh or cpmmh");
  }
  c.tuning.rho = kv.get_double("tune.rho", c.rho);
  c.tuning.replicates = static_cast<std::size_t>(kv.get_int("tune.replicates", static_cast<std::int64_t>(c.tuning.replicates)));
  c.tuning.correlation_replicates = static_cast<std::size_t>(
      kv.get_int("tune.correlation_replicates", static_cast<std::int64_t>(c.tuning.correlation_replicates)));
  c.tuning.max_particles = static_cast<std::size_t>(kv.get_int("tune.max_N", static_cast<std::int64_t>(c.tuning.max_particles)));

  const auto unused = kv.unused();
  if (!unused.empty()) throw InvalidConfiguration("unknown config key '" + unused.front() + "'");
  c.validate();
  return c;
}

ModelPtr RunConfig::model() const {
  if (model_name == "ou") return std::make_shared<OuModel>(sim_start);
  if (model_name == "neuronal-ou") return std::make_shared<NeuronalModel>(sim_start.value_or(0.0));
  return make_model(model_name);
}

FilterSpec RunConfig::filter_spec() const {
  FilterSpec f;
  switch (scheme) {
    case Scheme::kalman: f.kind = FilterKind::kalman; break;
    case Scheme::lna: f.kind = FilterKind::lna; break;
    case Scheme::closed_form: f.kind = FilterKind::closed_form; break;
    default: f.kind = particle_filter; break;
  }
  f.substeps = substeps;
  f.sort = sort;
  f.lna_substeps = lna_substeps;
  return f;
}

GibbsConfig RunConfig::gibbs_config() const {
  GibbsConfig g;
  g.scheme = scheme == Scheme::pmmh_naive ? GibbsConfig::Scheme::naive : GibbsConfig::Scheme::blocked;
  g.independent_streams = scheme == Scheme::pmmh || scheme == Scheme::pmmh_naive;
  g.rho = g.independent_streams || !is_stochastic(filter_spec().kind) ? 0.0 : rho;
  g.n_iters = n_iters;
  g.burn_in = burn_in;
  g.particles = is_stochastic(filter_spec().kind) ? particles : std::vector<std::size_t>{1};
  g.filter = filter_spec();
  g.adaptation = adaptation;
  g.joint_common = joint_common;
  g.seed = seed;
  return g;
}

void RunConfig::validate() const {
  const ModelPtr m = model();
  const std::string mn = m->name();
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidConfiguration("scheme.rho must lie in [0, 1]");
  if ((scheme == Scheme::pmmh || scheme == Scheme::pmmh_naive) && rho != 0.0)
    throw InvalidConfiguration("scheme '" + std::string(to_string(scheme)) + "' uses independent streams; set rho = 0 or use cpmmh");
  if (particle_filter != FilterKind::bootstrap && particle_filter != FilterKind::bridge)
    throw InvalidConfiguration("scheme.filter must be bootstrap or bridge");
  if (static_cast<int>(eta.mu.size()) != m->num_random_effects() || eta.tau.size() != eta.mu.size())
    throw InvalidConfiguration("model.mu and model.tau need " + std::to_string(m->num_random_effects()) +
                               " entries for model '" + mn + "'");
  if (static_cast<int>(xi.size()) != m->num_obs_params()) throw InvalidConfiguration("model.sigma has the wrong length");
  if (static_cast<int>(kappa.size()) != m->num_common()) throw InvalidConfiguration("model.kappa has the wrong length");
  if (priors.eta.components.size() != static_cast<std::size_t>(m->num_random_effects()))
    throw InvalidConfiguration("prior lists need " + std::to_string(m->num_random_effects()) + " entries");
  priors.eta.validate();
  if (n_iters <= burn_in) throw InvalidConfiguration("mcmc.iters must exceed mcmc.burn_in");
  if (units < 1 || observations < 1) throw InvalidConfiguration("model.units and model.observations must be >= 1");
  if (!(dt > 0.0)) throw InvalidConfiguration("model.dt must be positive");
  if (substeps < 1) throw InvalidConfiguration("scheme.L must be >= 1");
  if (particles.empty()) throw InvalidConfiguration("scheme.N is empty");
  if (init != "prior" && init != "truth") throw InvalidConfiguration("mcmc.init must be prior or truth");

  const FilterSpec f = filter_spec();
  try {
    validate_filter(*m, f);
  } catch (const UnsupportedModel& e) {
    std::string reason;
    switch (scheme) {
      case Scheme::kalman: reason = "scheme 'kalman' requires a linear Gaussian model; '" + mn + "' is not"; break;
      case Scheme::lna: reason = "scheme 'lna' requires a model with a linear noise approximation; '" + mn + "' has none"; break;
      case Scheme::closed_form: reason = "scheme 'closed-form' requires a model without intrinsic noise; '" + mn + "' is stochastic"; break;
      default:
        reason = f.kind == FilterKind::bridge
                     ? "bridge filter requires a scalar affine Gaussian transition; '" + mn + "' has none"
                     : "particle schemes require a stochastic model; '" + mn + "' is deterministic (use closed-form)";
    }
    throw InvalidConfiguration(reason);
  }
}

ParameterState RunConfig::initial_state(std::size_t m) const {
  const ModelPtr mod = model();
  ParameterState s;
  const int q = mod->num_random_effects();
  s.phi.resize(static_cast<Eigen::Index>(m), q);
  for (Eigen::Index i = 0; i < s.phi.rows(); ++i)
    for (int j = 0; j < q; ++j) s.phi(i, j) = priors.eta.components[static_cast<std::size_t>(j)].mu0;
  s.kappa = kappa;
  s.xi = Eigen::VectorXd::Constant(mod->num_obs_params(), init_sigma);
  s.eta = priors.eta.prior_mean();
  return s;
}

}  // namespace sdemem
