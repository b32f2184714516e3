#include "sdemem/models.hpp"

#include <cmath>
#include <limits>

#include "sdemem/error.hpp"

namespace sdemem {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double gamma_logpdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace

// ----------------------------------------------------------------------------
// Priors

void NormalGammaPrior::validate() const {
  for (const auto& c : components) {
    if (!(c.m0 > 0.0) || !(c.alpha > 0.0) || !(c.beta > 0.0) || !std::isfinite(c.mu0))
      throw InvalidConfiguration("hyperprior requires m0 > 0, alpha > 0, beta > 0 and finite mu0");
  }
}

double NormalGammaPrior::log_density(const Hyperparameters& eta) const {
  double s = 0.0;
  for (std::size_t j = 0; j < components.size(); ++j) {
    const auto& c = components[j];
    const double tau = eta.tau[static_cast<Eigen::Index>(j)];
    const double mu = eta.mu[static_cast<Eigen::Index>(j)];
    const double mu_var = kind == Kind::normal_gamma ? 1.0 / (c.m0 * tau) : 1.0 / c.m0;
    s += normal_logpdf(mu, c.mu0, mu_var) + gamma_logpdf(tau, c.alpha, c.beta);
  }
  return s;
}

Hyperparameters NormalGammaPrior::prior_mean() const {
  Hyperparameters eta;
  eta.mu.resize(static_cast<Eigen::Index>(components.size()));
  eta.tau.resize(static_cast<Eigen::Index>(components.size()));
  for (std::size_t j = 0; j < components.size(); ++j) {
    eta.mu[static_cast<Eigen::Index>(j)] = components[j].mu0;
    eta.tau[static_cast<Eigen::Index>(j)] = components[j].alpha / components[j].beta;
  }
  return eta;
}

double ScalarPrior::to_unconstrained(double natural) const {
  if (!log_scale()) return natural;
  if (!(natural > 0.0)) throw DomainError("positive parameter expected");
  return std::log(natural);
}

double ScalarPrior::to_natural(double v) const { return log_scale() ? std::exp(v) : v; }

double ScalarPrior::log_density_unconstrained(double v) const {
  switch (kind) {
    case Kind::gamma:
      // density of log x when x ~ Ga(a, b): includes the Jacobian e^v
      return gamma_logpdf(std::exp(v), a, b) + v;
    case Kind::log_normal:
    case Kind::normal:
      return normal_logpdf(v, a, b * b);
  }
  return kNegInf;
}

void ScalarPrior::validate() const {
  if (!std::isfinite(a) || !(b > 0.0)) throw InvalidConfiguration("scalar prior needs finite a and b > 0");
  if (kind == Kind::gamma && !(a > 0.0)) throw InvalidConfiguration("gamma prior shape must be positive");
}

// ----------------------------------------------------------------------------
// Transition kernels

double ou_exact_propagate(double x, const OuParameters& theta, double dt, double gaussian) {
  if (!(theta.theta1 > 0.0)) throw DomainError("OU mean-reversion rate must be positive");
  if (!(dt >= 0.0)) throw DomainError("time step must be nonnegative");
  const LinearGaussianStep s = theta.step(dt);
  return s.scale * x + s.offset + std::sqrt(s.variance) * gaussian;
}

std::pair<double, double> gbm_exact_propagate(double x1, double x2, const Eigen::Vector4d& p, double dt,
                                              double g1, double g2) {
  if (!(x1 > 0.0) || !(x2 > 0.0)) throw DomainError("geometric Brownian motion state must be positive");
  if (!(dt >= 0.0)) throw DomainError("time step must be nonnegative");
  const double sq = std::sqrt(dt);
  return {x1 * std::exp(p[0] * dt + p[1] * sq * g1), x2 * std::exp(-p[2] * dt + p[3] * sq * g2)};
}

double odemem_loglik(const UnitData& unit, const Eigen::VectorXd& phi, double sigma_e,
                     const Eigen::Vector2d& x0) {
  if (!(sigma_e > 0.0)) throw DomainError("observation sd must be positive");
  if (!(x0[0] > 0.0) || !(x0[1] > 0.0)) throw DomainError("initial volumes must be positive");
  const double beta = std::exp(phi[0]);
  const double delta = std::exp(phi[1]);
  const double var = sigma_e * sigma_e;
  const double t1 = unit.times.front();
  double ll = 0.0;
  for (std::size_t t = 0; t < unit.size(); ++t) {
    const double s = unit.times[t] - t1;
    const double mean = std::log(x0[0] * std::exp(beta * s) + x0[1] * std::exp(-delta * s));
    ll += normal_logpdf(unit.obs(static_cast<Eigen::Index>(t), 0), mean, var);
  }
  return ll;
}

// ----------------------------------------------------------------------------
// OU

std::vector<std::string> OuModel::random_effect_labels() const {
  return {"log_theta1", "log_theta2", "log_theta3"};
}

OuParameters OuModel::ou_parameters(const Eigen::VectorXd& phi) const {
  return {std::exp(phi[0]), std::exp(phi[1]), std::exp(phi[2])};
}

Eigen::VectorXd OuModel::drift(const Eigen::VectorXd& x, const Eigen::VectorXd&,
                               const Eigen::VectorXd& phi) const {
  const OuParameters th = ou_parameters(phi);
  return Eigen::VectorXd::Constant(1, th.theta1 * (th.theta2 - x[0]));
}

Eigen::MatrixXd OuModel::diffusion(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                   const Eigen::VectorXd& phi) const {
  const OuParameters th = ou_parameters(phi);
  return Eigen::MatrixXd::Constant(1, 1, th.theta3 * th.theta3);
}

double OuModel::obs_logdensity(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& xi) const {
  return normal_logpdf(y[0], x[0], xi[0] * xi[0]);
}

void OuModel::obs_logdensity_batch(const Eigen::VectorXd& y, const Eigen::MatrixXd& particles,
                                   const Eigen::VectorXd& xi, Eigen::Ref<Eigen::VectorXd> out) const {
  const double var = xi[0] * xi[0];
  const double c = -0.5 * std::log(2.0 * M_PI * var);
  const double yy = y[0];
  for (Eigen::Index k = 0; k < particles.cols(); ++k) {
    const double r = yy - particles(0, k);
    out[k] = c - 0.5 * r * r / var;
  }
}

Eigen::VectorXd OuModel::sample_observation(const Eigen::VectorXd& x, const Eigen::VectorXd& xi,
                                            Rng& rng) const {
  return Eigen::VectorXd::Constant(1, x[0] + xi[0] * standard_normal(rng));
}

void OuModel::exact_transition(Eigen::Ref<Eigen::MatrixXd> particles, double dt, const Eigen::VectorXd&,
                               const Eigen::VectorXd& phi, std::span<const double> gaussians) const {
  const LinearGaussianStep s = ou_parameters(phi).step(dt);
  const double sd = std::sqrt(s.variance);
  for (Eigen::Index k = 0; k < particles.cols(); ++k)
    particles(0, k) = s.scale * particles(0, k) + s.offset + sd * gaussians[static_cast<std::size_t>(k)];
}

std::optional<LinearGaussianStep> OuModel::linear_gaussian_step(double dt, const Eigen::VectorXd&,
                                                                const Eigen::VectorXd& phi) const {
  return ou_parameters(phi).step(dt);
}

std::optional<LnaSystem> OuModel::lna_system(const Eigen::VectorXd&, const Eigen::VectorXd& phi,
                                             const UnitData& unit) const {
  const OuParameters th = ou_parameters(phi);
  LnaSystem sys;
  sys.drift = [th](const Eigen::VectorXd& m) {
    return Eigen::VectorXd::Constant(1, th.theta1 * (th.theta2 - m[0]));
  };
  sys.diffusion = [th](const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, th.theta3 * th.theta3);
  };
  sys.jacobian = [th](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, -th.theta1); };
  sys.observation = Eigen::VectorXd::Ones(1);
  sys.initial_mean = initial_state().location(unit);
  sys.initial_cov = Eigen::MatrixXd::Zero(1, 1);
  sys.condition_on_first = initial_state().conditions_on_first();
  return sys;
}

Eigen::VectorXd OuModel::simulation_start(const Eigen::VectorXd&, const Eigen::VectorXd& phi) const {
  if (sim_start_) return Eigen::VectorXd::Constant(1, *sim_start_);
  return Eigen::VectorXd::Constant(1, ou_parameters(phi).theta2);
}

std::vector<std::string> NeuronalModel::random_effect_labels() const {
  return {"log_lambda", "log_nu", "log_sigma"};
}

OuParameters NeuronalModel::ou_parameters(const Eigen::VectorXd& phi) const {
  const double lambda = std::exp(phi[0]);
  return {lambda, std::exp(phi[1]) / lambda, std::exp(phi[2])};
}

// ----------------------------------------------------------------------------
// Tumor

std::vector<std::string> TumorModel::random_effect_labels() const {
  return {"log_beta", "log_gamma", "log_delta", "log_psi"};
}

Eigen::VectorXd TumorModel::drift(const Eigen::VectorXd& x, const Eigen::VectorXd&,
                                  const Eigen::VectorXd& phi) const {
  const Eigen::Vector4d p = phi.head<4>().array().exp();
  Eigen::VectorXd a(2);
  a << (p[0] + 0.5 * p[1] * p[1]) * x[0], (-p[2] + 0.5 * p[3] * p[3]) * x[1];
  return a;
}

Eigen::MatrixXd TumorModel::diffusion(const Eigen::VectorXd& x, const Eigen::VectorXd&,
                                      const Eigen::VectorXd& phi) const {
  const Eigen::Vector4d p = phi.head<4>().array().exp();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, 2);
  b(0, 0) = p[1] * p[1] * x[0] * x[0];
  b(1, 1) = p[3] * p[3] * x[1] * x[1];
  return b;
}

Eigen::VectorXd TumorModel::observe_mean(const Eigen::VectorXd& x) const {
  return Eigen::VectorXd::Constant(1, std::log(x[0] + x[1]));
}

double TumorModel::obs_logdensity(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& xi) const {
  const double v = x[0] + x[1];
  if (!(v > 0.0)) return kNegInf;
  return normal_logpdf(y[0], std::log(v), xi[0] * xi[0]);
}

void TumorModel::obs_logdensity_batch(const Eigen::VectorXd& y, const Eigen::MatrixXd& particles,
                                      const Eigen::VectorXd& xi, Eigen::Ref<Eigen::VectorXd> out) const {
  const double var = xi[0] * xi[0];
  const double c = -0.5 * std::log(2.0 * M_PI * var);
  for (Eigen::Index k = 0; k < particles.cols(); ++k) {
    const double v = particles(0, k) + particles(1, k);
    if (!(v > 0.0) || !std::isfinite(v)) {
      out[k] = kNegInf;
      continue;
    }
    const double r = y[0] - std::log(v);
    out[k] = c - 0.5 * r * r / var;
  }
}

Eigen::VectorXd TumorModel::sample_observation(const Eigen::VectorXd& x, const Eigen::VectorXd& xi,
                                               Rng& rng) const {
  return Eigen::VectorXd::Constant(1, std::log(x[0] + x[1]) + xi[0] * standard_normal(rng));
}

void TumorModel::exact_transition(Eigen::Ref<Eigen::MatrixXd> particles, double dt, const Eigen::VectorXd&,
                                  const Eigen::VectorXd& phi, std::span<const double> gaussians) const {
  const Eigen::Vector4d p = phi.head<4>().array().exp();
  const double sq = std::sqrt(dt);
  const double m1 = p[0] * dt, s1 = p[1] * sq, m2 = -p[2] * dt, s2 = p[3] * sq;
  for (Eigen::Index k = 0; k < particles.cols(); ++k) {
    const std::size_t o = 2 * static_cast<std::size_t>(k);
    particles(0, k) *= std::exp(m1 + s1 * gaussians[o]);
    particles(1, k) *= std::exp(m2 + s2 * gaussians[o + 1]);
  }
}

std::optional<LnaSystem> TumorModel::lna_system(const Eigen::VectorXd&, const Eigen::VectorXd& phi,
                                                const UnitData&) const {
  const Eigen::Vector4d p = phi.head<4>().array().exp();
  const double beta = p[0], g2 = p[1] * p[1], delta = p[2], s2 = p[3] * p[3];
  const double A = beta + 0.5 * g2;
  const double B = -delta + 0.5 * s2;

  LnaSystem sys;
  sys.drift = [=](const Eigen::VectorXd& z) {
    const double r2 = std::exp(z[1] - z[0]);
    const double r3 = std::exp(z[2] - z[0]);
    Eigen::VectorXd a(3);
    a << A * r2 + B * r3 - 0.5 * (g2 * r2 * r2 + s2 * r3 * r3), beta, -delta;
    return a;
  };
  sys.diffusion = [=](const Eigen::VectorXd& z) {
    const double r2 = std::exp(z[1] - z[0]);
    const double r3 = std::exp(z[2] - z[0]);
    Eigen::MatrixXd b(3, 3);
    b << g2 * r2 * r2 + s2 * r3 * r3, g2 * r2, s2 * r3,
         g2 * r2, g2, 0.0,
         s2 * r3, 0.0, s2;
    return b;
  };
  sys.jacobian = [=](const Eigen::VectorXd& z) {
    const double r2 = std::exp(z[1] - z[0]);
    const double r3 = std::exp(z[2] - z[0]);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3, 3);
    j(0, 0) = -(A * r2 + B * r3) + g2 * r2 * r2 + s2 * r3 * r3;
    j(0, 1) = A * r2 - g2 * r2 * r2;
    j(0, 2) = B * r3 - s2 * r3 * r3;
    return j;
  };
  sys.observation = Eigen::Vector3d(1.0, 0.0, 0.0);
  sys.initial_mean = Eigen::Vector3d(std::log(x0_[0] + x0_[1]), std::log(x0_[0]), std::log(x0_[1]));
  sys.initial_cov = Eigen::MatrixXd::Zero(3, 3);
  return sys;
}

// ----------------------------------------------------------------------------
// Tumor ODE

std::vector<std::string> TumorOdeModel::random_effect_labels() const { return {"log_beta", "log_delta"}; }

Eigen::VectorXd TumorOdeModel::drift(const Eigen::VectorXd& x, const Eigen::VectorXd&,
                                     const Eigen::VectorXd& phi) const {
  Eigen::VectorXd a(2);
  a << std::exp(phi[0]) * x[0], -std::exp(phi[1]) * x[1];
  return a;
}

Eigen::MatrixXd TumorOdeModel::diffusion(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                         const Eigen::VectorXd&) const {
  return Eigen::MatrixXd::Zero(2, 2);
}

void TumorOdeModel::exact_transition(Eigen::Ref<Eigen::MatrixXd> particles, double dt, const Eigen::VectorXd&,
                                     const Eigen::VectorXd& phi, std::span<const double>) const {
  const double f1 = std::exp(std::exp(phi[0]) * dt);
  const double f2 = std::exp(-std::exp(phi[1]) * dt);
  particles.row(0) *= f1;
  particles.row(1) *= f2;
}

std::optional<double> TumorOdeModel::closed_form_loglik(const UnitData& unit, const Eigen::VectorXd&,
                                                        const Eigen::VectorXd& phi,
                                                        const Eigen::VectorXd& xi) const {
  return odemem_loglik(unit, phi, xi[0], x0_);
}

// ----------------------------------------------------------------------------

ModelPtr make_model(const std::string& name) {
  if (name == "ou") return std::make_shared<OuModel>();
  if (name == "neuronal-ou") return std::make_shared<NeuronalModel>();
  if (name == "tumor") return std::make_shared<TumorModel>();
  if (name == "tumor-em") return std::make_shared<TumorModel>(Eigen::Vector2d(75.0, 75.0), false);
  if (name == "tumor-ode") return std::make_shared<TumorOdeModel>();
  throw InvalidConfiguration("unknown model '" + name + "'");
}

// ----------------------------------------------------------------------------
// Simulation

Eigen::MatrixXd sample_random_effects(const Hyperparameters& eta, std::size_t m, Rng& rng) {
  const Eigen::Index q = eta.mu.size();
  for (Eigen::Index j = 0; j < q; ++j)
    if (!(eta.tau[j] > 0.0)) throw DomainError("random-effect precision must be positive");
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(m), q);
  for (Eigen::Index i = 0; i < phi.rows(); ++i)
    for (Eigen::Index j = 0; j < q; ++j) phi(i, j) = eta.mu[j] + standard_normal(rng) / std::sqrt(eta.tau[j]);
  return phi;
}

SimulationResult simulate_dataset(const Model& model, const Hyperparameters& eta,
                                  const std::optional<Eigen::MatrixXd>& phi_in, const Eigen::VectorXd& kappa,
                                  const Eigen::VectorXd& xi, const SimulationSettings& s) {
  if (s.units < 1 || s.observations < 1) throw InvalidConfiguration("simulation needs M >= 1 and n >= 1");
  if (!(s.dt > 0.0)) throw InvalidConfiguration("simulation time step must be positive");
  if (s.substeps < 1) throw InvalidConfiguration("simulation substeps must be >= 1");

  SimulationResult out;
  Eigen::MatrixXd phi;
  if (phi_in) {
    phi = *phi_in;
    if (static_cast<std::size_t>(phi.rows()) != s.units || phi.cols() != model.num_random_effects())
      throw InvalidConfiguration("supplied random effects have the wrong shape");
  } else {
    Rng rng = substream(s.seed, 0, 0, StreamPurpose::simulate);
    phi = sample_random_effects(eta, s.units, rng);
  }

  const int d = model.state_dim();
  const bool exact = model.has_exact_transition();
  std::vector<double> g(static_cast<std::size_t>(d * s.substeps));

  for (std::size_t i = 0; i < s.units; ++i) {
    Rng rng = substream(s.seed, i + 1, 0, StreamPurpose::simulate);
    const Eigen::VectorXd phi_i = phi.row(static_cast<Eigen::Index>(i)).transpose();
    UnitData unit;
    unit.id = std::to_string(i + 1);
    unit.obs.resize(static_cast<Eigen::Index>(s.observations), model.obs_dim());
    Eigen::MatrixXd latent(static_cast<Eigen::Index>(s.observations), d);
    Eigen::MatrixXd x = model.simulation_start(kappa, phi_i);
    for (std::size_t t = 0; t < s.observations; ++t) {
      if (t > 0) {
        for (auto& v : g) v = standard_normal(rng);
        if (exact) {
          model.exact_transition(x, s.dt, kappa, phi_i, std::span<const double>(g.data(), static_cast<std::size_t>(d)));
        } else {
          x.col(0) = em_propagate(model, x.col(0), kappa, phi_i, s.dt, s.substeps, g);
        }
      }
      unit.times.push_back(s.t0 + static_cast<double>(t) * s.dt);
      latent.row(static_cast<Eigen::Index>(t)) = x.col(0).transpose();
      unit.obs.row(static_cast<Eigen::Index>(t)) = model.sample_observation(x.col(0), xi, rng).transpose();
    }
    out.data.units.push_back(std::move(unit));
    out.latent.push_back(std::move(latent));
  }
  out.truth.phi = phi;
  out.truth.kappa = kappa;
  out.truth.xi = xi;
  out.truth.eta = eta;
  return out;
}

}  // namespace sdemem
