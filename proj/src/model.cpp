#include "sdemem/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sdemem/error.hpp"

namespace sdemem {

std::size_t Dataset::total_observations() const {
  std::size_t n = 0;
  for (const auto& u : units) n += u.size();
  return n;
}

void Dataset::validate() const {
  if (units.empty()) throw InputError("dataset contains no units");
  for (const auto& u : units) {
    if (u.times.empty()) throw InputError("unit '" + u.id + "' has no observations");
    if (static_cast<std::size_t>(u.obs.rows()) != u.times.size())
      throw InputError("unit '" + u.id + "': observation rows do not match time points");
    for (std::size_t t = 0; t < u.times.size(); ++t) {
      if (!std::isfinite(u.times[t])) throw InputError("unit '" + u.id + "': non-finite time");
      if (t > 0 && !(u.times[t] > u.times[t - 1]))
        throw InputError("unit '" + u.id + "': times must be strictly increasing");
    }
    if (!u.obs.allFinite()) throw InputError("unit '" + u.id + "': non-finite observation");
  }
}

void ParameterState::validate() const {
  if (!phi.allFinite()) throw DomainError("random effects must be finite");
  if (!kappa.allFinite()) throw DomainError("common parameters must be finite");
  for (Eigen::Index k = 0; k < xi.size(); ++k)
    if (!(xi[k] > 0.0) || !std::isfinite(xi[k])) throw DomainError("observation parameters must be positive");
  if (eta.mu.size() != eta.tau.size()) throw DomainError("mu and tau differ in length");
  for (Eigen::Index j = 0; j < eta.tau.size(); ++j)
    if (!(eta.tau[j] > 0.0) || !std::isfinite(eta.tau[j])) throw DomainError("precisions must be positive");
  if (!eta.mu.allFinite()) throw DomainError("mu must be finite");
}

InitialState InitialState::point_mass(Eigen::VectorXd x0) {
  InitialState s;
  s.kind_ = Kind::point_mass;
  s.x0_ = std::move(x0);
  return s;
}

InitialState InitialState::first_observation() { return InitialState{}; }

InitialState InitialState::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw InvalidConfiguration("initial covariance has wrong shape");
  InitialState s;
  s.kind_ = Kind::gaussian;
  s.x0_ = std::move(mean);
  s.cov_ = std::move(cov);
  return s;
}

Eigen::VectorXd InitialState::location(const UnitData& unit) const {
  if (kind_ == Kind::first_observation) {
    if (unit.size() == 0) throw InputError("unit '" + unit.id + "' has no observations");
    return unit.obs.row(0).transpose();
  }
  return x0_;
}

LinearGaussianStep OuParameters::step(double dt) const {
  if (!(theta1 > 0.0)) throw DomainError("OU mean-reversion rate must be positive");
  const double a = std::exp(-theta1 * dt);
  return {a, theta2 * (1.0 - a), theta3 * theta3 * (-std::expm1(-2.0 * theta1 * dt)) / (2.0 * theta1)};
}

std::vector<std::string> Model::random_effect_labels() const {
  std::vector<std::string> out;
  for (int j = 0; j < num_random_effects(); ++j) out.push_back("phi" + std::to_string(j + 1));
  return out;
}

void Model::obs_logdensity_batch(const Eigen::VectorXd& y, const Eigen::MatrixXd& particles,
                                 const Eigen::VectorXd& xi, Eigen::Ref<Eigen::VectorXd> out) const {
  for (Eigen::Index k = 0; k < particles.cols(); ++k)
    out[k] = obs_logdensity(y, particles.col(k), xi);
}

void Model::exact_transition(Eigen::Ref<Eigen::MatrixXd>, double, const Eigen::VectorXd&,
                             const Eigen::VectorXd&, std::span<const double>) const {
  throw UnsupportedModel("model '" + name() + "' has no exact transition");
}

std::optional<LinearGaussianStep> Model::linear_gaussian_step(double, const Eigen::VectorXd&,
                                                              const Eigen::VectorXd&) const {
  return std::nullopt;
}

std::optional<LnaSystem> Model::lna_system(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                           const UnitData&) const {
  return std::nullopt;
}

std::optional<double> Model::closed_form_loglik(const UnitData&, const Eigen::VectorXd&,
                                                const Eigen::VectorXd&, const Eigen::VectorXd&) const {
  return std::nullopt;
}

double Model::random_effects_logdensity(const Eigen::VectorXd& phi, const Hyperparameters& eta) const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < phi.size(); ++j) s += normal_logpdf(phi[j], eta.mu[j], 1.0 / eta.tau[j]);
  return s;
}

bool Model::supports_linear_gaussian() const {
  if (state_dim() != 1 || obs_dim() != 1) return false;
  Eigen::VectorXd kappa = Eigen::VectorXd::Zero(num_common());
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(num_random_effects());
  return linear_gaussian_step(1.0, kappa, phi).has_value();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& beta, const Eigen::VectorXd& x) {
  const Eigen::Index d = beta.rows();
  if (d == 1) {
    if (!(beta(0, 0) >= 0.0) || !std::isfinite(beta(0, 0))) {
      std::ostringstream os;
      os << "diffusion is not positive semidefinite at x = " << x.transpose();
      throw NumericalModelError(os.str());
    }
    return Eigen::MatrixXd::Constant(1, 1, std::sqrt(beta(0, 0)));
  }
  Eigen::LLT<Eigen::MatrixXd> llt(beta);
  if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite())
    return llt.matrixL();
  Eigen::MatrixXd jittered = beta + 1e-12 * Eigen::MatrixXd::Identity(d, d);
  Eigen::LLT<Eigen::MatrixXd> retry(jittered);
  if (retry.info() != Eigen::Success || !retry.matrixL().toDenseMatrix().allFinite()) {
    std::ostringstream os;
    os << "diffusion is not positive semidefinite at x = " << x.transpose();
    throw NumericalModelError(os.str());
  }
  return retry.matrixL();
}

void em_substep(const Model& model, Eigen::Ref<Eigen::VectorXd> x, const Eigen::VectorXd& kappa,
                const Eigen::VectorXd& phi, double h, std::span<const double> gaussians) {
  const Eigen::Index d = x.size();
  const Eigen::VectorXd xc = x;
  const Eigen::VectorXd a = model.drift(xc, kappa, phi);
  const Eigen::MatrixXd b = model.diffusion(xc, kappa, phi);
  const Eigen::MatrixXd s = psd_sqrt(b, xc);
  Eigen::Map<const Eigen::VectorXd> z(gaussians.data(), d);
  x = xc + a * h + s * z * std::sqrt(h);
}

Eigen::VectorXd em_propagate(const Model& model, const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                             const Eigen::VectorXd& phi, double dt_obs, int substeps,
                             std::span<const double> gaussians) {
  if (substeps < 1) throw InvalidConfiguration("Euler-Maruyama needs at least one substep");
  const std::size_t d = static_cast<std::size_t>(x.size());
  if (gaussians.size() < d * static_cast<std::size_t>(substeps))
    throw InvalidConfiguration("too few Gaussians for Euler-Maruyama propagation");
  Eigen::VectorXd out = x;
  const double h = dt_obs / substeps;
  for (int l = 0; l < substeps; ++l) em_substep(model, out, kappa, phi, h, gaussians.subspan(l * d, d));
  return out;
}

double normal_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
}

}  // namespace sdemem
