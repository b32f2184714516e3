#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdemem/model.hpp"

namespace sdemem {

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

/// One component of the hyperprior on (mu_j, tau_j).
///
/// normal-gamma:  mu_j | tau_j ~ N(mu0, 1/(m0 * tau_j)), tau_j ~ Ga(alpha, beta)
/// independent:   mu_j ~ N(mu0, 1/m0), tau_j ~ Ga(alpha, beta), a priori independent
/// Gamma distributions use the shape/rate parameterization.
struct NormalGammaComponent {
  double mu0 = 0.0;
  double m0 = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
};

struct NormalGammaPrior {
  enum class Kind { normal_gamma, independent };
  Kind kind = Kind::normal_gamma;
  std::vector<NormalGammaComponent> components;

  void validate() const;
  double log_density(const Hyperparameters& eta) const;
  Hyperparameters prior_mean() const;
};

/// Prior on one scalar parameter, evaluated on its unconstrained scale.
struct ScalarPrior {
  enum class Kind {
    gamma,      // natural-scale value ~ Ga(a, b); proposed on the log scale
    log_normal, // log value ~ N(a, b^2); proposed on the log scale
    normal,     // value ~ N(a, b^2); proposed on the natural scale
  };
  Kind kind = Kind::gamma;
  double a = 1.0;
  double b = 1.0;

  bool log_scale() const { return kind != Kind::normal; }
  double to_unconstrained(double natural) const;
  double to_natural(double unconstrained) const;
  /// Log density of the unconstrained value (Jacobian included).
  double log_density_unconstrained(double v) const;
  void validate() const;
};

struct Priors {
  NormalGammaPrior eta;
  std::vector<ScalarPrior> kappa;
  std::vector<ScalarPrior> xi;
};

// ---------------------------------------------------------------------------
// Transition kernels used by the case-study models
// ---------------------------------------------------------------------------

/// Exact OU transition theta2 + (x - theta2) e^{-theta1 dt} + sd(dt) * gaussian.
double ou_exact_propagate(double x, const OuParameters& theta, double dt, double gaussian);

/// Exact update of the two independent geometric Brownian motions of the tumor model.
/// phi_natural = (beta, gamma, delta, psi).
std::pair<double, double> gbm_exact_propagate(double x1, double x2, const Eigen::Vector4d& phi_natural,
                                              double dt, double g1, double g2);

/// Closed-form ODE mixed-effects log-likelihood; phi = (log beta, log delta),
/// times measured from the unit's first observation.
double odemem_loglik(const UnitData& unit, const Eigen::VectorXd& phi, double sigma_e,
                     const Eigen::Vector2d& x0);

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// dX = theta1 (theta2 - X) dt + theta3 dW, Y = X + N(0, sigma_eps^2),
/// phi = log(theta1, theta2, theta3).
class OuModel : public Model {
 public:
  /// `sim_start` fixes the simulator's starting value; by default each unit
  /// starts at its stationary mean theta2.
  explicit OuModel(std::optional<double> sim_start = std::nullopt) : sim_start_(sim_start) {}

  std::string name() const override { return "ou"; }
  int state_dim() const override { return 1; }
  int num_random_effects() const override { return 3; }
  std::vector<std::string> random_effect_labels() const override;

  virtual OuParameters ou_parameters(const Eigen::VectorXd& phi) const;

  Eigen::VectorXd drift(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                        const Eigen::VectorXd& phi) const override;
  Eigen::MatrixXd diffusion(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                            const Eigen::VectorXd& phi) const override;
  Eigen::VectorXd observe_mean(const Eigen::VectorXd& x) const override { return x; }
  double obs_logdensity(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& xi) const override;
  void obs_logdensity_batch(const Eigen::VectorXd& y, const Eigen::MatrixXd& particles,
                            const Eigen::VectorXd& xi, Eigen::Ref<Eigen::VectorXd> out) const override;
  Eigen::VectorXd sample_observation(const Eigen::VectorXd& x, const Eigen::VectorXd& xi,
                                     Rng& rng) const override;

  bool has_exact_transition() const override { return true; }
  void exact_transition(Eigen::Ref<Eigen::MatrixXd> particles, double dt, const Eigen::VectorXd& kappa,
                        const Eigen::VectorXd& phi, std::span<const double> gaussians) const override;
  std::optional<LinearGaussianStep> linear_gaussian_step(double dt, const Eigen::VectorXd& kappa,
                                                         const Eigen::VectorXd& phi) const override;
  std::optional<LnaSystem> lna_system(const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi,
                                      const UnitData& unit) const override;
  Eigen::VectorXd simulation_start(const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi) const override;

 protected:
  std::optional<double> sim_start_;
};

/// Leaky integrate-and-fire membrane model dX = (-lambda X + nu) dt + sigma dW,
/// phi = log(lambda, nu, sigma). Shares the OU machinery with theta2 = nu/lambda.
class NeuronalModel : public OuModel {
 public:
  explicit NeuronalModel(std::optional<double> sim_start = 0.0) : OuModel(sim_start) {}
  std::string name() const override { return "neuronal-ou"; }
  std::vector<std::string> random_effect_labels() const override;
  OuParameters ou_parameters(const Eigen::VectorXd& phi) const override;
};

/// Tumor volume model: two geometric Brownian motions observed through
/// Y = log(X1 + X2) + N(0, sigma_e^2), phi = log(beta, gamma, delta, psi).
class TumorModel : public Model {
 public:
  explicit TumorModel(Eigen::Vector2d x0 = Eigen::Vector2d(75.0, 75.0), bool use_exact = true)
      : x0_(x0), use_exact_(use_exact) {}

  std::string name() const override { return use_exact_ ? "tumor" : "tumor-em"; }
  int state_dim() const override { return 2; }
  int num_random_effects() const override { return 4; }
  std::vector<std::string> random_effect_labels() const override;

  Eigen::VectorXd drift(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                        const Eigen::VectorXd& phi) const override;
  Eigen::MatrixXd diffusion(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                            const Eigen::VectorXd& phi) const override;
  Eigen::VectorXd observe_mean(const Eigen::VectorXd& x) const override;
  double obs_logdensity(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& xi) const override;
  void obs_logdensity_batch(const Eigen::VectorXd& y, const Eigen::MatrixXd& particles,
                            const Eigen::VectorXd& xi, Eigen::Ref<Eigen::VectorXd> out) const override;
  Eigen::VectorXd sample_observation(const Eigen::VectorXd& x, const Eigen::VectorXd& xi,
                                     Rng& rng) const override;

  bool has_exact_transition() const override { return use_exact_; }
  void exact_transition(Eigen::Ref<Eigen::MatrixXd> particles, double dt, const Eigen::VectorXd& kappa,
                        const Eigen::VectorXd& phi, std::span<const double> gaussians) const override;
  /// LNA in Z = (log V, log X1, log X2).
  std::optional<LnaSystem> lna_system(const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi,
                                      const UnitData& unit) const override;

  InitialState initial_state() const override { return InitialState::point_mass(x0_); }
  Eigen::VectorXd simulation_start(const Eigen::VectorXd&, const Eigen::VectorXd&) const override { return x0_; }

 private:
  Eigen::Vector2d x0_;
  bool use_exact_;
};

/// Deterministic tumor model (gamma = psi = 0), phi = log(beta, delta).
class TumorOdeModel : public TumorModel {
 public:
  explicit TumorOdeModel(Eigen::Vector2d x0 = Eigen::Vector2d(75.0, 75.0)) : TumorModel(x0, true), x0_(x0) {}

  std::string name() const override { return "tumor-ode"; }
  int num_random_effects() const override { return 2; }
  std::vector<std::string> random_effect_labels() const override;

  Eigen::VectorXd drift(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                        const Eigen::VectorXd& phi) const override;
  Eigen::MatrixXd diffusion(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                            const Eigen::VectorXd& phi) const override;
  void exact_transition(Eigen::Ref<Eigen::MatrixXd> particles, double dt, const Eigen::VectorXd& kappa,
                        const Eigen::VectorXd& phi, std::span<const double> gaussians) const override;
  std::optional<LnaSystem> lna_system(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                      const UnitData&) const override {
    return std::nullopt;
  }
  std::optional<double> closed_form_loglik(const UnitData& unit, const Eigen::VectorXd& kappa,
                                           const Eigen::VectorXd& phi, const Eigen::VectorXd& xi) const override;

 private:
  Eigen::Vector2d x0_;
};

/// Builds one of the shipped models by name: ou, neuronal-ou, tumor, tumor-em, tumor-ode.
ModelPtr make_model(const std::string& name);

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// phi_ij ~ N(mu_j, 1/tau_j) independently; returns an M x q matrix.
Eigen::MatrixXd sample_random_effects(const Hyperparameters& eta, std::size_t m, Rng& rng);

struct SimulationSettings {
  std::size_t units = 1;
  std::size_t observations = 1;
  double dt = 1.0;
  double t0 = 0.0;
  int substeps = 1;  // Euler-Maruyama substeps when the model has no exact transition
  std::uint64_t seed = 1;
};

struct SimulationResult {
  Dataset data;
  ParameterState truth;
  std::vector<Eigen::MatrixXd> latent;  // per unit, n x d
};

/// Simulates units on the grid t0 + k dt. When `phi` is given it is used
/// verbatim, otherwise random effects are drawn from eta.
SimulationResult simulate_dataset(const Model& model, const Hyperparameters& eta,
                                  const std::optional<Eigen::MatrixXd>& phi, const Eigen::VectorXd& kappa,
                                  const Eigen::VectorXd& xi, const SimulationSettings& settings);

}  // namespace sdemem
