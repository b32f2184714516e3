#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdemem/rng.hpp"

namespace sdemem {

/// One experimental unit: strictly increasing times, one observation row per time.
struct UnitData {
  std::string id;
  std::vector<double> times;
  Eigen::MatrixXd obs;  // n x d_o

  std::size_t size() const { return times.size(); }
};

struct Dataset {
  std::vector<UnitData> units;

  std::size_t num_units() const { return units.size(); }
  std::size_t total_observations() const;
  /// Throws InputError unless M >= 1, times strictly increase and all values are finite.
  void validate() const;
};

/// Population hyperparameters: phi_ij ~ N(mu_j, 1/tau_j).
struct Hyperparameters {
  Eigen::VectorXd mu;
  Eigen::VectorXd tau;
};

/// Current values of every model parameter.
///
/// phi holds the random effects on the log scale (row i = unit i); xi holds
/// observation parameters on the natural scale (sigma_eps for the shipped
/// models); kappa is stored on the scale it is proposed on.
struct ParameterState {
  Eigen::MatrixXd phi;
  Eigen::VectorXd kappa;
  Eigen::VectorXd xi;
  Hyperparameters eta;

  void validate() const;
};

/// Distribution of the latent state at the first observation time of a unit.
class InitialState {
 public:
  enum class Kind { point_mass, first_observation, gaussian };

  static InitialState point_mass(Eigen::VectorXd x0);
  /// Point mass at the unit's first observation (requires d = d_o).
  static InitialState first_observation();
  static InitialState gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  Kind kind() const { return kind_; }
  bool is_random() const { return kind_ == Kind::gaussian; }
  /// True when the state is pinned to the first observation; that observation is
  /// then conditioned on rather than weighted, so the likelihood is p(y_2:n | y_1).
  bool conditions_on_first() const { return kind_ == Kind::first_observation; }
  /// Location of the point mass, or the Gaussian mean.
  Eigen::VectorXd location(const UnitData& unit) const;
  const Eigen::MatrixXd& covariance() const { return cov_; }

 private:
  Kind kind_ = Kind::first_observation;
  Eigen::VectorXd x0_;
  Eigen::MatrixXd cov_;
};

/// One-dimensional Gaussian transition x' ~ N(scale*x + offset, variance).
struct LinearGaussianStep {
  double scale = 1.0;
  double offset = 0.0;
  double variance = 0.0;
};

/// Ornstein-Uhlenbeck parameters for dX = theta1 (theta2 - X) dt + theta3 dW.
struct OuParameters {
  double theta1 = 1.0;
  double theta2 = 0.0;
  double theta3 = 1.0;

  LinearGaussianStep step(double dt) const;
};

/// Mean/covariance ODE system used by the linear noise approximation.
struct LnaSystem {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> diffusion;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  Eigen::VectorXd observation;  // P, Y = P^T Z + eps
  Eigen::VectorXd initial_mean;
  Eigen::MatrixXd initial_cov;
  bool condition_on_first = false;  // skip the likelihood term of observation 1
};

/// Interface of an SDE mixed-effects model.
///
/// Functions receive the random effects phi on the log scale and kappa on its
/// stored scale. Implementations are pure and safe to call concurrently.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int obs_dim() const { return 1; }
  virtual int num_random_effects() const = 0;
  virtual int num_common() const { return 0; }
  virtual int num_obs_params() const { return 1; }
  virtual std::vector<std::string> random_effect_labels() const;

  virtual Eigen::VectorXd drift(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                                const Eigen::VectorXd& phi) const = 0;
  virtual Eigen::MatrixXd diffusion(const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                                    const Eigen::VectorXd& phi) const = 0;

  /// h(x): noiseless observation of state x.
  virtual Eigen::VectorXd observe_mean(const Eigen::VectorXd& x) const = 0;
  virtual double obs_logdensity(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& xi) const = 0;
  /// Log observation density for every column of `particles` (d x N).
  virtual void obs_logdensity_batch(const Eigen::VectorXd& y, const Eigen::MatrixXd& particles,
                                    const Eigen::VectorXd& xi, Eigen::Ref<Eigen::VectorXd> out) const;
  virtual Eigen::VectorXd sample_observation(const Eigen::VectorXd& x, const Eigen::VectorXd& xi,
                                             Rng& rng) const = 0;

  virtual bool has_exact_transition() const { return false; }
  /// Propagates each column of `particles` over dt with the exact transition law,
  /// consuming d Gaussians per particle (particle-major).
  virtual void exact_transition(Eigen::Ref<Eigen::MatrixXd> particles, double dt,
                                const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi,
                                std::span<const double> gaussians) const;

  /// Present when the state is scalar, the transition is an affine Gaussian in
  /// x and y = x + N(0, xi_0^2). Enables the bridge and Kalman filters.
  virtual std::optional<LinearGaussianStep> linear_gaussian_step(double dt, const Eigen::VectorXd& kappa,
                                                                 const Eigen::VectorXd& phi) const;
  virtual std::optional<LnaSystem> lna_system(const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi,
                                              const UnitData& unit) const;
  /// Exact log-likelihood for models without intrinsic noise.
  virtual std::optional<double> closed_form_loglik(const UnitData& unit, const Eigen::VectorXd& kappa,
                                                   const Eigen::VectorXd& phi, const Eigen::VectorXd& xi) const;

  virtual InitialState initial_state() const { return InitialState::first_observation(); }
  /// Latent starting point used by the simulator.
  virtual Eigen::VectorXd simulation_start(const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi) const = 0;

  /// log pi(phi | eta); independent Gaussians on the log scale.
  virtual double random_effects_logdensity(const Eigen::VectorXd& phi, const Hyperparameters& eta) const;

  bool supports_linear_gaussian() const;
};

using ModelPtr = std::shared_ptr<const Model>;

/// Lower Cholesky factor of a PSD matrix, retrying once with 1e-12 diagonal jitter.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& beta, const Eigen::VectorXd& x);

/// One Euler-Maruyama step of size h using d Gaussians.
void em_substep(const Model& model, Eigen::Ref<Eigen::VectorXd> x, const Eigen::VectorXd& kappa,
                const Eigen::VectorXd& phi, double h, std::span<const double> gaussians);

/// L Euler-Maruyama substeps of size dt_obs/L consuming the L x d Gaussians in order.
Eigen::VectorXd em_propagate(const Model& model, const Eigen::VectorXd& x, const Eigen::VectorXd& kappa,
                             const Eigen::VectorXd& phi, double dt_obs, int substeps,
                             std::span<const double> gaussians);

/// Sums of log N(x; mean, var).
double normal_logpdf(double x, double mean, double var);

}  // namespace sdemem
