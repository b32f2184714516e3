#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdemem/aux_random.hpp"
#include "sdemem/filters.hpp"
#include "sdemem/models.hpp"

namespace sdemem {

/// min(0, log_num - log_den). Throws InvalidState when log_den is -inf or NaN.
double mh_log_accept(double log_num, double log_den);

struct AdaptationSettings {
  double target = 0.234;       // acceptance rate targeted by the global scale
  double decay = 0.6;          // step size gamma_t = t^-decay
  std::size_t cov_start = 200; // iterations before the empirical covariance is used
  double initial_sd = 0.1;     // initial proposal sd per coordinate (before scaling)
  bool enabled = true;
  bool freeze_after_burn_in = false;
};

/// Gaussian random-walk proposal with adaptive Metropolis updates of the mean,
/// covariance and a global log scale.
class ProposalAdapter {
 public:
  ProposalAdapter() = default;
  ProposalAdapter(const Eigen::VectorXd& start, const AdaptationSettings& settings);

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  double log_scale() const { return log_scale_; }
  double scale() const { return std::exp(log_scale_); }
  std::size_t updates() const { return updates_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  /// scale^2 * (Sigma + 1e-8 I), where Sigma is the initial diagonal until
  /// cov_start updates have been made.
  Eigen::MatrixXd proposal_covariance() const;
  Eigen::VectorXd propose(const Eigen::VectorXd& current, Rng& rng) const;

  /// One adaptation step at iteration t >= 1 with acceptance signal alpha in [0, 1].
  void update(double alpha, const Eigen::VectorXd& point, std::size_t iteration);

 private:
  void refresh_factor();

  AdaptationSettings settings_{};
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd initial_cov_;
  Eigen::MatrixXd factor_;
  double log_scale_ = 0.0;
  std::size_t updates_ = 0;
  bool frozen_ = false;
};

/// Functional form of ProposalAdapter::update using the accept flag as signal.
ProposalAdapter adapt_proposal(ProposalAdapter adapter, bool accepted, const Eigen::VectorXd& point,
                               std::size_t iteration);

/// Exact draw from pi(eta | phi) under a normal-gamma prior (one component per column of phi).
Hyperparameters draw_eta_conjugate(const Eigen::MatrixXd& phi, const NormalGammaPrior& prior, Rng& rng);

/// Gibbs update of eta for either prior family. For the independent prior
/// this draws tau | mu, phi and then mu | tau, phi starting from `current`.
Hyperparameters draw_eta(const Eigen::MatrixXd& phi, const NormalGammaPrior& prior, const Hyperparameters& current,
                         Rng& rng);

struct GibbsConfig {
  enum class Scheme { naive, blocked };
  Scheme scheme = Scheme::blocked;
  double rho = 0.0;
  /// When true the unit step draws a fresh stream from g instead of applying
  /// the Crank-Nicolson kernel (the plain PMMH path).
  bool independent_streams = false;
  std::size_t n_iters = 1000;
  std::size_t burn_in = 0;
  std::vector<std::size_t> particles{1};  // one entry, or one per unit
  FilterSpec filter{};
  AdaptationSettings adaptation{};
  bool joint_common = true;
  bool update_eta = true;
  std::uint64_t seed = 1;

  std::size_t particles_for(std::size_t unit) const;
  void validate(std::size_t units) const;
};

struct IterationTelemetry {
  std::vector<unsigned char> unit_accepted;
  std::vector<unsigned char> common_accepted;  // one entry per common block (0 or more)
  double total_loglik = 0.0;
};

struct ChainOutput {
  std::vector<std::string> columns;
  Eigen::MatrixXd draws;  // n_iters x columns
  Eigen::VectorXd loglik;
  std::vector<double> unit_acceptance;   // per unit, over all iterations
  std::vector<double> common_acceptance; // per common block
  std::size_t degenerate_proposals = 0;
  double runtime_seconds = 0.0;
  std::size_t burn_in = 0;
};

/// Column names phi_i_j, kappa_k, xi_k, mu_j, tau_j (1-based).
std::vector<std::string> chain_columns(const Model& model, std::size_t units);
/// Flattens a state in chain-column order.
Eigen::VectorXd flatten_state(const ParameterState& s);

using ChainObserver = std::function<void(std::size_t iteration, const Eigen::VectorXd& row, const IterationTelemetry&)>;

/// Metropolis-within-Gibbs sampler for SDEMEMs with correlated pseudo-marginal unit updates.
class GibbsSampler {
 public:
  GibbsSampler(const Dataset& data, ModelPtr model, Priors priors, GibbsConfig config, ParameterState initial);

  const ParameterState& state() const { return state_; }
  double unit_loglik(std::size_t i) const { return loglik_[i]; }
  double total_loglik() const;
  const AuxStream& stream(std::size_t i) const { return streams_[i]; }
  const GibbsConfig& config() const { return config_; }
  const Model& model() const { return *model_; }

  /// Step 2 for unit i at iteration j; returns whether the move was accepted.
  bool update_unit_block(std::size_t i, std::size_t iteration);
  /// Step 3 at iteration j; one entry per common block.
  std::vector<unsigned char> update_common_block(std::size_t iteration);
  /// Step 4.
  void update_hyperparameters(std::size_t iteration);

  /// Unconstrained vector (transformed kappa, transformed xi) of the current state.
  Eigen::VectorXd common_vector() const;
  /// log numerator minus log denominator of the step-3 acceptance ratio for
  /// the unconstrained proposal `theta`, without changing the state. Fresh
  /// streams (naive scheme) are drawn from `aux_rng`.
  double common_log_ratio(const Eigen::VectorXd& theta, bool refresh_streams, Rng& aux_rng) const;

  IterationTelemetry iterate(std::size_t iteration);
  ChainOutput run(const ChainObserver& observer = {});

  double log_common_prior(const Eigen::VectorXd& theta) const;

 private:
  void split_common(const Eigen::VectorXd& theta, Eigen::VectorXd& kappa, Eigen::VectorXd& xi) const;
  FilterResult evaluate(std::size_t i, const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi,
                        const Eigen::VectorXd& xi, const AuxStream* u) const;
  AuxStream move_stream(const AuxStream& u, Rng& rng) const;
  std::vector<std::vector<std::size_t>> common_blocks() const;

  const Dataset& data_;
  ModelPtr model_;
  Priors priors_;
  GibbsConfig config_;
  ParameterState state_;
  std::vector<AuxStream> streams_;
  std::vector<double> loglik_;
  std::vector<ProposalAdapter> unit_adapters_;
  std::vector<ProposalAdapter> common_adapters_;
  bool stochastic_ = false;
  std::size_t degenerate_ = 0;
};

/// Runs the sampler from `initial`.
ChainOutput run_gibbs(const Dataset& data, ModelPtr model, const Priors& priors, const GibbsConfig& config,
                      const ParameterState& initial, const ChainObserver& observer = {});

}  // namespace sdemem
