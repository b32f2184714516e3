#pragma once

#include <cstddef>
#include <vector>

#include "sdemem/aux_random.hpp"
#include "sdemem/model.hpp"

namespace sdemem {

struct FilterResult {
  double loglik = 0.0;          // may be -inf
  std::size_t n_resamples = 0;
  bool degenerate = false;      // implies loglik == -inf
};

enum class FilterKind { bootstrap, bridge, kalman, lna, closed_form };

const char* to_string(FilterKind kind);
FilterKind filter_kind_from_string(const std::string& name);
/// True for the particle filters, which consume an auxiliary stream.
bool is_stochastic(FilterKind kind);

/// How a unit's likelihood is computed.
struct FilterSpec {
  FilterKind kind = FilterKind::bootstrap;
  std::size_t substeps = 1;      // Euler-Maruyama substeps L (ignored with exact transitions)
  bool sort = false;             // Euclidean sorting before resampling
  std::size_t lna_substeps = 10; // RK4 steps per inter-observation interval
};

/// Throws UnsupportedModel (or InvalidConfiguration) when `model` cannot be
/// evaluated with `spec`.
void validate_filter(const Model& model, const FilterSpec& spec);

/// Stream dimensions for one unit with N particles.
StreamShape stream_shape(const Model& model, const FilterSpec& spec, const UnitData& unit, std::size_t particles);

/// Ordering of particles (columns of a d x N matrix) used before resampling:
/// ascending for d = 1, ascending Euclidean distance from the particle mean otherwise.
std::vector<std::size_t> sort_particles(const Eigen::MatrixXd& x);

/// Numerically stable log(sum(exp(v))); -inf when every entry is -inf.
double log_sum_exp(std::span<const double> v);

/// Bootstrap particle filter. The particle count and substep count are taken
/// from the stream's shape. Observation 0 is weighted at the initial state
/// (unless the state is pinned to that observation); each later step sorts (optionally), resamples with Phi(u_resample[t]),
/// propagates and reweights.
FilterResult bootstrap_filter(const UnitData& unit, const Model& model, const Eigen::VectorXd& kappa,
                              const Eigen::VectorXd& phi, const Eigen::VectorXd& xi, const AuxStream& u,
                              bool sort);

/// Conditioned Gaussian proposal x ~ N(mean, var) for an affine Gaussian step
/// followed by y = x + N(0, sigma^2).
struct BridgeProposal {
  double mean = 0.0;
  double var = 0.0;
};
BridgeProposal bridge_proposal(const LinearGaussianStep& step, double x_prev, double y, double obs_var);

/// Bridge particle filter for scalar affine Gaussian transitions with additive
/// Gaussian observation noise xi[0].
FilterResult bridge_filter(const UnitData& unit, const Model& model, const Eigen::VectorXd& kappa,
                           const Eigen::VectorXd& phi, const Eigen::VectorXd& xi, const AuxStream& u,
                           bool sort);

/// Exact Kalman log-likelihood for an OU process observed with N(0, sigma_eps^2)
/// noise, started from a known point mass x0 at the first observation time.
/// Every observation, including the first, contributes.
double kalman_loglik(const UnitData& unit, const OuParameters& theta, double sigma_eps, double x0);

/// Kalman log-likelihood for any model exposing linear_gaussian_step.
double kalman_loglik(const UnitData& unit, const Model& model, const Eigen::VectorXd& kappa,
                     const Eigen::VectorXd& phi, const Eigen::VectorXd& xi);

/// RK4 integration of dm/dt = alpha(m), dH/dt = H J^T + beta(m) + J H from t0 to t1.
void lna_ode_step(Eigen::VectorXd& m, Eigen::MatrixXd& h, const LnaSystem& sys, double t0, double t1,
                  std::size_t substeps);

/// Forward filter for Y = P^T Z + N(0, sigma_e^2) under the restarting LNA.
/// Starts from (sys.initial_mean, sys.initial_cov) at the first observation time.
double lna_forward_filter(const UnitData& unit, const LnaSystem& sys, double sigma_e,
                          std::size_t substeps = 10);

/// Evaluates the unit log-likelihood (exact or estimated) according to `spec`.
/// `u` must be non-null for the particle filters.
FilterResult evaluate_unit(const Model& model, const FilterSpec& spec, const UnitData& unit,
                           const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi, const Eigen::VectorXd& xi,
                           const AuxStream* u);

}  // namespace sdemem
