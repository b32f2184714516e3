#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdemem/aux_random.hpp"
#include "sdemem/filters.hpp"

namespace sdemem {

// ---------------------------------------------------------------------------
// Log-likelihood estimator behaviour
// ---------------------------------------------------------------------------

/// Where the likelihood is evaluated and how.
struct EstimatorSetup {
  const Model* model = nullptr;
  FilterSpec filter{};
  const UnitData* unit = nullptr;
  Eigen::VectorXd kappa;
  Eigen::VectorXd phi;
  Eigen::VectorXd xi;
};

struct VarianceEstimate {
  double variance = 0.0;  // +inf when a replicate was degenerate
  double mean = 0.0;
  bool degenerate = false;
};

/// Sample variance of R independent log-likelihood estimates with N particles.
VarianceEstimate estimate_loglik_variance(const EstimatorSetup& setup, std::size_t particles, std::size_t replicates,
                                          Rng& rng);

/// Pearson correlation of R pairs (loglik(u), loglik(u*)), u ~ N(0, I), u* the
/// Crank-Nicolson move of u. Throws UndefinedStatistic for zero variance.
double estimate_loglik_correlation(const EstimatorSetup& setup, std::size_t particles, double rho,
                                   std::size_t replicates, Rng& rng);

enum class TuningRule { pmmh, cpmmh };
const char* to_string(TuningRule rule);

struct TuningOptions {
  TuningRule rule = TuningRule::pmmh;
  double rho = 0.0;                   // used by the cpmmh rule
  std::size_t replicates = 200;       // R for variance estimates
  std::size_t correlation_replicates = 200;
  std::size_t max_particles = 65536;  // cap; exceeding it is a tuning failure
  double pmmh_target = 2.0;
};

struct TuningStep {
  std::size_t particles = 0;
  double variance = 0.0;
  double rho_l = 0.0;   // 0 under the pmmh rule
  double target = 0.0;
  bool met = false;
};

struct UnitTuning {
  std::string unit_id;
  TuningRule rule = TuningRule::pmmh;
  std::vector<TuningStep> steps;
  std::size_t recommended = 1;
  double rho_l = 0.0;  // at the recommended N
  bool success = true;
};

/// 2.16^2 / (1 - rho_l^2); +inf when rho_l >= 1.
double cpmmh_variance_target(double rho_l);

/// Doubling search on N until the rule's target variance is met, followed by a
/// linear refinement between the last failing and the first passing N.
UnitTuning tune_particles(const EstimatorSetup& setup, const TuningOptions& options, Rng& rng);

struct TuningReport {
  std::vector<UnitTuning> units;
  bool success() const;
  std::size_t max_recommended() const;
};

std::string format_tuning_csv(const TuningReport& report);

// ---------------------------------------------------------------------------
// Chain diagnostics
// ---------------------------------------------------------------------------

/// n / IACT with Geyer's initial positive sequence estimator, clamped to n.
/// Needs n >= 10; throws UndefinedStatistic for a constant chain.
double ess(std::span<const double> chain);

/// Minimum ESS over the columns of `draws` (rows = iterations). Constant
/// columns count as ESS 1.
double mess(const Eigen::MatrixXd& draws);

/// Empirical 1-Wasserstein distance; sorted coupling for equal sizes, a
/// 1024-point midpoint quantile grid otherwise.
double wasserstein1d(std::span<const double> a, std::span<const double> b);

double perf_measure(double w1, double runtime_minutes);

struct EfficiencyRow {
  std::string algorithm;
  double rho = 0.0;
  std::string particles;  // "N" or a per-unit summary
  double cpu_minutes = 0.0;
  double mess = 0.0;
  double mess_per_minute = 0.0;
  double relative = 1.0;
};

struct EfficiencyReport {
  std::vector<EfficiencyRow> rows;
  /// Fills `relative` as (mESS/min) / (baseline mESS/min).
  void set_relative_to(std::size_t baseline);
};

std::string format_efficiency_csv(const EfficiencyReport& report);
std::string format_efficiency_table(const EfficiencyReport& report);

/// Histogram density estimate on `bins` equal-width cells spanning the sample.
struct DensityGrid {
  std::vector<double> x;
  std::vector<double> density;
};
DensityGrid density_histogram(std::span<const double> sample, std::size_t bins = 50);

double sample_mean(std::span<const double> v);
/// Unbiased sample variance.
double sample_variance(std::span<const double> v);

}  // namespace sdemem
