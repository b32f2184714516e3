#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdemem/diagnostics.hpp"
#include "sdemem/models.hpp"
#include "sdemem/samplers.hpp"

namespace sdemem {

/// Flat `section.key = value` file. `#` starts a comment; blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Keys that were never read; used to report typos.
  std::vector<std::string> unused() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
};

enum class Scheme { kalman, lna, pmmh_naive, pmmh, cpmmh, closed_form };
const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

struct RunConfig {
  // model.*
  std::string model_name = "ou";
  std::optional<double> sim_start;        // model.x0 (OU family)
  std::size_t units = 5;
  std::size_t observations = 50;
  double dt = 0.05;
  double t0 = 0.0;
  std::size_t sim_substeps = 20;          // E-M substeps when simulating without exact transitions
  Hyperparameters eta;                    // model.mu, model.tau
  Eigen::VectorXd kappa;
  Eigen::VectorXd xi;                     // model.sigma

  // scheme.*
  Scheme scheme = Scheme::cpmmh;
  FilterKind particle_filter = FilterKind::bootstrap;
  double rho = 0.0;
  std::vector<std::size_t> particles{1};
  std::size_t substeps = 1;
  bool sort = false;
  std::size_t lna_substeps = 10;

  // prior.*
  Priors priors;

  // mcmc.*
  std::size_t n_iters = 1000;
  std::size_t burn_in = 100;
  std::uint64_t seed = 1;
  std::string init = "prior";             // prior | truth
  std::string truth_path;                 // sidecar used by init = truth and by tune
  double init_sigma = 0.2;
  AdaptationSettings adaptation;
  bool joint_common = true;
  std::size_t flush_every = 100;

  // tune.*
  TuningOptions tuning;

  ModelPtr model() const;
  GibbsConfig gibbs_config() const;
  /// Filter used for likelihood evaluation under the configured scheme.
  FilterSpec filter_spec() const;
  /// Throws InvalidConfiguration with a specific message on any scheme/model mismatch.
  void validate() const;
  /// Starting state for the sampler given the data size.
  ParameterState initial_state(std::size_t units_in_data) const;
};

/// Defaults for a model: simulation settings, truth and priors from the case studies.
RunConfig default_run_config(const std::string& model_name);

/// Builds a RunConfig from the file contents, starting from the model's defaults.
RunConfig build_run_config(const KeyValueConfig& kv);

}  // namespace sdemem
