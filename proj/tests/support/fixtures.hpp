#pragma once

#include <memory>

#include "sdemem/models.hpp"

namespace fixtures {

/// OU truth used throughout the tests.
inline sdemem::Hyperparameters ou_eta() {
  sdemem::Hyperparameters eta;
  eta.mu = Eigen::Vector3d(-0.7, 2.3, -0.9);
  eta.tau = Eigen::Vector3d(4.0, 10.0, 4.0);
  return eta;
}

/// Simulated OU dataset with M units of n observations at spacing dt.
inline sdemem::SimulationResult ou_data(std::size_t m, std::size_t n, std::uint64_t seed, double sigma = 0.3,
                                        double dt = 0.05) {
  sdemem::OuModel model;
  sdemem::SimulationSettings s;
  s.units = m;
  s.observations = n;
  s.dt = dt;
  s.seed = seed;
  return sdemem::simulate_dataset(model, ou_eta(), std::nullopt, Eigen::VectorXd(0),
                                  Eigen::VectorXd::Constant(1, sigma), s);
}

inline sdemem::Priors ou_priors() {
  sdemem::Priors p;
  p.eta.kind = sdemem::NormalGammaPrior::Kind::normal_gamma;
  p.eta.components = {{0, 1, 2, 1}, {1, 1, 2, 0.5}, {0, 1, 2, 1}};
  p.xi = {sdemem::ScalarPrior{sdemem::ScalarPrior::Kind::gamma, 1.0, 0.4}};
  return p;
}

inline sdemem::Hyperparameters tumor_eta() {
  sdemem::Hyperparameters eta;
  eta.mu = Eigen::Vector4d(std::log(0.29), std::log(0.25), std::log(0.09), std::log(0.34));
  eta.tau = Eigen::Vector4d::Constant(10.0);
  return eta;
}

inline sdemem::Priors tumor_priors(int q = 4) {
  sdemem::Priors p;
  p.eta.kind = sdemem::NormalGammaPrior::Kind::independent;
  for (int j = 0; j < q; ++j) p.eta.components.push_back({-2.0, 1.0, 2.0, 0.2});
  p.xi = {sdemem::ScalarPrior{sdemem::ScalarPrior::Kind::log_normal, 0.0, 1.0}};
  return p;
}

inline sdemem::SimulationResult tumor_data(std::size_t m, std::uint64_t seed) {
  sdemem::TumorModel model;
  sdemem::SimulationSettings s;
  s.units = m;
  s.observations = 21;
  s.dt = 1.0;
  s.seed = seed;
  return sdemem::simulate_dataset(model, tumor_eta(), std::nullopt, Eigen::VectorXd(0),
                                  Eigen::VectorXd::Constant(1, std::sqrt(0.2)), s);
}

}  // namespace fixtures
