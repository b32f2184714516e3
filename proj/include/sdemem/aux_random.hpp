#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdemem/rng.hpp"

namespace sdemem {

/// Dimensions of one unit's auxiliary stream.
struct StreamShape {
  std::size_t n_obs = 1;
  std::size_t substeps = 1;  // L
  std::size_t particles = 1; // N
  std::size_t state_dim = 1; // d
  bool init_random = false;

  std::size_t propagation_size() const { return n_obs * substeps * particles * state_dim; }
  std::size_t init_size() const { return init_random ? particles * state_dim : 0; }
  void validate() const;
  bool operator==(const StreamShape&) const = default;
};

/// Crank-Nicolson correlation parameter, 0 <= rho <= 1.
class Correlation {
 public:
  explicit Correlation(double rho = 0.0);
  double value() const { return rho_; }

 private:
  double rho_;
};

/// Standard-Gaussian variates driving one unit's particle filter.
///
/// Layout of the propagation block is [n_obs][L][N][d]; the block for
/// observation t and substep l is contiguous, particle-major. The resampling
/// block holds one Gaussian per observation time, consumed through the normal
/// CDF. Streams are immutable once built.
class AuxStream {
 public:
  AuxStream() = default;
  AuxStream(std::size_t unit_id, StreamShape shape, std::vector<double> propagation,
            std::vector<double> resampling, std::vector<double> init);

  std::size_t unit_id() const { return unit_id_; }
  const StreamShape& shape() const { return shape_; }

  /// N*d Gaussians for observation interval t, substep l.
  std::span<const double> propagation(std::size_t t, std::size_t substep) const;
  double resample_variate(std::size_t t) const { return resampling_[t]; }
  std::span<const double> init_block() const { return init_; }

  std::span<const double> propagation_block() const { return propagation_; }
  std::span<const double> resample_block() const { return resampling_; }

  std::size_t size() const { return propagation_.size() + resampling_.size() + init_.size(); }

  /// Calls f(value) on every variate in storage order (propagation, resampling, init).
  template <typename F>
  void for_each(F&& f) const {
    for (double v : propagation_) f(v);
    for (double v : resampling_) f(v);
    for (double v : init_) f(v);
  }

  /// FNV-1a over the raw bytes; used for reproducibility audits.
  std::uint64_t checksum() const;

 private:
  std::size_t unit_id_ = 0;
  StreamShape shape_{};
  std::vector<double> propagation_;
  std::vector<double> resampling_;
  std::vector<double> init_;
};

/// Fresh stream with every variate drawn independently from N(0,1).
AuxStream init_stream(std::size_t unit_id, const StreamShape& shape, Rng& rng);

/// u* = rho*u + sqrt(1-rho^2)*omega, omega drawn in the same order as init_stream,
/// so rho = 0 reproduces init_stream exactly for a shared rng.
AuxStream crank_nicolson(const AuxStream& u, Correlation rho, Rng& rng);

/// log N(to; rho*from, (1-rho^2) I). Throws DegenerateKernel at rho = 1.
double kernel_log_density(std::span<const double> to, std::span<const double> from, double rho);
double kernel_log_density(const AuxStream& to, const AuxStream& from, Correlation rho);

/// log N(u; 0, I).
double gaussian_log_density(std::span<const double> u);

/// Standard normal CDF, clamped strictly inside (0, 1).
double gaussian_to_uniform(double z);

/// Systematic resampling on normalized weights using the grid (uniform + k)/N.
std::vector<std::size_t> systematic_resample(std::span<const double> weights, double uniform);

/// Allocation-free variant writing into `ancestors` (size N).
void systematic_resample(std::span<const double> weights, double uniform,
                         std::span<std::size_t> ancestors);

}  // namespace sdemem
