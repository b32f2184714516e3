#include "sdemem/aux_random.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>

#include "sdemem/error.hpp"

namespace sdemem {

Rng substream(std::uint64_t seed, std::uint64_t unit, std::uint64_t iteration, StreamPurpose purpose) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(unit), hi(unit), lo(iteration), hi(iteration),
                    static_cast<std::uint32_t>(purpose), 0x5dee5eedu};
  return Rng(seq);
}

void StreamShape::validate() const {
  if (n_obs < 1 || substeps < 1 || particles < 1 || state_dim < 1) {
    throw InvalidConfiguration("auxiliary stream dimensions must all be >= 1 (n_obs=" +
                               std::to_string(n_obs) + ", L=" + std::to_string(substeps) +
                               ", N=" + std::to_string(particles) +
                               ", d=" + std::to_string(state_dim) + ")");
  }
}

Correlation::Correlation(double rho) : rho_(rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw InvalidConfiguration("correlation rho must lie in [0, 1], got " + std::to_string(rho));
  }
}

AuxStream::AuxStream(std::size_t unit_id, StreamShape shape, std::vector<double> propagation,
                     std::vector<double> resampling, std::vector<double> init)
    : unit_id_(unit_id),
      shape_(shape),
      propagation_(std::move(propagation)),
      resampling_(std::move(resampling)),
      init_(std::move(init)) {
  shape_.validate();
  if (propagation_.size() != shape_.propagation_size() || resampling_.size() != shape_.n_obs ||
      init_.size() != shape_.init_size()) {
    throw InvalidConfiguration("auxiliary stream blocks do not match the declared shape");
  }
  for_each([](double v) {
    if (!std::isfinite(v)) throw DomainError("auxiliary stream contains a non-finite variate");
  });
}

std::span<const double> AuxStream::propagation(std::size_t t, std::size_t substep) const {
  const std::size_t block = shape_.particles * shape_.state_dim;
  return std::span<const double>(propagation_).subspan((t * shape_.substeps + substep) * block, block);
}

std::uint64_t AuxStream::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for_each([&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  });
  return h;
}

namespace {

std::vector<double> draw_block(std::size_t n, std::normal_distribution<double>& dist, Rng& rng) {
  std::vector<double> out(n);
  for (double& v : out) v = dist(rng);
  return out;
}

std::vector<double> mix_block(const std::vector<double>& u, double rho, double s,
                              std::normal_distribution<double>& dist, Rng& rng) {
  std::vector<double> out(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) out[j] = rho * u[j] + s * dist(rng);
  return out;
}

}  // namespace

AuxStream init_stream(std::size_t unit_id, const StreamShape& shape, Rng& rng) {
  shape.validate();
  std::normal_distribution<double> dist(0.0, 1.0);
  auto prop = draw_block(shape.propagation_size(), dist, rng);
  auto res = draw_block(shape.n_obs, dist, rng);
  auto init = draw_block(shape.init_size(), dist, rng);
  return AuxStream(unit_id, shape, std::move(prop), std::move(res), std::move(init));
}

AuxStream crank_nicolson(const AuxStream& u, Correlation rho, Rng& rng) {
  const double r = rho.value();
  const double s = std::sqrt(1.0 - r * r);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> prop(u.propagation_block().begin(), u.propagation_block().end());
  std::vector<double> res(u.resample_block().begin(), u.resample_block().end());
  std::vector<double> init(u.init_block().begin(), u.init_block().end());
  // Blocks are drawn in the same order as init_stream so that rho = 0 reproduces it.
  auto new_prop = mix_block(prop, r, s, dist, rng);
  auto new_res = mix_block(res, r, s, dist, rng);
  auto new_init = mix_block(init, r, s, dist, rng);
  return AuxStream(u.unit_id(), u.shape(), std::move(new_prop), std::move(new_res), std::move(new_init));
}

double kernel_log_density(std::span<const double> to, std::span<const double> from, double rho) {
  if (to.size() != from.size()) throw InvalidConfiguration("kernel_log_density: size mismatch");
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw DegenerateKernel("Crank-Nicolson kernel density is degenerate for rho = " + std::to_string(rho));
  }
  const double var = 1.0 - rho * rho;
  double ss = 0.0;
  for (std::size_t j = 0; j < to.size(); ++j) {
    const double r = to[j] - rho * from[j];
    ss += r * r;
  }
  const double n = static_cast<double>(to.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * var) - 0.5 * ss / var;
}

double kernel_log_density(const AuxStream& to, const AuxStream& from, Correlation rho) {
  if (!(to.shape() == from.shape())) throw InvalidConfiguration("kernel_log_density: shape mismatch");
  std::vector<double> a, b;
  a.reserve(to.size());
  b.reserve(from.size());
  to.for_each([&a](double v) { a.push_back(v); });
  from.for_each([&b](double v) { b.push_back(v); });
  return kernel_log_density(a, b, rho.value());
}

double gaussian_log_density(std::span<const double> u) {
  double ss = 0.0;
  for (double v : u) ss += v * v;
  return -0.5 * static_cast<double>(u.size()) * std::log(2.0 * std::numbers::pi) - 0.5 * ss;
}

double gaussian_to_uniform(double z) {
  if (!std::isfinite(z)) throw DomainError("gaussian_to_uniform: non-finite input");
  const double p = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(p, lo, hi);
}

void systematic_resample(std::span<const double> weights, double uniform,
                         std::span<std::size_t> ancestors) {
  const std::size_t n = weights.size();
  if (n == 0 || ancestors.size() != n) throw InvalidConfiguration("systematic_resample: bad sizes");
  if (!(uniform >= 0.0 && uniform < 1.0)) throw DomainError("systematic_resample: uniform outside [0,1)");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DegenerateWeights("negative or non-finite resampling weight");
    total += w;
  }
  if (total <= 0.0) throw DegenerateWeights("all resampling weights are zero");
  const double tol = 1e-12 * std::max(1.0, static_cast<double>(n));  // summation rounding grows with n
  if (std::abs(total - 1.0) > tol) throw DegenerateWeights("resampling weights are not normalized");

  const double inv_n = 1.0 / static_cast<double>(n);
  std::size_t j = 0;
  double cumulative = weights[0];
  for (std::size_t k = 0; k < n; ++k) {
    const double point = (uniform + static_cast<double>(k)) * inv_n * total;
    while (point >= cumulative && j + 1 < n) cumulative += weights[++j];
    ancestors[k] = j;
  }
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, double uniform) {
  std::vector<std::size_t> out(weights.size());
  systematic_resample(weights, uniform, out);
  return out;
}

}  // namespace sdemem
