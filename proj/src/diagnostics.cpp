#include "sdemem/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "sdemem/error.hpp"

namespace sdemem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_setup(const EstimatorSetup& s) {
  if (!s.model || !s.unit) throw InvalidConfiguration("estimator setup lacks a model or unit");
}

double run_once(const EstimatorSetup& s, const AuxStream* u) {
  try {
    return evaluate_unit(*s.model, s.filter, *s.unit, s.kappa, s.phi, s.xi, u).loglik;
  } catch (const NumericalModelError&) {
    return -kInf;
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double sample_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

VarianceEstimate estimate_loglik_variance(const EstimatorSetup& setup, std::size_t particles, std::size_t replicates,
                                          Rng& rng) {
  check_setup(setup);
  if (replicates < 2) throw InvalidConfiguration("variance estimation needs at least 2 replicates");
  if (!is_stochastic(setup.filter.kind)) {
    const double ll = run_once(setup, nullptr);
    return {0.0, ll, !std::isfinite(ll)};
  }
  const StreamShape shape = stream_shape(*setup.model, setup.filter, *setup.unit, particles);
  std::vector<double> ll(replicates);
  for (std::size_t r = 0; r < replicates; ++r) {
    const AuxStream u = init_stream(0, shape, rng);
    ll[r] = run_once(setup, &u);
    if (!std::isfinite(ll[r])) return {kInf, -kInf, true};
  }
  return {sample_variance(ll), sample_mean(ll), false};
}

double estimate_loglik_correlation(const EstimatorSetup& setup, std::size_t particles, double rho,
                                   std::size_t replicates, Rng& rng) {
  check_setup(setup);
  if (replicates < 10) throw InvalidConfiguration("correlation estimation needs at least 10 replicates");
  if (!is_stochastic(setup.filter.kind)) throw UndefinedStatistic("deterministic evaluator has no correlation");
  const Correlation corr(rho);
  const StreamShape shape = stream_shape(*setup.model, setup.filter, *setup.unit, particles);
  std::vector<double> a(replicates), b(replicates);
  for (std::size_t r = 0; r < replicates; ++r) {
    const AuxStream u = init_stream(0, shape, rng);
    const AuxStream v = crank_nicolson(u, corr, rng);
    a[r] = run_once(setup, &u);
    b[r] = run_once(setup, &v);
    if (!std::isfinite(a[r]) || !std::isfinite(b[r]))
      throw UndefinedStatistic("degenerate log-likelihood estimate while estimating correlation");
  }
  const double ma = sample_mean(a), mb = sample_mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t r = 0; r < replicates; ++r) {
    sab += (a[r] - ma) * (b[r] - mb);
    saa += (a[r] - ma) * (a[r] - ma);
    sbb += (b[r] - mb) * (b[r] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    if (a == b) return 1.0;
    throw UndefinedStatistic("log-likelihood estimates have zero variance");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

const char* to_string(TuningRule rule) { return rule == TuningRule::pmmh ? "pmmh" : "cpmmh"; }

double cpmmh_variance_target(double rho_l) {
  if (rho_l >= 1.0) return kInf;
  return 2.16 * 2.16 / (1.0 - rho_l * rho_l);
}

UnitTuning tune_particles(const EstimatorSetup& setup, const TuningOptions& options, Rng& rng) {
  check_setup(setup);
  UnitTuning out;
  out.unit_id = setup.unit->id;
  out.rule = options.rule;
  if (!is_stochastic(setup.filter.kind)) {
    out.steps.push_back({1, 0.0, 0.0, options.pmmh_target, true});
    out.recommended = 1;
    return out;
  }
  Correlation check(options.rho);
  (void)check;

  auto evaluate = [&](std::size_t n) {
    TuningStep step;
    step.particles = n;
    const VarianceEstimate v = estimate_loglik_variance(setup, n, options.replicates, rng);
    step.variance = v.variance;
    if (options.rule == TuningRule::pmmh) {
      step.target = options.pmmh_target;
    } else if (v.degenerate) {
      step.target = cpmmh_variance_target(0.0);
    } else {
      try {
        step.rho_l = estimate_loglik_correlation(setup, n, options.rho, options.correlation_replicates, rng);
      } catch (const UndefinedStatistic&) {
        step.rho_l = 0.0;
      }
      step.target = cpmmh_variance_target(step.rho_l);
    }
    step.met = !v.degenerate && step.variance <= step.target;
    out.steps.push_back(step);
    return step;
  };

  std::size_t n = 1;
  std::size_t last_fail = 0;
  TuningStep hit;
  bool found = false;
  while (n <= options.max_particles) {
    const TuningStep s = evaluate(n);
    if (s.met) {
      hit = s;
      found = true;
      break;
    }
    last_fail = n;
    n *= 2;
  }
  if (!found) {
    out.success = false;
    out.recommended = options.max_particles;
    return out;
  }
  if (last_fail > 0 && hit.particles - last_fail > 1) {
    const std::size_t stride = std::max<std::size_t>(1, (hit.particles - last_fail) / 8);
    for (std::size_t m = last_fail + stride; m < hit.particles; m += stride) {
      const TuningStep s = evaluate(m);
      if (s.met) {
        hit = s;
        break;
      }
    }
  }
  out.recommended = hit.particles;
  out.rho_l = hit.rho_l;
  return out;
}

bool TuningReport::success() const {
  return std::all_of(units.begin(), units.end(), [](const UnitTuning& u) { return u.success; });
}

std::size_t TuningReport::max_recommended() const {
  std::size_t m = 1;
  for (const auto& u : units) m = std::max(m, u.recommended);
  return m;
}

std::string format_tuning_csv(const TuningReport& report) {
  std::ostringstream os;
  os << "unit_id,rule,N,variance,rho_l,target,met,recommended,success\n";
  for (const auto& u : report.units)
    for (const auto& s : u.steps)
      os << u.unit_id << ',' << to_string(u.rule) << ',' << s.particles << ',' << fmt(s.variance) << ','
         << fmt(s.rho_l) << ',' << fmt(s.target) << ',' << (s.met ? 1 : 0) << ',' << u.recommended << ','
         << (u.success ? 1 : 0) << '\n';
  return os.str();
}

double ess(std::span<const double> chain) {
  const std::size_t n = chain.size();
  if (n < 10) throw InvalidConfiguration("ESS needs at least 10 draws");
  const double m = sample_mean(chain);
  std::vector<double> c(n);
  for (std::size_t t = 0; t < n; ++t) c[t] = chain[t] - m;
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += c[t] * c[t + lag];
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  if (!(g0 > 0.0) || g0 <= 1e-300) throw UndefinedStatistic("ESS is undefined for a constant chain");
  double sum_pairs = 0.0;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double pair = autocov(2 * k) + autocov(2 * k + 1);
    if (!(pair > 0.0)) break;
    sum_pairs += pair;
  }
  const double iact = (-g0 + 2.0 * sum_pairs) / g0;
  const double e = static_cast<double>(n) / iact;
  return std::min(e, static_cast<double>(n));
}

double mess(const Eigen::MatrixXd& draws) {
  double best = kInf;
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    const Eigen::VectorXd col = draws.col(j);
    double e = 1.0;
    try {
      e = ess(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
    } catch (const UndefinedStatistic&) {
      e = 1.0;
    }
    best = std::min(best, e);
  }
  return best;
}

double wasserstein1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("Wasserstein distance needs nonempty samples");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double s = 0.0;
  if (x.size() == y.size()) {
    for (std::size_t k = 0; k < x.size(); ++k) s += std::abs(x[k] - y[k]);
    return s / static_cast<double>(x.size());
  }
  constexpr std::size_t grid = 1024;
  auto quantile = [](const std::vector<double>& v, double p) {
    const std::size_t n = v.size();
    std::size_t idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    idx = std::clamp<std::size_t>(idx, 1, n);
    return v[idx - 1];
  };
  for (std::size_t k = 0; k < grid; ++k) {
    const double p = (static_cast<double>(k) + 0.5) / grid;
    s += std::abs(quantile(x, p) - quantile(y, p));
  }
  return s / grid;
}

double perf_measure(double w1, double runtime_minutes) {
  if (!(w1 >= 0.0) || !(runtime_minutes >= 0.0)) throw DomainError("performance measure inputs must be nonnegative");
  return w1 * runtime_minutes;
}

void EfficiencyReport::set_relative_to(std::size_t baseline) {
  const double base = rows.at(baseline).mess_per_minute;
  for (auto& r : rows) r.relative = r.mess_per_minute / base;
}

std::string format_efficiency_csv(const EfficiencyReport& report) {
  std::ostringstream os;
  os << "Algorithm,rho,N,CPU(m),mESS,mESS/m,Rel.\n";
  for (const auto& r : report.rows)
    os << r.algorithm << ',' << fmt(r.rho) << ',' << r.particles << ',' << fmt(r.cpu_minutes) << ',' << fmt(r.mess)
       << ',' << fmt(r.mess_per_minute) << ',' << fmt(r.relative) << '\n';
  return os.str();
}

std::string format_efficiency_table(const EfficiencyReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %7s %8s %10s %10s %10s %8s\n", "Algorithm", "rho", "N", "CPU(m)", "mESS",
                "mESS/m", "Rel.");
  os << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%-16s %7.4g %8s %10.4g %10.1f %10.2f %8.3g\n", r.algorithm.c_str(), r.rho,
                  r.particles.c_str(), r.cpu_minutes, r.mess, r.mess_per_minute, r.relative);
    os << line;
  }
  return os.str();
}

DensityGrid density_histogram(std::span<const double> sample, std::size_t bins) {
  if (sample.empty()) throw DomainError("density needs a nonempty sample");
  if (bins < 1) throw InvalidConfiguration("density needs at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  DensityGrid g;
  g.x.resize(bins);
  g.density.assign(bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) g.x[k] = lo + (static_cast<double>(k) + 0.5) * width;
  for (double v : sample) {
    std::size_t k = static_cast<std::size_t>((v - lo) / width);
    if (k >= bins) k = bins - 1;
    g.density[k] += 1.0;
  }
  for (auto& d : g.density) d /= static_cast<double>(sample.size()) * width;
  return g;
}

}  // namespace sdemem
