#include "sdemem/filters.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "sdemem/error.hpp"

namespace sdemem {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Shared state and resampling step of the bootstrap and bridge filters.
class ParticleSystem {
 public:
  ParticleSystem(std::size_t d, std::size_t n)
      : x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n)),
        logw(static_cast<Eigen::Index>(n)),
        scratch_(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n)),
        w_(n),
        ancestors_(n) {}

  Eigen::MatrixXd x;
  Eigen::VectorXd logw;

  /// Adds log(mean weight) to `ll`; returns false when every weight is zero.
  bool accumulate(double& ll) {
    for (Eigen::Index k = 0; k < logw.size(); ++k)
      if (std::isnan(logw[k])) logw[k] = kNegInf;
    const double lse = log_sum_exp(std::span<const double>(logw.data(), static_cast<std::size_t>(logw.size())));
    if (lse == kNegInf || std::isnan(lse)) return false;
    ll += lse - std::log(static_cast<double>(logw.size()));
    return true;
  }

  void resample(double gaussian, bool sort) {
    const Eigen::Index n = x.cols();
    if (sort && n > 1) {
      const auto perm = sort_particles(x);
      for (Eigen::Index k = 0; k < n; ++k) scratch_.col(k) = x.col(static_cast<Eigen::Index>(perm[k]));
      x.swap(scratch_);
      Eigen::VectorXd lw(n);
      for (Eigen::Index k = 0; k < n; ++k) lw[k] = logw[static_cast<Eigen::Index>(perm[k])];
      logw.swap(lw);
    }
    const double mx = logw.maxCoeff();
    double total = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      w_[static_cast<std::size_t>(k)] = std::exp(logw[k] - mx);
      total += w_[static_cast<std::size_t>(k)];
    }
    for (auto& v : w_) v /= total;
    systematic_resample(w_, gaussian_to_uniform(gaussian), ancestors_);
    for (Eigen::Index k = 0; k < n; ++k) scratch_.col(k) = x.col(static_cast<Eigen::Index>(ancestors_[static_cast<std::size_t>(k)]));
    x.swap(scratch_);
  }

 private:
  Eigen::MatrixXd scratch_;
  std::vector<double> w_;
  std::vector<std::size_t> ancestors_;
};

void check_stream(const UnitData& unit, const Model& model, const AuxStream& u) {
  const auto& s = u.shape();
  if (s.n_obs != unit.size() || s.state_dim != static_cast<std::size_t>(model.state_dim()))
    throw InvalidConfiguration("auxiliary stream does not match unit '" + unit.id + "'");
  if (s.particles < 1) throw InvalidConfiguration("particle filter needs N >= 1");
}

void initialise(ParticleSystem& ps, const UnitData& unit, const Model& model, const AuxStream& u) {
  const InitialState init = model.initial_state();
  const Eigen::VectorXd loc = init.location(unit);
  if (loc.size() != ps.x.rows()) throw InvalidConfiguration("initial state has the wrong dimension");
  ps.x.colwise() = loc;
  if (init.is_random()) {
    if (!u.shape().init_random) throw InvalidConfiguration("stream lacks initial-state variates");
    const Eigen::MatrixXd l = psd_sqrt(init.covariance(), loc);
    Eigen::Map<const Eigen::MatrixXd> z(u.init_block().data(), ps.x.rows(), ps.x.cols());
    ps.x += l * z;
  }
}

/// Weights observation 1 at the initial particles, or leaves the weights flat
/// when the initial state is the observation itself.
bool weight_first(ParticleSystem& ps, const Model& model, const Eigen::VectorXd& y, const Eigen::VectorXd& xi,
                  double& ll) {
  if (model.initial_state().conditions_on_first()) {
    ps.logw.setZero();
    return true;
  }
  model.obs_logdensity_batch(y, ps.x, xi, ps.logw);
  return ps.accumulate(ll);
}

}  // namespace

const char* to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::bootstrap: return "bootstrap";
    case FilterKind::bridge: return "bridge";
    case FilterKind::kalman: return "kalman";
    case FilterKind::lna: return "lna";
    case FilterKind::closed_form: return "closed_form";
  }
  return "?";
}

FilterKind filter_kind_from_string(const std::string& name) {
  for (auto k : {FilterKind::bootstrap, FilterKind::bridge, FilterKind::kalman, FilterKind::lna, FilterKind::closed_form})
    if (name == to_string(k)) return k;
  throw InvalidConfiguration("unknown filter '" + name + "'");
}

bool is_stochastic(FilterKind kind) { return kind == FilterKind::bootstrap || kind == FilterKind::bridge; }

void validate_filter(const Model& model, const FilterSpec& spec) {
  if (spec.substeps < 1) throw InvalidConfiguration("substeps must be >= 1");
  if (spec.lna_substeps < 1) throw InvalidConfiguration("LNA substeps must be >= 1");
  const Eigen::VectorXd kappa = Eigen::VectorXd::Zero(model.num_common());
  const Eigen::VectorXd phi = Eigen::VectorXd::Zero(model.num_random_effects());
  switch (spec.kind) {
    case FilterKind::bootstrap:
      if (model.closed_form_loglik(UnitData{"", {0.0}, Eigen::MatrixXd::Zero(1, model.obs_dim())}, kappa, phi,
                                   Eigen::VectorXd::Ones(model.num_obs_params())))
        throw UnsupportedModel("model '" + model.name() + "' has no intrinsic noise; use the closed-form likelihood");
      return;
    case FilterKind::bridge:
      if (!model.supports_linear_gaussian())
        throw UnsupportedModel("bridge filter requires a scalar affine Gaussian transition; model '" +
                               model.name() + "' has none");
      return;
    case FilterKind::kalman:
      if (!model.supports_linear_gaussian())
        throw UnsupportedModel("Kalman filter requires a linear Gaussian model; model '" + model.name() + "' is not");
      return;
    case FilterKind::lna: {
      UnitData probe{"", {0.0}, Eigen::MatrixXd::Zero(1, model.obs_dim())};
      if (!model.lna_system(kappa, phi, probe))
        throw UnsupportedModel("model '" + model.name() + "' has no linear noise approximation");
      return;
    }
    case FilterKind::closed_form: {
      UnitData probe{"", {0.0}, Eigen::MatrixXd::Zero(1, model.obs_dim())};
      if (!model.closed_form_loglik(probe, kappa, phi, Eigen::VectorXd::Ones(model.num_obs_params())))
        throw UnsupportedModel("model '" + model.name() + "' has no closed-form likelihood");
      return;
    }
  }
}

StreamShape stream_shape(const Model& model, const FilterSpec& spec, const UnitData& unit, std::size_t particles) {
  StreamShape s;
  s.n_obs = unit.size();
  s.substeps = spec.kind == FilterKind::bridge ? 1 : spec.substeps;
  s.particles = particles;
  s.state_dim = static_cast<std::size_t>(model.state_dim());
  s.init_random = model.initial_state().is_random();
  return s;
}

std::vector<std::size_t> sort_particles(const Eigen::MatrixXd& x) {
  std::vector<std::size_t> perm(static_cast<std::size_t>(x.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  if (x.rows() == 1) {
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
      return x(0, static_cast<Eigen::Index>(a)) < x(0, static_cast<Eigen::Index>(b));
    });
    return perm;
  }
  const Eigen::VectorXd centre = x.rowwise().mean();
  const Eigen::VectorXd key = (x.colwise() - centre).colwise().norm().transpose();
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return key[static_cast<Eigen::Index>(a)] < key[static_cast<Eigen::Index>(b)];
  });
  return perm;
}

double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double a : v) mx = std::max(mx, a);
  if (mx == kNegInf) return kNegInf;
  if (mx == std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double a : v) s += std::exp(a - mx);
  return mx + std::log(s);
}

FilterResult bootstrap_filter(const UnitData& unit, const Model& model, const Eigen::VectorXd& kappa,
                              const Eigen::VectorXd& phi, const Eigen::VectorXd& xi, const AuxStream& u,
                              bool sort) {
  check_stream(unit, model, u);
  const std::size_t d = u.shape().state_dim;
  const std::size_t n = u.shape().particles;
  const std::size_t substeps = u.shape().substeps;
  const bool exact = model.has_exact_transition();

  ParticleSystem ps(d, n);
  initialise(ps, unit, model, u);
  FilterResult res;
  double ll = 0.0;
  Eigen::VectorXd y = unit.obs.row(0).transpose();
  if (!weight_first(ps, model, y, xi, ll)) return {kNegInf, 0, true};

  for (std::size_t t = 1; t < unit.size(); ++t) {
    ps.resample(u.resample_variate(t), sort);
    ++res.n_resamples;
    const double dt = unit.times[t] - unit.times[t - 1];
    if (exact) {
      model.exact_transition(ps.x, dt, kappa, phi, u.propagation(t, 0));
    } else {
      const double h = dt / static_cast<double>(substeps);
      for (std::size_t l = 0; l < substeps; ++l) {
        const auto g = u.propagation(t, l);
        for (std::size_t k = 0; k < n; ++k)
          em_substep(model, ps.x.col(static_cast<Eigen::Index>(k)), kappa, phi, h, g.subspan(k * d, d));
      }
    }
    y = unit.obs.row(static_cast<Eigen::Index>(t)).transpose();
    model.obs_logdensity_batch(y, ps.x, xi, ps.logw);
    if (!ps.accumulate(ll)) return {kNegInf, res.n_resamples, true};
  }
  res.loglik = ll;
  return res;
}

BridgeProposal bridge_proposal(const LinearGaussianStep& step, double x_prev, double y, double obs_var) {
  const double alpha0 = step.scale * x_prev + step.offset;
  const double beta0 = step.variance;
  const double denom = beta0 + obs_var;
  if (!(denom > 0.0)) return {alpha0, 0.0};
  return {alpha0 + beta0 / denom * (y - alpha0), beta0 * obs_var / denom};
}

FilterResult bridge_filter(const UnitData& unit, const Model& model, const Eigen::VectorXd& kappa,
                           const Eigen::VectorXd& phi, const Eigen::VectorXd& xi, const AuxStream& u,
                           bool sort) {
  if (model.state_dim() != 1 || model.obs_dim() != 1)
    throw UnsupportedModel("bridge filter requires a scalar state");
  check_stream(unit, model, u);
  const std::size_t n = u.shape().particles;
  const double obs_var = xi[0] * xi[0];

  ParticleSystem ps(1, n);
  initialise(ps, unit, model, u);
  FilterResult res;
  double ll = 0.0;
  Eigen::VectorXd y = unit.obs.row(0).transpose();
  if (!weight_first(ps, model, y, xi, ll)) return {kNegInf, 0, true};

  for (std::size_t t = 1; t < unit.size(); ++t) {
    const double dt = unit.times[t] - unit.times[t - 1];
    const auto step = model.linear_gaussian_step(dt, kappa, phi);
    if (!step) throw UnsupportedModel("model '" + model.name() + "' has no affine Gaussian transition");
    ps.resample(u.resample_variate(t), sort);
    ++res.n_resamples;
    const double yt = unit.obs(static_cast<Eigen::Index>(t), 0);
    const auto g = u.propagation(t, 0);
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Index kk = static_cast<Eigen::Index>(k);
      const double xp = ps.x(0, kk);
      const BridgeProposal prop = bridge_proposal(*step, xp, yt, obs_var);
      const double alpha0 = step->scale * xp + step->offset;
      if (prop.var > 0.0) {
        const double xn = prop.mean + std::sqrt(prop.var) * g[k];
        ps.x(0, kk) = xn;
        ps.logw[kk] = normal_logpdf(yt, xn, obs_var) + normal_logpdf(xn, alpha0, step->variance) -
                      normal_logpdf(xn, prop.mean, prop.var);
      } else {
        ps.x(0, kk) = prop.mean;
        ps.logw[kk] = normal_logpdf(yt, alpha0, step->variance + obs_var);
      }
    }
    if (!ps.accumulate(ll)) return {kNegInf, res.n_resamples, true};
  }
  res.loglik = ll;
  return res;
}

namespace {

double kalman_recursion(const UnitData& unit, double m, double p, double obs_var, bool skip_first,
                        const std::function<LinearGaussianStep(double)>& step_for) {
  if (!(obs_var > 0.0) && !(p > 0.0)) throw DomainError("Kalman filter needs a positive predictive variance");
  double ll = 0.0;
  for (std::size_t t = 0; t < unit.size(); ++t) {
    if (t > 0) {
      const LinearGaussianStep s = step_for(unit.times[t] - unit.times[t - 1]);
      if (!(s.variance >= 0.0)) throw DomainError("negative transition variance");
      m = s.scale * m + s.offset;
      p = s.scale * s.scale * p + s.variance;
    }
    const double y = unit.obs(static_cast<Eigen::Index>(t), 0);
    const double f = p + obs_var;
    if (!(f > 0.0)) throw DomainError("Kalman innovation variance is not positive");
    if (t > 0 || !skip_first) ll += normal_logpdf(y, m, f);
    const double k = p / f;
    m += k * (y - m);
    p = (1.0 - k) * p;
  }
  return ll;
}

}  // namespace

double kalman_loglik(const UnitData& unit, const OuParameters& theta, double sigma_eps, double x0) {
  if (!(theta.theta1 > 0.0) || !(theta.theta3 > 0.0)) throw DomainError("OU parameters must be positive");
  if (!(sigma_eps > 0.0)) throw DomainError("observation sd must be positive");
  return kalman_recursion(unit, x0, 0.0, sigma_eps * sigma_eps, false, [&](double dt) { return theta.step(dt); });
}

double kalman_loglik(const UnitData& unit, const Model& model, const Eigen::VectorXd& kappa,
                     const Eigen::VectorXd& phi, const Eigen::VectorXd& xi) {
  if (!model.supports_linear_gaussian()) throw UnsupportedModel("model is not linear Gaussian");
  if (!(xi[0] > 0.0)) throw DomainError("observation sd must be positive");
  const InitialState init = model.initial_state();
  const double m0 = init.location(unit)[0];
  const double p0 = init.is_random() ? init.covariance()(0, 0) : 0.0;
  return kalman_recursion(unit, m0, p0, xi[0] * xi[0], init.conditions_on_first(), [&](double dt) {
    return *model.linear_gaussian_step(dt, kappa, phi);
  });
}

void lna_ode_step(Eigen::VectorXd& m, Eigen::MatrixXd& h, const LnaSystem& sys, double t0, double t1,
                  std::size_t substeps) {
  if (substeps < 1) throw InvalidConfiguration("LNA integration needs at least one substep");
  const double step = (t1 - t0) / static_cast<double>(substeps);
  auto rhs = [&](const Eigen::VectorXd& mm, const Eigen::MatrixXd& hh, Eigen::VectorXd& dm, Eigen::MatrixXd& dh) {
    dm = sys.drift(mm);
    const Eigen::MatrixXd j = sys.jacobian(mm);
    dh = hh * j.transpose() + sys.diffusion(mm) + j * hh;
  };
  Eigen::VectorXd k1m, k2m, k3m, k4m;
  Eigen::MatrixXd k1h, k2h, k3h, k4h;
  for (std::size_t s = 0; s < substeps; ++s) {
    rhs(m, h, k1m, k1h);
    rhs(m + 0.5 * step * k1m, h + 0.5 * step * k1h, k2m, k2h);
    rhs(m + 0.5 * step * k2m, h + 0.5 * step * k2h, k3m, k3h);
    rhs(m + step * k3m, h + step * k3h, k4m, k4h);
    m += step / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
    h += step / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h);
    h = 0.5 * (h + h.transpose()).eval();
    if (!m.allFinite() || !h.allFinite()) throw NumericalModelError("LNA integration produced non-finite values");
  }
}

double lna_forward_filter(const UnitData& unit, const LnaSystem& sys, double sigma_e, std::size_t substeps) {
  if (!(sigma_e >= 0.0)) throw DomainError("observation sd must be nonnegative");
  const double obs_var = sigma_e * sigma_e;
  const Eigen::VectorXd& p = sys.observation;
  Eigen::VectorXd a = sys.initial_mean;
  Eigen::MatrixXd c = sys.initial_cov;
  double ll = 0.0;
  for (std::size_t t = 0; t < unit.size(); ++t) {
    Eigen::VectorXd m = a;
    Eigen::MatrixXd h = c;
    if (t > 0) lna_ode_step(m, h, sys, unit.times[t - 1], unit.times[t], substeps);
    const double y = unit.obs(static_cast<Eigen::Index>(t), 0);
    const Eigen::VectorXd hp = h * p;
    const double f = p.dot(hp) + obs_var;
    if (!(f > 0.0) || !std::isfinite(f)) throw NumericalModelError("LNA innovation variance is not positive");
    const double mean = p.dot(m);
    if (t > 0 || !sys.condition_on_first) ll += normal_logpdf(y, mean, f);
    a = m + hp * ((y - mean) / f);
    c = h - hp * hp.transpose() / f;
    c = 0.5 * (c + c.transpose()).eval();
  }
  return ll;
}

FilterResult evaluate_unit(const Model& model, const FilterSpec& spec, const UnitData& unit,
                           const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi, const Eigen::VectorXd& xi,
                           const AuxStream* u) {
  auto wrap = [](double ll) {
    FilterResult r;
    r.loglik = std::isnan(ll) ? kNegInf : ll;
    r.degenerate = r.loglik == kNegInf;
    return r;
  };
  switch (spec.kind) {
    case FilterKind::bootstrap:
      if (!u) throw InvalidConfiguration("bootstrap filter needs an auxiliary stream");
      return bootstrap_filter(unit, model, kappa, phi, xi, *u, spec.sort);
    case FilterKind::bridge:
      if (!u) throw InvalidConfiguration("bridge filter needs an auxiliary stream");
      return bridge_filter(unit, model, kappa, phi, xi, *u, spec.sort);
    case FilterKind::kalman:
      return wrap(kalman_loglik(unit, model, kappa, phi, xi));
    case FilterKind::lna: {
      const auto sys = model.lna_system(kappa, phi, unit);
      if (!sys) throw UnsupportedModel("model has no linear noise approximation");
      try {
        return wrap(lna_forward_filter(unit, *sys, xi[0], spec.lna_substeps));
      } catch (const NumericalModelError&) {
        return wrap(kNegInf);
      }
    }
    case FilterKind::closed_form: {
      const auto ll = model.closed_form_loglik(unit, kappa, phi, xi);
      if (!ll) throw UnsupportedModel("model has no closed-form likelihood");
      return wrap(*ll);
    }
  }
  return wrap(kNegInf);
}

}  // namespace sdemem
