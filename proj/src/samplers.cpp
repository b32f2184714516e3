#include "sdemem/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "sdemem/error.hpp"

namespace sdemem {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double draw_gamma(double shape, double rate, Rng& rng) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

}  // namespace

double mh_log_accept(double log_num, double log_den) {
  if (std::isnan(log_den) || log_den == kNegInf)
    throw InvalidState("current state has zero estimated density");
  if (std::isnan(log_num) || log_num == kNegInf) return kNegInf;
  return std::min(0.0, log_num - log_den);
}

// ----------------------------------------------------------------------------
// Adaptive proposals

ProposalAdapter::ProposalAdapter(const Eigen::VectorXd& start, const AdaptationSettings& settings)
    : settings_(settings), mean_(start) {
  const Eigen::Index d = start.size();
  initial_cov_ = Eigen::MatrixXd::Identity(d, d) * settings.initial_sd * settings.initial_sd;
  cov_ = initial_cov_;
  log_scale_ = d > 0 ? std::log(2.38 / std::sqrt(static_cast<double>(d))) : 0.0;
  refresh_factor();
}

Eigen::MatrixXd ProposalAdapter::proposal_covariance() const {
  const Eigen::Index d = mean_.size();
  const Eigen::MatrixXd& base = updates_ >= settings_.cov_start ? cov_ : initial_cov_;
  return std::exp(2.0 * log_scale_) * (base + 1e-8 * Eigen::MatrixXd::Identity(d, d));
}

void ProposalAdapter::refresh_factor() {
  const Eigen::MatrixXd c = proposal_covariance();
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) {
    factor_ = llt.matrixL();
  } else {
    factor_ = c.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
}

Eigen::VectorXd ProposalAdapter::propose(const Eigen::VectorXd& current, Rng& rng) const {
  Eigen::VectorXd z(current.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = standard_normal(rng);
  return current + factor_ * z;
}

void ProposalAdapter::update(double alpha, const Eigen::VectorXd& point, std::size_t iteration) {
  if (frozen_ || !settings_.enabled) return;
  if (iteration < 1) throw InvalidConfiguration("adaptation iterations start at 1");
  const double gamma = std::pow(static_cast<double>(iteration), -settings_.decay);
  const Eigen::VectorXd diff = point - mean_;
  mean_ += gamma * diff;
  cov_ += gamma * (diff * diff.transpose() - cov_);
  cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
  log_scale_ = std::clamp(log_scale_ + gamma * (alpha - settings_.target), -30.0, 30.0);
  ++updates_;
  refresh_factor();
}

ProposalAdapter adapt_proposal(ProposalAdapter adapter, bool accepted, const Eigen::VectorXd& point,
                               std::size_t iteration) {
  adapter.update(accepted ? 1.0 : 0.0, point, iteration);
  return adapter;
}

// ----------------------------------------------------------------------------
// Hyperparameters

Hyperparameters draw_eta_conjugate(const Eigen::MatrixXd& phi, const NormalGammaPrior& prior, Rng& rng) {
  prior.validate();
  const std::size_t q = prior.components.size();
  if (phi.rows() > 0 && static_cast<std::size_t>(phi.cols()) != q)
    throw InvalidConfiguration("prior has a different number of components than phi");
  const double m = static_cast<double>(phi.rows());
  Hyperparameters eta;
  eta.mu.resize(static_cast<Eigen::Index>(q));
  eta.tau.resize(static_cast<Eigen::Index>(q));
  for (std::size_t j = 0; j < q; ++j) {
    const auto& c = prior.components[j];
    double mean = 0.0, ss = 0.0;
    if (m > 0) {
      const auto col = phi.col(static_cast<Eigen::Index>(j));
      mean = col.mean();
      ss = (col.array() - mean).square().sum();
    }
    const double shape = c.alpha + 0.5 * m;
    const double rate = c.beta + 0.5 * (ss + m * c.m0 * (mean - c.mu0) * (mean - c.mu0) / (m + c.m0));
    const double tau = draw_gamma(shape, rate, rng);
    const double post_mean = (c.m0 * c.mu0 + m * mean) / (c.m0 + m);
    const double mu = post_mean + standard_normal(rng) / std::sqrt((c.m0 + m) * tau);
    eta.mu[static_cast<Eigen::Index>(j)] = mu;
    eta.tau[static_cast<Eigen::Index>(j)] = tau;
  }
  return eta;
}

Hyperparameters draw_eta(const Eigen::MatrixXd& phi, const NormalGammaPrior& prior, const Hyperparameters& current,
                         Rng& rng) {
  if (prior.kind == NormalGammaPrior::Kind::normal_gamma) return draw_eta_conjugate(phi, prior, rng);
  prior.validate();
  const std::size_t q = prior.components.size();
  const double m = static_cast<double>(phi.rows());
  Hyperparameters eta = current;
  for (std::size_t j = 0; j < q; ++j) {
    const auto& c = prior.components[j];
    const Eigen::Index jj = static_cast<Eigen::Index>(j);
    double ss = 0.0, sum = 0.0;
    if (m > 0) {
      ss = (phi.col(jj).array() - eta.mu[jj]).square().sum();
      sum = phi.col(jj).sum();
    }
    const double tau = draw_gamma(c.alpha + 0.5 * m, c.beta + 0.5 * ss, rng);
    const double prec = c.m0 + m * tau;
    const double mu = (c.m0 * c.mu0 + tau * sum) / prec + standard_normal(rng) / std::sqrt(prec);
    eta.tau[jj] = tau;
    eta.mu[jj] = mu;
  }
  return eta;
}

// ----------------------------------------------------------------------------
// Configuration helpers

std::size_t GibbsConfig::particles_for(std::size_t unit) const {
  if (particles.size() == 1) return particles.front();
  return particles.at(unit);
}

void GibbsConfig::validate(std::size_t units) const {
  if (!(n_iters > burn_in)) throw InvalidConfiguration("number of iterations must exceed the burn-in");
  if (particles.empty() || (particles.size() != 1 && particles.size() != units))
    throw InvalidConfiguration("particle counts must be a single value or one per unit");
  for (auto n : particles)
    if (n < 1) throw InvalidConfiguration("particle counts must be >= 1");
  Correlation check(rho);
  (void)check;
}

std::vector<std::string> chain_columns(const Model& model, std::size_t units) {
  std::vector<std::string> cols;
  const int q = model.num_random_effects();
  for (std::size_t i = 0; i < units; ++i)
    for (int j = 0; j < q; ++j) cols.push_back("phi_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  for (int k = 0; k < model.num_common(); ++k) cols.push_back("kappa_" + std::to_string(k + 1));
  for (int k = 0; k < model.num_obs_params(); ++k) cols.push_back("xi_" + std::to_string(k + 1));
  for (int j = 0; j < q; ++j) cols.push_back("mu_" + std::to_string(j + 1));
  for (int j = 0; j < q; ++j) cols.push_back("tau_" + std::to_string(j + 1));
  return cols;
}

Eigen::VectorXd flatten_state(const ParameterState& s) {
  const Eigen::Index n = s.phi.size() + s.kappa.size() + s.xi.size() + s.eta.mu.size() + s.eta.tau.size();
  Eigen::VectorXd row(n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < s.phi.rows(); ++i)
    for (Eigen::Index j = 0; j < s.phi.cols(); ++j) row[k++] = s.phi(i, j);
  for (Eigen::Index j = 0; j < s.kappa.size(); ++j) row[k++] = s.kappa[j];
  for (Eigen::Index j = 0; j < s.xi.size(); ++j) row[k++] = s.xi[j];
  for (Eigen::Index j = 0; j < s.eta.mu.size(); ++j) row[k++] = s.eta.mu[j];
  for (Eigen::Index j = 0; j < s.eta.tau.size(); ++j) row[k++] = s.eta.tau[j];
  return row;
}

// ----------------------------------------------------------------------------
// Gibbs sampler

GibbsSampler::GibbsSampler(const Dataset& data, ModelPtr model, Priors priors, GibbsConfig config,
                           ParameterState initial)
    : data_(data), model_(std::move(model)), priors_(std::move(priors)), config_(std::move(config)),
      state_(std::move(initial)) {
  const std::size_t m = data_.num_units();
  config_.validate(m);
  validate_filter(*model_, config_.filter);
  priors_.eta.validate();
  const int q = model_->num_random_effects();
  if (priors_.eta.components.size() != static_cast<std::size_t>(q))
    throw InvalidConfiguration("hyperprior needs one component per random effect");
  if (priors_.kappa.size() != static_cast<std::size_t>(model_->num_common()) ||
      priors_.xi.size() != static_cast<std::size_t>(model_->num_obs_params()))
    throw InvalidConfiguration("priors for common or observation parameters have the wrong length");
  for (const auto& p : priors_.kappa) p.validate();
  for (const auto& p : priors_.xi) p.validate();
  if (static_cast<std::size_t>(state_.phi.rows()) != m || state_.phi.cols() != q)
    throw InvalidConfiguration("initial random effects have the wrong shape");
  state_.validate();

  stochastic_ = is_stochastic(config_.filter.kind);
  streams_.resize(m);
  loglik_.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::VectorXd phi_i = state_.phi.row(static_cast<Eigen::Index>(i)).transpose();
    if (stochastic_) {
      Rng rng = substream(config_.seed, i, 0, StreamPurpose::initial);
      streams_[i] = init_stream(i, stream_shape(*model_, config_.filter, data_.units[i], config_.particles_for(i)), rng);
    }
    const FilterResult r = evaluate(i, state_.kappa, phi_i, state_.xi, stochastic_ ? &streams_[i] : nullptr);
    if (r.degenerate || !std::isfinite(r.loglik))
      throw StartupDegeneracy("initial log-likelihood is -inf for unit '" + data_.units[i].id + "'", i);
    loglik_[i] = r.loglik;
    unit_adapters_.emplace_back(phi_i, config_.adaptation);
  }
  for (const auto& block : common_blocks()) {
    const Eigen::VectorXd theta = common_vector();
    Eigen::VectorXd start(static_cast<Eigen::Index>(block.size()));
    for (std::size_t k = 0; k < block.size(); ++k) start[static_cast<Eigen::Index>(k)] = theta[static_cast<Eigen::Index>(block[k])];
    common_adapters_.emplace_back(start, config_.adaptation);
  }
}

double GibbsSampler::total_loglik() const {
  double s = 0.0;
  for (double v : loglik_) s += v;
  return s;
}

FilterResult GibbsSampler::evaluate(std::size_t i, const Eigen::VectorXd& kappa, const Eigen::VectorXd& phi,
                                    const Eigen::VectorXd& xi, const AuxStream* u) const {
  try {
    return evaluate_unit(*model_, config_.filter, data_.units[i], kappa, phi, xi, u);
  } catch (const NumericalModelError&) {
    return {kNegInf, 0, true};
  } catch (const DomainError&) {
    return {kNegInf, 0, true};
  }
}

AuxStream GibbsSampler::move_stream(const AuxStream& u, Rng& rng) const {
  if (config_.independent_streams) return init_stream(u.unit_id(), u.shape(), rng);
  return crank_nicolson(u, Correlation(config_.rho), rng);
}

std::vector<std::vector<std::size_t>> GibbsSampler::common_blocks() const {
  const std::size_t n = static_cast<std::size_t>(model_->num_common() + model_->num_obs_params());
  std::vector<std::vector<std::size_t>> blocks;
  if (n == 0) return blocks;
  if (config_.joint_common) {
    blocks.emplace_back();
    for (std::size_t k = 0; k < n; ++k) blocks.back().push_back(k);
  } else {
    for (std::size_t k = 0; k < n; ++k) blocks.push_back({k});
  }
  return blocks;
}

Eigen::VectorXd GibbsSampler::common_vector() const {
  const Eigen::Index p = state_.kappa.size();
  Eigen::VectorXd theta(p + state_.xi.size());
  for (Eigen::Index k = 0; k < p; ++k) theta[k] = priors_.kappa[static_cast<std::size_t>(k)].to_unconstrained(state_.kappa[k]);
  for (Eigen::Index k = 0; k < state_.xi.size(); ++k)
    theta[p + k] = priors_.xi[static_cast<std::size_t>(k)].to_unconstrained(state_.xi[k]);
  return theta;
}

void GibbsSampler::split_common(const Eigen::VectorXd& theta, Eigen::VectorXd& kappa, Eigen::VectorXd& xi) const {
  const Eigen::Index p = model_->num_common();
  kappa.resize(p);
  xi.resize(model_->num_obs_params());
  for (Eigen::Index k = 0; k < p; ++k) kappa[k] = priors_.kappa[static_cast<std::size_t>(k)].to_natural(theta[k]);
  for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = priors_.xi[static_cast<std::size_t>(k)].to_natural(theta[p + k]);
}

double GibbsSampler::log_common_prior(const Eigen::VectorXd& theta) const {
  const Eigen::Index p = model_->num_common();
  double s = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) s += priors_.kappa[static_cast<std::size_t>(k)].log_density_unconstrained(theta[k]);
  for (Eigen::Index k = 0; k < model_->num_obs_params(); ++k)
    s += priors_.xi[static_cast<std::size_t>(k)].log_density_unconstrained(theta[p + k]);
  return s;
}

bool GibbsSampler::update_unit_block(std::size_t i, std::size_t iteration) {
  const Eigen::Index ii = static_cast<Eigen::Index>(i);
  const Eigen::VectorXd phi = state_.phi.row(ii).transpose();
  Rng prop_rng = substream(config_.seed, i, iteration, StreamPurpose::unit_proposal);
  const Eigen::VectorXd phi_star = unit_adapters_[i].propose(phi, prop_rng);

  AuxStream u_star;
  if (stochastic_) {
    Rng aux_rng = substream(config_.seed, i, iteration, StreamPurpose::aux);
    u_star = move_stream(streams_[i], aux_rng);
  }
  const FilterResult r = evaluate(i, state_.kappa, phi_star, state_.xi, stochastic_ ? &u_star : nullptr);
  const double log_num = r.loglik + model_->random_effects_logdensity(phi_star, state_.eta);
  const double log_den = loglik_[i] + model_->random_effects_logdensity(phi, state_.eta);
  const double log_alpha = mh_log_accept(log_num, log_den);
  if (r.degenerate) ++degenerate_;

  Rng acc_rng = substream(config_.seed, i, iteration, StreamPurpose::unit_accept);
  const bool accept = std::log(standard_uniform(acc_rng)) < log_alpha;
  if (accept) {
    state_.phi.row(ii) = phi_star.transpose();
    loglik_[i] = r.loglik;
    if (stochastic_) streams_[i] = std::move(u_star);
  }
  const bool adapting = !(config_.adaptation.freeze_after_burn_in && iteration > config_.burn_in);
  if (adapting) unit_adapters_[i].update(std::exp(log_alpha), state_.phi.row(ii).transpose(), iteration);
  return accept;
}

double GibbsSampler::common_log_ratio(const Eigen::VectorXd& theta, bool refresh_streams, Rng& aux_rng) const {
  Eigen::VectorXd kappa, xi;
  split_common(theta, kappa, xi);
  double num = log_common_prior(theta);
  for (std::size_t i = 0; i < data_.num_units() && num > kNegInf; ++i) {
    const Eigen::VectorXd phi_i = state_.phi.row(static_cast<Eigen::Index>(i)).transpose();
    if (stochastic_ && refresh_streams) {
      const AuxStream u = move_stream(streams_[i], aux_rng);
      num += evaluate(i, kappa, phi_i, xi, &u).loglik;
    } else {
      num += evaluate(i, kappa, phi_i, xi, stochastic_ ? &streams_[i] : nullptr).loglik;
    }
  }
  return num - (total_loglik() + log_common_prior(common_vector()));
}

std::vector<unsigned char> GibbsSampler::update_common_block(std::size_t iteration) {
  const auto blocks = common_blocks();
  std::vector<unsigned char> flags;
  const bool naive = config_.scheme == GibbsConfig::Scheme::naive;
  const std::size_t m = data_.num_units();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& block = blocks[b];
    const Eigen::VectorXd theta = common_vector();
    Eigen::VectorXd sub(static_cast<Eigen::Index>(block.size()));
    for (std::size_t k = 0; k < block.size(); ++k) sub[static_cast<Eigen::Index>(k)] = theta[static_cast<Eigen::Index>(block[k])];
    Rng prop_rng = substream(config_.seed, b, iteration, StreamPurpose::common_proposal);
    const Eigen::VectorXd sub_star = common_adapters_[b].propose(sub, prop_rng);
    Eigen::VectorXd theta_star = theta;
    for (std::size_t k = 0; k < block.size(); ++k) theta_star[static_cast<Eigen::Index>(block[k])] = sub_star[static_cast<Eigen::Index>(k)];

    Eigen::VectorXd kappa, xi;
    split_common(theta_star, kappa, xi);
    const double prior_star = log_common_prior(theta_star);
    std::vector<double> ll_star(m, kNegInf);
    std::vector<AuxStream> u_star;
    double log_num = prior_star;
    if (prior_star > kNegInf) {
      if (naive && stochastic_) u_star.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        const Eigen::VectorXd phi_i = state_.phi.row(static_cast<Eigen::Index>(i)).transpose();
        const AuxStream* u = nullptr;
        if (stochastic_) {
          if (naive) {
            Rng aux_rng = substream(config_.seed, i, iteration, StreamPurpose::common_aux);
            u_star[i] = move_stream(streams_[i], aux_rng);
            u = &u_star[i];
          } else {
            u = &streams_[i];
          }
        }
        const FilterResult r = evaluate(i, kappa, phi_i, xi, u);
        if (r.degenerate) ++degenerate_;
        ll_star[i] = r.loglik;
        log_num += r.loglik;
        if (log_num == kNegInf) break;
      }
    }
    const double log_den = total_loglik() + log_common_prior(theta);
    const double log_alpha = mh_log_accept(log_num, log_den);
    Rng acc_rng = substream(config_.seed, b, iteration, StreamPurpose::common_accept);
    const bool accept = std::log(standard_uniform(acc_rng)) < log_alpha;
    if (accept) {
      state_.kappa = kappa;
      state_.xi = xi;
      loglik_ = ll_star;
      if (naive && stochastic_) streams_ = std::move(u_star);
    }
    const bool adapting = !(config_.adaptation.freeze_after_burn_in && iteration > config_.burn_in);
    if (adapting) {
      const Eigen::VectorXd now = common_vector();
      Eigen::VectorXd cur(static_cast<Eigen::Index>(block.size()));
      for (std::size_t k = 0; k < block.size(); ++k) cur[static_cast<Eigen::Index>(k)] = now[static_cast<Eigen::Index>(block[k])];
      common_adapters_[b].update(std::exp(log_alpha), cur, iteration);
    }
    flags.push_back(accept ? 1 : 0);
  }
  return flags;
}

void GibbsSampler::update_hyperparameters(std::size_t iteration) {
  if (!config_.update_eta) return;
  Rng rng = substream(config_.seed, 0, iteration, StreamPurpose::hyper);
  state_.eta = draw_eta(state_.phi, priors_.eta, state_.eta, rng);
}

IterationTelemetry GibbsSampler::iterate(std::size_t iteration) {
  IterationTelemetry tel;
  for (std::size_t i = 0; i < data_.num_units(); ++i) tel.unit_accepted.push_back(update_unit_block(i, iteration) ? 1 : 0);
  tel.common_accepted = update_common_block(iteration);
  update_hyperparameters(iteration);
  tel.total_loglik = total_loglik();
  return tel;
}

ChainOutput GibbsSampler::run(const ChainObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  ChainOutput out;
  out.columns = chain_columns(*model_, data_.num_units());
  out.burn_in = config_.burn_in;
  out.draws.resize(static_cast<Eigen::Index>(config_.n_iters), static_cast<Eigen::Index>(out.columns.size()));
  out.loglik.resize(static_cast<Eigen::Index>(config_.n_iters));
  std::vector<double> unit_acc(data_.num_units(), 0.0);
  std::vector<double> common_acc(common_blocks().size(), 0.0);
  for (std::size_t it = 1; it <= config_.n_iters; ++it) {
    const IterationTelemetry tel = iterate(it);
    const Eigen::VectorXd row = flatten_state(state_);
    out.draws.row(static_cast<Eigen::Index>(it - 1)) = row.transpose();
    out.loglik[static_cast<Eigen::Index>(it - 1)] = tel.total_loglik;
    for (std::size_t i = 0; i < unit_acc.size(); ++i) unit_acc[i] += tel.unit_accepted[i];
    for (std::size_t b = 0; b < common_acc.size(); ++b) common_acc[b] += tel.common_accepted[b];
    if (observer) observer(it, row, tel);
  }
  const double n = static_cast<double>(config_.n_iters);
  for (auto& a : unit_acc) a /= n;
  for (auto& a : common_acc) a /= n;
  out.unit_acceptance = unit_acc;
  out.common_acceptance = common_acc;
  out.degenerate_proposals = degenerate_;
  out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

ChainOutput run_gibbs(const Dataset& data, ModelPtr model, const Priors& priors, const GibbsConfig& config,
                      const ParameterState& initial, const ChainObserver& observer) {
  GibbsSampler sampler(data, std::move(model), priors, config, initial);
  return sampler.run(observer);
}

}  // namespace sdemem
