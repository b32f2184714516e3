#pragma once

// Independent reference computations used by the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Standard normal CDF from the Maclaurin series of erf in long double
/// (accurate to ~1e-15 for |z| < 6), with the tails by asymptotic expansion.
inline double normal_cdf(double z) {
  const long double x = static_cast<long double>(z) / std::sqrt(2.0L);
  if (std::fabs(x) < 4.5L) {
    long double term = x, sum = x;
    for (int n = 1; n < 400; ++n) {
      term *= -x * x / n;
      const long double add = term / (2 * n + 1);
      sum += add;
      if (std::fabs(add) < 1e-30L) break;
    }
    const long double erf = 2.0L / std::sqrt(3.14159265358979323846264338327950288L) * sum;
    return static_cast<double>(0.5L * (1.0L + erf));
  }
  const long double ax = std::fabs(x);
  long double series = 1.0L, term = 1.0L;
  for (int n = 1; n < 30; ++n) {
    term *= -(2.0L * n - 1.0L) / (2.0L * ax * ax);
    series += term;
  }
  const long double erfc = std::exp(-ax * ax) / (ax * std::sqrt(3.14159265358979323846264338327950288L)) * series;
  return static_cast<double>(x > 0 ? 1.0L - 0.5L * erfc : 0.5L * erfc);
}

/// One-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 1e-3) return 1.0;
  double p = 0.0;
  for (int k = 1; k < 200; ++k) {
    const double t = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    p += t;
    if (std::fabs(t) < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

/// Minimum-cost perfect matching (Hungarian algorithm, O(n^3)); returns the total cost.
inline double assignment_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
  return total;
}

/// log N(y; mean, cov) for a dense covariance.
inline double mvn_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd r = y - mean;
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * M_PI) + logdet + z.squaredNorm());
}

/// Joint Gaussian log-likelihood of an OU path observed with noise, started
/// from a point mass x0 at times[0], built from the OU autocovariance.
inline double ou_dense_loglik(const std::vector<double>& times, const Eigen::VectorXd& y, double th1, double th2,
                              double th3, double sigma, double x0) {
  const std::size_t n = times.size();
  Eigen::VectorXd mean(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd cov(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double t1 = times[0];
  for (std::size_t a = 0; a < n; ++a) {
    mean[static_cast<Eigen::Index>(a)] = th2 + (x0 - th2) * std::exp(-th1 * (times[a] - t1));
    for (std::size_t b = 0; b < n; ++b) {
      const double s = std::min(times[a], times[b]);
      const double t = std::max(times[a], times[b]);
      const double var_s = th3 * th3 / (2.0 * th1) * (1.0 - std::exp(-2.0 * th1 * (s - t1)));
      cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = std::exp(-th1 * (t - s)) * var_s;
    }
    cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) += sigma * sigma;
  }
  return mvn_logpdf(y, mean, cov);
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  while (norm / std::pow(2.0, s) > 0.1) ++s;
  const Eigen::MatrixXd b = a / std::pow(2.0, s);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * b / k;
    sum += term;
  }
  for (int k = 0; k < s; ++k) sum = sum * sum;
  return sum;
}

/// Posterior of (mu, tau) for one normal-gamma component on a grid, integrated
/// numerically; returns marginal CDFs evaluated through interpolation.
struct GridPosterior {
  std::vector<double> mu_grid, tau_grid, mu_cdf, tau_cdf;

  static double interp(const std::vector<double>& x, const std::vector<double>& f, double v) {
    if (v <= x.front()) return 0.0;
    if (v >= x.back()) return 1.0;
    const auto it = std::upper_bound(x.begin(), x.end(), v);
    const std::size_t k = static_cast<std::size_t>(it - x.begin());
    const double w = (v - x[k - 1]) / (x[k] - x[k - 1]);
    return f[k - 1] + w * (f[k] - f[k - 1]);
  }
  double mu(double v) const { return interp(mu_grid, mu_cdf, v); }
  double tau(double v) const { return interp(tau_grid, tau_cdf, v); }
};

/// Unnormalised log posterior supplied as f(mu, tau); grid bounds chosen by the caller.
inline GridPosterior grid_posterior(const std::function<double(double, double)>& logpost, double mu_lo, double mu_hi,
                                    double tau_lo, double tau_hi, std::size_t nmu = 1200, std::size_t ntau = 1200) {
  GridPosterior g;
  const double dmu = (mu_hi - mu_lo) / static_cast<double>(nmu);
  const double dtau = (tau_hi - tau_lo) / static_cast<double>(ntau);
  std::vector<double> lp(nmu * ntau);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < nmu; ++a)
    for (std::size_t b = 0; b < ntau; ++b) {
      const double m = mu_lo + (a + 0.5) * dmu;
      const double t = tau_lo + (b + 0.5) * dtau;
      lp[a * ntau + b] = logpost(m, t);
      mx = std::max(mx, lp[a * ntau + b]);
    }
  std::vector<double> pm(nmu, 0.0), pt(ntau, 0.0);
  double total = 0.0;
  for (std::size_t a = 0; a < nmu; ++a)
    for (std::size_t b = 0; b < ntau; ++b) {
      const double w = std::exp(lp[a * ntau + b] - mx);
      pm[a] += w;
      pt[b] += w;
      total += w;
    }
  g.mu_grid.push_back(mu_lo);
  g.mu_cdf.push_back(0.0);
  double acc = 0.0;
  for (std::size_t a = 0; a < nmu; ++a) {
    acc += pm[a] / total;
    g.mu_grid.push_back(mu_lo + (a + 1) * dmu);
    g.mu_cdf.push_back(acc);
  }
  g.tau_grid.push_back(tau_lo);
  g.tau_cdf.push_back(0.0);
  acc = 0.0;
  for (std::size_t b = 0; b < ntau; ++b) {
    acc += pt[b] / total;
    g.tau_grid.push_back(tau_lo + (b + 1) * dtau);
    g.tau_cdf.push_back(acc);
  }
  return g;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace oracle
