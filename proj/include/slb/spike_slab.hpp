#pragma once

// Spike-and-slab prior with Laplace slab and its mean-field variational
// posterior, fitted by coordinate-ascent variational inference.
//
// Model per coordinate: beta_j ~ (1-w) delta_0 + w Lap(lambda/sigma), with
// the inclusion probability w implied by a Beta(1, d^u) hyperprior, and a
// Gaussian N(0, sigma^2) likelihood with known sigma. The variational family
// is the product of [gamma_j N(mu_j, s_j^2) + (1-gamma_j) delta_0].

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "slb/errors.hpp"
#include "slb/lasso.hpp"
#include "slb/rng.hpp"

namespace slb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SpikeSlabPrior {
  double slab_scale = 1.0;       // lambda; the Laplace rate is lambda/sigma
  double noise_sigma = 1.0;      // known noise level
  double inclusion_exponent = 1.0;  // u in Beta(1, d^u)
  int dim = 1;

  double beta_a0() const { return 1.0; }
  double beta_b0() const { return std::pow(static_cast<double>(dim), inclusion_exponent); }
  // mean of Beta(1, d^u): the plug-in Bernoulli inclusion probability
  double inclusion_probability() const { return 1.0 / (1.0 + beta_b0()); }
  // log(w/(1-w)) = -u log d, exactly
  double inclusion_logit() const {
    return -inclusion_exponent * std::log(static_cast<double>(dim));
  }
  double laplace_rate() const { return slab_scale / noise_sigma; }

  void validate() const {
    if (slab_scale <= 0.0) throw ConfigError("SpikeSlabPrior: slab_scale must be > 0");
    if (noise_sigma <= 0.0) throw ConfigError("SpikeSlabPrior: noise_sigma must be > 0");
    if (inclusion_exponent <= 0.0) throw ConfigError("SpikeSlabPrior: exponent u must be > 0");
    if (dim < 1) throw ConfigError("SpikeSlabPrior: dim must be >= 1");
  }
};

struct SpikeSlabPosterior {
  VectorXd mu;
  VectorXd sdev;
  VectorXd gamma;
  std::vector<double> elbo_trace;
  bool converged = false;
  int sweeps = 0;
};

// E|Z| for Z ~ N(mu, s^2), in closed form.
inline double gaussian_abs_mean(double mu, double s) {
  if (s <= 0.0) return std::abs(mu);
  const double z = mu / s;
  return s * std::sqrt(2.0 / M_PI) * std::exp(-0.5 * z * z) + mu * std::erf(z / std::sqrt(2.0));
}

// Log pmf of the model size |S| under independent Bernoulli(r) inclusions
// with r ~ Beta(a0, b0) integrated out (beta-binomial over d coordinates).
inline double model_size_log_pmf(const SpikeSlabPrior& prior, int s) {
  const double d = static_cast<double>(prior.dim);
  const double a0 = prior.beta_a0(), b0 = prior.beta_b0();
  const double sd = static_cast<double>(s);
  return std::lgamma(d + 1.0) - std::lgamma(sd + 1.0) - std::lgamma(d - sd + 1.0) +
         std::lgamma(a0 + sd) + std::lgamma(b0 + d - sd) - std::lgamma(a0 + b0 + d) +
         std::lgamma(a0 + b0) - std::lgamma(a0) - std::lgamma(b0);
}

namespace detail {

inline double safe_xlogy(double x, double y) { return x > 0.0 ? x * std::log(y / x) : 0.0; }

// Per-coordinate slab objective
//   g(mu, s) = a mu - (c/2)(mu^2 + s^2) - L E|N(mu, s^2)| + log s,
// jointly strictly concave on R x R+ (E|.| is jointly convex). The two
// partial solves below each have a unique root and are safeguarded by
// bisection around a Newton step.
struct SlabObjective {
  double a, c, L;

  double value(double mu, double s) const {
    return a * mu - 0.5 * c * (mu * mu + s * s) - L * gaussian_abs_mean(mu, s) + std::log(s);
  }

  // dg/dmu = a - c mu - L erf(mu / (s sqrt2)), decreasing in mu
  double solve_mu(double s, double mu_init) const {
    if (c <= 0.0) return 0.0;  // only reachable with a == 0
    double lo = (a - L) / c, hi = (a + L) / c;
    if (lo > hi) std::swap(lo, hi);
    double mu = std::clamp(mu_init, lo, hi);
    for (int it = 0; it < 200; ++it) {
      const double g = a - c * mu - L * std::erf(mu / (s * std::sqrt(2.0)));
      if (std::abs(g) < 1e-13 * (1.0 + std::abs(a))) break;
      if (g > 0.0) lo = mu; else hi = mu;
      const double gp = -c - L * std::sqrt(2.0 / M_PI) / s * std::exp(-0.5 * mu * mu / (s * s));
      double next = mu - g / gp;
      mu = (next > lo && next < hi) ? next : 0.5 * (lo + hi);
      if (hi - lo < 1e-15 * (1.0 + std::abs(mu))) break;
    }
    return mu;
  }

  // s * dg/ds = 1 - c s^2 - L sqrt(2/pi) s exp(-mu^2 / 2 s^2), decreasing in s
  double solve_sdev(double mu, double s_init) const {
    auto phi = [&](double s) {
      return 1.0 - c * s * s -
             L * std::sqrt(2.0 / M_PI) * s * std::exp(-0.5 * mu * mu / (s * s));
    };
    double hi = (c > 0.0) ? 1.0 / std::sqrt(c) : std::sqrt(M_PI / 2.0) / L + std::abs(mu) + 1.0;
    while (phi(hi) > 0.0) hi *= 2.0;
    double lo = std::min(1e-12, hi * 0.5);
    double s = std::clamp(s_init, lo, hi);
    for (int it = 0; it < 200; ++it) {
      const double g = phi(s);
      if (std::abs(g) < 1e-13) break;
      if (g > 0.0) lo = s; else hi = s;
      const double e = std::exp(-0.5 * mu * mu / (s * s));
      const double gp = -2.0 * c * s -
                        L * std::sqrt(2.0 / M_PI) * e * (1.0 + mu * mu / (s * s));
      double next = s - g / gp;
      s = (next > lo && next < hi) ? next : 0.5 * (lo + hi);
      if (hi - lo < 1e-15 * (1.0 + s)) break;
    }
    return s;
  }

  // alternating maximization to the inner tolerance
  void maximize(double& mu, double& s, double tol = 1e-9, int max_iter = 100) const {
    if (s <= 0.0) s = 1.0;
    for (int it = 0; it < max_iter; ++it) {
      const double mu_old = mu, s_old = s;
      mu = solve_mu(s, mu);
      s = solve_sdev(mu, s);
      if (std::abs(mu - mu_old) < tol * (1.0 + std::abs(mu)) &&
          std::abs(s - s_old) < tol * (1.0 + s))
        break;
    }
  }
};

}  // namespace detail

// Evidence lower bound of a given variational state. All expectations are
// analytic; the Laplace-slab cross term uses gaussian_abs_mean.
inline double elbo(const SpikeSlabPrior& prior, const MatrixXd& X, const VectorXd& y,
                   const SpikeSlabPosterior& q) {
  const int d = prior.dim;
  const double sigma2 = prior.noise_sigma * prior.noise_sigma;
  const double L = prior.laplace_rate();
  const double w = prior.inclusion_probability();
  const double n = static_cast<double>(X.rows());

  VectorXd m = q.gamma.cwiseProduct(q.mu);
  double quad = (y - X * m).squaredNorm();
  for (int j = 0; j < d; ++j) {
    const double second_moment = q.gamma[j] * (q.sdev[j] * q.sdev[j] + q.mu[j] * q.mu[j]);
    quad += X.col(j).squaredNorm() * (second_moment - m[j] * m[j]);
  }
  double value = -0.5 * n * std::log(2.0 * M_PI * sigma2) - 0.5 * quad / sigma2;

  for (int j = 0; j < d; ++j) {
    const double g = q.gamma[j];
    value += detail::safe_xlogy(g, w) + detail::safe_xlogy(1.0 - g, 1.0 - w);
    if (g > 0.0) {
      value += g * (std::log(0.5 * L) - L * gaussian_abs_mean(q.mu[j], q.sdev[j]) +
                    0.5 * std::log(2.0 * M_PI * M_E * q.sdev[j] * q.sdev[j]));
    }
  }
  return value;
}

struct CaviOptions {
  double tol = 1e-5;        // relative ELBO change
  int max_sweeps = 1000;    // offline default; the bandit loop uses 100
  double inner_tol = 1e-9;  // per-coordinate (mu, s) solve
};

// Coordinate ascent over j: (mu_j, s_j) solve the smooth 2-variable slab
// problem, then gamma_j is the logistic of the per-coordinate log evidence
// ratio. Coordinates are visited in order of decreasing |init| coefficient,
// fixed once per fit. Default init is the lasso path at the default penalty.
inline SpikeSlabPosterior cavi_fit(const SpikeSlabPrior& prior, const MatrixXd& X,
                                   const VectorXd& y,
                                   const std::optional<VectorXd>& init = std::nullopt,
                                   const CaviOptions& opts = {}) {
  prior.validate();
  if (!X.allFinite() || !y.allFinite()) throw InputError("cavi_fit: non-finite input");
  if (X.cols() != prior.dim) throw InputError("cavi_fit: design width != prior dim");
  if (X.rows() != y.size()) throw InputError("cavi_fit: row count mismatch");

  const int d = prior.dim;
  const int n = static_cast<int>(X.rows());
  const double sigma2 = prior.noise_sigma * prior.noise_sigma;
  const double L = prior.laplace_rate();
  const double logit_w = prior.inclusion_logit();

  VectorXd start;
  if (init && init->size() == d) {
    start = *init;
  } else if (n > 0) {
    const double x_max = std::max(X.cwiseAbs().maxCoeff(), 1e-12);
    start = lasso_fit(X, y, default_lasso_penalty(prior.noise_sigma, x_max, d, n), 1e-8, 400)
                .coefficients;
  } else {
    start = VectorXd::Zero(d);
  }

  SpikeSlabPosterior q;
  q.mu = start;
  q.sdev = VectorXd::Ones(d);
  q.gamma = VectorXd::Constant(d, 0.5);

  std::vector<int> order(static_cast<size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(start[a]) > std::abs(start[b]); });

  VectorXd col_sq(d);
  for (int j = 0; j < d; ++j) col_sq[j] = X.col(j).squaredNorm();
  VectorXd m = q.gamma.cwiseProduct(q.mu);
  VectorXd resid = y - X * m;

  double prev_elbo = -std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    for (int j : order) {
      const double a = (n > 0 ? (X.col(j).dot(resid) + col_sq[j] * m[j]) : 0.0) / sigma2;
      const double c = col_sq[j] / sigma2;
      detail::SlabObjective obj{a, c, L};
      double mu = q.mu[j], s = q.sdev[j];
      if (c == 0.0) {
        // no data on this coordinate: best Gaussian fit to the slab
        mu = 0.0;
        s = std::sqrt(M_PI / 2.0) / L;
      } else {
        obj.maximize(mu, s, opts.inner_tol);
      }
      const double evidence_ratio = obj.value(mu, s) + std::log(0.5 * L) +
                                    0.5 * std::log(2.0 * M_PI * M_E);
      const double gamma = 1.0 / (1.0 + std::exp(-(logit_w + evidence_ratio)));
      const double m_new = gamma * mu;
      if (n > 0 && m_new != m[j]) resid -= X.col(j) * (m_new - m[j]);
      m[j] = m_new;
      q.mu[j] = mu;
      q.sdev[j] = s;
      q.gamma[j] = gamma;
    }
    q.sweeps = sweep + 1;
    const double e = elbo(prior, X, y, q);
    q.elbo_trace.push_back(e);
    if (std::isfinite(prev_elbo) &&
        std::abs(e - prev_elbo) < opts.tol * (1.0 + std::abs(e))) {
      q.converged = true;
      break;
    }
    prev_elbo = e;
  }
  return q;
}

inline VectorXd posterior_mean(const SpikeSlabPosterior& q) {
  return q.gamma.cwiseProduct(q.mu);
}

// Independently per coordinate: N(mu_j, s_j^2) with probability gamma_j,
// exact zero otherwise.
inline VectorXd sample_posterior(const SpikeSlabPosterior& q, Rng& rng) {
  const int d = static_cast<int>(q.mu.size());
  VectorXd draw = VectorXd::Zero(d);
  for (int j = 0; j < d; ++j) {
    const double u = rng.uniform();
    if (u < q.gamma[j]) draw[j] = rng.normal(q.mu[j], q.sdev[j]);
  }
  return draw;
}

enum class LambdaMode { Theory, PracticalSqrt, Constant };

struct LambdaSchedule {
  LambdaMode mode = LambdaMode::Constant;
  double param = 1.0;   // lambda* for PracticalSqrt, c for Constant
  double x_max = 1.0;   // context bound used by the Theory schedule

  // Theory: midpoint 11/6 of the admissible band [(5/3) bar, 2 bar] around
  // bar_lambda_t = x_max sqrt(2 t (log d + log t)).
  double at(int t, int dim) const {
    if (t < 1) throw ConfigError("lambda schedule: round index must be >= 1");
    switch (mode) {
      case LambdaMode::Theory: {
        if (dim < 2) throw ConfigError("lambda schedule: dim must be >= 2 in Theory mode");
        const double bar = x_max * std::sqrt(2.0 * t *
                                             (std::log(static_cast<double>(dim)) +
                                              std::log(static_cast<double>(t))));
        return (11.0 / 6.0) * bar;
      }
      case LambdaMode::PracticalSqrt:
        return param * std::sqrt(static_cast<double>(t));
      case LambdaMode::Constant:
        return param;
    }
    return param;
  }
};

}  // namespace slb
