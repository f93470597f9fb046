#pragma once

// Computable embodiments of the design-matrix quantities used in the
// analysis: sparse extreme eigenvalues, compatibility numbers over the
// restricted cone, a transfer-lemma inequality checker, margin-exponent
// estimation, and posterior-contraction tracking.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "slb/env.hpp"
#include "slb/errors.hpp"
#include "slb/rng.hpp"

namespace slb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class EigenMode { Exact, Greedy };

struct SparseEigenResult {
  double phi_min = 0.0;
  double phi_max = 0.0;
  bool certified = false;  // true only for exhaustive enumeration
};

namespace detail {

inline void require_symmetric(const MatrixXd& M, const char* who) {
  if (M.rows() != M.cols()) throw InputError(std::string(who) + ": matrix must be square");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + M.cwiseAbs().maxCoeff()))
    throw InputError(std::string(who) + ": matrix must be symmetric");
}

inline double binomial_approx(int n, int k) {
  double v = 1.0;
  for (int i = 0; i < k; ++i) {
    v *= static_cast<double>(n - i) / static_cast<double>(i + 1);
    if (v > 1e18) return v;
  }
  return v;
}

inline std::pair<double, double> submatrix_extremes(const MatrixXd& M,
                                                    const std::vector<int>& support) {
  const int s = static_cast<int>(support.size());
  if (s == 1) {
    double v = M(support[0], support[0]);
    return {v, v};
  }
  MatrixXd sub(s, s);
  for (int a = 0; a < s; ++a)
    for (int b = 0; b < s; ++b) sub(a, b) = M(support[static_cast<size_t>(a)], support[static_cast<size_t>(b)]);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sub, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

template <class Fn>
inline void for_each_combination(int d, int s, Fn&& fn) {
  std::vector<int> comb(static_cast<size_t>(s));
  std::iota(comb.begin(), comb.end(), 0);
  for (;;) {
    fn(comb);
    int i = s - 1;
    while (i >= 0 && comb[static_cast<size_t>(i)] == d - s + i) --i;
    if (i < 0) break;
    ++comb[static_cast<size_t>(i)];
    for (int k = i + 1; k < s; ++k) comb[static_cast<size_t>(k)] = comb[static_cast<size_t>(k - 1)] + 1;
  }
}

}  // namespace detail

// Extreme Rayleigh quotients over s-sparse directions. Exact mode enumerates
// all size-s supports (the size-<=s optimum is attained at size s by
// eigenvalue interlacing); Greedy returns an upper bound on phi_min and a
// lower bound on phi_max from greedily grown supports.
inline SparseEigenResult sparse_eigen(const MatrixXd& M, int s, EigenMode mode,
                                      double enumeration_budget = 1e6) {
  detail::require_symmetric(M, "sparse_eigen");
  const int d = static_cast<int>(M.rows());
  if (s < 1 || s > d) throw ConfigError("sparse_eigen: s must lie in [1, d]");

  SparseEigenResult out;
  if (mode == EigenMode::Exact) {
    if (detail::binomial_approx(d, s) > enumeration_budget)
      throw BudgetError("sparse_eigen: C(d,s) exceeds the enumeration budget");
    out.phi_min = std::numeric_limits<double>::infinity();
    out.phi_max = -std::numeric_limits<double>::infinity();
    detail::for_each_combination(d, s, [&](const std::vector<int>& supp) {
      auto [lo, hi] = detail::submatrix_extremes(M, supp);
      out.phi_min = std::min(out.phi_min, lo);
      out.phi_max = std::max(out.phi_max, hi);
    });
    out.certified = true;
    return out;
  }

  // Greedy forward selection, separately for each extreme.
  auto grow = [&](bool maximize) {
    std::vector<int> supp;
    std::vector<char> used(static_cast<size_t>(d), 0);
    double best_val = 0.0;
    for (int step = 0; step < s; ++step) {
      int best_j = -1;
      double best = maximize ? -std::numeric_limits<double>::infinity()
                             : std::numeric_limits<double>::infinity();
      for (int j = 0; j < d; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        supp.push_back(j);
        auto [lo, hi] = detail::submatrix_extremes(M, supp);
        double v = maximize ? hi : lo;
        supp.pop_back();
        if ((maximize && v > best) || (!maximize && v < best)) {
          best = v;
          best_j = j;
        }
      }
      supp.push_back(best_j);
      used[static_cast<size_t>(best_j)] = 1;
      best_val = best;
    }
    return best_val;
  };
  out.phi_max = grow(true);
  out.phi_min = grow(false);
  out.certified = false;
  return out;
}

enum class CompatMethod { ProjectedDescent, VertexGrid };

struct CompatOptions {
  int restarts = 32;
  int max_iters = 400;
  long grid_samples = 200000;
  std::uint64_t seed = 1;
};

struct CompatResult {
  double value = 0.0;    // best objective found; an upper bound on the infimum
  bool certified = false;
};

namespace detail {

// |S| * x^T M x / ||x||_1^2, scale-invariant.
inline double compat_objective(const MatrixXd& M, const VectorXd& x, int s_size) {
  const double l1 = x.lpNorm<1>();
  return static_cast<double>(s_size) * x.dot(M * x) / (l1 * l1);
}

// Retraction onto the cone {||x_off||_1 <= alpha ||x_on||_1, x_on != 0},
// then onto the unit l1 slice.
inline void cone_retract(VectorXd& x, const std::vector<int>& support,
                         const std::vector<char>& on_support, double alpha) {
  double on = 0.0, off = 0.0;
  for (int j = 0; j < x.size(); ++j)
    (on_support[static_cast<size_t>(j)] ? on : off) += std::abs(x[j]);
  if (on <= 0.0) {
    for (int j : support) x[j] = 1.0;
    on = static_cast<double>(support.size());
  }
  if (off > alpha * on) {
    const double scale = (alpha * on) / off;
    for (int j = 0; j < x.size(); ++j)
      if (!on_support[static_cast<size_t>(j)]) x[j] *= scale;
  }
  x /= x.lpNorm<1>();
}

}  // namespace detail

// Estimate of inf over the restricted cone C_alpha(S) of |S| x^T M x / ||x||_1^2.
// ProjectedDescent runs retracted gradient descent from deterministic and
// random starts with a coordinate polish; VertexGrid densely samples the
// cone's normalized slice (small d only). Both report the best value found.
inline CompatResult compatibility(const MatrixXd& M, const std::vector<int>& support,
                                  double alpha = 7.0,
                                  CompatMethod method = CompatMethod::ProjectedDescent,
                                  const CompatOptions& opts = {}) {
  detail::require_symmetric(M, "compatibility");
  if (support.empty()) throw ConfigError("compatibility: support set must be nonempty");
  if (alpha <= 0.0) throw ConfigError("compatibility: cone factor must be > 0");
  const int d = static_cast<int>(M.rows());
  const int s_size = static_cast<int>(support.size());
  std::vector<char> on(static_cast<size_t>(d), 0);
  for (int j : support) {
    if (j < 0 || j >= d) throw ConfigError("compatibility: support index out of range");
    on[static_cast<size_t>(j)] = 1;
  }

  Rng rng(opts.seed);
  const double a_min = 1.0 / (1.0 + alpha);  // smallest feasible on-support l1 mass

  auto sample_point = [&](double on_mass) {
    VectorXd x = VectorXd::Zero(d);
    double sum_on = 0.0;
    std::vector<double> e_on(static_cast<size_t>(s_size));
    for (auto& v : e_on) {
      v = -std::log1p(-rng.uniform());
      sum_on += v;
    }
    for (int k = 0; k < s_size; ++k) {
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      x[support[static_cast<size_t>(k)]] = sign * on_mass * e_on[static_cast<size_t>(k)] / sum_on;
    }
    if (d > s_size) {
      double sum_off = 0.0;
      std::vector<double> e_off;
      e_off.reserve(static_cast<size_t>(d - s_size));
      for (int j = 0; j < d; ++j)
        if (!on[static_cast<size_t>(j)]) {
          double v = -std::log1p(-rng.uniform());
          e_off.push_back(v);
          sum_off += v;
        }
      int k = 0;
      for (int j = 0; j < d; ++j)
        if (!on[static_cast<size_t>(j)]) {
          double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
          x[j] = sign * (1.0 - on_mass) * e_off[static_cast<size_t>(k++)] / sum_off;
        }
    }
    return x;
  };

  std::vector<VectorXd> starts;
  {
    // uniform over all coordinates (cone-retracted if needed)
    VectorXd u = VectorXd::Ones(d);
    detail::cone_retract(u, support, on, alpha);
    starts.push_back(u);
    // boundary allocation: minimal on-support mass, off-support spread
    VectorXd b = VectorXd::Zero(d);
    for (int j : support) b[j] = a_min / s_size;
    if (d > s_size)
      for (int j = 0; j < d; ++j)
        if (!on[static_cast<size_t>(j)]) b[j] = (1.0 - a_min) / (d - s_size);
    starts.push_back(b);
    // on-support only
    VectorXd c = VectorXd::Zero(d);
    for (int j : support) c[j] = 1.0 / s_size;
    starts.push_back(c);
    // smallest eigenvector, both signs
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
    for (double sgn : {1.0, -1.0}) {
      VectorXd v = sgn * es.eigenvectors().col(0);
      detail::cone_retract(v, support, on, alpha);
      starts.push_back(v);
    }
  }

  double best = std::numeric_limits<double>::infinity();
  VectorXd best_x;

  auto consider = [&](const VectorXd& x) {
    double v = detail::compat_objective(M, x, s_size);
    if (v < best) {
      best = v;
      best_x = x;
    }
  };

  if (method == CompatMethod::VertexGrid) {
    for (const auto& x : starts) consider(x);
    const long global = opts.grid_samples * 4 / 5;
    for (long i = 0; i < global; ++i) consider(sample_point(rng.uniform(a_min, 1.0)));
    // densify around the incumbent at shrinking perturbation scales
    const double scales[4] = {0.5, 0.2, 0.05, 0.02};
    for (long i = 0; i < opts.grid_samples - global; ++i) {
      VectorXd cand = best_x;
      const double scale = scales[i % 4] / d;
      for (int j = 0; j < d; ++j) cand[j] += scale * rng.normal();
      detail::cone_retract(cand, support, on, alpha);
      consider(cand);
    }
    return {best, false};
  }

  for (int r = 0; r < opts.restarts + static_cast<int>(starts.size()); ++r) {
    VectorXd x = (r < static_cast<int>(starts.size()))
                     ? starts[static_cast<size_t>(r)]
                     : sample_point(rng.uniform(a_min, 1.0));
    double fx = detail::compat_objective(M, x, s_size);
    double step = 0.25;
    for (int it = 0; it < opts.max_iters; ++it) {
      const double l1 = x.lpNorm<1>();
      VectorXd sgn(d);
      for (int j = 0; j < d; ++j) sgn[j] = x[j] >= 0.0 ? 1.0 : -1.0;
      VectorXd grad = (2.0 * s_size / (l1 * l1)) * (M * x - (x.dot(M * x) / l1) * sgn);
      double gnorm = grad.norm();
      if (gnorm < 1e-15) break;
      bool improved = false;
      double eta = step;
      for (int bt = 0; bt < 25; ++bt) {
        VectorXd cand = x - eta * grad / gnorm;
        detail::cone_retract(cand, support, on, alpha);
        double fc = detail::compat_objective(M, cand, s_size);
        if (fc < fx - 1e-14) {
          x = cand;
          fx = fc;
          step = std::min(eta * 2.0, 0.5);
          improved = true;
          break;
        }
        eta *= 0.5;
      }
      if (!improved) break;
    }
    // coordinate polish: axis perturbations at shrinking scales
    for (double h : {1e-1, 1e-2, 1e-3, 1e-4}) {
      bool moved = true;
      int guard = 0;
      while (moved && guard++ < 50) {
        moved = false;
        for (int j = 0; j < d; ++j) {
          for (double dir : {1.0, -1.0}) {
            VectorXd cand = x;
            cand[j] += dir * h;
            detail::cone_retract(cand, support, on, alpha);
            double fc = detail::compat_objective(M, cand, s_size);
            if (fc < fx - 1e-14) {
              x = cand;
              fx = fc;
              moved = true;
            }
          }
        }
      }
    }
    consider(x);
  }
  return {best, false};
}

struct TransferOptions {
  int num_samples = 10000;
  std::uint64_t seed = 1;
  double tol = 1e-10;
  double enumeration_budget = 1e6;
};

struct TransferReport {
  bool hypothesis_ok = false;  // sparse lower bound M_hat >= (1-eta) M_ref
  bool diag_ok = false;        // D_jj >= (M_hat)_jj - (1-eta)(M_ref)_jj
  bool ok = false;
  double hypothesis_margin = 0.0;  // phi_min(m; M_hat - (1-eta) M_ref)
  double min_slack = 0.0;          // over sampled x of lhs - rhs
};

// Checks x^T M_hat x >= (1-eta) x^T M_ref x - ||D^{1/2} x||_1^2 / (m-1) on
// sampled dense and sparse vectors, after verifying the m-sparse hypothesis
// by exact enumeration.
inline TransferReport transfer_bound_check(const MatrixXd& M_hat, const MatrixXd& M_ref, int m,
                                           double eta, const VectorXd& D_diag,
                                           const TransferOptions& opts = {}) {
  detail::require_symmetric(M_hat, "transfer_bound_check");
  detail::require_symmetric(M_ref, "transfer_bound_check");
  const int d = static_cast<int>(M_hat.rows());
  if (M_ref.rows() != d || D_diag.size() != d)
    throw InputError("transfer_bound_check: dimension mismatch");
  if (m < 2 || m > d) throw ConfigError("transfer_bound_check: m must lie in [2, d]");
  if (eta < 0.0 || eta >= 1.0) throw ConfigError("transfer_bound_check: eta must lie in [0,1)");

  TransferReport rep;
  MatrixXd gap = M_hat - (1.0 - eta) * M_ref;
  rep.hypothesis_margin =
      sparse_eigen(gap, m, EigenMode::Exact, opts.enumeration_budget).phi_min;
  rep.hypothesis_ok = rep.hypothesis_margin >= -opts.tol;
  rep.diag_ok = true;
  for (int j = 0; j < d; ++j)
    if (D_diag[j] < gap(j, j) - opts.tol) rep.diag_ok = false;
  rep.ok = rep.hypothesis_ok && rep.diag_ok;

  Rng rng(opts.seed);
  VectorXd sqrt_d = D_diag.cwiseMax(0.0).cwiseSqrt();
  double min_slack = std::numeric_limits<double>::infinity();
  for (int i = 0; i < opts.num_samples; ++i) {
    VectorXd x = VectorXd::Zero(d);
    if (i % 2 == 0) {
      for (int j = 0; j < d; ++j) x[j] = rng.normal();
    } else {
      int nnz = 1 + rng.uniform_int(d);
      std::vector<int> idx(static_cast<size_t>(d));
      std::iota(idx.begin(), idx.end(), 0);
      for (int k = 0; k < nnz; ++k) {
        int sw = k + rng.uniform_int(d - k);
        std::swap(idx[static_cast<size_t>(k)], idx[static_cast<size_t>(sw)]);
        x[idx[static_cast<size_t>(k)]] = rng.normal();
      }
    }
    double l1 = sqrt_d.cwiseProduct(x).lpNorm<1>();
    double slack = x.dot(M_hat * x) - (1.0 - eta) * x.dot(M_ref * x) + l1 * l1 / (m - 1);
    min_slack = std::min(min_slack, slack);
  }
  rep.min_slack = min_slack;
  return rep;
}

struct MarginCurvePoint {
  double h = 0.0;
  double p_hat = 0.0;
  long events = 0;
};

struct MarginFit {
  double omega = 0.0;
  bool is_infinite = false;
  std::vector<MarginCurvePoint> curve;
};

// Fits P(gap <= h) ~ (h / Delta)^omega on a log-log scale from Monte Carlo
// gap samples. Grid points with fewer than min_events positive events are
// dropped; an empty fit reports the omega = infinity sentinel.
template <class GapSampler>
inline MarginFit margin_exponent_from_gaps(GapSampler&& draw_gap, const std::vector<double>& h_grid,
                                           long num_samples, int min_events = 5) {
  if (num_samples < 1) throw ConfigError("margin_exponent: need at least one sample");
  if (h_grid.empty()) throw ConfigError("margin_exponent: empty h grid");
  for (double h : h_grid)
    if (h <= 0.0) throw ConfigError("margin_exponent: h grid values must be positive");
  std::vector<double> gaps(static_cast<size_t>(num_samples));
  for (auto& g : gaps) g = draw_gap();

  MarginFit fit;
  fit.curve.reserve(h_grid.size());
  for (double h : h_grid) {
    long events = static_cast<long>(std::count_if(gaps.begin(), gaps.end(),
                                                  [&](double g) { return g <= h; }));
    fit.curve.push_back({h, static_cast<double>(events) / static_cast<double>(num_samples), events});
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long k = 0;
  for (const auto& pt : fit.curve) {
    if (pt.events < min_events) continue;
    const double lx = std::log(pt.h), ly = std::log(pt.p_hat);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++k;
  }
  if (k == 0) {
    fit.is_infinite = true;
    fit.omega = std::numeric_limits<double>::infinity();
    return fit;
  }
  const double denom = k * sxx - sx * sx;
  fit.omega = (std::abs(denom) < 1e-300) ? 0.0 : (k * sxy - sx * sy) / denom;
  return fit;
}

inline MarginFit margin_exponent(const EnvSpec& spec, const std::vector<double>& h_grid,
                                 long num_samples, Rng& rng) {
  if (spec.num_arms < 2) throw ConfigError("margin_exponent: needs at least 2 arms");
  return margin_exponent_from_gaps(
      [&]() {
        ContextSet ctx = sample_contexts(spec, rng, 1);
        double best = -std::numeric_limits<double>::infinity(), second = best;
        for (const auto& x : ctx.vectors) {
          double v = x.dot(spec.beta_star);
          if (v > best) {
            second = best;
            best = v;
          } else if (v > second) {
            second = v;
          }
        }
        return best - second;
      },
      h_grid, num_samples);
}

struct ContractionTrace {
  std::vector<std::pair<int, double>> l1_errors;  // (round, ||estimate - beta*||_1)
  double log_log_slope = std::numeric_limits<double>::quiet_NaN();
};

// Descriptive only: records l1 errors of logged estimates and the fitted
// slope of log error against log t, reported next to the theoretical -1/2.
inline ContractionTrace contraction_trace(const std::vector<std::pair<int, VectorXd>>& snapshots,
                                          const VectorXd& beta_star) {
  ContractionTrace out;
  out.l1_errors.reserve(snapshots.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long k = 0;
  for (const auto& [t, est] : snapshots) {
    const double err = (est - beta_star).lpNorm<1>();
    out.l1_errors.emplace_back(t, err);
    if (err > 0.0 && t > 0) {
      const double lx = std::log(static_cast<double>(t)), ly = std::log(err);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++k;
    }
  }
  if (k >= 2) {
    const double denom = k * sxx - sx * sx;
    if (std::abs(denom) > 1e-300) out.log_log_slope = (k * sxy - sx * sy) / denom;
  }
  return out;
}

}  // namespace slb
