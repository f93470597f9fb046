#pragma once

// Deterministic sparse/dense regression solvers: lasso via cyclic coordinate
// descent with soft thresholding, ridge via a symmetric solve, and an
// IRLS-wrapped l1 logistic fit used for dataset ingestion.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "slb/errors.hpp"

namespace slb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct RegressionProblem {
  MatrixXd design;
  VectorXd response;
  double penalty = 0.0;
};

struct LassoSolution {
  VectorXd coefficients;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

// Penalty scale sigma * x_max * sqrt(2 (log d + log t) / t), the order tied to
// the noise-design correlation bound that drives lasso consistency here.
inline double default_lasso_penalty(double sigma, double x_max, int dim, int t) {
  t = std::max(t, 2);
  dim = std::max(dim, 2);
  return sigma * x_max * std::sqrt(2.0 * (std::log(static_cast<double>(dim)) +
                                          std::log(static_cast<double>(t))) /
                                   static_cast<double>(t));
}

inline double lasso_objective(const MatrixXd& X, const VectorXd& y, const VectorXd& beta,
                              double lambda) {
  const double n = static_cast<double>(X.rows());
  return (y - X * beta).squaredNorm() / (2.0 * n) + lambda * beta.lpNorm<1>();
}

// KKT stationarity residual of (1/2n)||y - X b||^2 + lambda ||b||_1:
// gradient g_j = X_j^T r / n must satisfy |g_j| <= lambda off the active set
// and g_j = lambda sign(b_j) on it.
inline double lasso_kkt_residual(const MatrixXd& X, const VectorXd& y, const VectorXd& beta,
                                 double lambda) {
  const double n = static_cast<double>(X.rows());
  VectorXd g = X.transpose() * (y - X * beta) / n;
  double worst = 0.0;
  for (int j = 0; j < beta.size(); ++j) {
    double v = (beta[j] == 0.0) ? std::max(0.0, std::abs(g[j]) - lambda)
                                : std::abs(g[j] - lambda * (beta[j] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

inline LassoSolution lasso_fit(const MatrixXd& X, const VectorXd& y, double lambda,
                               double tol = 1e-10, int max_sweeps = 2000,
                               const VectorXd* warm_start = nullptr) {
  if (!X.allFinite() || !y.allFinite()) throw InputError("lasso_fit: non-finite input");
  if (lambda < 0.0) throw ConfigError("lasso_fit: penalty must be >= 0");
  if (X.rows() != y.size()) throw InputError("lasso_fit: row count mismatch");
  const int d = static_cast<int>(X.cols());
  const double n = static_cast<double>(std::max<Eigen::Index>(X.rows(), 1));

  LassoSolution sol;
  sol.coefficients = (warm_start && warm_start->size() == d) ? *warm_start : VectorXd::Zero(d);
  VectorXd& beta = sol.coefficients;
  VectorXd col_sq(d);
  for (int j = 0; j < d; ++j) col_sq[j] = X.col(j).squaredNorm() / n;
  VectorXd resid = y - X * beta;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < d; ++j) {
      if (col_sq[j] == 0.0) {
        // unidentifiable column stays at zero
        if (beta[j] != 0.0) {
          resid += X.col(j) * beta[j];
          beta[j] = 0.0;
        }
        continue;
      }
      const double old = beta[j];
      const double rho = X.col(j).dot(resid) / n + col_sq[j] * old;
      const double updated = soft_threshold(rho, lambda) / col_sq[j];
      if (updated != old) {
        resid -= X.col(j) * (updated - old);
        beta[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    sol.iterations = sweep + 1;
    if (max_change < tol) {
      sol.converged = true;
      break;
    }
  }
  sol.kkt_residual = lasso_kkt_residual(X, y, beta, lambda);
  return sol;
}

inline LassoSolution lasso_fit(const RegressionProblem& p, double tol = 1e-10,
                               int max_sweeps = 2000) {
  return lasso_fit(p.design, p.response, p.penalty, tol, max_sweeps);
}

// (X^T X + n lambda I)^{-1} X^T y via LDL^T.
inline VectorXd ridge_fit(const MatrixXd& X, const VectorXd& y, double lambda) {
  if (lambda <= 0.0) throw ConfigError("ridge_fit: penalty must be > 0");
  if (!X.allFinite() || !y.allFinite()) throw InputError("ridge_fit: non-finite input");
  const double n = static_cast<double>(X.rows());
  MatrixXd gram = X.transpose() * X;
  gram.diagonal().array() += n * lambda;
  return Eigen::LDLT<MatrixXd>(gram).solve(X.transpose() * y);
}

inline VectorXd ridge_fit(const RegressionProblem& p) {
  return ridge_fit(p.design, p.response, p.penalty);
}

struct LogisticLassoFit {
  double intercept = 0.0;
  VectorXd coefficients;
  double deviance = 0.0;
  int nonzeros = 0;
};

namespace detail {

inline double logistic_deviance(const MatrixXd& X, const VectorXd& y, double b0,
                                const VectorXd& beta) {
  VectorXd eta = (X * beta).array() + b0;
  double dev = 0.0;
  for (int i = 0; i < y.size(); ++i) {
    // -2 log-likelihood, written to stay finite for large |eta|
    double e = eta[i];
    double log1pe = (e > 30.0) ? e : std::log1p(std::exp(e));
    dev += 2.0 * (log1pe - y[i] * e);
  }
  return dev;
}

}  // namespace detail

// l1-penalized logistic regression, unpenalized intercept. IRLS outer loop
// around weighted coordinate descent.
inline LogisticLassoFit logistic_lasso_fit(const MatrixXd& X, const VectorXd& y, double lambda,
                                           int max_irls = 30, int max_sweeps = 60,
                                           double tol = 1e-7,
                                           const LogisticLassoFit* warm = nullptr) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  LogisticLassoFit fit;
  fit.coefficients = (warm && warm->coefficients.size() == d) ? warm->coefficients
                                                              : VectorXd::Zero(d);
  fit.intercept = warm ? warm->intercept : 0.0;
  VectorXd& beta = fit.coefficients;
  double& b0 = fit.intercept;

  for (int irls = 0; irls < max_irls; ++irls) {
    VectorXd eta = (X * beta).array() + b0;
    VectorXd p(n), w(n), z(n);
    for (int i = 0; i < n; ++i) {
      p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-5);
      z[i] = eta[i] + (y[i] - p[i]) / w[i];
    }
    // weighted lasso on the working response
    VectorXd resid = z - eta;
    VectorXd wx_sq(d);
    for (int j = 0; j < d; ++j) wx_sq[j] = X.col(j).cwiseProduct(X.col(j)).dot(w) / n;
    double max_change_outer = 0.0;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      double max_change = 0.0;
      // intercept (unpenalized)
      double w_sum = w.sum();
      double delta0 = w.dot(resid) / w_sum;
      b0 += delta0;
      resid.array() -= delta0;
      max_change = std::abs(delta0);
      for (int j = 0; j < d; ++j) {
        if (wx_sq[j] == 0.0) continue;
        const double old = beta[j];
        const double rho = X.col(j).cwiseProduct(w).dot(resid) / n + wx_sq[j] * old;
        const double updated = soft_threshold(rho, lambda) / wx_sq[j];
        if (updated != old) {
          resid -= X.col(j) * (updated - old);
          beta[j] = updated;
          max_change = std::max(max_change, std::abs(updated - old));
        }
      }
      max_change_outer = max_change;
      if (max_change < tol) break;
    }
    if (max_change_outer < tol && irls > 0) break;
  }
  fit.deviance = detail::logistic_deviance(X, y, b0, beta);
  fit.nonzeros = static_cast<int>((beta.array() != 0.0).count());
  return fit;
}

// 5-fold cross-validated penalty choice over a log-spaced grid below the
// smallest penalty that zeroes every coefficient.
inline LogisticLassoFit logistic_lasso_cv(const MatrixXd& X, const VectorXd& y, int folds = 5,
                                          int grid_size = 6) {
  const int n = static_cast<int>(X.rows());
  const double ybar = y.mean();
  VectorXd centered = y.array() - ybar;
  double lambda_max = (X.transpose() * centered).cwiseAbs().maxCoeff() / std::max(1, n);
  lambda_max = std::max(lambda_max, 1e-8);
  std::vector<double> grid(static_cast<size_t>(grid_size));
  for (int g = 0; g < grid_size; ++g)
    grid[static_cast<size_t>(g)] =
        lambda_max * std::pow(10.0, -0.3 - 1.7 * g / std::max(1, grid_size - 1));

  std::vector<double> cv_dev(static_cast<size_t>(grid_size), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i) ((i % folds == f) ? test_rows : train_rows).push_back(i);
    MatrixXd Xtr(train_rows.size(), X.cols()), Xte(test_rows.size(), X.cols());
    VectorXd ytr(train_rows.size()), yte(test_rows.size());
    for (size_t i = 0; i < train_rows.size(); ++i) {
      Xtr.row(static_cast<Eigen::Index>(i)) = X.row(train_rows[i]);
      ytr[static_cast<Eigen::Index>(i)] = y[train_rows[i]];
    }
    for (size_t i = 0; i < test_rows.size(); ++i) {
      Xte.row(static_cast<Eigen::Index>(i)) = X.row(test_rows[i]);
      yte[static_cast<Eigen::Index>(i)] = y[test_rows[i]];
    }
    LogisticLassoFit prev;
    for (int g = 0; g < grid_size; ++g) {
      LogisticLassoFit fit = logistic_lasso_fit(Xtr, ytr, grid[static_cast<size_t>(g)], 20, 40,
                                                1e-6, g > 0 ? &prev : nullptr);
      cv_dev[static_cast<size_t>(g)] += detail::logistic_deviance(Xte, yte, fit.intercept,
                                                                  fit.coefficients);
      prev = fit;
    }
  }
  int best = 0;
  for (int g = 1; g < grid_size; ++g)
    if (cv_dev[static_cast<size_t>(g)] < cv_dev[static_cast<size_t>(best)]) best = g;
  return logistic_lasso_fit(X, y, grid[static_cast<size_t>(best)]);
}

}  // namespace slb
