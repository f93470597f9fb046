#pragma once

// Stochastic bandit environment: per-round context sets, reward realization,
// oracle arms and regret accounting, and sparse ground-truth generation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "slb/errors.hpp"
#include "slb/rng.hpp"

namespace slb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ContextKind { EquiCorrelated, AutoRegressive, TruncatedGaussian, DatasetPairs };
enum class NoiseKind { Gaussian, Uniform, Rademacher };

// Feature rows of an ingested dataset, split by class. One row per class is
// drawn each round and presented in random arm order.
struct DatasetPairsSource {
  std::shared_ptr<const MatrixXd> features;
  std::vector<int> class0_rows;
  std::vector<int> class1_rows;
};

struct EnvSpec {
  int num_arms = 2;
  int dim = 1;
  ContextKind context = ContextKind::EquiCorrelated;
  double context_param = 0.0;  // rho for EC, phi for AR(1), x_max for truncated
  VectorXd beta_star;
  double noise_sigma = 1.0;
  NoiseKind noise = NoiseKind::Gaussian;
  std::optional<double> clip_x_max;   // coordinate-wise clamp, opt-in
  double reward_offset = 0.0;         // constant term (dataset logit fits)
  std::shared_ptr<const DatasetPairsSource> pairs;

  void validate() const {
    if (num_arms < 1) throw ConfigError("EnvSpec: num_arms must be >= 1");
    if (dim < 1) throw ConfigError("EnvSpec: dim must be >= 1");
    if (beta_star.size() != dim) throw ConfigError("EnvSpec: beta_star length != dim");
    if (noise_sigma < 0.0) throw ConfigError("EnvSpec: noise_sigma must be >= 0");
    switch (context) {
      case ContextKind::EquiCorrelated:
        if (context_param < 0.0 || context_param >= 1.0)
          throw ConfigError("EnvSpec: equicorrelation rho must lie in [0,1)");
        break;
      case ContextKind::AutoRegressive:
        if (context_param <= -1.0 || context_param >= 1.0)
          throw ConfigError("EnvSpec: AR(1) phi must lie in (-1,1)");
        break;
      case ContextKind::TruncatedGaussian:
        if (context_param <= 0.0)
          throw ConfigError("EnvSpec: truncation bound must be positive");
        break;
      case ContextKind::DatasetPairs:
        if (!pairs) throw ConfigError("EnvSpec: dataset context without dataset source");
        if (pairs->class0_rows.empty() || pairs->class1_rows.empty())
          throw ConfigError("EnvSpec: both classes must be nonempty");
        if (pairs->features->cols() != dim)
          throw ConfigError("EnvSpec: dataset feature count != dim");
        if (num_arms != 2) throw ConfigError("EnvSpec: dataset context is 2-armed");
        break;
    }
    if (clip_x_max && *clip_x_max <= 0.0)
      throw ConfigError("EnvSpec: clip_x_max must be positive");
  }
};

struct ContextSet {
  int round = 0;
  std::vector<VectorXd> vectors;
  std::vector<int> arm_class;  // dataset envs only: class label per arm
};

struct RoundOutcome {
  int chosen_arm = 0;
  double reward = 0.0;
  int oracle_arm = 0;
  double instantaneous_regret = 0.0;
  double noise_draw = 0.0;
};

namespace detail {

inline VectorXd draw_equicorrelated(int d, double rho, Rng& rng) {
  VectorXd x(d);
  for (int j = 0; j < d; ++j) x[j] = rng.normal();
  if (rho > 0.0) {
    double shared = rng.normal();
    x = std::sqrt(1.0 - rho) * x + std::sqrt(rho) * shared * VectorXd::Ones(d);
  }
  return x;
}

inline VectorXd draw_ar1(int d, double phi, Rng& rng) {
  VectorXd x(d);
  x[0] = rng.normal();
  const double innov = std::sqrt(1.0 - phi * phi);
  for (int j = 1; j < d; ++j) x[j] = phi * x[j - 1] + innov * rng.normal();
  return x;
}

inline VectorXd draw_truncated(int d, double bound, Rng& rng) {
  VectorXd x(d);
  for (int j = 0; j < d; ++j) {
    double v;
    do {
      v = rng.normal();
    } while (std::abs(v) > bound);
    x[j] = v;
  }
  return x;
}

}  // namespace detail

inline ContextSet sample_contexts(const EnvSpec& spec, Rng& rng, int t) {
  ContextSet out;
  out.round = t;
  out.vectors.reserve(static_cast<size_t>(spec.num_arms));
  if (spec.context == ContextKind::DatasetPairs) {
    const auto& src = *spec.pairs;
    int r1 = src.class1_rows[rng.uniform_int(static_cast<int>(src.class1_rows.size()))];
    int r0 = src.class0_rows[rng.uniform_int(static_cast<int>(src.class0_rows.size()))];
    bool class1_first = rng.uniform() < 0.5;
    int rows[2] = {class1_first ? r1 : r0, class1_first ? r0 : r1};
    out.arm_class = {class1_first ? 1 : 0, class1_first ? 0 : 1};
    for (int i = 0; i < 2; ++i) out.vectors.push_back(src.features->row(rows[i]).transpose());
  } else {
    for (int i = 0; i < spec.num_arms; ++i) {
      switch (spec.context) {
        case ContextKind::EquiCorrelated:
          out.vectors.push_back(detail::draw_equicorrelated(spec.dim, spec.context_param, rng));
          break;
        case ContextKind::AutoRegressive:
          out.vectors.push_back(detail::draw_ar1(spec.dim, spec.context_param, rng));
          break;
        case ContextKind::TruncatedGaussian:
          out.vectors.push_back(detail::draw_truncated(spec.dim, spec.context_param, rng));
          break;
        default:
          break;
      }
    }
  }
  if (spec.clip_x_max) {
    const double b = *spec.clip_x_max;
    for (auto& x : out.vectors)
      x = x.cwiseMax(-b).cwiseMin(b);
  }
  return out;
}

// reward = <x, beta*> + offset + eps, with eps from the configured noise law.
// The raw noise draw is returned for test introspection.
inline std::pair<double, double> realize_reward(const EnvSpec& spec, const VectorXd& x_chosen,
                                                Rng& rng) {
  if (x_chosen.size() != spec.dim) throw InputError("realize_reward: context length != dim");
  double eps = 0.0;
  switch (spec.noise) {
    case NoiseKind::Gaussian:
      eps = spec.noise_sigma * rng.normal();
      break;
    case NoiseKind::Uniform: {
      // U(-a, a) with a chosen so the variance equals sigma^2
      const double a = spec.noise_sigma * std::sqrt(3.0);
      eps = rng.uniform(-a, a);
      break;
    }
    case NoiseKind::Rademacher:
      eps = (rng.uniform() < 0.5 ? -1.0 : 1.0) * spec.noise_sigma;
      break;
  }
  double reward = x_chosen.dot(spec.beta_star) + spec.reward_offset + eps;
  return {reward, eps};
}

// Lowest index wins ties, here and in every policy argmax.
inline int argmax_lowest(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

inline RoundOutcome score_round(const EnvSpec& spec, const ContextSet& ctx, int chosen) {
  if (chosen < 0 || chosen >= static_cast<int>(ctx.vectors.size()))
    throw InputError("score_round: chosen arm out of range");
  std::vector<double> means(ctx.vectors.size());
  for (size_t i = 0; i < ctx.vectors.size(); ++i) means[i] = ctx.vectors[i].dot(spec.beta_star);
  RoundOutcome out;
  out.chosen_arm = chosen;
  out.oracle_arm = argmax_lowest(means);
  out.instantaneous_regret = means[static_cast<size_t>(out.oracle_arm)] - means[static_cast<size_t>(chosen)];
  return out;
}

enum class BetaScheme { Setup1, Setup2 };

// s*-sparse direction: support uniform over size-s* subsets, magnitudes
// Uniform(0.3, 1) (Setup1) or standard normal (Setup2), nonzero block
// normalized to unit l2 norm.
inline VectorXd generate_beta(int dim, int sparsity, BetaScheme scheme, Rng& rng) {
  if (sparsity < 1 || sparsity > dim)
    throw ConfigError("generate_beta: sparsity must lie in [1, dim]");
  std::vector<int> idx(static_cast<size_t>(dim));
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < sparsity; ++k) {
    int swap_with = k + rng.uniform_int(dim - k);
    std::swap(idx[static_cast<size_t>(k)], idx[static_cast<size_t>(swap_with)]);
  }
  VectorXd beta = VectorXd::Zero(dim);
  double norm2 = 0.0;
  for (int k = 0; k < sparsity; ++k) {
    double v = (scheme == BetaScheme::Setup1) ? rng.uniform(0.3, 1.0) : rng.normal();
    beta[idx[static_cast<size_t>(k)]] = v;
    norm2 += v * v;
  }
  beta /= std::sqrt(norm2);
  return beta;
}

}  // namespace slb
