#pragma once

// Policy interface and agents: variational-Bayes Thompson sampling, linear
// Thompson sampling, LinUCB, explore-sparsity-then-commit, and the lasso
// l1-confidence-ball policy. A policy owns its own history (chosen contexts
// and rewards only) and is driven by run_episode.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slb/env.hpp"
#include "slb/errors.hpp"
#include "slb/lasso.hpp"
#include "slb/rng.hpp"
#include "slb/spike_slab.hpp"

namespace slb {

constexpr std::uint32_t kFlagSolverNotConverged = 1u;
constexpr std::uint32_t kFlagChoseClassOne = 2u;
constexpr std::uint32_t kFlagNeverCommits = 4u;

// Chosen-arm contexts and rewards; capacity-doubling row storage.
class History {
 public:
  void init(int dim) {
    dim_ = dim;
    X_.resize(8, dim);
    r_.resize(8);
    count_ = 0;
  }
  void add(const VectorXd& x, double reward) {
    if (count_ == static_cast<int>(X_.rows())) {
      MatrixXd grown(X_.rows() * 2, dim_);
      grown.topRows(X_.rows()) = X_;
      X_.swap(grown);
      VectorXd r_grown(r_.size() * 2);
      r_grown.head(r_.size()) = r_;
      r_.swap(r_grown);
    }
    X_.row(count_) = x.transpose();
    r_[count_] = reward;
    ++count_;
  }
  int size() const { return count_; }
  int dim() const { return dim_; }
  MatrixXd design() const { return X_.topRows(count_); }
  VectorXd rewards() const { return r_.head(count_); }
  VectorXd row(int i) const { return X_.row(i).transpose(); }
  double max_abs() const { return count_ > 0 ? X_.topRows(count_).cwiseAbs().maxCoeff() : 1.0; }

 private:
  MatrixXd X_;
  VectorXd r_;
  int count_ = 0;
  int dim_ = 0;
};

class Policy {
 public:
  Policy(std::string name, int dim, int num_arms)
      : name_(std::move(name)), dim_(dim), num_arms_(num_arms) {
    history_.init(dim);
  }
  virtual ~Policy() = default;

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  int num_arms() const { return num_arms_; }
  const History& history() const { return history_; }

  virtual int select_arm(int t, const ContextSet& ctx, Rng& rng) = 0;

  virtual void observe(int /*t*/, const VectorXd& x, double reward) { history_.add(x, reward); }

  // coefficient vector snapshot for contraction diagnostics, if the policy
  // maintains one
  virtual std::optional<VectorXd> coefficient_estimate() const { return std::nullopt; }

  virtual std::uint32_t round_flags() const { return 0; }

  // microseconds spent in the policy's inner solver, cumulative
  virtual long long solver_micros() const { return 0; }

 protected:
  int uniform_arm(Rng& rng) const { return rng.uniform_int(num_arms_); }
  static int argmax_arm(const std::vector<double>& scores) { return argmax_lowest(scores); }

  History history_;

 private:
  std::string name_;
  int dim_;
  int num_arms_;
};

class UniformPolicy final : public Policy {
 public:
  UniformPolicy(int dim, int num_arms) : Policy("uniform", dim, num_arms) {}
  int select_arm(int, const ContextSet&, Rng& rng) override { return uniform_arm(rng); }
};

// Unattainable comparator: argmax of the true mean reward.
class OraclePolicy final : public Policy {
 public:
  OraclePolicy(int dim, int num_arms, VectorXd beta_star)
      : Policy("oracle", dim, num_arms), beta_(std::move(beta_star)) {}
  int select_arm(int, const ContextSet& ctx, Rng&) override {
    std::vector<double> scores(ctx.vectors.size());
    for (size_t i = 0; i < ctx.vectors.size(); ++i) scores[i] = ctx.vectors[i].dot(beta_);
    return argmax_arm(scores);
  }

 private:
  VectorXd beta_;
};

struct VbtsConfig {
  LambdaSchedule lambda;
  double inclusion_exponent = 1.0;
  double sigma = 1.0;
  int refit_every = 1;
  CaviOptions cavi{1e-5, 100, 1e-9};
};

// Thompson sampling through the variational spike-and-slab posterior:
// uniform at t <= 1, otherwise refit CAVI on the full history (warm-started
// from the previous round's posterior mean), draw a coefficient sample, act
// greedily on it.
class VbtsPolicy final : public Policy {
 public:
  VbtsPolicy(int dim, int num_arms, VbtsConfig cfg)
      : Policy("vbts", dim, num_arms), cfg_(std::move(cfg)) {}

  int select_arm(int t, const ContextSet& ctx, Rng& rng) override {
    if (t <= 1) return uniform_arm(rng);
    const bool stale = !posterior_ || ((t - 2) % std::max(1, cfg_.refit_every) == 0);
    if (stale) refit(t);
    last_sample_ = sample_posterior(*posterior_, rng);
    std::vector<double> scores(ctx.vectors.size());
    for (size_t i = 0; i < ctx.vectors.size(); ++i) scores[i] = ctx.vectors[i].dot(last_sample_);
    return argmax_arm(scores);
  }

  std::optional<VectorXd> coefficient_estimate() const override {
    if (!posterior_) return std::nullopt;
    return posterior_mean(*posterior_);
  }
  std::uint32_t round_flags() const override {
    return (posterior_ && !posterior_->converged) ? kFlagSolverNotConverged : 0u;
  }
  long long solver_micros() const override { return cavi_micros_; }

  const SpikeSlabPosterior* posterior() const { return posterior_ ? &*posterior_ : nullptr; }
  const VectorXd& last_sample() const { return last_sample_; }

 private:
  void refit(int t) {
    SpikeSlabPrior prior;
    prior.slab_scale = cfg_.lambda.at(t, dim());
    prior.noise_sigma = cfg_.sigma;
    prior.inclusion_exponent = cfg_.inclusion_exponent;
    prior.dim = dim();
    std::optional<VectorXd> init;
    if (posterior_) init = posterior_mean(*posterior_);
    auto t0 = std::chrono::steady_clock::now();
    posterior_ = cavi_fit(prior, history_.design(), history_.rewards(), init, cfg_.cavi);
    cavi_micros_ += std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  }

  VbtsConfig cfg_;
  std::optional<SpikeSlabPosterior> posterior_;
  VectorXd last_sample_;
  long long cavi_micros_ = 0;
};

// Ridge statistics B = I + sum x x^T, f = sum r x, shared by LinTS/LinUCB.
class RidgeStats {
 public:
  void init(int dim) {
    f_ = VectorXd::Zero(dim);
    llt_.compute(MatrixXd::Identity(dim, dim));
  }
  void add(const VectorXd& x, double reward) {
    llt_.rankUpdate(x, 1.0);
    f_ += reward * x;
  }
  VectorXd mean() const { return llt_.solve(f_); }
  // B^{-1}-quadratic form via the Cholesky factor
  double mahalanobis2(const VectorXd& x) const {
    return llt_.matrixL().solve(x).squaredNorm();
  }
  // beta_hat + scale * U^{-1} z has covariance scale^2 B^{-1}
  VectorXd sample_around_mean(const VectorXd& z, double scale) const {
    return mean() + scale * llt_.matrixU().solve(z);
  }

 private:
  VectorXd f_;
  Eigen::LLT<MatrixXd> llt_;
};

class LinTsPolicy final : public Policy {
 public:
  LinTsPolicy(int dim, int num_arms, double scale)
      : Policy("lints", dim, num_arms), scale_(scale) {
    stats_.init(dim);
  }

  int select_arm(int t, const ContextSet& ctx, Rng& rng) override {
    if (t <= 1) return uniform_arm(rng);
    last_z_.resize(dim());
    for (int j = 0; j < dim(); ++j) last_z_[j] = rng.normal();
    last_sample_ = stats_.sample_around_mean(last_z_, scale_);
    std::vector<double> scores(ctx.vectors.size());
    for (size_t i = 0; i < ctx.vectors.size(); ++i) scores[i] = ctx.vectors[i].dot(last_sample_);
    return argmax_arm(scores);
  }

  void observe(int t, const VectorXd& x, double reward) override {
    Policy::observe(t, x, reward);
    stats_.add(x, reward);
  }

  std::optional<VectorXd> coefficient_estimate() const override { return stats_.mean(); }
  const VectorXd& last_sample() const { return last_sample_; }
  const VectorXd& last_standard_draw() const { return last_z_; }

 private:
  RidgeStats stats_;
  double scale_;
  VectorXd last_sample_;
  VectorXd last_z_;
};

class LinUcbPolicy final : public Policy {
 public:
  LinUcbPolicy(int dim, int num_arms, double radius)
      : Policy("linucb", dim, num_arms), radius_(radius) {
    stats_.init(dim);
  }

  int select_arm(int t, const ContextSet& ctx, Rng& rng) override {
    if (t <= 1) return uniform_arm(rng);
    return argmax_arm(ucb_scores(ctx));
  }

  std::vector<double> ucb_scores(const ContextSet& ctx) const {
    VectorXd beta_hat = stats_.mean();
    std::vector<double> scores(ctx.vectors.size());
    for (size_t i = 0; i < ctx.vectors.size(); ++i)
      scores[i] = ctx.vectors[i].dot(beta_hat) +
                  radius_ * std::sqrt(stats_.mahalanobis2(ctx.vectors[i]));
    return scores;
  }

  void observe(int t, const VectorXd& x, double reward) override {
    Policy::observe(t, x, reward);
    stats_.add(x, reward);
  }

  std::optional<VectorXd> coefficient_estimate() const override { return stats_.mean(); }

 private:
  RidgeStats stats_;
  double radius_;
};

// Uniform exploration for n0 rounds, one lasso fit, then greedy commitment.
class EstcPolicy final : public Policy {
 public:
  EstcPolicy(int dim, int num_arms, int horizon, std::optional<int> explore_len = std::nullopt,
             double sigma = 1.0)
      : Policy("estc", dim, num_arms),
        horizon_(horizon),
        explore_len_(explore_len ? *explore_len
                                 : static_cast<int>(std::ceil(std::pow(horizon, 2.0 / 3.0)))),
        sigma_(sigma) {
    never_commits_ = explore_len_ >= horizon_;
  }

  int select_arm(int t, const ContextSet& ctx, Rng& rng) override {
    if (t <= explore_len_) return uniform_arm(rng);
    if (!committed_) {
      const int n = history_.size();
      if (n > 0) {
        const double penalty = default_lasso_penalty(sigma_, history_.max_abs(), dim(), n);
        beta_hat_ = lasso_fit(history_.design(), history_.rewards(), penalty, 1e-8, 1000)
                        .coefficients;
      } else {
        beta_hat_ = VectorXd::Zero(dim());
      }
      committed_ = true;
    }
    std::vector<double> scores(ctx.vectors.size());
    for (size_t i = 0; i < ctx.vectors.size(); ++i) scores[i] = ctx.vectors[i].dot(beta_hat_);
    return argmax_arm(scores);
  }

  std::optional<VectorXd> coefficient_estimate() const override {
    if (!committed_) return std::nullopt;
    return beta_hat_;
  }
  std::uint32_t round_flags() const override { return never_commits_ ? kFlagNeverCommits : 0u; }
  int explore_len() const { return explore_len_; }

 private:
  int horizon_;
  int explore_len_;
  double sigma_;
  bool committed_ = false;
  bool never_commits_ = false;
  VectorXd beta_hat_;
};

struct LassoL1Config {
  double radius_scale = 1.0;   // c in radius_t = c s sqrt((log d + log t)/t)
  int sparsity = 1;
  double sigma = 1.0;
};

// Optimistic score over the l1 ball {b : ||b - beta_hat||_1 <= r_t}: a linear
// function is maximized at a signed vertex, giving <x, beta_hat> + r_t ||x||_inf.
class LassoL1Policy final : public Policy {
 public:
  LassoL1Policy(int dim, int num_arms, LassoL1Config cfg)
      : Policy("lasso_l1", dim, num_arms), cfg_(cfg) {}

  double radius_at(int t) const {
    return cfg_.radius_scale * cfg_.sparsity *
           std::sqrt((std::log(static_cast<double>(std::max(dim(), 2))) +
                      std::log(static_cast<double>(t))) /
                     static_cast<double>(t));
  }

  int select_arm(int t, const ContextSet& ctx, Rng& rng) override {
    if (t <= 1) return uniform_arm(rng);
    const int n = history_.size();
    if (n > 0) {
      const double penalty = default_lasso_penalty(cfg_.sigma, history_.max_abs(), dim(), n);
      beta_hat_ = lasso_fit(history_.design(), history_.rewards(), penalty, 1e-8, 1000,
                            beta_hat_.size() == dim() ? &beta_hat_ : nullptr)
                      .coefficients;
    } else {
      beta_hat_ = VectorXd::Zero(dim());
    }
    const double radius = radius_at(t);
    std::vector<double> scores(ctx.vectors.size());
    for (size_t i = 0; i < ctx.vectors.size(); ++i)
      scores[i] = ctx.vectors[i].dot(beta_hat_) + radius * ctx.vectors[i].lpNorm<Eigen::Infinity>();
    return argmax_arm(scores);
  }

  std::optional<VectorXd> coefficient_estimate() const override {
    if (beta_hat_.size() != dim()) return std::nullopt;
    return beta_hat_;
  }

 private:
  LassoL1Config cfg_;
  VectorXd beta_hat_;
};

struct RoundRecord {
  int t = 0;
  double regret = 0.0;
  double cum_regret = 0.0;
  long long micros = 0;
  int arm = 0;
  std::uint32_t flags = 0;
  double noise = 0.0;  // retained only when the episode asks for it
};

struct RegretTrace {
  std::string policy;
  int replication = 0;
  std::vector<RoundRecord> rounds;
  std::vector<std::pair<int, VectorXd>> estimates;
  long labeled_rounds = 0;
  long class1_chosen = 0;
  bool failed = false;
  std::string error;
  long long solver_micros = 0;

  double cumulative_regret() const { return rounds.empty() ? 0.0 : rounds.back().cum_regret; }
  double accuracy() const {
    return labeled_rounds > 0 ? static_cast<double>(class1_chosen) / labeled_rounds : 0.0;
  }
};

struct EpisodeOptions {
  int log_cadence = 0;    // snapshot coefficient estimates every k rounds
  bool keep_noise = false;
};

// observe -> select -> reward -> update loop. Policy exceptions abort the
// episode with a partial trace and an error record; micros measure the
// policy's select+observe work for the round.
inline RegretTrace run_episode(Policy& policy, const EnvSpec& spec, int horizon, Rng& rng,
                               const EpisodeOptions& opts = {}) {
  spec.validate();
  if (horizon < 1) throw ConfigError("run_episode: horizon must be >= 1");
  RegretTrace trace;
  trace.policy = policy.name();
  trace.rounds.reserve(static_cast<size_t>(horizon));
  double cum = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    ContextSet ctx = sample_contexts(spec, rng, t);
    int arm = 0;
    long long micros = 0;
    try {
      auto t0 = std::chrono::steady_clock::now();
      arm = policy.select_arm(t, ctx, rng);
      auto [reward, noise] = realize_reward(spec, ctx.vectors[static_cast<size_t>(arm)], rng);
      policy.observe(t, ctx.vectors[static_cast<size_t>(arm)], reward);
      micros = std::chrono::duration_cast<std::chrono::microseconds>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
      RoundOutcome out = score_round(spec, ctx, arm);
      cum += out.instantaneous_regret;
      std::uint32_t flags = policy.round_flags();
      if (!ctx.arm_class.empty()) {
        ++trace.labeled_rounds;
        if (ctx.arm_class[static_cast<size_t>(arm)] == 1) {
          ++trace.class1_chosen;
          flags |= kFlagChoseClassOne;
        }
      }
      trace.rounds.push_back({t, out.instantaneous_regret, cum, micros, arm, flags,
                              opts.keep_noise ? noise : 0.0});
      if (opts.log_cadence > 0 && t % opts.log_cadence == 0) {
        if (auto est = policy.coefficient_estimate()) trace.estimates.emplace_back(t, *est);
      }
    } catch (const std::exception& e) {
      trace.failed = true;
      trace.error = e.what();
      break;
    }
  }
  trace.solver_micros = policy.solver_micros();
  return trace;
}

}  // namespace slb
