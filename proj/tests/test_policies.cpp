#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "slb/policies.hpp"

using namespace slb;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

EnvSpec small_env(int K, int d, double sigma = 0.5, double rho = 0.3, std::uint64_t beta_seed = 3,
                  int sparsity = 2) {
  EnvSpec spec;
  spec.num_arms = K;
  spec.dim = d;
  spec.context = ContextKind::EquiCorrelated;
  spec.context_param = rho;
  spec.noise_sigma = sigma;
  Rng rng(beta_seed);
  spec.beta_star = generate_beta(d, sparsity, BetaScheme::Setup1, rng);
  return spec;
}

ContextSet fixed_contexts(const std::vector<VectorXd>& xs, int t = 1) {
  ContextSet ctx;
  ctx.round = t;
  ctx.vectors = xs;
  return ctx;
}

VbtsConfig default_vbts() {
  VbtsConfig cfg;
  cfg.lambda = {LambdaMode::Constant, 1.0, 1.0};
  cfg.sigma = 0.5;
  return cfg;
}

}  // namespace

TEST_CASE("first round is uniform for every policy") {
  const int K = 10, d = 4;
  auto env = small_env(K, d);
  Rng env_rng(5);
  ContextSet ctx = sample_contexts(env, env_rng, 1);

  std::vector<std::unique_ptr<Policy>> policies;
  policies.push_back(std::make_unique<VbtsPolicy>(d, K, default_vbts()));
  policies.push_back(std::make_unique<LinTsPolicy>(d, K, 1.0));
  policies.push_back(std::make_unique<UniformPolicy>(d, K));
  for (auto& policy : policies) {
    std::vector<int> counts(static_cast<size_t>(K), 0);
    Rng rng(77);
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(policy->select_arm(1, ctx, rng))];
    for (int a = 0; a < K; ++a) {
      double freq = counts[static_cast<size_t>(a)] / static_cast<double>(n);
      CHECK(freq >= 0.09);
      CHECK(freq <= 0.11);
    }
  }
}

TEST_CASE("single arm is always chosen") {
  auto env = small_env(1, 3);
  VbtsPolicy vbts(3, 1, default_vbts());
  Rng rng(9);
  for (int t = 1; t <= 5; ++t) {
    auto ctx = sample_contexts(env, rng, t);
    int arm = vbts.select_arm(t, ctx, rng);
    CHECK(arm == 0);
    auto [r, eps] = realize_reward(env, ctx.vectors[0], rng);
    vbts.observe(t, ctx.vectors[0], r);
  }
}

TEST_CASE("vbts: selected arm replays as argmax of the logged sample") {
  const int d = 20, K = 3;
  auto env = small_env(K, d);
  VbtsPolicy vbts(d, K, default_vbts());
  Rng rng(123);
  for (int t = 1; t <= 50; ++t) {
    auto ctx = sample_contexts(env, rng, t);
    int arm = vbts.select_arm(t, ctx, rng);
    if (t > 1) {
      const VectorXd& sample = vbts.last_sample();
      std::vector<double> scores(static_cast<size_t>(K));
      for (int i = 0; i < K; ++i)
        scores[static_cast<size_t>(i)] = ctx.vectors[static_cast<size_t>(i)].dot(sample);
      CHECK(arm == argmax_lowest(scores));
    }
    auto [r, eps] = realize_reward(env, ctx.vectors[static_cast<size_t>(arm)], rng);
    vbts.observe(t, ctx.vectors[static_cast<size_t>(arm)], r);
  }
}

TEST_CASE("lints: v=0 is the greedy ridge policy and sampling replays") {
  const int d = 5, K = 4;
  auto env = small_env(K, d);
  Rng rng(31);

  LinTsPolicy greedy(d, K, 0.0);
  LinTsPolicy sampler(d, K, 1.3);
  std::vector<std::pair<VectorXd, double>> data;
  for (int t = 1; t <= 12; ++t) {
    auto ctx = sample_contexts(env, rng, t);
    auto [r, eps] = realize_reward(env, ctx.vectors[0], rng);
    data.emplace_back(ctx.vectors[0], r);
    greedy.observe(t, ctx.vectors[0], r);
    sampler.observe(t, ctx.vectors[0], r);
  }
  // independent ridge recomputation: B = I + sum x x^T, f = sum r x
  MatrixXd B = MatrixXd::Identity(d, d);
  VectorXd f = VectorXd::Zero(d);
  for (const auto& [x, r] : data) {
    B += x * x.transpose();
    f += r * x;
  }
  VectorXd beta_hat = B.ldlt().solve(f);

  auto ctx = sample_contexts(env, rng, 13);
  Rng select_rng(71);
  int arm = greedy.select_arm(13, ctx, select_rng);
  std::vector<double> scores(static_cast<size_t>(K));
  for (int i = 0; i < K; ++i)
    scores[static_cast<size_t>(i)] = ctx.vectors[static_cast<size_t>(i)].dot(beta_hat);
  CHECK(arm == argmax_lowest(scores));
  CHECK((*greedy.coefficient_estimate() - beta_hat).lpNorm<Eigen::Infinity>() < 1e-10);

  // Cholesky transform replay of the logged standard draw
  sampler.select_arm(13, ctx, select_rng);
  Eigen::LLT<MatrixXd> llt(B);
  VectorXd expected = beta_hat + 1.3 * llt.matrixU().solve(sampler.last_standard_draw());
  CHECK((sampler.last_sample() - expected).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("lints: empty history draws from N(0, v^2 I)") {
  const int d = 6;
  LinTsPolicy policy(d, 2, 2.0);
  ContextSet ctx = fixed_contexts({VectorXd::Unit(d, 0), VectorXd::Unit(d, 1)}, 2);
  Rng rng(91);
  policy.select_arm(2, ctx, rng);
  CHECK((policy.last_sample() - 2.0 * policy.last_standard_draw()).lpNorm<Eigen::Infinity>() <
        1e-12);
}

TEST_CASE("linucb: radius 0 greedy, isotropic start, brute-force scores") {
  const int d = 4, K = 3;
  auto env = small_env(K, d);
  Rng rng(17);

  // isotropic start: scores are radius * ||x||_2, argmax by norm
  LinUcbPolicy fresh(d, K, 1.0);
  std::vector<VectorXd> xs = {VectorXd::Unit(d, 0) * 0.5, VectorXd::Unit(d, 1) * 2.0,
                              VectorXd::Unit(d, 2) * 1.0};
  CHECK(fresh.select_arm(2, fixed_contexts(xs, 2), rng) == 1);

  LinUcbPolicy ucb(d, K, 0.7);
  LinUcbPolicy greedy(d, K, 0.0);
  MatrixXd B = MatrixXd::Identity(d, d);
  VectorXd f = VectorXd::Zero(d);
  for (int t = 1; t <= 15; ++t) {
    auto ctx = sample_contexts(env, rng, t);
    auto [r, eps] = realize_reward(env, ctx.vectors[1], rng);
    ucb.observe(t, ctx.vectors[1], r);
    greedy.observe(t, ctx.vectors[1], r);
    B += ctx.vectors[1] * ctx.vectors[1].transpose();
    f += r * ctx.vectors[1];
  }
  VectorXd beta_hat = B.ldlt().solve(f);
  MatrixXd B_inv = B.inverse();
  auto ctx = sample_contexts(env, rng, 16);
  std::vector<double> scores(static_cast<size_t>(K)), greedy_scores(static_cast<size_t>(K));
  for (int i = 0; i < K; ++i) {
    const VectorXd& x = ctx.vectors[static_cast<size_t>(i)];
    scores[static_cast<size_t>(i)] = x.dot(beta_hat) + 0.7 * std::sqrt(x.dot(B_inv * x));
    greedy_scores[static_cast<size_t>(i)] = x.dot(beta_hat);
  }
  CHECK(ucb.select_arm(16, ctx, rng) == argmax_lowest(scores));
  CHECK(greedy.select_arm(16, ctx, rng) == argmax_lowest(greedy_scores));
}

TEST_CASE("estc: explore, commit, and the n0=0 tie-break") {
  const int d = 6, K = 3;
  auto env = small_env(K, d);
  Rng rng(3);
  auto ctx = sample_contexts(env, rng, 1);

  // n0 = 0 with empty data: beta_hat = 0, all scores tie, arm 0 wins
  EstcPolicy commit_now(d, K, 50, 0);
  CHECK(commit_now.select_arm(1, ctx, rng) == 0);

  // uniform during exploration
  EstcPolicy explorer(d, K, 100, 50);
  std::vector<int> counts(static_cast<size_t>(K), 0);
  const int n = 9000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(explorer.select_arm(5, ctx, rng))];
  for (int a = 0; a < K; ++a)
    CHECK(std::abs(counts[static_cast<size_t>(a)] / static_cast<double>(n) - 1.0 / K) < 0.02);

  // committed phase: matches independent argmax of <x, beta_hat>
  EstcPolicy policy(d, K, 40, 10);
  Rng run_rng(41);
  for (int t = 1; t <= 10; ++t) {
    auto c = sample_contexts(env, run_rng, t);
    int arm = policy.select_arm(t, c, run_rng);
    auto [r, eps] = realize_reward(env, c.vectors[static_cast<size_t>(arm)], run_rng);
    policy.observe(t, c.vectors[static_cast<size_t>(arm)], r);
  }
  policy.select_arm(11, sample_contexts(env, run_rng, 11), run_rng);
  REQUIRE(policy.coefficient_estimate().has_value());
  VectorXd frozen = *policy.coefficient_estimate();
  for (int rep = 0; rep < 100; ++rep) {
    auto c = sample_contexts(env, run_rng, 12 + rep);
    std::vector<double> scores(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i)
      scores[static_cast<size_t>(i)] = c.vectors[static_cast<size_t>(i)].dot(frozen);
    CHECK(policy.select_arm(12 + rep, c, run_rng) == argmax_lowest(scores));
  }
  CHECK(*policy.coefficient_estimate() == frozen);

  EstcPolicy never(d, K, 10, 20);
  CHECK((never.round_flags() & kFlagNeverCommits) != 0);
}

TEST_CASE("default estc exploration length is ceil(T^{2/3})") {
  EstcPolicy p(3, 2, 400);
  CHECK(p.explore_len() == static_cast<int>(std::ceil(std::pow(400.0, 2.0 / 3.0))));
}

TEST_CASE("lasso-l1 ball: degenerate radius, pure width, vertex optimality") {
  const int d = 6, K = 4;
  auto env = small_env(K, d);
  Rng rng(53);

  // radius 0: greedy lasso policy
  LassoL1Policy greedy(d, K, {0.0, 2, 0.5});
  for (int t = 1; t <= 8; ++t) {
    auto c = sample_contexts(env, rng, t);
    int arm = greedy.select_arm(t, c, rng);
    auto [r, eps] = realize_reward(env, c.vectors[static_cast<size_t>(arm)], rng);
    greedy.observe(t, c.vectors[static_cast<size_t>(arm)], r);
  }
  auto c9 = sample_contexts(env, rng, 9);
  int arm = greedy.select_arm(9, c9, rng);
  VectorXd beta_hat = *greedy.coefficient_estimate();
  std::vector<double> scores(static_cast<size_t>(K));
  for (int i = 0; i < K; ++i)
    scores[static_cast<size_t>(i)] = c9.vectors[static_cast<size_t>(i)].dot(beta_hat);
  CHECK(arm == argmax_lowest(scores));

  // analytic optimistic score dominates dense sampling of the l1 ball and
  // is attained at a signed vertex
  Rng ball_rng(7);
  VectorXd center(d);
  for (int j = 0; j < d; ++j) center[j] = ball_rng.normal();
  const double radius = 0.8;
  VectorXd x(d);
  for (int j = 0; j < d; ++j) x[j] = ball_rng.normal();
  const double analytic = x.dot(center) + radius * x.lpNorm<Eigen::Infinity>();
  double brute = -1e300;
  for (int s = 0; s < 100000; ++s) {
    VectorXd u(d);
    double norm1 = 0.0;
    for (int j = 0; j < d; ++j) {
      u[j] = (ball_rng.uniform() < 0.5 ? -1.0 : 1.0) * (-std::log1p(-ball_rng.uniform()));
      norm1 += std::abs(u[j]);
    }
    u *= radius * ball_rng.uniform() / norm1;
    brute = std::max(brute, x.dot(center + u));
  }
  CHECK(brute <= analytic + 1e-9);  // sampling never beats the analytic score
  int jstar = 0;
  for (int j = 1; j < d; ++j)
    if (std::abs(x[j]) > std::abs(x[jstar])) jstar = j;
  VectorXd vertex = center;
  vertex[jstar] += radius * (x[jstar] >= 0 ? 1.0 : -1.0);
  CHECK(x.dot(vertex) == doctest::Approx(analytic).epsilon(1e-12));
  // sweeping the 2d signed vertices attains the analytic maximum exactly
  double vertex_max = -1e300;
  for (int j = 0; j < d; ++j) {
    for (double sgn : {1.0, -1.0}) {
      VectorXd v = center;
      v[j] += sgn * radius;
      vertex_max = std::max(vertex_max, x.dot(v));
    }
  }
  CHECK(vertex_max == doctest::Approx(analytic).epsilon(1e-12));
}

TEST_CASE("run_episode: oracle regret, uniform expectation, prefix sums") {
  const int d = 4;
  auto env = small_env(2, d, 0.3);

  OraclePolicy oracle(d, 2, env.beta_star);
  Rng rng(61);
  auto trace = run_episode(oracle, env, 200, rng);
  CHECK(trace.rounds.size() == 200);
  for (const auto& r : trace.rounds) CHECK(r.regret == 0.0);
  CHECK(trace.cumulative_regret() == 0.0);

  // uniform policy on fixed antipodal contexts: expected regret 1 per round
  EnvSpec fixed;
  fixed.num_arms = 2;
  fixed.dim = 2;
  fixed.context = ContextKind::EquiCorrelated;
  fixed.context_param = 0.0;
  fixed.noise_sigma = 0.0;
  fixed.beta_star = VectorXd::Unit(2, 0);
  UniformPolicy uniform(2, 2);
  Rng urng(71);
  double total = 0.0;
  const int T = 10000;
  VectorXd x1(2), x2(2);
  x1 << 1, 0;
  x2 << -1, 0;
  for (int t = 1; t <= T; ++t) {
    auto ctx = fixed_contexts({x1, x2}, t);
    int arm = uniform.select_arm(t, ctx, urng);
    total += score_round(fixed, ctx, arm).instantaneous_regret;
  }
  CHECK(total / T >= 0.97);
  CHECK(total / T <= 1.03);

  // accounting identity on a stochastic run
  UniformPolicy u2(d, 2);
  Rng rng2(81);
  auto t2 = run_episode(u2, env, 150, rng2);
  double cum = 0.0;
  for (const auto& r : t2.rounds) {
    cum += r.regret;
    CHECK(r.cum_regret == doctest::Approx(cum).epsilon(1e-15));
    CHECK(r.regret >= 0.0);
  }
}

TEST_CASE("argmax scale invariance") {
  Rng rng(92);
  const int d = 7, K = 5;
  VectorXd beta(d);
  for (int j = 0; j < d; ++j) beta[j] = rng.normal();
  auto env = small_env(K, d);
  for (int rep = 0; rep < 50; ++rep) {
    auto ctx = sample_contexts(env, rng, rep + 1);
    std::vector<double> s1(static_cast<size_t>(K)), s2(static_cast<size_t>(K));
    const double c = 0.001 + 100.0 * rng.uniform();
    for (int i = 0; i < K; ++i) {
      s1[static_cast<size_t>(i)] = ctx.vectors[static_cast<size_t>(i)].dot(beta);
      s2[static_cast<size_t>(i)] = ctx.vectors[static_cast<size_t>(i)].dot((c * beta).eval());
    }
    CHECK(argmax_lowest(s1) == argmax_lowest(s2));
  }
}

TEST_CASE("history integrity: T entries, each the chosen context") {
  const int d = 5, K = 3;
  auto env = small_env(K, d);
  VbtsPolicy vbts(d, K, default_vbts());
  Rng rng(15);
  std::vector<VectorXd> chosen;
  for (int t = 1; t <= 30; ++t) {
    auto ctx = sample_contexts(env, rng, t);
    int arm = vbts.select_arm(t, ctx, rng);
    auto [r, eps] = realize_reward(env, ctx.vectors[static_cast<size_t>(arm)], rng);
    vbts.observe(t, ctx.vectors[static_cast<size_t>(arm)], r);
    chosen.push_back(ctx.vectors[static_cast<size_t>(arm)]);
  }
  CHECK(vbts.history().size() == 30);
  for (int i = 0; i < 30; ++i)
    CHECK((vbts.history().row(i) - chosen[static_cast<size_t>(i)]).lpNorm<Eigen::Infinity>() ==
          0.0);
}

TEST_CASE("determinism: identical config and seed give identical traces") {
  const int d = 12, K = 4;
  auto env = small_env(K, d);
  auto run_once = [&](std::uint64_t seed) {
    VbtsPolicy vbts(d, K, default_vbts());
    Rng rng(seed);
    auto trace = run_episode(vbts, env, 40, rng);
    std::vector<int> arms;
    std::vector<double> regrets;
    for (const auto& r : trace.rounds) {
      arms.push_back(r.arm);
      regrets.push_back(r.regret);
    }
    return std::make_pair(arms, regrets);
  };
  auto a = run_once(555), b = run_once(555), c = run_once(556);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.first != c.first);
}

TEST_CASE("vbts recovers the active coordinate on a 2-arm instance") {
  const int d = 10;
  std::vector<double> gamma_active, gamma_noise;
  for (int seed = 0; seed < 20; ++seed) {
    EnvSpec env;
    env.num_arms = 2;
    env.dim = d;
    env.context = ContextKind::EquiCorrelated;
    env.context_param = 0.0;
    env.noise_sigma = 0.1;
    env.beta_star = VectorXd::Unit(d, 0);
    VbtsConfig cfg;
    cfg.lambda = {LambdaMode::Constant, 1.0, 1.0};
    cfg.sigma = 0.1;
    VbtsPolicy vbts(d, 2, cfg);
    Rng rng(2000 + static_cast<std::uint64_t>(seed));
    run_episode(vbts, env, 100, rng);
    REQUIRE(vbts.posterior() != nullptr);
    gamma_active.push_back(vbts.posterior()->gamma[0]);
    double worst = 0.0;
    for (int j = 1; j < d; ++j) worst = std::max(worst, vbts.posterior()->gamma[j]);
    gamma_noise.push_back(worst);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(gamma_active) > 0.9);
  CHECK(median(gamma_noise) < 0.5);
}

TEST_CASE("vbts flags non-converged rounds instead of failing") {
  const int d = 8, K = 2;
  auto env = small_env(K, d);
  VbtsConfig cfg = default_vbts();
  cfg.cavi.max_sweeps = 1;
  cfg.cavi.tol = 1e-15;
  VbtsPolicy vbts(d, K, cfg);
  Rng rng(19);
  auto trace = run_episode(vbts, env, 10, rng);
  CHECK_FALSE(trace.failed);
  bool saw_flag = false;
  for (const auto& r : trace.rounds) saw_flag = saw_flag || (r.flags & kFlagSolverNotConverged);
  CHECK(saw_flag);
}

TEST_CASE("vbts runs under every lambda schedule mode") {
  const int d = 8, K = 2;
  auto env = small_env(K, d);
  for (LambdaSchedule sched : {LambdaSchedule{LambdaMode::Constant, 1.0, 1.0},
                               LambdaSchedule{LambdaMode::PracticalSqrt, 0.3, 1.0},
                               LambdaSchedule{LambdaMode::Theory, 0.0, 1.0}}) {
    VbtsConfig cfg;
    cfg.lambda = sched;
    cfg.sigma = 0.5;
    VbtsPolicy vbts(d, K, cfg);
    Rng rng(27);
    auto trace = run_episode(vbts, env, 25, rng);
    CHECK_FALSE(trace.failed);
    CHECK(trace.rounds.size() == 25);
    REQUIRE(vbts.posterior() != nullptr);
    CHECK((vbts.posterior()->sdev.array() > 0.0).all());
  }
}

TEST_CASE("vbts refit thinning reuses the posterior between refits") {
  const int d = 6, K = 2;
  auto env = small_env(K, d);
  VbtsConfig cfg = default_vbts();
  cfg.refit_every = 5;
  VbtsPolicy vbts(d, K, cfg);
  Rng rng(23);
  auto trace = run_episode(vbts, env, 30, rng);
  CHECK_FALSE(trace.failed);
  CHECK(trace.rounds.size() == 30);
}
