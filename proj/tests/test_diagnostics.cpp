#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "slb/diagnostics.hpp"
#include "slb/policies.hpp"
#include "support/oracles.hpp"

using namespace slb;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("sparse_eigen: identity and diagonal cases") {
  MatrixXd I6 = MatrixXd::Identity(6, 6);
  for (int s : {1, 2, 4, 6}) {
    auto res = sparse_eigen(I6, s, EigenMode::Exact);
    CHECK(res.phi_min == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(res.phi_max == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(res.certified);
  }
  MatrixXd D(2, 2);
  D << 4, 0, 0, 1;
  auto res = sparse_eigen(D, 1, EigenMode::Exact);
  CHECK(res.phi_min == doctest::Approx(1.0));
  CHECK(res.phi_max == doctest::Approx(4.0));
}

TEST_CASE("sparse_eigen: exact equals brute-force enumeration on random PSD") {
  Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    MatrixXd M = oracles::random_psd(8, rng);
    for (int s : {1, 2}) {
      auto res = sparse_eigen(M, s, EigenMode::Exact);
      auto [lo, hi] = oracles::brute_sparse_extremes(M, s);
      CHECK(res.phi_min == doctest::Approx(lo).epsilon(1e-10));
      CHECK(res.phi_max == doctest::Approx(hi).epsilon(1e-10));
    }
  }
}

TEST_CASE("sparse_eigen: monotone in s and equal to extreme eigenvalues at s=d") {
  Rng rng(9);
  MatrixXd M = oracles::random_psd(7, rng);
  double prev_min = 1e300, prev_max = -1e300;
  for (int s = 1; s <= 7; ++s) {
    auto res = sparse_eigen(M, s, EigenMode::Exact);
    CHECK(res.phi_min <= prev_min + 1e-14);
    CHECK(res.phi_max >= prev_max - 1e-14);
    prev_min = res.phi_min;
    prev_max = res.phi_max;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
  auto full = sparse_eigen(M, 7, EigenMode::Exact);
  CHECK(full.phi_min == doctest::Approx(es.eigenvalues().minCoeff()).epsilon(1e-10));
  CHECK(full.phi_max == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-10));
}

TEST_CASE("sparse_eigen: budget refusal and greedy bounds") {
  Rng rng(10);
  MatrixXd M = oracles::random_psd(30, rng);
  CHECK_THROWS_AS(sparse_eigen(M, 15, EigenMode::Exact, 1e5), BudgetError);

  MatrixXd small = oracles::random_psd(9, rng);
  auto exact = sparse_eigen(small, 3, EigenMode::Exact);
  auto greedy = sparse_eigen(small, 3, EigenMode::Greedy);
  CHECK_FALSE(greedy.certified);
  CHECK(greedy.phi_min >= exact.phi_min - 1e-12);  // upper bound on phi_min
  CHECK(greedy.phi_max <= exact.phi_max + 1e-12);  // lower bound on phi_max
}

TEST_CASE("compatibility: identity-case allocation optimum") {
  // closed-form family over |S|<=3, d<=12 at alpha=7
  Rng rng(11);
  for (int d : {4, 6, 9, 12}) {
    MatrixXd I = MatrixXd::Identity(d, d);
    for (int s : {1, 2, 3}) {
      if (s >= d) continue;
      std::vector<int> support;
      for (int j = 0; j < s; ++j) support.push_back(j);
      const double expected = oracles::identity_compat_optimum(d, s, 7.0);
      auto res = compatibility(I, support, 7.0, CompatMethod::ProjectedDescent);
      CHECK(res.value == doctest::Approx(expected).epsilon(2e-3));
    }
  }
}

TEST_CASE("compatibility: on-support limit as alpha -> 0") {
  MatrixXd I4 = MatrixXd::Identity(4, 4);
  auto res = compatibility(I4, {0}, 1e-9, CompatMethod::ProjectedDescent);
  CHECK(res.value == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("compatibility: descent and vertex grid agree on random PSD") {
  Rng rng(12);
  for (int rep = 0; rep < 3; ++rep) {
    MatrixXd M = oracles::random_psd(6, rng, 0.2);
    std::vector<int> support = {0, 2};
    CompatOptions grid_opts;
    grid_opts.grid_samples = 1000000;
    auto grid = compatibility(M, support, 7.0, CompatMethod::VertexGrid, grid_opts);
    auto descent = compatibility(M, support, 7.0, CompatMethod::ProjectedDescent);
    CHECK(std::abs(grid.value - descent.value) / std::max(descent.value, 1e-12) < 0.05);
    CHECK(descent.value <= grid.value + 1e-9);  // both upper-bound the infimum
  }
}

TEST_CASE("compatibility: homogeneity in the matrix scale") {
  Rng rng(13);
  MatrixXd M = oracles::random_psd(5, rng, 0.2);
  std::vector<int> support = {1, 3};
  auto base_d = compatibility(M, support, 7.0, CompatMethod::ProjectedDescent);
  auto scaled_d = compatibility((3.0 * M).eval(), support, 7.0, CompatMethod::ProjectedDescent);
  CHECK(scaled_d.value == doctest::Approx(3.0 * base_d.value).epsilon(1e-9));
  CompatOptions opts;
  opts.grid_samples = 50000;
  auto base_g = compatibility(M, support, 7.0, CompatMethod::VertexGrid, opts);
  auto scaled_g = compatibility((3.0 * M).eval(), support, 7.0, CompatMethod::VertexGrid, opts);
  // same seeded samples: exact scaling
  CHECK(scaled_g.value == doctest::Approx(3.0 * base_g.value).epsilon(1e-12));
}

TEST_CASE("compatibility: input validation") {
  MatrixXd I4 = MatrixXd::Identity(4, 4);
  CHECK_THROWS_AS(compatibility(I4, {}, 7.0), ConfigError);
  CHECK_THROWS_AS(compatibility(I4, {0}, -1.0), ConfigError);
  CHECK_THROWS_AS(compatibility(I4, {9}, 7.0), ConfigError);
}

TEST_CASE("transfer bound: equal matrices pass with zero diagonal slack") {
  Rng rng(14);
  MatrixXd M = oracles::random_psd(6, rng);
  auto rep = transfer_bound_check(M, M, 3, 0.0, VectorXd::Zero(6));
  CHECK(rep.hypothesis_ok);
  CHECK(rep.diag_ok);
  CHECK(rep.ok);
  CHECK(rep.min_slack >= -1e-10);
}

TEST_CASE("transfer bound: verified hypothesis yields nonnegative slack") {
  Rng rng(15);
  for (int rep_i = 0; rep_i < 5; ++rep_i) {
    MatrixXd M_ref = oracles::random_psd(10, rng);
    MatrixXd bump = oracles::random_psd(10, rng, 0.01);
    const double eta = 0.3;
    MatrixXd M_hat = (1.0 - eta) * M_ref + 0.5 * bump;
    VectorXd D = (M_hat - (1.0 - eta) * M_ref).diagonal().cwiseMax(0.0);
    auto rep = transfer_bound_check(M_hat, M_ref, 4, eta, D);
    CHECK(rep.hypothesis_ok);
    CHECK(rep.diag_ok);
    CHECK(rep.min_slack >= -1e-10);
  }
}

TEST_CASE("transfer bound: undersized diagonal is detected") {
  Rng rng(16);
  MatrixXd M_ref = oracles::random_psd(6, rng);
  MatrixXd M_hat = M_ref + 0.2 * MatrixXd::Identity(6, 6);
  VectorXd D = VectorXd::Zero(6);  // needs at least 0.2 + eta * diag on it
  auto rep = transfer_bound_check(M_hat, M_ref, 3, 0.5, D);
  CHECK_FALSE(rep.diag_ok);
  CHECK_FALSE(rep.ok);
  CHECK_THROWS_AS(
      transfer_bound_check(M_hat, M_ref, 1, 0.0, D),  // m-1 term needs m >= 2
      ConfigError);
}

TEST_CASE("margin exponent: deterministic gap, uniform gap, degenerate parameter") {
  std::vector<double> grid;
  for (int k = 1; k <= 15; ++k) grid.push_back(0.9 * k / 15.0);

  // deterministic gap above the grid: infinity sentinel
  auto inf_fit = margin_exponent_from_gaps([]() { return 2.0; }, grid, 20000);
  CHECK(inf_fit.is_infinite);
  CHECK(std::isinf(inf_fit.omega));

  // gap ~ Uniform(0,1): P(gap <= h) = h, omega = 1
  Rng rng(17);
  auto uniform_fit = margin_exponent_from_gaps([&]() { return rng.uniform(); }, grid, 100000);
  CHECK_FALSE(uniform_fit.is_infinite);
  CHECK(std::abs(uniform_fit.omega - 1.0) < 0.1);

  // beta* = 0: gap identically zero, P-hat = 1 on the whole grid, omega = 0
  auto zero_fit = margin_exponent_from_gaps([]() { return 0.0; }, grid, 5000);
  CHECK(zero_fit.omega == doctest::Approx(0.0).epsilon(1e-12));
  for (const auto& pt : zero_fit.curve) CHECK(pt.p_hat == 1.0);
}

TEST_CASE("margin exponent from an environment") {
  EnvSpec env;
  env.num_arms = 2;
  env.dim = 3;
  env.context = ContextKind::EquiCorrelated;
  env.context_param = 0.0;
  env.noise_sigma = 0.1;
  env.beta_star = VectorXd::Unit(3, 0);
  std::vector<double> grid;
  for (int k = 1; k <= 12; ++k) grid.push_back(0.05 * k);
  Rng rng(18);
  auto fit = margin_exponent(env, grid, 60000, rng);
  // gap = |N(0,2)| has a positive density at 0: omega near 1
  CHECK_FALSE(fit.is_infinite);
  CHECK(fit.omega > 0.7);
  CHECK(fit.omega < 1.3);

  EnvSpec single = env;
  single.num_arms = 1;
  CHECK_THROWS_AS(margin_exponent(single, grid, 100, rng), ConfigError);
}

TEST_CASE("contraction trace: errors, slope, cadence") {
  VectorXd truth(3);
  truth << 1.0, -2.0, 0.0;
  std::vector<std::pair<int, VectorXd>> snaps;
  // error decaying exactly like t^{-1/2}
  for (int t : {10, 20, 40, 80, 160}) {
    VectorXd est = truth + VectorXd::Constant(3, 1.0 / std::sqrt(static_cast<double>(t)) / 3.0);
    snaps.emplace_back(t, est);
  }
  auto trace = contraction_trace(snaps, truth);
  REQUIRE(trace.l1_errors.size() == 5);
  CHECK(trace.log_log_slope == doctest::Approx(-0.5).epsilon(1e-10));
  for (size_t i = 1; i < trace.l1_errors.size(); ++i)
    CHECK(trace.l1_errors[i].second < trace.l1_errors[i - 1].second);
}

TEST_CASE("contraction of the vbts posterior in a noise-free identifiable limit") {
  // K=1 forced exploration, tiny noise; the posterior mean error must shrink
  const int d = 5;
  std::vector<double> first_err, last_err;
  for (int seed = 0; seed < 5; ++seed) {
    EnvSpec env;
    env.num_arms = 1;
    env.dim = d;
    env.context = ContextKind::EquiCorrelated;
    env.context_param = 0.0;
    env.noise_sigma = 0.0;
    Rng brng(900 + static_cast<std::uint64_t>(seed));
    env.beta_star = generate_beta(d, 3, BetaScheme::Setup2, brng);

    VbtsConfig cfg;
    cfg.lambda = {LambdaMode::Constant, 1.0, 1.0};
    cfg.sigma = 0.1;
    VbtsPolicy vbts(d, 1, cfg);
    Rng rng(1900 + static_cast<std::uint64_t>(seed));
    EpisodeOptions opts;
    opts.log_cadence = 10;
    auto trace = run_episode(vbts, env, 200, rng, opts);
    CHECK(trace.estimates.size() == 20);  // floor(T / cadence)
    auto fit = contraction_trace(trace.estimates, env.beta_star);
    first_err.push_back(fit.l1_errors.front().second);
    last_err.push_back(fit.l1_errors.back().second);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(last_err) < median(first_err));
  CHECK(median(last_err) < 0.05);
}
