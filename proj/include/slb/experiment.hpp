#pragma once

// Experiment orchestration: env construction from config, policy registry,
// Monte Carlo replication (optionally threaded), trace/summary/timing CSV
// emission, the regret plot, and a JSON run manifest. Every emitted byte
// except the manifest is a deterministic function of (config, base_seed);
// wall-clock numbers go to timing.csv and the manifest, and the trace micros
// column is zeroed unless trace_timing is set.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "slb/config.hpp"
#include "slb/dataset.hpp"
#include "slb/env.hpp"
#include "slb/errors.hpp"
#include "slb/policies.hpp"
#include "slb/rng.hpp"
#include "slb/svg.hpp"

namespace slb {

struct BuiltEnv {
  EnvSpec spec;
  std::shared_ptr<const DatasetBundle> bundle;  // set for dataset envs
  int sparsity_hint = 1;
};

inline BuiltEnv build_env(const EnvConfig& cfg) {
  BuiltEnv built;
  EnvSpec& spec = built.spec;
  spec.num_arms = cfg.num_arms;
  spec.dim = cfg.dim;
  spec.noise_sigma = cfg.noise_sigma;

  if (cfg.noise == "gaussian") spec.noise = NoiseKind::Gaussian;
  else if (cfg.noise == "uniform") spec.noise = NoiseKind::Uniform;
  else if (cfg.noise == "rademacher") spec.noise = NoiseKind::Rademacher;
  else throw ConfigError("env.noise: unknown noise law '" + cfg.noise + "'");

  spec.clip_x_max = cfg.clip_x_max;

  if (cfg.context == "dataset") {
    if (!cfg.dataset) throw ConfigError("env.context = dataset requires env.dataset.path");
    auto bundle = std::make_shared<DatasetBundle>(ingest_dataset(
        cfg.dataset->path, cfg.dataset->label_col,
        cfg.dataset->log2 ? FeatureTransform::Log2 : FeatureTransform::None));
    built.bundle = bundle;
    spec = dataset_env(bundle);
    built.sparsity_hint =
        std::max(1, static_cast<int>((bundle->beta_ref.array() != 0.0).count()));
    return built;
  }

  if (cfg.context == "ec") {
    spec.context = ContextKind::EquiCorrelated;
    spec.context_param = cfg.rho;
  } else if (cfg.context == "ar1") {
    spec.context = ContextKind::AutoRegressive;
    spec.context_param = cfg.phi;
  } else if (cfg.context == "truncgauss") {
    spec.context = ContextKind::TruncatedGaussian;
    spec.context_param = cfg.x_max;
  } else {
    throw ConfigError("env.context: unknown context kind '" + cfg.context + "'");
  }

  BetaScheme scheme;
  if (cfg.beta.scheme == "setup1") scheme = BetaScheme::Setup1;
  else if (cfg.beta.scheme == "setup2") scheme = BetaScheme::Setup2;
  else throw ConfigError("env.beta.scheme: expected setup1 or setup2");
  Rng beta_rng(cfg.beta.seed);
  spec.beta_star = generate_beta(cfg.dim, cfg.beta.sparsity, scheme, beta_rng);
  built.sparsity_hint = cfg.beta.sparsity;
  spec.validate();
  return built;
}

namespace detail {

inline double param_double(const PolicyConfig& pc, const std::string& key, double fallback) {
  auto it = pc.params.find(key);
  if (it == pc.params.end()) return fallback;
  char* end = nullptr;
  double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("policy." + pc.name + "." + key + ": expected a number");
  return v;
}

inline std::string param_string(const PolicyConfig& pc, const std::string& key,
                                const std::string& fallback) {
  auto it = pc.params.find(key);
  return it == pc.params.end() ? fallback : it->second;
}

inline void check_params(const PolicyConfig& pc, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : pc.params) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("policy." + pc.name + ": unknown parameter '" + key + "'");
  }
}

}  // namespace detail

inline std::unique_ptr<Policy> make_policy(const PolicyConfig& pc, const BuiltEnv& env,
                                           int horizon) {
  const int d = env.spec.dim;
  const int K = env.spec.num_arms;
  const double env_sigma = env.spec.noise_sigma > 0 ? env.spec.noise_sigma : 1.0;

  if (pc.kind == "uniform") {
    detail::check_params(pc, {});
    return std::make_unique<UniformPolicy>(d, K);
  }
  if (pc.kind == "oracle") {
    detail::check_params(pc, {});
    return std::make_unique<OraclePolicy>(d, K, env.spec.beta_star);
  }
  if (pc.kind == "lints") {
    detail::check_params(pc, {"scale"});
    return std::make_unique<LinTsPolicy>(d, K, detail::param_double(pc, "scale", 1.0));
  }
  if (pc.kind == "linucb") {
    detail::check_params(pc, {"radius"});
    return std::make_unique<LinUcbPolicy>(d, K, detail::param_double(pc, "radius", 1.0));
  }
  if (pc.kind == "estc") {
    detail::check_params(pc, {"explore_len", "sigma"});
    std::optional<int> n0;
    double given = detail::param_double(pc, "explore_len", -1.0);
    if (given >= 0.0) n0 = static_cast<int>(given);
    return std::make_unique<EstcPolicy>(d, K, horizon, n0,
                                        detail::param_double(pc, "sigma", env_sigma));
  }
  if (pc.kind == "lasso_l1") {
    detail::check_params(pc, {"radius_scale", "sparsity", "sigma"});
    LassoL1Config cfg;
    cfg.radius_scale = detail::param_double(pc, "radius_scale", 1.0);
    cfg.sparsity = static_cast<int>(detail::param_double(pc, "sparsity", env.sparsity_hint));
    cfg.sigma = detail::param_double(pc, "sigma", env_sigma);
    return std::make_unique<LassoL1Policy>(d, K, cfg);
  }
  if (pc.kind == "vbts") {
    detail::check_params(pc, {"lambda_mode", "lambda", "u", "sigma", "x_max", "refit_every",
                              "cavi_tol", "cavi_max_sweeps"});
    VbtsConfig cfg;
    const std::string mode = detail::param_string(pc, "lambda_mode", "constant");
    if (mode == "constant") cfg.lambda.mode = LambdaMode::Constant;
    else if (mode == "sqrt") cfg.lambda.mode = LambdaMode::PracticalSqrt;
    else if (mode == "theory") cfg.lambda.mode = LambdaMode::Theory;
    else throw ConfigError("policy." + pc.name + ".lambda_mode: expected constant|sqrt|theory");
    cfg.lambda.param = detail::param_double(pc, "lambda", 1.0);
    cfg.lambda.x_max = detail::param_double(pc, "x_max", 1.0);
    cfg.inclusion_exponent = detail::param_double(pc, "u", 1.0);
    cfg.sigma = detail::param_double(pc, "sigma", env_sigma);
    cfg.refit_every = static_cast<int>(detail::param_double(pc, "refit_every", 1.0));
    cfg.cavi.tol = detail::param_double(pc, "cavi_tol", 1e-5);
    cfg.cavi.max_sweeps = static_cast<int>(detail::param_double(pc, "cavi_max_sweeps", 100.0));
    return std::make_unique<VbtsPolicy>(d, K, std::move(cfg));
  }
  throw ConfigError("policy." + pc.name + ": unregistered policy kind '" + pc.kind + "'");
}

struct CellStatus {
  std::string policy;
  int replication = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double seconds = 0.0;
  long long solver_micros = 0;
  double accuracy = 0.0;
  long labeled_rounds = 0;
};

struct ExperimentResult {
  int exit_code = 0;
  std::string out_dir;
  std::vector<SummaryRow> summary;
  std::vector<CellStatus> cells;
  std::map<std::string, double> mean_seconds;
  std::map<std::string, double> mean_accuracy;
};

namespace detail {

inline std::string trace_filename(const std::string& policy, int rep) {
  return policy + "_rep" + std::to_string(rep) + ".csv";
}

inline void write_trace_csv(const std::string& path, const RegretTrace& trace, int rep,
                            bool with_timing) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace file: " + path);
  out << "policy,rep,t,regret,cum_regret,micros,arm,flags\n";
  char a[64], b[64];
  for (const auto& r : trace.rounds) {
    std::snprintf(a, sizeof(a), "%.17g", r.regret);
    std::snprintf(b, sizeof(b), "%.17g", r.cum_regret);
    out << trace.policy << "," << rep << "," << r.t << "," << a << "," << b << ","
        << (with_timing ? r.micros : 0) << "," << r.arm << "," << r.flags << "\n";
  }
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::string& output_root = "") {
  namespace fs = std::filesystem;
  BuiltEnv env = build_env(cfg.env);

  // surface config mistakes (unknown kinds, bad parameters) before any cell
  // runs; cell-level exceptions after this point count as partial failures
  for (const auto& pc : cfg.policies) make_policy(pc, env, cfg.horizon);

  fs::path out_dir = cfg.output_dir;
  if (!output_root.empty() && out_dir.is_relative()) out_dir = fs::path(output_root) / out_dir;
  fs::create_directories(out_dir / "traces");

  const int R = cfg.replications;
  const int n_cells = static_cast<int>(cfg.policies.size()) * R;
  std::vector<RegretTrace> traces(static_cast<size_t>(n_cells));
  std::vector<CellStatus> cells(static_cast<size_t>(n_cells));

  auto run_cell = [&](int cell) {
    const int pi = cell / R;
    const int rep = cell % R;
    const PolicyConfig& pc = cfg.policies[static_cast<size_t>(pi)];
    CellStatus& status = cells[static_cast<size_t>(cell)];
    status.policy = pc.name;
    status.replication = rep;
    status.seed = derive_seed(cfg.base_seed, pc.name, rep);
    auto t0 = std::chrono::steady_clock::now();
    try {
      auto policy = make_policy(pc, env, cfg.horizon);
      Rng rng(status.seed);
      EpisodeOptions opts;
      opts.log_cadence = cfg.log_cadence;
      RegretTrace trace = run_episode(*policy, env.spec, cfg.horizon, rng, opts);
      trace.policy = pc.name;  // label traces by block name, not kind
      trace.replication = rep;
      status.failed = trace.failed;
      status.error = trace.error;
      status.solver_micros = trace.solver_micros;
      status.accuracy = trace.accuracy();
      status.labeled_rounds = trace.labeled_rounds;
      traces[static_cast<size_t>(cell)] = std::move(trace);
    } catch (const std::exception& e) {
      status.failed = true;
      status.error = e.what();
    }
    status.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const int workers = std::max(1, std::min(cfg.parallelism, n_cells));
  if (workers == 1) {
    for (int c = 0; c < n_cells; ++c) run_cell(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          int c = next.fetch_add(1);
          if (c >= n_cells) return;
          run_cell(c);
        }
      });
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  result.out_dir = out_dir.string();
  result.cells = cells;

  // single-threaded merge: traces, summary, timing, accuracy, plot, manifest
  for (int c = 0; c < n_cells; ++c) {
    const auto& status = cells[static_cast<size_t>(c)];
    if (status.failed && traces[static_cast<size_t>(c)].rounds.empty()) continue;
    detail::write_trace_csv(
        (out_dir / "traces" / detail::trace_filename(status.policy, status.replication)).string(),
        traces[static_cast<size_t>(c)], status.replication, cfg.trace_timing);
  }

  for (size_t pi = 0; pi < cfg.policies.size(); ++pi) {
    const std::string& name = cfg.policies[pi].name;
    for (int t = 1; t <= cfg.horizon; ++t) {
      double sum = 0.0, sum_sq = 0.0;
      int count = 0;
      for (int rep = 0; rep < R; ++rep) {
        const auto& trace = traces[pi * static_cast<size_t>(R) + static_cast<size_t>(rep)];
        if (static_cast<int>(trace.rounds.size()) < t) continue;
        double v = trace.rounds[static_cast<size_t>(t - 1)].cum_regret;
        sum += v;
        sum_sq += v * v;
        ++count;
      }
      if (count == 0) continue;
      SummaryRow row;
      row.policy = name;
      row.t = t;
      row.mean = sum / count;
      row.stddev = count > 1 ? std::sqrt(std::max(0.0, (sum_sq - sum * sum / count) / (count - 1)))
                             : 0.0;
      row.ci95_half = count > 0 ? 1.96 * row.stddev / std::sqrt(static_cast<double>(count)) : 0.0;
      result.summary.push_back(row);
    }
  }

  {
    std::ofstream out(out_dir / "summary.csv");
    out << "policy,t,mean_cum_regret,stddev,ci95_half\n";
    char a[64], b[64], c2[64];
    for (const auto& row : result.summary) {
      std::snprintf(a, sizeof(a), "%.17g", row.mean);
      std::snprintf(b, sizeof(b), "%.17g", row.stddev);
      std::snprintf(c2, sizeof(c2), "%.17g", row.ci95_half);
      out << row.policy << "," << row.t << "," << a << "," << b << "," << c2 << "\n";
    }
  }

  // per-policy mean execution seconds (timing-table analogue)
  {
    std::map<std::string, std::pair<double, int>> acc;
    std::map<std::string, std::pair<double, int>> acc_acc;
    for (const auto& status : cells) {
      auto& slot = acc[status.policy];
      slot.first += status.seconds;
      slot.second += 1;
      if (status.labeled_rounds > 0) {
        auto& aslot = acc_acc[status.policy];
        aslot.first += status.accuracy;
        aslot.second += 1;
      }
    }
    std::ofstream out(out_dir / "timing.csv");
    out << "policy,mean_seconds_per_episode,mean_micros_per_round\n";
    for (const auto& [name, slot] : acc) {
      double mean_s = slot.first / slot.second;
      result.mean_seconds[name] = mean_s;
      char a[64], b[64];
      std::snprintf(a, sizeof(a), "%.6g", mean_s);
      std::snprintf(b, sizeof(b), "%.6g", mean_s * 1e6 / cfg.horizon);
      out << name << "," << a << "," << b << "\n";
    }
    if (!acc_acc.empty()) {
      std::ofstream aout(out_dir / "accuracy.csv");
      aout << "policy,mean_accuracy\n";
      for (const auto& [name, slot] : acc_acc) {
        double mean_a = slot.first / slot.second;
        result.mean_accuracy[name] = mean_a;
        char a[64];
        std::snprintf(a, sizeof(a), "%.6g", mean_a);
        aout << name << "," << a << "\n";
      }
    }
  }

  if (!result.summary.empty()) emit_plot(result.summary, (out_dir / "regret.svg").string());

  bool any_failed = false;
  {
    nlohmann::json manifest;
    auto now = std::chrono::system_clock::now().time_since_epoch();
    manifest["timestamp_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    manifest["config"] = serialize_config(cfg);
    manifest["cells"] = nlohmann::json::array();
    for (const auto& status : cells) {
      any_failed = any_failed || status.failed;
      manifest["cells"].push_back({{"policy", status.policy},
                                   {"rep", status.replication},
                                   {"seed", status.seed},
                                   {"failed", status.failed},
                                   {"error", status.error},
                                   {"seconds", status.seconds},
                                   {"solver_micros", status.solver_micros}});
    }
    std::ofstream out(out_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
  }

  result.exit_code = any_failed ? 1 : 0;
  return result;
}

}  // namespace slb
