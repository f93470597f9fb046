// Command-line front end: run experiments from a config file, ingest
// datasets, run design diagnostics, render plots, sweep a parameter, and
// generate the synthetic dataset mimic.
//
// Exit codes: 0 success, 1 partial failure (some replication failed),
// 2 configuration/usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "slb/config.hpp"
#include "slb/dataset.hpp"
#include "slb/diagnostics.hpp"
#include "slb/experiment.hpp"
#include "slb/policies.hpp"
#include "slb/svg.hpp"

namespace {

std::string output_root_from_env() {
  const char* root = std::getenv("SLB_OUTPUT_ROOT");
  return root ? root : "";
}

std::vector<slb::SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw slb::ConfigError("cannot open summary file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "policy,t,mean_cum_regret,stddev,ci95_half")
    throw slb::ConfigError(path + ": unexpected summary header");
  std::vector<slb::SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    slb::SummaryRow row;
    std::getline(ss, row.policy, ',');
    std::getline(ss, cell, ',');
    row.t = std::stoi(cell);
    std::getline(ss, cell, ',');
    row.mean = std::stod(cell);
    std::getline(ss, cell, ',');
    row.stddev = std::stod(cell);
    std::getline(ss, cell, ',');
    row.ci95_half = std::stod(cell);
    rows.push_back(row);
  }
  return rows;
}

int cmd_run(const std::string& config_path, const std::string& output_root) {
  auto cfg = slb::load_config(config_path);
  auto result = slb::run_experiment(cfg, output_root);
  std::cout << "wrote " << result.out_dir << " (summary.csv, timing.csv, regret.svg)\n";
  for (const auto& [policy, secs] : result.mean_seconds)
    std::cout << "  " << policy << ": " << secs << " s/episode\n";
  for (const auto& [policy, acc] : result.mean_accuracy)
    std::cout << "  " << policy << " accuracy: " << acc << "\n";
  return result.exit_code;
}

int cmd_ingest(const std::string& csv_path, const std::string& label_col, bool log2,
               const std::string& out_dir) {
  auto bundle = slb::ingest_dataset(
      csv_path, label_col, log2 ? slb::FeatureTransform::Log2 : slb::FeatureTransform::None);
  const int nnz = static_cast<int>((bundle.beta_ref.array() != 0.0).count());
  std::cout << "rows: " << bundle.features.rows() << ", features: " << bundle.features.cols()
            << "\nclass 0: " << bundle.class0_rows.size()
            << ", class 1: " << bundle.class1_rows.size() << "\nreference fit: " << nnz
            << " nonzero coefficients, intercept " << bundle.intercept << ", noise scale "
            << bundle.noise_scale << "\n";
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json meta;
    meta["rows"] = bundle.features.rows();
    meta["features"] = bundle.features.cols();
    meta["class0"] = bundle.class0_rows.size();
    meta["class1"] = bundle.class1_rows.size();
    meta["nonzeros"] = nnz;
    meta["intercept"] = bundle.intercept;
    meta["noise_scale"] = bundle.noise_scale;
    std::ofstream meta_out(std::filesystem::path(out_dir) / "bundle_meta.json");
    meta_out << meta.dump(2) << "\n";
    std::ofstream beta_out(std::filesystem::path(out_dir) / "beta_ref.csv");
    beta_out << "index,coefficient\n";
    char buf[64];
    for (int j = 0; j < bundle.beta_ref.size(); ++j) {
      if (bundle.beta_ref[j] == 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%.17g", bundle.beta_ref[j]);
      beta_out << j << "," << buf << "\n";
    }
    std::cout << "wrote " << out_dir << "/bundle_meta.json and beta_ref.csv\n";
  }
  return 0;
}

int cmd_diagnose(const std::string& config_path, int rounds, int sparse_s,
                 const std::string& out_path) {
  auto cfg = slb::load_config(config_path);
  auto env = slb::build_env(cfg.env);
  slb::Rng rng(cfg.base_seed);

  // collect a design by uniform exploration
  slb::UniformPolicy uniform(env.spec.dim, env.spec.num_arms);
  slb::History hist;
  hist.init(env.spec.dim);
  for (int t = 1; t <= rounds; ++t) {
    auto ctx = slb::sample_contexts(env.spec, rng, t);
    int arm = uniform.select_arm(t, ctx, rng);
    auto [reward, eps] = slb::realize_reward(env.spec, ctx.vectors[static_cast<size_t>(arm)], rng);
    hist.add(ctx.vectors[static_cast<size_t>(arm)], reward);
  }
  Eigen::MatrixXd X = hist.design();
  Eigen::MatrixXd gram = X.transpose() * X / rounds;

  nlohmann::json report;
  report["rounds"] = rounds;
  report["dim"] = env.spec.dim;

  const int s = std::max(1, sparse_s);
  try {
    auto exact = slb::sparse_eigen(gram, s, slb::EigenMode::Exact);
    report["sparse_eigen"] = {{"s", s},
                              {"phi_min", exact.phi_min},
                              {"phi_max", exact.phi_max},
                              {"certified", true}};
  } catch (const slb::BudgetError&) {
    auto greedy = slb::sparse_eigen(gram, s, slb::EigenMode::Greedy);
    report["sparse_eigen"] = {{"s", s},
                              {"phi_min", greedy.phi_min},
                              {"phi_max", greedy.phi_max},
                              {"certified", false}};
  }

  std::vector<int> support;
  for (int j = 0; j < env.spec.beta_star.size(); ++j)
    if (env.spec.beta_star[j] != 0.0) support.push_back(j);
  if (!support.empty() && support.size() <= 64) {
    auto compat = slb::compatibility(gram, support, 7.0, slb::CompatMethod::ProjectedDescent);
    report["compatibility"] = {{"support_size", support.size()},
                               {"value", compat.value},
                               {"cone_factor", 7.0}};
  }

  if (env.spec.num_arms >= 2) {
    // scale the h-grid by the observed gap distribution
    std::vector<double> probe;
    for (int i = 0; i < 200; ++i) {
      auto ctx = slb::sample_contexts(env.spec, rng, rounds + i);
      double best = -1e300, second = -1e300;
      for (const auto& x : ctx.vectors) {
        double v = x.dot(env.spec.beta_star);
        if (v > best) {
          second = best;
          best = v;
        } else if (v > second) {
          second = v;
        }
      }
      probe.push_back(best - second);
    }
    std::sort(probe.begin(), probe.end());
    const double scale = std::max(probe[probe.size() / 2], 1e-6);
    std::vector<double> grid;
    for (int k = 1; k <= 20; ++k) grid.push_back(scale * k / 10.0);
    auto fit = slb::margin_exponent(env.spec, grid, 20000, rng);
    report["margin"] = {{"omega", fit.is_infinite ? -1.0 : fit.omega},
                        {"infinite", fit.is_infinite}};
  }

  std::ofstream out(out_path);
  out << report.dump(2) << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              const std::string& values_csv, const std::string& output_root) {
  auto base = slb::load_config(config_path);
  std::vector<std::string> values;
  std::stringstream ss(values_csv);
  std::string v;
  while (std::getline(ss, v, ',')) values.push_back(v);
  if (values.empty()) throw slb::ConfigError("sweep: no values given");

  int exit_code = 0;
  std::string sweep_summary = "value,policy,t,mean_cum_regret,stddev,ci95_half\n";
  for (const auto& value : values) {
    auto cfg = slb::override_config(base, param, value);
    cfg.output_dir = base.output_dir + "/sweep_" + value;
    auto result = slb::run_experiment(cfg, output_root);
    exit_code = std::max(exit_code, result.exit_code);
    char a[64], b[64], c[64];
    for (const auto& row : result.summary) {
      std::snprintf(a, sizeof(a), "%.17g", row.mean);
      std::snprintf(b, sizeof(b), "%.17g", row.stddev);
      std::snprintf(c, sizeof(c), "%.17g", row.ci95_half);
      sweep_summary += value + "," + row.policy + "," + std::to_string(row.t) + "," + a + "," +
                       b + "," + c + "\n";
    }
    std::cout << param << " = " << value << " -> " << result.out_dir << "\n";
  }
  std::filesystem::path root = output_root.empty()
                                   ? std::filesystem::path(base.output_dir)
                                   : std::filesystem::path(output_root) / base.output_dir;
  std::filesystem::create_directories(root);
  std::ofstream out(root / "sweep_summary.csv");
  out << sweep_summary;
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse linear contextual bandit laboratory"};
  app.require_subcommand(1);

  std::string config_path, output_root = output_root_from_env();

  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--output-root", output_root, "prefix for relative output dirs");

  std::string csv_path, label_col = "label", ingest_out;
  bool log2 = false;
  auto* ingest = app.add_subcommand("ingest", "parse a dataset and fit the reference model");
  ingest->add_option("csv", csv_path, "delimited data file")->required();
  ingest->add_option("--label-col", label_col, "binary label column name");
  ingest->add_flag("--log2", log2, "apply log2(1+x) to features");
  ingest->add_option("--out", ingest_out, "directory for bundle metadata");

  int diag_rounds = 200, diag_s = 2;
  std::string diag_out = "diagnostics.json";
  auto* diagnose = app.add_subcommand("diagnose", "design diagnostics on a simulated run");
  diagnose->add_option("config", config_path, "config file")->required();
  diagnose->add_option("--rounds", diag_rounds, "exploration rounds");
  diagnose->add_option("--sparse-s", diag_s, "sparsity level for eigen bounds");
  diagnose->add_option("--out", diag_out, "output JSON path");

  std::string summary_path, plot_out = "regret.svg";
  auto* plot = app.add_subcommand("plot", "render a regret plot from a summary CSV");
  plot->add_option("summary", summary_path, "summary.csv from a run")->required();
  plot->add_option("--out", plot_out, "output SVG path");

  std::string sweep_param, sweep_values;
  auto* sweep = app.add_subcommand("sweep", "run the config once per parameter value");
  sweep->add_option("config", config_path, "config file")->required();
  sweep->add_option("--param", sweep_param, "config key to vary")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_option("--output-root", output_root, "prefix for relative output dirs");

  slb::MimicSpec mimic_spec;
  std::string mimic_out = "mimic.csv";
  auto* mimic = app.add_subcommand("mimic", "generate the synthetic dataset mimic");
  mimic->add_option("--out", mimic_out, "output CSV path");
  mimic->add_option("--rows", mimic_spec.rows, "sample count");
  mimic->add_option("--cols", mimic_spec.cols, "feature count");
  mimic->add_option("--class1", mimic_spec.class1_count, "positive-class count");
  mimic->add_option("--sparsity", mimic_spec.sparsity, "nonzeros in the generating parameter");
  mimic->add_option("--seed", mimic_spec.seed, "generator seed");

  try {
    app.parse(argc, argv);
    if (run->parsed()) return cmd_run(config_path, output_root);
    if (ingest->parsed()) return cmd_ingest(csv_path, label_col, log2, ingest_out);
    if (diagnose->parsed()) return cmd_diagnose(config_path, diag_rounds, diag_s, diag_out);
    if (plot->parsed()) {
      slb::emit_plot(read_summary_csv(summary_path), plot_out);
      std::cout << "wrote " << plot_out << "\n";
      return 0;
    }
    if (sweep->parsed()) return cmd_sweep(config_path, sweep_param, sweep_values, output_root);
    if (mimic->parsed()) {
      slb::write_mimic_csv(slb::make_gravier_mimic(mimic_spec), mimic_out);
      std::cout << "wrote " << mimic_out << "\n";
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
