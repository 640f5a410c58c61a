// Command-line entry point: train | eval | oracle-check | benchmark | sample.
#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "dvi/baselines.hpp"
#include "dvi/data.hpp"
#include "dvi/eigen_bridge.hpp"
#include "dvi/elbo.hpp"
#include "dvi/errors.hpp"
#include "dvi/metrics.hpp"
#include "dvi/model.hpp"
#include "dvi/oracle_check.hpp"
#include "dvi/run_config.hpp"
#include "dvi/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int thread_budget() {
  if (const char* env = std::getenv("DVI_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

dvi::RunConfig load_config(const std::string& path) {
  if (!fs::exists(path)) {
    throw dvi::ConfigError("missing config file: " + path);
  }
  return dvi::RunConfig::parse_file(path);
}

struct SeedOutcome {
  uint64_t seed = 0;
  double nll = 0.0;
  double second = 0.0;  // rmse (regression) or error rate (classification)
  double baseline_nll = 0.0;
  double baseline_rmse = 0.0;
  bool has_baseline = false;
};

SeedOutcome run_one_seed(const dvi::RunConfig& cfg, const dvi::Dataset& raw, uint64_t seed,
                         const fs::path& out_dir) {
  dvi::Splits splits = dvi::split_and_normalize(raw, seed);
  dvi::Rng rng(seed);
  dvi::BundleSpec spec = cfg.bundle_spec(raw.d());
  dvi::ModelBundle bundle = dvi::make_bundle(spec, rng);
  dvi::TrainConfig tcfg = cfg.train;
  tcfg.seed = seed;
  dvi::TrainResult result = dvi::train(bundle, splits, tcfg);

  fs::create_directories(out_dir);
  dvi::save_bundle(out_dir / "model.ckpt", result.best);
  dvi::write_epoch_log_csv(out_dir / "epochs.csv", result.log);

  dvi::Rng eval_rng = dvi::Rng(seed).fork("test-eval");
  auto [test_nll, second] =
      dvi::evaluate_split(result.best, splits.test, cfg.eval_samples, eval_rng);

  SeedOutcome out;
  out.seed = seed;
  out.nll = test_nll;
  out.second = second;
  if (cfg.baseline && cfg.likelihood == dvi::Likelihood::kGaussian) {
    dvi::MapBaselineConfig bcfg;
    bcfg.seed = seed;
    dvi::MlpConfig feat_cfg{raw.d(), cfg.feature_hidden, cfg.feature_dim,
                            dvi::Activation::kLeakyRelu};
    dvi::MapBaselineResult base = dvi::run_map_baseline(splits, feat_cfg, bcfg);
    out.baseline_nll = base.test_nll;
    out.baseline_rmse = base.test_rmse;
    out.has_baseline = true;
  }
  json metrics = json::array();
  auto push_metric = [&](const std::string& name, double value) {
    metrics.push_back({{"metric", name}, {"value", value}, {"mc_stderr", 0.0}, {"n_seeds", 1}});
  };
  push_metric("nll", out.nll);
  push_metric(raw.classification ? "error_rate" : "rmse", out.second);
  if (out.has_baseline) {
    push_metric("baseline_nll", out.baseline_nll);
    push_metric("baseline_rmse", out.baseline_rmse);
  }
  std::ofstream(out_dir / "metrics.json") << metrics.dump(2) << "\n";
  return out;
}

std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

int cmd_train(const std::string& config_path, const std::string& out_override) {
  dvi::RunConfig cfg = load_config(config_path);
  dvi::Dataset raw = cfg.load_dataset(fs::path(config_path).parent_path());
  fs::path out_dir = out_override.empty() ? fs::path(cfg.out_dir) : fs::path(out_override);
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "config.json") << cfg.to_json().dump(2) << "\n";
  SeedOutcome outcome = run_one_seed(cfg, raw, cfg.train.seed, out_dir);
  std::cout << "test nll " << outcome.nll << ", "
            << (raw.classification ? "error_rate " : "rmse ") << outcome.second << "\n";
  std::cout << "wrote " << (out_dir / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path,
             const std::string& out_override) {
  if (!fs::exists(checkpoint)) throw dvi::ConfigError("missing checkpoint: " + checkpoint);
  dvi::RunConfig cfg = load_config(config_path);
  dvi::ModelBundle bundle = dvi::load_bundle(checkpoint);
  dvi::Dataset raw = cfg.load_dataset(fs::path(config_path).parent_path());
  dvi::Splits splits = dvi::split_and_normalize(raw, cfg.train.seed);
  dvi::Rng rng = dvi::Rng(cfg.train.seed).fork("cmd-eval");
  auto mixtures = dvi::predict(bundle, splits.test.X, cfg.eval_samples, rng);

  json metrics = json::array();
  auto push_metric = [&](const std::string& name, double value, double se) {
    metrics.push_back({{"metric", name}, {"value", value}, {"mc_stderr", se}, {"n_seeds", 1}});
  };
  if (bundle.likelihood == dvi::Likelihood::kGaussian) {
    push_metric("nll", dvi::nll(mixtures, splits.test.y), 0.0);
    push_metric("rmse", dvi::rmse(mixtures, splits.test.y), 0.0);
  } else {
    auto labels = splits.test.labels();
    push_metric("nll", dvi::nll(mixtures, labels), 0.0);
    push_metric("accuracy", dvi::accuracy(mixtures, labels), 0.0);
    push_metric("ece", dvi::ece(dvi::stack_mean_probs(mixtures), labels), 0.0);
  }
  fs::path out_dir = out_override.empty() ? fs::path(cfg.out_dir) : fs::path(out_override);
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "metrics.json") << metrics.dump(2) << "\n";
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_oracle_check(const std::string& config_path) {
  uint64_t seed = 0;
  if (!config_path.empty()) {
    dvi::RunConfig cfg = load_config(config_path);
    seed = cfg.train.seed;
  }
  auto checks = dvi::run_oracle_checks(seed);
  bool all_ok = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    all_ok = all_ok && c.pass;
  }
  if (!all_ok) throw dvi::InvariantError("oracle check failed");
  return 0;
}

int cmd_benchmark(const std::string& config_path, const std::string& seeds_csv,
                  const std::string& out_override) {
  dvi::RunConfig cfg = load_config(config_path);
  if (!seeds_csv.empty()) {
    cfg.seeds.clear();
    std::stringstream ss(seeds_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) cfg.seeds.push_back(std::stoull(tok));
    }
    if (cfg.seeds.empty()) throw dvi::ConfigError("empty --seeds list");
  }
  dvi::Dataset raw = cfg.load_dataset(fs::path(config_path).parent_path());
  fs::path out_dir = out_override.empty() ? fs::path(cfg.out_dir) : fs::path(out_override);
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "config.json") << cfg.to_json().dump(2) << "\n";

  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  int n_threads = std::min<int>(thread_budget(), static_cast<int>(cfg.seeds.size()));
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      uint64_t seed = cfg.seeds[i];
      outcomes[i] =
          run_one_seed(cfg, raw, seed, out_dir / ("seed_" + std::to_string(seed)));
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<double> nlls, seconds, base_nlls, base_rmses;
  for (const auto& o : outcomes) {
    nlls.push_back(o.nll);
    seconds.push_back(o.second);
    if (o.has_baseline) {
      base_nlls.push_back(o.baseline_nll);
      base_rmses.push_back(o.baseline_rmse);
    }
  }
  auto [nll_mean, nll_se] = mean_stderr(nlls);
  auto [sec_mean, sec_se] = mean_stderr(seconds);
  std::string second_name = raw.classification ? "ERROR" : "RMSE";

  std::ostringstream table;
  table << "| Method | NLL | " << second_name << " |\n";
  table << "|---|---|---|\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "| DVI-IBLL | %.3f +/- %.3f | %.3f +/- %.3f |\n",
                nll_mean, nll_se, sec_mean, sec_se);
  table << buf;
  json agg = {{"n_seeds", cfg.seeds.size()},
              {"nll", {{"mean", nll_mean}, {"stderr", nll_se}}},
              {second_name == "RMSE" ? "rmse" : "error_rate",
               {{"mean", sec_mean}, {"stderr", sec_se}}}};
  if (!base_nlls.empty()) {
    auto [bn_mean, bn_se] = mean_stderr(base_nlls);
    auto [br_mean, br_se] = mean_stderr(base_rmses);
    std::snprintf(buf, sizeof(buf), "| MAP + conjugate BLL | %.3f +/- %.3f | %.3f +/- %.3f |\n",
                  bn_mean, bn_se, br_mean, br_se);
    table << buf;
    agg["baseline"] = {{"nll", {{"mean", bn_mean}, {"stderr", bn_se}}},
                       {"rmse", {{"mean", br_mean}, {"stderr", br_se}}}};
  }
  std::cout << table.str();
  std::ofstream(out_dir / "benchmark.md") << table.str();
  std::ofstream(out_dir / "benchmark.json") << agg.dump(2) << "\n";
  return 0;
}

int cmd_sample(const std::string& checkpoint, int n, const std::string& out_override,
               bool dump_traj) {
  if (!fs::exists(checkpoint)) throw dvi::ConfigError("missing checkpoint: " + checkpoint);
  dvi::ModelBundle bundle = dvi::load_bundle(checkpoint);
  fs::path out_dir = out_override.empty() ? fs::path(".") : fs::path(out_override);
  fs::create_directories(out_dir);
  dvi::Rng rng = dvi::Rng(0).fork("cmd-sample");
  dvi::ScoreNet score = bundle.score();
  dvi::TrajectoryBatch traj =
      dvi::simulate_reverse(bundle.schedule, score, n, bundle.aux_dim(), rng, dump_traj);
  dvi::Tensor beta = dvi::generate_weights(bundle.generator, bundle.psi, traj.terminal());
  std::ofstream os(out_dir / "weight_samples.csv", std::ios::trunc);
  os.precision(12);
  int cols = beta.cols();
  for (int j = 0; j < cols; ++j) os << "beta" << j << (j + 1 < cols ? ',' : '\n');
  for (int i = 0; i < beta.rows(); ++i) {
    for (int j = 0; j < cols; ++j) os << beta.at(i, j) << (j + 1 < cols ? ',' : '\n');
  }
  if (dump_traj) {
    dvi::write_trajectory_csv(out_dir / "trajectories.csv", traj);
  }
  std::cout << "wrote " << (out_dir / "weight_samples.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion variational inference for implicit Bayesian last layers"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir, seeds_csv;
  int n_samples = 64;
  bool dump_traj = false;

  CLI::App* train = app.add_subcommand("train", "train a model from a config");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out", out_dir, "output directory (overrides config)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the config's dataset");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--config", config_path, "run config JSON")->required();
  eval->add_option("--out", out_dir, "output directory");

  CLI::App* oracle = app.add_subcommand("oracle-check", "run the conjugate-oracle suite");
  oracle->add_option("--config", config_path, "optional run config (seed only)");

  CLI::App* bench = app.add_subcommand("benchmark", "multi-seed benchmark with aggregation");
  bench->add_option("--config", config_path, "run config JSON")->required();
  bench->add_option("--seeds", seeds_csv, "comma-separated seed list (overrides config)");
  bench->add_option("--out", out_dir, "output directory");

  CLI::App* sample = app.add_subcommand("sample", "draw posterior weight samples");
  sample->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  sample->add_option("--n", n_samples, "number of samples");
  sample->add_option("--out", out_dir, "output directory");
  sample->add_flag("--trajectories", dump_traj, "also dump per-step trajectory stats");

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(config_path, out_dir);
    if (eval->parsed()) return cmd_eval(checkpoint, config_path, out_dir);
    if (oracle->parsed()) return cmd_oracle_check(config_path);
    if (bench->parsed()) return cmd_benchmark(config_path, seeds_csv, out_dir);
    if (sample->parsed()) return cmd_sample(checkpoint, n_samples, out_dir, dump_traj);
  } catch (const dvi::Error& e) {
    std::cerr << "error: code=" << e.exit_code() << " " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: code=1 " << e.what() << "\n";
    return 1;
  }
  return 0;
}
