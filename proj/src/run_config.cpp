#include "dvi/run_config.hpp"

#include <fstream>
#include <set>

#include "dvi/errors.hpp"

namespace dvi {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + key + "'");
  }
}

}  // namespace

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("missing config file: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON (" + path.string() + "): " + e.what());
  }
  return parse(j);
}

RunConfig RunConfig::parse(const json& j) {
  reject_unknown(j, {"dataset", "model", "schedule", "train", "eval", "out_dir", "seeds",
                     "baseline"},
                 "config");
  RunConfig cfg;

  if (!j.contains("dataset")) throw ConfigError("config needs a 'dataset' section");
  const json& ds = j.at("dataset");
  reject_unknown(ds, {"csv", "synthetic"}, "dataset");
  if (ds.contains("csv") == ds.contains("synthetic")) {
    throw ConfigError("dataset needs exactly one of 'csv' or 'synthetic'");
  }
  if (ds.contains("csv")) {
    cfg.dataset.csv_path = ds.at("csv").get<std::string>();
  } else {
    const json& sy = ds.at("synthetic");
    reject_unknown(sy, {"kind", "n", "d", "noise", "seed"}, "dataset.synthetic");
    SyntheticConfig sc;
    sc.kind = sy.at("kind").get<std::string>();
    sc.opts.n = get_or(sy, "n", 0);
    sc.opts.d = get_or(sy, "d", 0);
    sc.opts.noise = get_or(sy, "noise", -1.0);
    sc.seed = get_or<uint64_t>(sy, "seed", 0);
    cfg.dataset.synthetic = sc;
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m,
                   {"feature_hidden", "feature_dim", "aux_dim", "n_outputs",
                    "generator_hidden", "score_hidden", "identity_features",
                    "identity_generator", "score_residual", "likelihood", "sigma2_init"},
                   "model");
    cfg.feature_hidden = get_or(m, "feature_hidden", cfg.feature_hidden);
    cfg.feature_dim = get_or(m, "feature_dim", cfg.feature_dim);
    cfg.aux_dim = get_or(m, "aux_dim", cfg.aux_dim);
    cfg.n_outputs = get_or(m, "n_outputs", cfg.n_outputs);
    cfg.generator_hidden = get_or(m, "generator_hidden", cfg.generator_hidden);
    cfg.score_hidden = get_or(m, "score_hidden", cfg.score_hidden);
    cfg.identity_features = get_or(m, "identity_features", cfg.identity_features);
    cfg.identity_generator = get_or(m, "identity_generator", cfg.identity_generator);
    cfg.score_residual = get_or(m, "score_residual", cfg.score_residual);
    if (m.contains("likelihood")) {
      cfg.likelihood = likelihood_from_string(m.at("likelihood").get<std::string>());
    }
    cfg.sigma2_init = get_or(m, "sigma2_init", cfg.sigma2_init);
    if (cfg.sigma2_init <= 0.0) throw ConfigError("sigma2_init must be > 0");
  }

  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    reject_unknown(s, {"lambda", "g", "horizon", "steps", "sigma0_sq"}, "schedule");
    cfg.schedule.lambda = get_or(s, "lambda", cfg.schedule.lambda);
    cfg.schedule.g = get_or(s, "g", cfg.schedule.g);
    cfg.schedule.horizon = get_or(s, "horizon", cfg.schedule.horizon);
    cfg.schedule.steps = get_or(s, "steps", cfg.schedule.steps);
    cfg.schedule.sigma0_sq = get_or(s, "sigma0_sq", cfg.schedule.sigma0_sq);
    cfg.schedule.validate();
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t,
                   {"epochs", "batch_size", "lr", "lr_log_sigma2", "weight_decay",
                    "n_paths", "n_eval_paths", "patience", "eval_interval", "seed"},
                   "train");
    cfg.train.epochs = get_or(t, "epochs", cfg.train.epochs);
    cfg.train.batch_size = get_or(t, "batch_size", cfg.train.batch_size);
    cfg.train.lr = get_or(t, "lr", cfg.train.lr);
    cfg.train.lr_log_sigma2 = get_or(t, "lr_log_sigma2", cfg.train.lr_log_sigma2);
    cfg.train.weight_decay = get_or(t, "weight_decay", cfg.train.weight_decay);
    cfg.train.n_paths = get_or(t, "n_paths", cfg.train.n_paths);
    cfg.train.n_eval_paths = get_or(t, "n_eval_paths", cfg.train.n_eval_paths);
    cfg.train.patience = get_or(t, "patience", cfg.train.patience);
    cfg.train.eval_interval = get_or(t, "eval_interval", cfg.train.eval_interval);
    cfg.train.seed = get_or<uint64_t>(t, "seed", cfg.train.seed);
    cfg.train.validate();
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown(e, {"n_samples"}, "eval");
    cfg.eval_samples = get_or(e, "n_samples", cfg.eval_samples);
    if (cfg.eval_samples < 1) throw ConfigError("eval.n_samples must be >= 1");
  }

  cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("seed list must be nonempty");
  }
  cfg.baseline = get_or(j, "baseline", cfg.baseline);
  return cfg;
}

nlohmann::json RunConfig::to_json() const {
  json j;
  if (dataset.synthetic) {
    j["dataset"]["synthetic"] = {{"kind", dataset.synthetic->kind},
                                 {"n", dataset.synthetic->opts.n},
                                 {"d", dataset.synthetic->opts.d},
                                 {"noise", dataset.synthetic->opts.noise},
                                 {"seed", dataset.synthetic->seed}};
  } else {
    j["dataset"]["csv"] = dataset.csv_path;
  }
  j["model"] = {{"feature_hidden", feature_hidden},
                {"feature_dim", feature_dim},
                {"aux_dim", aux_dim},
                {"n_outputs", n_outputs},
                {"generator_hidden", generator_hidden},
                {"score_hidden", score_hidden},
                {"identity_features", identity_features},
                {"identity_generator", identity_generator},
                {"score_residual", score_residual},
                {"likelihood", to_string(likelihood)},
                {"sigma2_init", sigma2_init}};
  j["schedule"] = {{"lambda", schedule.lambda},
                   {"g", schedule.g},
                   {"horizon", schedule.horizon},
                   {"steps", schedule.steps},
                   {"sigma0_sq", schedule.sigma0_sq}};
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"lr", train.lr},
                {"lr_log_sigma2", train.lr_log_sigma2},
                {"weight_decay", train.weight_decay},
                {"n_paths", train.n_paths},
                {"n_eval_paths", train.n_eval_paths},
                {"patience", train.patience},
                {"eval_interval", train.eval_interval},
                {"seed", train.seed}};
  j["eval"] = {{"n_samples", eval_samples}};
  j["out_dir"] = out_dir;
  j["seeds"] = seeds;
  j["baseline"] = baseline;
  return j;
}

Dataset RunConfig::load_dataset(const std::filesystem::path& base_dir) const {
  if (dataset.synthetic) {
    return make_synthetic(dataset.synthetic->kind, dataset.synthetic->seed,
                          dataset.synthetic->opts);
  }
  std::filesystem::path p(dataset.csv_path);
  if (p.is_relative() && !std::filesystem::exists(p)) {
    std::filesystem::path alt = base_dir / p;
    if (std::filesystem::exists(alt)) p = alt;
  }
  if (!std::filesystem::exists(p)) {
    throw ConfigError("missing dataset file: " + dataset.csv_path);
  }
  return load_csv(p);
}

BundleSpec RunConfig::bundle_spec(int input_dim) const {
  BundleSpec spec;
  spec.input_dim = input_dim;
  spec.feature_hidden = feature_hidden;
  spec.feature_dim = identity_features ? input_dim : feature_dim;
  spec.aux_dim = aux_dim;
  spec.n_outputs = n_outputs;
  spec.generator_hidden = generator_hidden;
  spec.score_hidden = score_hidden;
  spec.identity_features = identity_features;
  spec.identity_generator = identity_generator;
  spec.score_residual = score_residual;
  spec.likelihood = likelihood;
  spec.sigma2 = sigma2_init;
  spec.schedule = schedule;
  return spec;
}

}  // namespace dvi
