#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvi/data.hpp"
#include "dvi/model.hpp"
#include "dvi/trainer.hpp"

namespace dvi {

struct SyntheticConfig {
  std::string kind;
  SyntheticOptions opts;
  uint64_t seed = 0;
};

struct DatasetConfig {
  std::string csv_path;                       // one of the two is set
  std::optional<SyntheticConfig> synthetic;
};

/// Strict JSON run configuration; unknown keys are rejected everywhere.
struct RunConfig {
  DatasetConfig dataset;
  // model
  std::vector<int> feature_hidden = {50, 50};
  int feature_dim = 50;
  int aux_dim = 0;  // 0 -> feature_dim
  int n_outputs = 1;
  std::vector<int> generator_hidden = {64};
  std::vector<int> score_hidden = {64, 64};
  bool identity_features = false;
  bool identity_generator = false;
  bool score_residual = true;
  Likelihood likelihood = Likelihood::kGaussian;
  double sigma2_init = 1.0;

  DiffusionSchedule schedule;
  TrainConfig train;
  int eval_samples = 256;
  std::string out_dir = "runs/out";
  std::vector<uint64_t> seeds = {0};
  bool baseline = false;

  static RunConfig parse_file(const std::filesystem::path& path);
  static RunConfig parse(const nlohmann::json& j);
  nlohmann::json to_json() const;

  Dataset load_dataset(const std::filesystem::path& base_dir = ".") const;
  BundleSpec bundle_spec(int input_dim) const;
};

}  // namespace dvi
