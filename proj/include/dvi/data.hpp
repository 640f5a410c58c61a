#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dvi/rng.hpp"

namespace dvi {

struct NormalizationStats {
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_std;  // floored at 1e-8 for constant columns
  double y_mean = 0.0;
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  bool classification = false;
  int n_classes = 1;
  std::optional<NormalizationStats> stats;  // present once normalized

  int64_t n() const { return X.rows(); }
  int d() const { return static_cast<int>(X.cols()); }
  std::vector<int> labels() const;
  void validate() const;
};

/// CSV with a header row; the last column is the target.
Dataset load_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const Dataset& ds);

/// Per-column mean/std of X and mean of y, from a training split only.
NormalizationStats compute_stats(const Dataset& train);
/// Standardize X columns and mean-center y (y is not scaled).
Dataset normalize(const Dataset& ds, const NormalizationStats& stats);
Dataset denormalize(const Dataset& ds);

struct Splits {
  Dataset train, val, test;
};

/// Seeded 0.72 / 0.18 / 0.10 split; train absorbs rounding remainders.
Splits split(const Dataset& ds, uint64_t seed);
/// split() then normalize all three parts with train-only stats.
Splits split_and_normalize(const Dataset& ds, uint64_t seed);

struct SyntheticOptions {
  int n = 0;             // 0 -> per-kind default
  int d = 0;
  double noise = -1.0;   // < 0 -> per-kind default
};

/// Kinds: linear, heteroscedastic, two_moons, heavy_tail, ood_cluster.
Dataset make_synthetic(const std::string& kind, uint64_t seed,
                       const SyntheticOptions& opts = {});

/// True weights used by the synthetic regression generators.
Eigen::VectorXd synthetic_true_weights(const std::string& kind, int d);

}  // namespace dvi
