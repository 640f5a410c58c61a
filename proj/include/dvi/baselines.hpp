#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dvi/conjugate.hpp"
#include "dvi/data.hpp"
#include "dvi/mlp.hpp"
#include "dvi/tensor.hpp"

namespace dvi {

/// Feature matrix phi(X) for a plain MLP feature net.
Eigen::MatrixXd apply_features(const MlpConfig& cfg, std::span<const Tensor> theta,
                               const Eigen::MatrixXd& X);

/// Gaussian predictive metrics of a conjugate posterior on fixed features.
struct ConjugateMetrics {
  double nll = 0.0;
  double rmse = 0.0;
};
ConjugateMetrics conjugate_eval(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                                const GaussianPosterior& post, const NoiseModel& noise);

struct MapBaselineConfig {
  int epochs = 500;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int patience = 25;
  uint64_t seed = 0;
};

/// MAP-style baseline: fit the feature net plus a point-estimate linear head
/// by mean squared error, freeze the features, then place a conjugate last
/// layer on top with evidence-maximized (alpha, sigma^2).
struct MapBaselineResult {
  MlpConfig feature_cfg;
  std::vector<Tensor> theta;
  EvidenceFit fit;      // conjugate layer on the frozen train features
  double test_nll = 0.0;
  double test_rmse = 0.0;
  double val_rmse = 0.0;
};

MapBaselineResult run_map_baseline(const Splits& splits, const MlpConfig& feature_cfg,
                                   const MapBaselineConfig& cfg);

}  // namespace dvi
