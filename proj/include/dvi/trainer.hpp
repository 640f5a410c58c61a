#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dvi/data.hpp"
#include "dvi/elbo.hpp"
#include "dvi/model.hpp"

namespace dvi {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double lr = 1e-3;             // theta, psi, gamma
  double lr_log_sigma2 = 1e-2;  // noise parameter
  double weight_decay = 1e-4;
  int n_paths = 16;       // reverse paths per training step
  int n_eval_paths = 128; // posterior samples per validation pass
  uint64_t seed = 0;
  int patience = 20;      // evaluations without val-NLL improvement
  int eval_interval = 1;  // epochs between validation passes
  double max_skip_fraction = 0.01;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_elbo = 0.0;
  double val_nll = 0.0;
  double val_rmse = 0.0;  // classification: error rate
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelBundle best;          // snapshot with the lowest validation NLL
  ModelBundle final_state;   // parameters after the last step
  std::vector<EpochLog> log;
  double best_val_nll = 0.0;
  int best_epoch = 0;
  int skipped_steps = 0;
  int total_steps = 0;
};

using EpochCallback = std::function<void(const ModelBundle&, const EpochLog&)>;

/// Joint stochastic-gradient ELBO training of (theta, psi, gamma, log sigma^2).
TrainResult train(const ModelBundle& init, const Splits& splits, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Exclude the feature net from subsequent updates.
void freeze_features(ModelBundle& bundle);

void write_epoch_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log);

/// Validation metrics of a bundle on one split (NLL plus RMSE or error rate).
std::pair<double, double> evaluate_split(const ModelBundle& bundle, const Dataset& ds,
                                         int n_samples, Rng& rng);

}  // namespace dvi
