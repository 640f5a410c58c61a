#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "dvi/model.hpp"
#include "dvi/rng.hpp"

namespace dvi {

/// Monte-Carlo predictive distribution at one test input: an equally
/// weighted mixture over posterior weight samples.
struct PredictiveMixture {
  std::vector<double> weights;
  std::vector<double> means;      // regression components
  std::vector<double> variances;  // regression components
  Eigen::MatrixXd probs;          // classification: one row per component
  bool classification = false;

  void validate() const;
  double mean() const;
  double variance() const;  // total mixture variance
  /// log density at y with log-sum-exp stabilization (regression).
  double log_density(double y) const;
  Eigen::VectorXd mean_probs() const;
  /// Entropy of the mean class probabilities (nats).
  double entropy() const;
};

/// Posterior-sample predictions at every row of X; one shared set of
/// n_samples reverse-diffusion draws feeds all inputs.
std::vector<PredictiveMixture> predict(const ModelBundle& bundle, const Eigen::MatrixXd& X,
                                       int n_samples, Rng& rng);

/// Mean negative log likelihood of regression mixtures.
double nll(std::span<const PredictiveMixture> mixtures, const Eigen::VectorXd& y);
/// Mean negative log likelihood of classification mixtures.
double nll(std::span<const PredictiveMixture> mixtures, const std::vector<int>& labels);

/// Root mean squared error of the mixture means.
double rmse(std::span<const PredictiveMixture> mixtures, const Eigen::VectorXd& y);

/// Expected calibration error over equal-width confidence bins.
double ece(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int n_bins = 15);

/// Rank-based ROC-AUC with midrank tie handling; labels are 0/1.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Mean classification accuracy under argmax of the mean probabilities.
double accuracy(std::span<const PredictiveMixture> mixtures, const std::vector<int>& labels);

Eigen::MatrixXd stack_mean_probs(std::span<const PredictiveMixture> mixtures);

}  // namespace dvi
