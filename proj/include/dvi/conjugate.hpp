#pragma once

#include <Eigen/Dense>
#include <utility>

namespace dvi {

struct GaussianPrior {
  Eigen::VectorXd mu0;      // length M
  Eigen::MatrixXd lambda0;  // MxM precision, symmetric positive definite

  /// mu0 = 0, lambda0 = alpha * I.
  static GaussianPrior standard(int m, double alpha = 1.0);
  int dim() const { return static_cast<int>(mu0.size()); }
};

/// Observation noise sigma^2, stored as log sigma^2 for unconstrained search.
class NoiseModel {
 public:
  explicit NoiseModel(double sigma2);
  static NoiseModel from_log(double log_sigma2);
  double sigma2() const;
  double log_sigma2() const { return log_sigma2_; }
  void set_log_sigma2(double v) { log_sigma2_ = v; }

 private:
  double log_sigma2_;
};

struct GaussianPosterior {
  Eigen::VectorXd mu_n;
  Eigen::MatrixXd lambda_n;
  Eigen::LLT<Eigen::MatrixXd> chol;  // factor of lambda_n

  Eigen::MatrixXd covariance() const;
  /// Draw one sample (mu_n + L^-T z).
  Eigen::VectorXd sample(Eigen::VectorXd z) const;
};

/// SPD Cholesky with jitter escalation (1e-10 -> 1e-6 of the mean diagonal);
/// throws NumericalError naming the smallest eigenvalue estimate.
Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& a);

GaussianPosterior fit_posterior(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                                const GaussianPrior& prior, const NoiseModel& noise);

/// Predictive mean and variance at a feature vector (Gaussian likelihood).
std::pair<double, double> predictive(const Eigen::VectorXd& phi_x,
                                     const GaussianPosterior& post,
                                     const NoiseModel& noise);

/// log N(y | Phi mu0, sigma^2 I + Phi Lambda0^-1 Phi^T); N-dimensional form
/// for N <= 512, Woodbury M-dimensional form beyond that.
double log_evidence(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                    const GaussianPrior& prior, const NoiseModel& noise);

/// Scalar-prior-precision conjugate model with (alpha, sigma^2) chosen by
/// maximizing log evidence on a log-spaced grid plus local refinement.
struct EvidenceFit {
  double alpha = 1.0;
  double sigma2 = 1.0;
  double log_evidence = 0.0;
  GaussianPosterior posterior;
};
EvidenceFit fit_evidence_baseline(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y);

}  // namespace dvi
