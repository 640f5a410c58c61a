#include "dvi/conjugate.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dvi/errors.hpp"

namespace dvi {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

void check_design(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                  const GaussianPrior& prior) {
  if (phi.rows() != y.size()) {
    throw ConfigError("design matrix has " + std::to_string(phi.rows()) +
                      " rows but y has " + std::to_string(y.size()));
  }
  if (phi.cols() != prior.dim() || prior.lambda0.rows() != prior.dim() ||
      prior.lambda0.cols() != prior.dim()) {
    throw ConfigError("prior dimension " + std::to_string(prior.dim()) +
                      " does not match " + std::to_string(phi.cols()) + " features");
  }
}

}  // namespace

GaussianPrior GaussianPrior::standard(int m, double alpha) {
  GaussianPrior p;
  p.mu0 = Eigen::VectorXd::Zero(m);
  p.lambda0 = alpha * Eigen::MatrixXd::Identity(m, m);
  return p;
}

NoiseModel::NoiseModel(double sigma2) {
  if (!(sigma2 > 0.0)) {
    throw ConfigError("sigma^2 must be positive, got " + std::to_string(sigma2));
  }
  log_sigma2_ = std::log(sigma2);
}

NoiseModel NoiseModel::from_log(double log_sigma2) {
  NoiseModel m(1.0);
  m.log_sigma2_ = log_sigma2;
  return m;
}

double NoiseModel::sigma2() const { return std::exp(log_sigma2_); }

Eigen::MatrixXd GaussianPosterior::covariance() const {
  int m = static_cast<int>(mu_n.size());
  return chol.solve(Eigen::MatrixXd::Identity(m, m));
}

Eigen::VectorXd GaussianPosterior::sample(Eigen::VectorXd z) const {
  // lambda_n = L L^T, so cov = L^-T L^-1 and mu + L^-T z has the right law.
  chol.matrixU().solveInPlace(z);
  return mu_n + z;
}

Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& a) {
  double scale = a.diagonal().cwiseAbs().mean();
  if (scale <= 0.0) scale = 1.0;
  for (double jitter : {0.0, 1e-10, 1e-8, 1e-6}) {
    Eigen::MatrixXd m = a;
    if (jitter > 0.0) m.diagonal().array() += jitter * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  throw NumericalError("SPD factorization failed; smallest eigenvalue estimate " +
                       std::to_string(es.eigenvalues().minCoeff()));
}

GaussianPosterior fit_posterior(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                                const GaussianPrior& prior, const NoiseModel& noise) {
  check_design(phi, y, prior);
  double inv_s2 = 1.0 / noise.sigma2();
  GaussianPosterior post;
  post.lambda_n = prior.lambda0 + inv_s2 * (phi.transpose() * phi);
  // Keep the stored matrix exactly symmetric.
  post.lambda_n = 0.5 * (post.lambda_n + post.lambda_n.transpose()).eval();
  post.chol = spd_factor(post.lambda_n);
  post.mu_n = post.chol.solve(prior.lambda0 * prior.mu0 + inv_s2 * (phi.transpose() * y));
  return post;
}

std::pair<double, double> predictive(const Eigen::VectorXd& phi_x,
                                     const GaussianPosterior& post,
                                     const NoiseModel& noise) {
  if (phi_x.size() != post.mu_n.size()) {
    throw ConfigError("feature vector length " + std::to_string(phi_x.size()) +
                      " does not match posterior dimension " +
                      std::to_string(post.mu_n.size()));
  }
  double mean = phi_x.dot(post.mu_n);
  double var = noise.sigma2() + phi_x.dot(post.chol.solve(phi_x));
  return {mean, var};
}

double log_evidence(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                    const GaussianPrior& prior, const NoiseModel& noise) {
  check_design(phi, y, prior);
  auto n = phi.rows();
  double s2 = noise.sigma2();
  Eigen::VectorXd r = y - phi * prior.mu0;
  if (n <= 512) {
    auto prior_chol = spd_factor(prior.lambda0);
    Eigen::MatrixXd cov = s2 * Eigen::MatrixXd::Identity(n, n) +
                          phi * prior_chol.solve(phi.transpose());
    auto cov_chol = spd_factor(cov);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      logdet += 2.0 * std::log(cov_chol.matrixL()(i, i));
    }
    double quad = r.dot(cov_chol.solve(r));
    return -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + quad);
  }
  // Woodbury: logdet via Lambda_n and Lambda_0, quadratic via one M-dim solve.
  double inv_s2 = 1.0 / s2;
  Eigen::MatrixXd lambda_n = prior.lambda0 + inv_s2 * (phi.transpose() * phi);
  auto ln_chol = spd_factor(lambda_n);
  auto l0_chol = spd_factor(prior.lambda0);
  double logdet = static_cast<double>(n) * std::log(s2);
  for (Eigen::Index i = 0; i < lambda_n.rows(); ++i) {
    logdet += 2.0 * std::log(ln_chol.matrixL()(i, i));
    logdet -= 2.0 * std::log(l0_chol.matrixL()(i, i));
  }
  Eigen::VectorXd pr = phi.transpose() * r;
  double quad = inv_s2 * r.squaredNorm() - inv_s2 * inv_s2 * pr.dot(ln_chol.solve(pr));
  return -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + quad);
}

EvidenceFit fit_evidence_baseline(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y) {
  int m = static_cast<int>(phi.cols());
  double y_var = (y.array() - y.mean()).square().mean();
  if (y_var <= 0.0) y_var = 1.0;
  auto evaluate = [&](double log_alpha, double log_s2) {
    GaussianPrior prior = GaussianPrior::standard(m, std::exp(log_alpha));
    NoiseModel noise = NoiseModel::from_log(log_s2);
    return log_evidence(phi, y, prior, noise);
  };
  double best_la = 0.0, best_ls = std::log(y_var), best = -1e300;
  for (int ia = -8; ia <= 8; ++ia) {
    double la = 0.75 * ia;
    for (int is = -8; is <= 4; ++is) {
      double ls = std::log(y_var) + 0.75 * is;
      double ev = evaluate(la, ls);
      if (ev > best) {
        best = ev;
        best_la = la;
        best_ls = ls;
      }
    }
  }
  // Local refinement with a shrinking pattern search.
  double step = 0.4;
  for (int round = 0; round < 24; ++round) {
    bool improved = false;
    for (auto [da, ds] : {std::pair{step, 0.0}, {-step, 0.0}, {0.0, step}, {0.0, -step}}) {
      double ev = evaluate(best_la + da, best_ls + ds);
      if (ev > best) {
        best = ev;
        best_la += da;
        best_ls += ds;
        improved = true;
      }
    }
    if (!improved) step *= 0.5;
    if (step < 1e-4) break;
  }
  EvidenceFit fit;
  fit.alpha = std::exp(best_la);
  fit.sigma2 = std::exp(best_ls);
  fit.log_evidence = best;
  fit.posterior = fit_posterior(phi, y, GaussianPrior::standard(m, fit.alpha),
                                NoiseModel(fit.sigma2));
  return fit;
}

}  // namespace dvi
