#include "dvi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dvi/eigen_bridge.hpp"
#include "dvi/errors.hpp"

namespace dvi {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double logsumexp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

void PredictiveMixture::validate() const {
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(wsum - 1.0) > 1e-9) throw InvariantError("mixture weights do not sum to 1");
  if (classification) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      if (std::abs(probs.row(i).sum() - 1.0) > 1e-9) {
        throw InvariantError("class probabilities do not sum to 1");
      }
    }
  } else {
    for (double v : variances) {
      if (!(v > 0.0)) throw InvariantError("mixture variance must be positive");
    }
  }
}

double PredictiveMixture::mean() const {
  double m = 0.0;
  for (size_t i = 0; i < means.size(); ++i) m += weights[i] * means[i];
  return m;
}

double PredictiveMixture::variance() const {
  double m = mean(), v = 0.0;
  for (size_t i = 0; i < means.size(); ++i) {
    v += weights[i] * (variances[i] + (means[i] - m) * (means[i] - m));
  }
  return v;
}

double PredictiveMixture::log_density(double y) const {
  std::vector<double> lp(means.size());
  for (size_t i = 0; i < means.size(); ++i) {
    double d = y - means[i];
    lp[i] = std::log(weights[i]) - 0.5 * (kLog2Pi + std::log(variances[i])) -
            0.5 * d * d / variances[i];
  }
  return logsumexp(lp);
}

Eigen::VectorXd PredictiveMixture::mean_probs() const {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    p += weights[static_cast<size_t>(i)] * probs.row(i).transpose();
  }
  return p;
}

double PredictiveMixture::entropy() const {
  Eigen::VectorXd p = mean_probs();
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

std::vector<PredictiveMixture> predict(const ModelBundle& bundle, const Eigen::MatrixXd& X,
                                       int n_samples, Rng& rng) {
  bundle.validate();
  if (n_samples < 1) throw ConfigError("predict needs n_samples >= 1");
  ScoreNet score = bundle.score();
  TrajectoryBatch traj = simulate_reverse(bundle.schedule, score, n_samples,
                                          bundle.aux_dim(), rng, /*record=*/false);
  Tensor beta = generate_weights(bundle.generator, bundle.psi, traj.terminal());
  // beta rows: n_samples x (M*C)
  int n_test = static_cast<int>(X.rows());
  Tensor x_in({n_test, static_cast<int>(X.cols())});
  as_matrix(x_in) = X;
  Tensor phi = bundle.features(x_in);  // n_test x M

  std::vector<PredictiveMixture> out(static_cast<size_t>(n_test));
  int m = bundle.feature_dim(), c = bundle.n_outputs();
  double w = 1.0 / n_samples;
  if (bundle.likelihood == Likelihood::kGaussian) {
    double s2 = bundle.sigma2();
    Eigen::MatrixXd means = as_matrix(phi) * as_matrix(beta).transpose();  // n_test x n_samples
    for (int i = 0; i < n_test; ++i) {
      PredictiveMixture& mix = out[static_cast<size_t>(i)];
      mix.weights.assign(static_cast<size_t>(n_samples), w);
      mix.means.resize(static_cast<size_t>(n_samples));
      mix.variances.assign(static_cast<size_t>(n_samples), s2);
      for (int j = 0; j < n_samples; ++j) mix.means[static_cast<size_t>(j)] = means(i, j);
    }
  } else {
    for (int i = 0; i < n_test; ++i) {
      PredictiveMixture& mix = out[static_cast<size_t>(i)];
      mix.classification = true;
      mix.weights.assign(static_cast<size_t>(n_samples), w);
      mix.probs.resize(n_samples, c);
    }
    for (int j = 0; j < n_samples; ++j) {
      Eigen::Map<const MatrixRM> bj(beta.data() + static_cast<int64_t>(j) * m * c, m, c);
      Eigen::MatrixXd logits = as_matrix(phi) * bj;  // n_test x C
      for (int i = 0; i < n_test; ++i) {
        Eigen::VectorXd z = logits.row(i).transpose();
        double mx = z.maxCoeff();
        Eigen::VectorXd e = (z.array() - mx).exp();
        out[static_cast<size_t>(i)].probs.row(j) = (e / e.sum()).transpose();
      }
    }
  }
  return out;
}

double nll(std::span<const PredictiveMixture> mixtures, const Eigen::VectorXd& y) {
  if (static_cast<Eigen::Index>(mixtures.size()) != y.size()) {
    throw ConfigError("nll: mixture count does not match target count");
  }
  double s = 0.0;
  for (size_t i = 0; i < mixtures.size(); ++i) {
    s -= mixtures[i].log_density(y[static_cast<Eigen::Index>(i)]);
  }
  return s / static_cast<double>(mixtures.size());
}

double nll(std::span<const PredictiveMixture> mixtures, const std::vector<int>& labels) {
  if (mixtures.size() != labels.size()) {
    throw ConfigError("nll: mixture count does not match label count");
  }
  double s = 0.0;
  for (size_t i = 0; i < mixtures.size(); ++i) {
    Eigen::VectorXd p = mixtures[i].mean_probs();
    s -= std::log(std::max(p[labels[i]], 1e-300));
  }
  return s / static_cast<double>(mixtures.size());
}

double rmse(std::span<const PredictiveMixture> mixtures, const Eigen::VectorXd& y) {
  if (static_cast<Eigen::Index>(mixtures.size()) != y.size()) {
    throw ConfigError("rmse: mixture count does not match target count");
  }
  double s = 0.0;
  for (size_t i = 0; i < mixtures.size(); ++i) {
    double d = mixtures[i].mean() - y[static_cast<Eigen::Index>(i)];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(mixtures.size()));
}

double ece(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int n_bins) {
  if (probs.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw ConfigError("ece: probability rows do not match label count");
  }
  if (n_bins < 1) throw ConfigError("ece: need at least one bin");
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double rs = probs.row(i).sum();
    if (probs.row(i).minCoeff() < -1e-9 || std::abs(rs - 1.0) > 1e-6) {
      throw DataError("ece: row " + std::to_string(i) + " is not a probability vector");
    }
  }
  std::vector<double> conf_sum(static_cast<size_t>(n_bins), 0.0);
  std::vector<double> acc_sum(static_cast<size_t>(n_bins), 0.0);
  std::vector<int> count(static_cast<size_t>(n_bins), 0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg;
    double conf = probs.row(i).maxCoeff(&arg);
    int bin = std::min(n_bins - 1, static_cast<int>(conf * n_bins));
    conf_sum[static_cast<size_t>(bin)] += conf;
    acc_sum[static_cast<size_t>(bin)] += (arg == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
    count[static_cast<size_t>(bin)] += 1;
  }
  double total = static_cast<double>(probs.rows());
  double e = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    if (count[static_cast<size_t>(b)] == 0) continue;
    double cnt = count[static_cast<size_t>(b)];
    e += (cnt / total) * std::abs(acc_sum[static_cast<size_t>(b)] / cnt -
                                  conf_sum[static_cast<size_t>(b)] / cnt);
  }
  return e;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ConfigError("roc_auc: scores and labels must be nonempty and matched");
  }
  int64_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l != 0 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("roc_auc: both classes must be present");
  }
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Midranks over tied score groups.
  std::vector<double> rank(scores.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t t = i; t <= j; ++t) rank[idx[t]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] != 0) rank_sum += rank[t];
  }
  double u = rank_sum - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy(std::span<const PredictiveMixture> mixtures, const std::vector<int>& labels) {
  if (mixtures.size() != labels.size()) throw ConfigError("accuracy: size mismatch");
  double hits = 0.0;
  for (size_t i = 0; i < mixtures.size(); ++i) {
    Eigen::Index arg;
    mixtures[i].mean_probs().maxCoeff(&arg);
    if (arg == labels[i]) hits += 1.0;
  }
  return hits / static_cast<double>(mixtures.size());
}

Eigen::MatrixXd stack_mean_probs(std::span<const PredictiveMixture> mixtures) {
  if (mixtures.empty()) return {};
  Eigen::MatrixXd out(static_cast<Eigen::Index>(mixtures.size()), mixtures[0].probs.cols());
  for (size_t i = 0; i < mixtures.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = mixtures[i].mean_probs().transpose();
  }
  return out;
}

}  // namespace dvi
