#include "dvi/baselines.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "dvi/adamw.hpp"
#include "dvi/eigen_bridge.hpp"
#include "dvi/errors.hpp"
#include "dvi/rng.hpp"
#include "dvi/tape.hpp"

namespace dvi {

Eigen::MatrixXd apply_features(const MlpConfig& cfg, std::span<const Tensor> theta,
                               const Eigen::MatrixXd& X) {
  Tensor x({static_cast<int>(X.rows()), static_cast<int>(X.cols())});
  as_matrix(x) = X;
  Tensor phi = mlp_apply(cfg, theta, x);
  return as_matrix(phi);
}

ConjugateMetrics conjugate_eval(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                                const GaussianPosterior& post, const NoiseModel& noise) {
  constexpr double kLog2Pi = 1.8378770664093454836;
  ConjugateMetrics out;
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    auto [mean, var] = predictive(phi.row(i).transpose(), post, noise);
    double d = y[i] - mean;
    out.nll += 0.5 * (kLog2Pi + std::log(var) + d * d / var);
    out.rmse += d * d;
  }
  out.nll /= static_cast<double>(phi.rows());
  out.rmse = std::sqrt(out.rmse / static_cast<double>(phi.rows()));
  return out;
}

MapBaselineResult run_map_baseline(const Splits& splits, const MlpConfig& feature_cfg,
                                   const MapBaselineConfig& cfg) {
  splits.train.validate();
  splits.val.validate();
  Rng root(cfg.seed);
  Rng init_rng = root.fork("map/init");
  std::vector<Tensor> theta = init_mlp_params(feature_cfg, init_rng);
  // Point-estimate head on top of the features.
  MlpConfig head_cfg{feature_cfg.output_dim, {}, 1, Activation::kIdentity};
  Rng head_rng = root.fork("map/head");
  std::vector<Tensor> head = init_mlp_params(head_cfg, head_rng);

  std::vector<Tensor> all = theta;
  all.insert(all.end(), head.begin(), head.end());
  AdamwState opt(all, AdamwConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  int64_t n_train = splits.train.n();
  std::vector<int64_t> order(static_cast<size_t>(n_train));
  for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;

  auto val_mse = [&](const std::vector<Tensor>& params) {
    size_t nt = theta.size();
    std::span<const Tensor> th(params.data(), nt);
    std::span<const Tensor> hd(params.data() + nt, head.size());
    Eigen::MatrixXd phi = apply_features(feature_cfg, th, splits.val.X);
    Tensor phit = from_matrix(phi);
    Tensor pred = mlp_apply(head_cfg, hd, phit);
    double s = 0.0;
    for (Eigen::Index i = 0; i < splits.val.n(); ++i) {
      double d = pred[i] - splits.val.y[i];
      s += d * d;
    }
    return s / static_cast<double>(splits.val.n());
  };

  std::vector<Tensor> best = all;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng epoch_rng = root.fork("map/epoch", static_cast<uint64_t>(epoch));
    epoch_rng.shuffle(order);
    for (int64_t start = 0; start < n_train; start += cfg.batch_size) {
      int64_t stop = std::min<int64_t>(start + cfg.batch_size, n_train);
      int b = static_cast<int>(stop - start);
      Tensor xb({b, splits.train.d()});
      Tensor yb({b, 1});
      for (int i = 0; i < b; ++i) {
        int64_t r = order[static_cast<size_t>(start + i)];
        for (int j = 0; j < splits.train.d(); ++j) xb.at(i, j) = splits.train.X(r, j);
        yb.at(i, 0) = splits.train.y[r];
      }
      ad::Tape tape;
      std::vector<ad::Var> vars;
      for (const Tensor& p : all) vars.push_back(tape.input(p));
      std::span<const ad::Var> th(vars.data(), theta.size());
      std::span<const ad::Var> hd(vars.data() + theta.size(), head.size());
      ad::Var phi = mlp_forward(tape, feature_cfg, th, tape.input(xb));
      ad::Var pred = mlp_forward(tape, head_cfg, hd, phi);
      ad::Var loss = tape.scale(tape.sum(tape.square(tape.sub(pred, tape.input(yb)))),
                                1.0 / b);
      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(vars.size());
      bool ok = true;
      for (ad::Var v : vars) {
        grads.push_back(tape.grad(v));
        ok = ok && grads.back().all_finite();
      }
      if (!ok) continue;
      opt.step(all, grads);
    }
    double v = val_mse(all);
    if (v < best_val) {
      best_val = v;
      best = all;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  MapBaselineResult result;
  result.feature_cfg = feature_cfg;
  result.theta.assign(best.begin(), best.begin() + static_cast<int64_t>(theta.size()));
  result.val_rmse = std::sqrt(best_val);

  Eigen::MatrixXd phi_train = apply_features(feature_cfg, result.theta, splits.train.X);
  result.fit = fit_evidence_baseline(phi_train, splits.train.y);
  Eigen::MatrixXd phi_test = apply_features(feature_cfg, result.theta, splits.test.X);
  ConjugateMetrics m = conjugate_eval(phi_test, splits.test.y, result.fit.posterior,
                                      NoiseModel(result.fit.sigma2));
  result.test_nll = m.nll;
  result.test_rmse = m.rmse;
  return result;
}

}  // namespace dvi
