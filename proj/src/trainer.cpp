#include "dvi/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "dvi/adamw.hpp"
#include "dvi/eigen_bridge.hpp"
#include "dvi/errors.hpp"
#include "dvi/metrics.hpp"

namespace dvi {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (n_paths < 1 || n_eval_paths < 1) throw ConfigError("path counts must be >= 1");
  if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(lr > 0.0) || !(lr_log_sigma2 > 0.0)) throw ConfigError("learning rates must be > 0");
  if (max_skip_fraction < 0.0) throw ConfigError("max_skip_fraction must be >= 0");
}

void freeze_features(ModelBundle& bundle) { bundle.train_theta = false; }

std::pair<double, double> evaluate_split(const ModelBundle& bundle, const Dataset& ds,
                                         int n_samples, Rng& rng) {
  auto mixtures = predict(bundle, ds.X, n_samples, rng);
  if (bundle.likelihood == Likelihood::kGaussian) {
    return {nll(mixtures, ds.y), rmse(mixtures, ds.y)};
  }
  auto lab = ds.labels();
  return {nll(mixtures, lab), 1.0 - accuracy(mixtures, lab)};
}

namespace {

std::vector<std::string> group_names(const std::string& prefix, size_t count) {
  std::vector<std::string> names;
  for (size_t i = 0; i < count; ++i) names.push_back(prefix + "." + std::to_string(i));
  return names;
}

LikelihoodBatch make_batch(const Dataset& ds, std::span<const int64_t> idx,
                           const ModelBundle& bundle) {
  LikelihoodBatch batch;
  int b = static_cast<int>(idx.size());
  batch.x = Tensor({b, ds.d()});
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < ds.d(); ++j) batch.x.at(i, j) = ds.X(idx[static_cast<size_t>(i)], j);
  }
  if (bundle.likelihood == Likelihood::kGaussian) {
    batch.y = Tensor({b});
    for (int i = 0; i < b; ++i) batch.y[i] = ds.y[idx[static_cast<size_t>(i)]];
  } else {
    batch.labels.resize(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
      batch.labels[static_cast<size_t>(i)] =
          static_cast<int>(std::lround(ds.y[idx[static_cast<size_t>(i)]]));
    }
  }
  batch.dataset_size = ds.n();
  return batch;
}

}  // namespace

TrainResult train(const ModelBundle& init, const Splits& splits, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  ModelBundle bundle = init;
  bundle.validate();
  splits.train.validate();
  splits.val.validate();
  if (splits.train.n() < 1 || splits.val.n() < 1) {
    throw DataError("training needs nonempty train and val splits");
  }

  Rng root(cfg.seed);
  AdamwConfig net_cfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  AdamwConfig sigma_cfg{cfg.lr_log_sigma2, 0.9, 0.999, 1e-8, 0.0};
  AdamwState opt_theta(bundle.theta, net_cfg);
  AdamwState opt_psi(bundle.psi, net_cfg);
  AdamwState opt_gamma(bundle.gamma, net_cfg);
  std::vector<Tensor> sigma_group{bundle.log_sigma2};
  AdamwState opt_sigma(sigma_group, sigma_cfg);
  auto theta_names = group_names("theta", bundle.theta.size());
  auto psi_names = group_names("psi", bundle.psi.size());
  auto gamma_names = group_names("gamma", bundle.gamma.size());
  std::vector<std::string> sigma_names{"log_sigma2"};

  TrainResult result;
  result.best = bundle;
  result.best_val_nll = std::numeric_limits<double>::infinity();
  int evals_since_best = 0;
  int64_t n_train = splits.train.n();
  std::vector<int64_t> order(static_cast<size_t>(n_train));
  for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;

  double last_val_nll = std::numeric_limits<double>::quiet_NaN();
  double last_val_rmse = std::numeric_limits<double>::quiet_NaN();
  bool stop = false;
  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    Rng epoch_rng = root.fork("epoch", static_cast<uint64_t>(epoch));
    {
      Rng shuffle_rng = epoch_rng.fork("shuffle");
      shuffle_rng.shuffle(order);
    }
    double elbo_sum = 0.0;
    int elbo_count = 0;
    for (int64_t start = 0, step = 0; start < n_train; start += cfg.batch_size, ++step) {
      int64_t stop_idx = std::min<int64_t>(start + cfg.batch_size, n_train);
      LikelihoodBatch batch = make_batch(
          splits.train, std::span(order).subspan(static_cast<size_t>(start),
                                                 static_cast<size_t>(stop_idx - start)),
          bundle);
      Rng noise_rng = epoch_rng.fork("noise", static_cast<uint64_t>(step));
      NoiseBundle noise =
          draw_noise_bundle(bundle.schedule, cfg.n_paths, bundle.aux_dim(), noise_rng);
      ++result.total_steps;
      ElboGraph gph = build_elbo_graph(bundle, batch, noise);
      if (!std::isfinite(gph.terms.total)) {
        ++result.skipped_steps;
        continue;
      }
      gph.tape.backward(gph.total);
      auto collect = [&](std::span<const ad::Var> vars) {
        std::vector<Tensor> grads;
        grads.reserve(vars.size());
        for (ad::Var v : vars) {
          Tensor g = gph.tape.grad(v);
          for (int64_t i = 0; i < g.size(); ++i) g[i] = -g[i];  // maximize the ELBO
          grads.push_back(std::move(g));
        }
        return grads;
      };
      std::vector<Tensor> g_theta = collect(gph.theta);
      std::vector<Tensor> g_psi = collect(gph.psi);
      std::vector<Tensor> g_gamma = collect(gph.gamma);
      std::vector<Tensor> g_sigma = collect({&gph.log_sigma2, 1});
      auto finite = [](const std::vector<Tensor>& gs) {
        for (const Tensor& g : gs) {
          if (!g.all_finite()) return false;
        }
        return true;
      };
      if (!finite(g_theta) || !finite(g_psi) || !finite(g_gamma) || !finite(g_sigma)) {
        ++result.skipped_steps;
        continue;
      }
      if (bundle.train_theta) opt_theta.step(bundle.theta, g_theta, theta_names);
      if (bundle.train_psi) opt_psi.step(bundle.psi, g_psi, psi_names);
      if (bundle.train_gamma) opt_gamma.step(bundle.gamma, g_gamma, gamma_names);
      if (bundle.train_log_sigma2) {
        sigma_group[0] = bundle.log_sigma2;
        opt_sigma.step(sigma_group, g_sigma, sigma_names);
        bundle.log_sigma2 = sigma_group[0];
      }
      elbo_sum += gph.terms.total;
      ++elbo_count;
    }

    if (result.total_steps >= 100 &&
        result.skipped_steps > cfg.max_skip_fraction * result.total_steps) {
      throw NumericalError("training aborted: " + std::to_string(result.skipped_steps) +
                           " of " + std::to_string(result.total_steps) +
                           " steps skipped (non-finite loss or gradients)");
    }

    bool eval_now = (epoch % cfg.eval_interval == 0) || epoch == cfg.epochs;
    if (eval_now) {
      Rng eval_rng = root.fork("eval", static_cast<uint64_t>(epoch));
      auto [val_nll, val_second] =
          evaluate_split(bundle, splits.val, cfg.n_eval_paths, eval_rng);
      last_val_nll = val_nll;
      last_val_rmse = val_second;
      if (std::isfinite(val_nll) && val_nll < result.best_val_nll) {
        result.best_val_nll = val_nll;
        result.best = bundle;
        result.best_epoch = epoch;
        evals_since_best = 0;
      } else {
        ++evals_since_best;
        if (evals_since_best >= cfg.patience) stop = true;
      }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(EpochLog{epoch, elbo_count > 0 ? elbo_sum / elbo_count
                                                        : std::numeric_limits<double>::quiet_NaN(),
                                  last_val_nll, last_val_rmse, secs});
    if (on_epoch) on_epoch(bundle, result.log.back());
  }
  result.final_state = bundle;
  if (!std::isfinite(result.best_val_nll)) {
    result.best = bundle;  // never evaluated to a finite NLL; keep last state
  }
  return result;
}

void write_epoch_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot open epoch log for writing: " + path.string());
  os.precision(12);
  os << "epoch,train_elbo,val_nll,val_rmse,wall_seconds\n";
  for (const EpochLog& row : log) {
    os << row.epoch << ',' << row.train_elbo << ',' << row.val_nll << ',' << row.val_rmse
       << ',' << row.wall_seconds << '\n';
  }
}

}  // namespace dvi
