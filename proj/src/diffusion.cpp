#include "dvi/diffusion.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "dvi/errors.hpp"

namespace dvi {

bool DiffusionSchedule::stationary() const {
  if (lambda <= 0.0) return false;
  return std::abs(sigma0_sq - g * g / (2.0 * lambda)) < 1e-12 * sigma0_sq;
}

void DiffusionSchedule::validate() const {
  if (horizon <= 0.0) throw ConfigError("schedule horizon T must be > 0");
  if (steps < 1) throw ConfigError("schedule needs S >= 1 steps");
  if (g < 0.0) throw ConfigError("diffusion coefficient g must be >= 0");
  if (sigma0_sq <= 0.0) throw ConfigError("sigma0^2 must be > 0");
}

double kappa(const DiffusionSchedule& sched, double t) {
  sched.validate();
  if (t < -1e-12 || t > sched.horizon + 1e-12) {
    throw ConfigError("kappa: t = " + std::to_string(t) + " outside [0, " +
                      std::to_string(sched.horizon) + "]");
  }
  double g2 = sched.g * sched.g;
  if (std::abs(sched.lambda) < 1e-12) {
    return sched.sigma0_sq + g2 * t;
  }
  double stat = g2 / (2.0 * sched.lambda);
  return stat + (sched.sigma0_sq - stat) * std::exp(-2.0 * sched.lambda * t);
}

double gaussian_kl_zero_mean(double var_a, double var_b, int dim) {
  return 0.5 * dim * (var_a / var_b - 1.0 + std::log(var_b / var_a));
}

Tensor ReferenceScore::eval(double t_fwd, const Tensor& omega) const {
  // Multiply by the reciprocal so the l1 integrand cancels bit-exactly when
  // the score equals the reference score.
  double inv_k = 1.0 / kappa(sched_, t_fwd);
  Tensor out = omega;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = -(out[i] * inv_k);
  return out;
}

GaussianTargetScore::GaussianTargetScore(const DiffusionSchedule& sched, Tensor mean,
                                         double var)
    : sched_(sched), mean_(std::move(mean)), var_(var) {
  if (var_ <= 0.0) throw ConfigError("Gaussian target variance must be > 0");
}

double GaussianTargetScore::variance_at(double t_fwd) const {
  double g2 = sched_.g * sched_.g;
  if (std::abs(sched_.lambda) < 1e-12) return var_ + g2 * t_fwd;
  double stat = g2 / (2.0 * sched_.lambda);
  return stat + (var_ - stat) * std::exp(-2.0 * sched_.lambda * t_fwd);
}

Tensor GaussianTargetScore::eval(double t_fwd, const Tensor& omega) const {
  double decay = std::exp(-sched_.lambda * t_fwd);
  double vt = variance_at(t_fwd);
  Tensor out = omega;
  for (int i = 0; i < out.rows(); ++i) {
    for (int j = 0; j < out.cols(); ++j) {
      out.at(i, j) = -(omega.at(i, j) - decay * mean_[j]) / vt;
    }
  }
  return out;
}

Tensor reference_score(const DiffusionSchedule& sched, const Tensor& omega, double t_rev) {
  if (t_rev < -1e-12 || t_rev > sched.horizon + 1e-12) {
    throw ConfigError("reference_score: reverse time out of range");
  }
  return ReferenceScore(sched).eval(sched.horizon - t_rev, omega);
}

Tensor time_features(double t_fwd, double horizon) {
  double u = t_fwd / horizon;
  double w = 2.0 * std::numbers::pi * u;
  return Tensor({kTimeFeatureDim},
                {u, std::sin(w), std::cos(w), std::sin(2.0 * w), std::cos(2.0 * w)});
}

MlpConfig ScoreNetConfig::mlp() const {
  return MlpConfig{aux_dim + kTimeFeatureDim, hidden_dims, aux_dim, activation};
}

void ScoreNetConfig::validate() const {
  if (aux_dim < 1) throw ConfigError("score net aux_dim must be >= 1");
  mlp().validate();
}

ScoreNet::ScoreNet(const ScoreNetConfig& cfg, std::span<const Tensor> params,
                   const DiffusionSchedule& sched)
    : cfg_(cfg), params_(params), sched_(sched) {
  cfg_.validate();
}

Tensor ScoreNet::eval(double t_fwd, const Tensor& omega) const {
  int n = omega.rows(), k = omega.cols();
  Tensor tf = time_features(t_fwd, sched_.horizon);
  Tensor in({n, k + kTimeFeatureDim});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) in.at(i, j) = omega.at(i, j);
    for (int j = 0; j < kTimeFeatureDim; ++j) in.at(i, k + j) = tf[j];
  }
  Tensor out = mlp_apply(cfg_.mlp(), params_, in);
  if (cfg_.residual_to_reference) {
    double inv_k = 1.0 / kappa(sched_, t_fwd);
    for (int64_t i = 0; i < out.size(); ++i) out[i] += -(omega[i] * inv_k);
  }
  return out;
}

ad::Var score_forward(ad::Tape& tape, const ScoreNetConfig& cfg,
                      std::span<const ad::Var> params, const DiffusionSchedule& sched,
                      double t_fwd, ad::Var omega) {
  int n = tape.value(omega).rows();
  Tensor tf = time_features(t_fwd, sched.horizon);
  Tensor tf_rows({n, kTimeFeatureDim});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < kTimeFeatureDim; ++j) tf_rows.at(i, j) = tf[j];
  ad::Var in = tape.concat_cols(omega, tape.input(std::move(tf_rows)));
  ad::Var out = mlp_forward(tape, cfg.mlp(), params, in);
  if (cfg.residual_to_reference) {
    out = tape.add(out, tape.scale(omega, -1.0 / kappa(sched, t_fwd)));
  }
  return out;
}

Tensor forward_step(const DiffusionSchedule& sched, const Tensor& omega, double t, Rng& rng) {
  sched.validate();
  double dt = sched.dt();
  if (t + dt > sched.horizon + 1e-9) {
    throw ConfigError("forward_step: t + dt exceeds the horizon");
  }
  double lam = sched.lambda_at(t), g = sched.g_at(t);
  double noise_scale = g * std::sqrt(dt);
  Tensor out = omega;
  for (int64_t i = 0; i < out.size(); ++i) {
    out[i] += -lam * out[i] * dt + noise_scale * rng.normal();
  }
  return out;
}

std::pair<Tensor, StepRecord> reverse_step_with_noise(const DiffusionSchedule& sched,
                                                      const ScoreFunction& score,
                                                      const Tensor& omega, int step_index,
                                                      const Tensor& eps) {
  sched.validate();
  if (step_index < 0 || step_index >= sched.steps) {
    throw ConfigError("reverse_step: step index " + std::to_string(step_index) +
                      " outside [0, " + std::to_string(sched.steps) + ")");
  }
  double dt = sched.dt();
  double t_rev = step_index * dt;
  double u = sched.horizon - t_rev;  // forward time
  double lam = sched.lambda_at(u), g = sched.g_at(u);

  StepRecord rec;
  rec.t_rev = t_rev;
  rec.score = score.eval(u, omega);
  if (!rec.score.all_finite()) {
    throw NumericalError("non-finite score output at reverse step " +
                         std::to_string(step_index));
  }
  rec.noise = eps;
  rec.drift = Tensor::zeros_like(omega);
  double noise_scale = g * std::sqrt(dt);
  Tensor out = omega;
  for (int64_t i = 0; i < out.size(); ++i) {
    double drift = (lam * omega[i] + g * g * rec.score[i]) * dt;
    rec.drift[i] = drift;
    out[i] += drift + noise_scale * eps[i];
  }
  return {std::move(out), std::move(rec)};
}

std::pair<Tensor, StepRecord> reverse_step(const DiffusionSchedule& sched,
                                           const ScoreFunction& score, const Tensor& omega,
                                           int step_index, Rng& rng) {
  Tensor eps = Tensor::zeros_like(omega);
  rng.fill_normal(eps.values());
  return reverse_step_with_noise(sched, score, omega, step_index, eps);
}

TrajectoryBatch simulate_reverse(const DiffusionSchedule& sched, const ScoreFunction& score,
                                 int n, int aux_dim, Rng& rng, bool record) {
  sched.validate();
  if (n < 1) throw ConfigError("simulate_reverse needs n >= 1 paths");
  if (aux_dim < 1) throw ConfigError("simulate_reverse needs aux_dim >= 1");
  TrajectoryBatch traj;
  traj.schedule = sched;
  traj.initial_noise = Tensor({n, aux_dim});
  rng.fill_normal(traj.initial_noise.values());

  double sigma0 = std::sqrt(sched.sigma0_sq);
  Tensor state = traj.initial_noise;
  for (int64_t i = 0; i < state.size(); ++i) state[i] *= sigma0;
  traj.states.reserve(static_cast<size_t>(sched.steps) + 1);
  if (record) traj.records.reserve(static_cast<size_t>(sched.steps));
  traj.states.push_back(state);
  for (int s = 0; s < sched.steps; ++s) {
    auto [next, rec] = reverse_step(sched, score, state, s, rng);
    state = std::move(next);
    if (record) {
      traj.records.push_back(std::move(rec));
      traj.states.push_back(state);
    }
  }
  if (!record) traj.states.push_back(std::move(state));
  return traj;
}

TrajectoryBatch replay(const DiffusionSchedule& sched, const ScoreFunction& score,
                       const TrajectoryBatch& traj) {
  if (traj.records.size() != static_cast<size_t>(sched.steps)) {
    throw ConfigError("replay needs a fully recorded trajectory batch");
  }
  TrajectoryBatch out;
  out.schedule = sched;
  out.initial_noise = traj.initial_noise;
  Tensor state = traj.initial_noise;
  double sigma0 = std::sqrt(sched.sigma0_sq);
  for (int64_t i = 0; i < state.size(); ++i) state[i] *= sigma0;
  out.states.push_back(state);
  for (int s = 0; s < sched.steps; ++s) {
    auto [next, rec] = reverse_step_with_noise(sched, score, state, s, traj.records[static_cast<size_t>(s)].noise);
    state = std::move(next);
    out.records.push_back(std::move(rec));
    out.states.push_back(state);
  }
  return out;
}

double l1_term(const TrajectoryBatch& traj, const DiffusionSchedule& sched,
               const ScoreFunction& score) {
  if (!(traj.schedule == sched)) {
    throw ConfigError("l1_term: trajectory batch was simulated under a different schedule");
  }
  if (traj.states.size() != static_cast<size_t>(sched.steps) + 1) {
    throw ConfigError("l1_term: need all intermediate states (record=true)");
  }
  int n = traj.n_paths();
  double dt = sched.dt();
  double acc = 0.0;
  for (int s = 0; s < sched.steps; ++s) {
    double u = sched.horizon - s * dt;
    double g = sched.g_at(u);
    double inv_kappa = 1.0 / kappa(sched, u);
    const Tensor& state = traj.states[static_cast<size_t>(s)];
    Tensor sc = score.eval(u, state);
    double ssq = 0.0;
    for (int64_t i = 0; i < state.size(); ++i) {
      double d = state[i] * inv_kappa + sc[i];
      ssq += d * d;
    }
    acc += 0.5 * g * g * ssq * dt / n;
  }
  return gaussian_kl_zero_mean(sched.sigma0_sq, kappa(sched, sched.horizon),
                               traj.aux_dim()) +
         acc;
}

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryBatch& traj) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot open trajectory dump: " + path.string());
  os << "step,t,omega_norm,score_norm\n";
  for (size_t s = 0; s < traj.records.size(); ++s) {
    const Tensor& st = traj.states[s];
    const Tensor& sc = traj.records[s].score;
    double sn = 0.0, cn = 0.0;
    for (int64_t i = 0; i < st.size(); ++i) sn += st[i] * st[i];
    for (int64_t i = 0; i < sc.size(); ++i) cn += sc[i] * sc[i];
    int n = std::max(1, st.rows());
    os << s << ',' << traj.records[s].t_rev << ',' << std::sqrt(sn / n) << ','
       << std::sqrt(cn / n) << '\n';
  }
}

}  // namespace dvi
