#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dvi/mlp.hpp"
#include "dvi/rng.hpp"
#include "dvi/tensor.hpp"

namespace dvi {

/// Constant-coefficient schedule for the forward SDE
///   d omega = -lambda * omega dt + g dB,  t in [0, horizon],
/// discretized into `steps` Euler-Maruyama steps.
struct DiffusionSchedule {
  double lambda = 1.0;
  double g = 1.4142135623730951;  // sqrt(2)
  double horizon = 1.0;           // T
  int steps = 100;                // S
  double sigma0_sq = 1.0;

  double lambda_at(double /*t*/) const { return lambda; }
  double g_at(double /*t*/) const { return g; }
  double dt() const { return horizon / steps; }
  /// sigma0^2 == g^2 / (2 lambda): the reference process never moves.
  bool stationary() const;
  void validate() const;
  bool operator==(const DiffusionSchedule&) const = default;
};

/// Reference-process variance kappa_t: solution of
///   d kappa / dt = -2 lambda kappa + g^2,  kappa(0) = sigma0^2.
double kappa(const DiffusionSchedule& sched, double t);

/// KL(N(0, var_a I_dim) || N(0, var_b I_dim)).
double gaussian_kl_zero_mean(double var_a, double var_b, int dim);

/// Time-dependent score field; `t_fwd` is the forward time in [0, T] and
/// `omega` holds one state per row.
class ScoreFunction {
 public:
  virtual ~ScoreFunction() = default;
  virtual Tensor eval(double t_fwd, const Tensor& omega) const = 0;
};

/// Analytic score of the reference process: -omega / kappa_t.
class ReferenceScore : public ScoreFunction {
 public:
  explicit ReferenceScore(const DiffusionSchedule& sched) : sched_(sched) {}
  Tensor eval(double t_fwd, const Tensor& omega) const override;

 private:
  DiffusionSchedule sched_;
};

/// Exact score of a forward-diffused Gaussian N(mean, var I):
///   p_t = N(mean e^{-lambda t}, v_t I), v_t the usual OU variance path.
class GaussianTargetScore : public ScoreFunction {
 public:
  GaussianTargetScore(const DiffusionSchedule& sched, Tensor mean, double var);
  Tensor eval(double t_fwd, const Tensor& omega) const override;
  double variance_at(double t_fwd) const;

 private:
  DiffusionSchedule sched_;
  Tensor mean_;
  double var_;
};

/// -omega / kappa_{T-t} as a free function (reference_score in the docs).
Tensor reference_score(const DiffusionSchedule& sched, const Tensor& omega, double t_rev);

inline constexpr int kTimeFeatureDim = 5;
/// [u/T, sin(2 pi u/T), cos(2 pi u/T), sin(4 pi u/T), cos(4 pi u/T)].
Tensor time_features(double t_fwd, double horizon);

/// Learned score network over [omega, time features]. In residual mode the
/// MLP output is added to the reference score, so zero-initialized output
/// weights start the sampler exactly on the reference process.
struct ScoreNetConfig {
  int aux_dim = 1;
  std::vector<int> hidden_dims = {64, 64};
  Activation activation = Activation::kLeakyRelu;
  bool residual_to_reference = true;

  MlpConfig mlp() const;
  void validate() const;
};

class ScoreNet : public ScoreFunction {
 public:
  ScoreNet(const ScoreNetConfig& cfg, std::span<const Tensor> params,
           const DiffusionSchedule& sched);
  Tensor eval(double t_fwd, const Tensor& omega) const override;

 private:
  ScoreNetConfig cfg_;
  std::span<const Tensor> params_;
  DiffusionSchedule sched_;
};

/// Tape-side score evaluation (same math as ScoreNet::eval).
ad::Var score_forward(ad::Tape& tape, const ScoreNetConfig& cfg,
                      std::span<const ad::Var> params, const DiffusionSchedule& sched,
                      double t_fwd, ad::Var omega);

struct StepRecord {
  double t_rev = 0.0;   // reverse time at the start of the step
  Tensor drift;         // full drift term, already scaled by dt
  Tensor score;         // raw score output
  Tensor noise;         // standard normal draw
};

/// A batch of reverse-SDE paths; states[s] is the n x K state before step s,
/// states[steps] the terminal sample.
struct TrajectoryBatch {
  DiffusionSchedule schedule;
  std::vector<Tensor> states;
  std::vector<StepRecord> records;  // empty when recording is off
  Tensor initial_noise;             // standard normal used for states[0]

  int n_paths() const { return states.empty() ? 0 : states.front().rows(); }
  int aux_dim() const { return states.empty() ? 0 : states.front().cols(); }
  const Tensor& terminal() const { return states.back(); }
};

/// One forward Euler-Maruyama step at time t.
Tensor forward_step(const DiffusionSchedule& sched, const Tensor& omega, double t, Rng& rng);

/// One reverse step from states at reverse time step_index * dt:
///   omega' = omega + [lambda(T-t) omega + g(T-t)^2 s(T-t, omega)] dt
///            + g(T-t) sqrt(dt) eps.
std::pair<Tensor, StepRecord> reverse_step(const DiffusionSchedule& sched,
                                           const ScoreFunction& score, const Tensor& omega,
                                           int step_index, Rng& rng);
/// Same step with a caller-supplied standard normal draw.
std::pair<Tensor, StepRecord> reverse_step_with_noise(const DiffusionSchedule& sched,
                                                      const ScoreFunction& score,
                                                      const Tensor& omega, int step_index,
                                                      const Tensor& eps);

/// n reverse paths of dimension aux_dim from N(0, sigma0^2 I); terminal rows
/// are posterior samples.
TrajectoryBatch simulate_reverse(const DiffusionSchedule& sched, const ScoreFunction& score,
                                 int n, int aux_dim, Rng& rng, bool record = true);

/// Re-runs a recorded batch through its stored noise; bitwise identical states.
TrajectoryBatch replay(const DiffusionSchedule& sched, const ScoreFunction& score,
                       const TrajectoryBatch& traj);

/// Path-KL estimate: KL(N(0,sigma0^2 I) || N(0,kappa_T I)) plus the Riemann
/// sum of 1/2 g^2 ||omega/kappa + s||^2 dt, averaged over paths.
double l1_term(const TrajectoryBatch& traj, const DiffusionSchedule& sched,
               const ScoreFunction& score);

/// Diagnostic dump: one row per step with (step, t, mean ||omega||, mean ||score||).
void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryBatch& traj);

}  // namespace dvi
