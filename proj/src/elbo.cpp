#include "dvi/elbo.hpp"

#include <cmath>
#include <numbers>

#include "dvi/errors.hpp"

namespace dvi {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

double LikelihoodBatch::scale() const {
  int b = batch_size();
  if (b == 0) return 0.0;
  return static_cast<double>(dataset_size) / b;
}

void LikelihoodBatch::validate(const ModelBundle& bundle) const {
  if (batch_size() == 0) return;
  if (x.cols() != bundle.input_dim()) {
    throw ConfigError("batch inputs have dimension " + std::to_string(x.cols()) +
                      ", model expects " + std::to_string(bundle.input_dim()));
  }
  if (bundle.likelihood == Likelihood::kGaussian) {
    if (y.size() != batch_size()) {
      throw ConfigError("batch y length " + std::to_string(y.size()) +
                        " != batch size " + std::to_string(batch_size()));
    }
  } else if (static_cast<int>(labels.size()) != batch_size()) {
    throw ConfigError("batch labels length does not match batch size");
  }
  if (dataset_size < batch_size()) {
    throw ConfigError("dataset_size smaller than the batch");
  }
}

NoiseBundle draw_noise_bundle(const DiffusionSchedule& sched, int n_paths, int aux_dim,
                              Rng& rng) {
  sched.validate();
  if (n_paths < 1) throw ConfigError("need n_paths >= 1");
  NoiseBundle nb;
  nb.init = Tensor({n_paths, aux_dim});
  rng.fill_normal(nb.init.values());
  nb.step_noise.reserve(static_cast<size_t>(sched.steps));
  for (int s = 0; s < sched.steps; ++s) {
    Tensor eps({n_paths, aux_dim});
    rng.fill_normal(eps.values());
    nb.step_noise.push_back(std::move(eps));
  }
  return nb;
}

double ElboTerms::mc_stderr() const {
  size_t n = per_path.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : per_path) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : per_path) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

void ElboTerms::check_finite() const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite ELBO term '") + name + "'");
    }
  };
  check(l1, "l1");
  check(ref_terminal, "reference_terminal");
  check(prior, "prior");
  check(likelihood, "likelihood");
}

ElboGraph build_elbo_graph(const ModelBundle& bundle, const LikelihoodBatch& batch,
                           const NoiseBundle& noise) {
  bundle.validate();
  batch.validate(bundle);
  const DiffusionSchedule& sched = bundle.schedule;
  if (noise.step_noise.size() != static_cast<size_t>(sched.steps) ||
      noise.init.cols() != bundle.aux_dim()) {
    throw ConfigError("noise bundle does not match schedule/aux dimensions");
  }
  int n = noise.n_paths();
  int k = bundle.aux_dim();
  double dt = sched.dt();

  ElboGraph gph;
  ad::Tape& tape = gph.tape;
  for (const Tensor& t : bundle.theta) gph.theta.push_back(tape.input(t));
  for (const Tensor& t : bundle.psi) gph.psi.push_back(tape.input(t));
  for (const Tensor& t : bundle.gamma) gph.gamma.push_back(tape.input(t));
  gph.log_sigma2 = tape.input(bundle.log_sigma2);

  // Reverse diffusion, reparameterized: noise enters as constants.
  ad::Var state = tape.scale(tape.input(noise.init), std::sqrt(sched.sigma0_sq));
  ad::Var l1_vec;  // n x 1, the Riemann sum per path
  for (int s = 0; s < sched.steps; ++s) {
    double t_rev = s * dt;
    double u = sched.horizon - t_rev;
    double lam = sched.lambda_at(u), g = sched.g_at(u);
    double inv_kappa = 1.0 / kappa(sched, u);
    ad::Var score = score_forward(tape, bundle.score_cfg, gph.gamma, sched, u, state);
    ad::Var diff = tape.add(tape.scale(state, inv_kappa), score);
    ad::Var contrib = tape.scale(tape.row_sum(tape.square(diff)), 0.5 * g * g * dt);
    l1_vec = s == 0 ? contrib : tape.add(l1_vec, contrib);
    // omega' = omega (1 + lambda dt) + g^2 dt score + g sqrt(dt) eps
    Tensor eps = noise.step_noise[static_cast<size_t>(s)];
    for (int64_t i = 0; i < eps.size(); ++i) eps[i] *= g * std::sqrt(dt);
    state = tape.add(tape.add(tape.scale(state, 1.0 + lam * dt),
                              tape.scale(score, g * g * dt)),
                     tape.input(std::move(eps)));
  }
  gph.terminal = state;
  double kl0 = gaussian_kl_zero_mean(sched.sigma0_sq, kappa(sched, sched.horizon), k);
  ad::Var l1_path = tape.add_const(l1_vec, kl0);

  // Terminal densities per path.
  ad::Var row_ssq = tape.row_sum(tape.square(state));  // n x 1
  ad::Var ref_vec = tape.add_const(tape.scale(row_ssq, -0.5 / sched.sigma0_sq),
                                   -0.5 * k * (kLog2Pi + std::log(sched.sigma0_sq)));
  ad::Var prior_vec = tape.add_const(tape.scale(row_ssq, -0.5), -0.5 * k * kLog2Pi);

  ad::Var base_vec = tape.sub(tape.sub(prior_vec, ref_vec), l1_path);  // n x 1
  ad::Var total = tape.scale(tape.sum(base_vec), 1.0 / n);

  std::vector<double> lik_per_path(static_cast<size_t>(n), 0.0);
  double lik_value = 0.0;
  int b = batch.batch_size();
  if (b > 0) {
    ad::Var beta = generate_weights(tape, bundle.generator, gph.psi, state);  // n x M*C
    ad::Var phi = mlp_forward(tape, bundle.feature_cfg, gph.theta, tape.input(batch.x));
    double w = batch.scale();
    if (bundle.likelihood == Likelihood::kGaussian) {
      ad::Var means = tape.matmul(phi, tape.transpose(beta));        // B x n
      ad::Var resid = tape.sub_col(means, tape.input(batch.y.reshaped({b, 1})));
      ad::Var sq_path = tape.col_sum_t(tape.square(resid));          // n x 1
      // log N terms: -ssq/(2 sigma^2) - (B/2) (ln 2pi + log sigma^2)
      ad::Var inv_2s2 = tape.scale(tape.exp_op(tape.neg(gph.log_sigma2)), 0.5);
      ad::Var quad = tape.neg(tape.mul_scalar(sq_path, inv_2s2));
      ad::Var logdet = tape.scale(tape.add_const(gph.log_sigma2, kLog2Pi), -0.5 * b);
      ad::Var ll_path = tape.add_scalar(quad, logdet);               // n x 1
      total = tape.add(total, tape.scale(tape.sum(ll_path), w / n));
      const Tensor& v = tape.value(ll_path);
      for (int j = 0; j < n; ++j) lik_per_path[static_cast<size_t>(j)] = w * v[j];
      lik_value = w * tape.value(tape.sum(ll_path)).item() / n;
    } else {
      int m = bundle.feature_dim(), c = bundle.n_outputs();
      ad::Var acc;
      for (int j = 0; j < n; ++j) {
        ad::Var bj = tape.reshape(tape.slice_rows(beta, j, j + 1), {m, c});
        ad::Var lp = tape.categorical_logprob_sum(tape.matmul(phi, bj), batch.labels);
        lik_per_path[static_cast<size_t>(j)] = w * tape.value(lp).item();
        acc = j == 0 ? lp : tape.add(acc, lp);
      }
      total = tape.add(total, tape.scale(acc, w / n));
      lik_value = w * tape.value(acc).item() / n;
    }
  }
  gph.total = total;

  // Value-side breakdown.
  ElboTerms& terms = gph.terms;
  const Tensor& l1_v = tape.value(l1_path);
  const Tensor& ref_v = tape.value(ref_vec);
  const Tensor& prior_v = tape.value(prior_vec);
  terms.per_path.resize(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    terms.l1 += l1_v[j] / n;
    terms.ref_terminal += ref_v[j] / n;
    terms.prior += prior_v[j] / n;
    terms.per_path[static_cast<size_t>(j)] =
        -l1_v[j] - ref_v[j] + prior_v[j] + lik_per_path[static_cast<size_t>(j)];
  }
  terms.likelihood = lik_value;
  terms.total = tape.value(total).item();
  return gph;
}

ElboTerms elbo_estimate(const ModelBundle& bundle, const LikelihoodBatch& batch,
                        int n_paths, Rng& rng) {
  NoiseBundle noise = draw_noise_bundle(bundle.schedule, n_paths, bundle.aux_dim(), rng);
  ElboGraph gph = build_elbo_graph(bundle, batch, noise);
  gph.terms.check_finite();
  return gph.terms;
}

}  // namespace dvi
