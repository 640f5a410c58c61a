#include "dvi/oracle_check.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dvi/eigen_bridge.hpp"
#include "dvi/elbo.hpp"
#include "dvi/errors.hpp"
#include "dvi/metrics.hpp"
#include "dvi/trainer.hpp"

namespace dvi {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

/// RK4 integration of d kappa/dt = -2 lambda kappa + g^2.
double kappa_ode(const DiffusionSchedule& sched, double t, int n_steps) {
  double h = t / n_steps;
  double k = sched.sigma0_sq;
  auto f = [&](double kv) { return -2.0 * sched.lambda * kv + sched.g * sched.g; };
  for (int i = 0; i < n_steps; ++i) {
    double k1 = f(k);
    double k2 = f(k + 0.5 * h * k1);
    double k3 = f(k + 0.5 * h * k2);
    double k4 = f(k + h * k3);
    k += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return k;
}

}  // namespace

ConjugateFixture make_conjugate_fixture(uint64_t seed, int n, int d, int m, double sigma2,
                                        double feature_scale, double weight_scale) {
  Rng root(seed);
  ConjugateFixture fix;

  BundleSpec spec;
  spec.input_dim = d;
  spec.feature_hidden = {32};
  spec.feature_dim = m;
  spec.aux_dim = m;
  spec.identity_generator = true;
  spec.sigma2 = sigma2;
  // lambda T = 2 mixes the reference into the posterior tilt fast enough
  // that the Euler init-mismatch bias stays inside the 3-SE band at S = 100.
  spec.schedule = DiffusionSchedule{2.0, 2.0, 1.0, 100, 1.0};
  Rng bundle_rng = root.fork("bundle");
  fix.bundle = make_bundle(spec, bundle_rng);
  // Shrink the feature net's output layer so the likelihood tilt is mild.
  size_t last_w = fix.bundle.theta.size() - 2;
  for (int64_t i = 0; i < fix.bundle.theta[last_w].size(); ++i) {
    fix.bundle.theta[last_w][i] *= feature_scale;
  }
  fix.bundle.train_theta = false;
  fix.bundle.train_psi = false;
  fix.bundle.train_log_sigma2 = false;

  Rng data_rng = root.fork("data");
  fix.data.X.resize(n, d);
  fix.data.y.resize(n);
  for (int j = 0; j < d; ++j) fix.data.feature_names.push_back("x" + std::to_string(j));
  Eigen::VectorXd omega_true(m);
  for (int j = 0; j < m; ++j) omega_true[j] = weight_scale * data_rng.normal();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) fix.data.X(i, j) = data_rng.normal();
  }
  Tensor x_in({n, d});
  as_matrix(x_in) = fix.data.X;
  Tensor phi_t = fix.bundle.features(x_in);
  fix.phi = as_matrix(phi_t);
  double sigma = std::sqrt(sigma2);
  for (int i = 0; i < n; ++i) {
    fix.data.y[i] = fix.phi.row(i).dot(omega_true) + sigma * data_rng.normal();
  }

  GaussianPrior prior = GaussianPrior::standard(m);
  NoiseModel noise(sigma2);
  fix.posterior = fit_posterior(fix.phi, fix.data.y, prior, noise);
  fix.log_evidence = log_evidence(fix.phi, fix.data.y, prior, noise);
  return fix;
}

std::vector<OracleCheck> run_oracle_checks(uint64_t seed, bool include_training) {
  std::vector<OracleCheck> out;
  auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    out.push_back({name, pass, detail});
  };
  Rng root(seed);

  // Conjugate posterior: symmetry, PD, Lambda_n - Lambda_0 PSD.
  {
    Rng rng = root.fork("conjugate");
    bool ok = true;
    std::string detail;
    for (int rep = 0; rep < 3 && ok; ++rep) {
      int n = 30 + 20 * rep, m = 4 + 2 * rep;
      Eigen::MatrixXd phi(n, m);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) phi(i, j) = rng.normal();
        y[i] = rng.normal();
      }
      GaussianPrior prior = GaussianPrior::standard(m);
      NoiseModel noise(0.5);
      GaussianPosterior post = fit_posterior(phi, y, prior, noise);
      double asym = (post.lambda_n - post.lambda_n.transpose()).cwiseAbs().maxCoeff();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(post.lambda_n - prior.lambda0);
      double min_gap = es.eigenvalues().minCoeff();
      if (asym >= 1e-12 || min_gap < -1e-9) {
        ok = false;
        detail = "asymmetry " + fmt(asym) + ", min eig of Lambda_n - Lambda_0 " + fmt(min_gap);
      }
    }
    add("conjugate_posterior_spd", ok, ok ? "symmetric PD on random fits" : detail);
  }

  // Predictive variance >= sigma^2 and monotone shrinkage under duplicates.
  {
    Rng rng = root.fork("predictive");
    int n = 25, m = 6;
    Eigen::MatrixXd phi(n, m);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) phi(i, j) = rng.normal();
      y[i] = rng.normal();
    }
    Eigen::VectorXd probe(m);
    for (int j = 0; j < m; ++j) probe[j] = rng.normal();
    GaussianPrior prior = GaussianPrior::standard(m);
    NoiseModel noise(0.3);
    double prev = std::numeric_limits<double>::infinity();
    bool ok = true;
    std::string detail = "variance decreases with duplicated rows and stays >= sigma^2";
    for (int dup = 1; dup <= 4; ++dup) {
      Eigen::MatrixXd phi_rep(n * dup, m);
      Eigen::VectorXd y_rep(n * dup);
      for (int r = 0; r < dup; ++r) {
        phi_rep.middleRows(r * n, n) = phi;
        y_rep.segment(r * n, n) = y;
      }
      GaussianPosterior post = fit_posterior(phi_rep, y_rep, prior, noise);
      auto [mean, var] = predictive(probe, post, noise);
      (void)mean;
      if (var < noise.sigma2() || var > prev + 1e-12) {
        ok = false;
        detail = "variance " + fmt(var) + " vs previous " + fmt(prev);
        break;
      }
      prev = var;
    }
    add("predictive_variance_floor", ok, detail);
  }

  // Evidence equals the sum of sequential one-step predictive log densities.
  {
    Rng rng = root.fork("chain");
    int n = 20, m = 5;
    Eigen::MatrixXd phi(n, m);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) phi(i, j) = rng.normal();
      y[i] = rng.normal();
    }
    GaussianPrior prior = GaussianPrior::standard(m);
    NoiseModel noise(0.7);
    double target = log_evidence(phi, y, prior, noise);
    double acc = 0.0;
    GaussianPrior running = prior;
    for (int i = 0; i < n; ++i) {
      GaussianPosterior post_i =
          i == 0 ? GaussianPosterior{running.mu0, running.lambda0, spd_factor(running.lambda0)}
                 : fit_posterior(phi.topRows(i), y.head(i), prior, noise);
      auto [mean, var] = predictive(phi.row(i).transpose(), post_i, noise);
      double d = y[i] - mean;
      acc += -0.5 * (kLog2Pi + std::log(var) + d * d / var);
    }
    double err = std::abs(acc - target);
    add("evidence_sequential_chain", err < 1e-8,
        "|sum of one-step log densities - log evidence| = " + fmt(err));
  }

  // Implied prior kernel is PSD on a finite point set.
  {
    Rng rng = root.fork("kernel");
    int n = 12, m = 7;
    Eigen::MatrixXd phi(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) phi(i, j) = rng.normal();
    GaussianPrior prior = GaussianPrior::standard(m, 2.0);
    auto chol = spd_factor(prior.lambda0);
    Eigen::MatrixXd gram = phi * chol.solve(phi.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (gram + gram.transpose()));
    double min_eig = es.eigenvalues().minCoeff();
    add("prior_kernel_psd", min_eig > -1e-9, "min Gram eigenvalue " + fmt(min_eig));
  }

  // kappa closed form vs RK4, plus exact stationarity.
  {
    bool ok = true;
    std::string detail = "closed form matches RK4 integration";
    for (auto [lam, g, s0] : {std::tuple{1.0, std::numbers::sqrt2, 2.0},
                              {0.5, 1.0, 0.25}, {0.0, 0.8, 1.0}, {2.0, 0.5, 3.0}}) {
      DiffusionSchedule sched{lam, g, 1.0, 100, s0};
      for (double t : {0.25, 0.6, 1.0}) {
        double closed = kappa(sched, t);
        double ode = kappa_ode(sched, t, 10000);
        double rel = std::abs(closed - ode) / std::max(1e-12, std::abs(ode));
        if (rel >= 1e-6) {
          ok = false;
          detail = "rel err " + fmt(rel) + " at lambda=" + fmt(lam);
        }
      }
    }
    DiffusionSchedule stat{1.0, std::numbers::sqrt2, 1.0, 100, 1.0};
    for (double t : {0.0, 0.3, 0.77, 1.0}) {
      if (std::abs(kappa(stat, t) - stat.sigma0_sq) >= 1e-10) {
        ok = false;
        detail = "stationary kappa drifts at t=" + fmt(t);
      }
    }
    add("kappa_matches_ode", ok, detail);
  }

  // Exact Gaussian-target score: reverse SDE recovers the target moments.
  {
    Rng rng = root.fork("exact-score");
    DiffusionSchedule sched{1.0, std::numbers::sqrt2, 1.0, 100, 1.0};
    int k = 4, n_paths = 20000;
    Tensor mean({k});
    for (int j = 0; j < k; ++j) mean[j] = 0.8;
    double target_var = 0.5;
    GaussianTargetScore score(sched, mean, target_var);
    TrajectoryBatch traj = simulate_reverse(sched, score, n_paths, k, rng, false);
    const Tensor& term = traj.terminal();
    double mean_err = 0.0, var_acc = 0.0;
    for (int j = 0; j < k; ++j) {
      double mu = 0.0;
      for (int i = 0; i < n_paths; ++i) mu += term.at(i, j);
      mu /= n_paths;
      double v = 0.0;
      for (int i = 0; i < n_paths; ++i) v += (term.at(i, j) - mu) * (term.at(i, j) - mu);
      v /= (n_paths - 1);
      mean_err = std::max(mean_err, std::abs(mu - 0.8));
      var_acc += v / k;
    }
    double se = std::sqrt(target_var / n_paths);
    bool ok = mean_err < 5.0 * se && std::abs(var_acc - target_var) < 0.05 * target_var;
    add("exact_score_recovers_gaussian", ok,
        "max mean err " + fmt(mean_err) + " (se " + fmt(se) + "), variance " + fmt(var_acc));
  }

  // Reference-score chain preserves the stationary law.
  {
    Rng rng = root.fork("reference");
    DiffusionSchedule sched{1.0, std::numbers::sqrt2, 1.0, 100, 1.0};
    ReferenceScore score(sched);
    TrajectoryBatch traj = simulate_reverse(sched, score, 20000, 4, rng, false);
    const Tensor& term = traj.terminal();
    double v = 0.0;
    for (int64_t i = 0; i < term.size(); ++i) v += term[i] * term[i];
    v /= static_cast<double>(term.size());
    bool ok = std::abs(v - sched.sigma0_sq) < 0.03 * sched.sigma0_sq;
    add("reference_chain_stationary", ok, "terminal variance " + fmt(v));
  }

  if (include_training) {
    // Short conjugate-reduction training: bound holds, moments move to the
    // analytic posterior.
    ConjugateFixture fix = make_conjugate_fixture(root.fork("fixture").seed(), 80, 3, 8,
                                                  1.0, 0.25);
    Splits splits;
    splits.train = fix.data;
    splits.val = fix.data;
    splits.test = fix.data;
    TrainConfig cfg;
    cfg.epochs = 250;
    cfg.batch_size = static_cast<int>(fix.data.n());
    cfg.n_paths = 12;
    cfg.n_eval_paths = 32;
    cfg.eval_interval = 50;
    cfg.patience = 1000;
    cfg.seed = root.fork("train").seed();
    TrainResult res = train(fix.bundle, splits, cfg);

    LikelihoodBatch full;
    full.x = Tensor({static_cast<int>(fix.data.n()), fix.data.d()});
    as_matrix(full.x) = fix.data.X;
    full.y = Tensor({static_cast<int>(fix.data.n())});
    as_vector(full.y) = fix.data.y;
    full.dataset_size = fix.data.n();
    Rng elbo_rng = root.fork("elbo-eval");
    ElboTerms terms = elbo_estimate(res.final_state, full, 512, elbo_rng);
    double se = terms.mc_stderr();
    bool bound_ok = terms.total <= fix.log_evidence + 3.0 * se;
    add("conjugate_elbo_bound", bound_ok,
        "elbo " + fmt(terms.total) + " vs log evidence " + fmt(fix.log_evidence) +
            " (mc se " + fmt(se) + ")");

    Rng samp_rng = root.fork("samples");
    ScoreNet score = res.final_state.score();
    TrajectoryBatch traj =
        simulate_reverse(res.final_state.schedule, score, 4000, fix.bundle.aux_dim(),
                         samp_rng, false);
    const Tensor& term = traj.terminal();
    int n_paths = term.rows(), k = term.cols();
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(k);
    for (int i = 0; i < n_paths; ++i)
      for (int j = 0; j < k; ++j) mu[j] += term.at(i, j);
    mu /= n_paths;
    double worst = 0.0;
    Eigen::MatrixXd cov = fix.posterior.covariance();
    for (int j = 0; j < k; ++j) {
      double se_j = std::sqrt(cov(j, j) / n_paths);
      worst = std::max(worst, std::abs(mu[j] - fix.posterior.mu_n[j]) / se_j);
    }
    bool mean_ok = worst < 8.0;  // loose gate; the acceptance suite runs the strict one
    add("conjugate_posterior_mean", mean_ok,
        "worst |mean error| = " + fmt(worst) + " mc standard errors");
  }

  // ELBO gradients vs central finite differences on a tiny model.
  {
    Rng rng = root.fork("fd");
    BundleSpec spec;
    spec.input_dim = 3;
    spec.feature_hidden = {6};
    spec.feature_dim = 4;
    spec.aux_dim = 4;
    spec.generator_hidden = {6};
    spec.score_hidden = {8};
    spec.schedule = DiffusionSchedule{1.0, std::numbers::sqrt2, 1.0, 12, 1.0};
    Rng brng = rng.fork("bundle");
    ModelBundle bundle = make_bundle(spec, brng);
    LikelihoodBatch batch;
    batch.x = Tensor({5, 3});
    batch.y = Tensor({5});
    Rng drng = rng.fork("data");
    drng.fill_normal(batch.x.values());
    drng.fill_normal(batch.y.values());
    batch.dataset_size = 20;
    Rng nrng = rng.fork("noise");
    NoiseBundle noise = draw_noise_bundle(bundle.schedule, 4, bundle.aux_dim(), nrng);

    ElboGraph gph = build_elbo_graph(bundle, batch, noise);
    gph.tape.backward(gph.total);
    double max_rel = 0.0;
    auto probe = [&](std::vector<Tensor>& group, const std::vector<ad::Var>& vars,
                     int tensor_idx, int64_t coord) {
      double h = 1e-5;
      double orig = group[static_cast<size_t>(tensor_idx)][coord];
      group[static_cast<size_t>(tensor_idx)][coord] = orig + h;
      double up = build_elbo_graph(bundle, batch, noise).terms.total;
      group[static_cast<size_t>(tensor_idx)][coord] = orig - h;
      double dn = build_elbo_graph(bundle, batch, noise).terms.total;
      group[static_cast<size_t>(tensor_idx)][coord] = orig;
      double fd = (up - dn) / (2.0 * h);
      double an = gph.tape.grad(vars[static_cast<size_t>(tensor_idx)])[coord];
      double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      max_rel = std::max(max_rel, rel);
    };
    probe(bundle.theta, gph.theta, 0, 1);
    probe(bundle.psi, gph.psi, 0, 2);
    probe(bundle.gamma, gph.gamma, 0, 3);
    {
      double h = 1e-5;
      double orig = bundle.log_sigma2[0];
      bundle.log_sigma2[0] = orig + h;
      double up = build_elbo_graph(bundle, batch, noise).terms.total;
      bundle.log_sigma2[0] = orig - h;
      double dn = build_elbo_graph(bundle, batch, noise).terms.total;
      bundle.log_sigma2[0] = orig;
      double fd = (up - dn) / (2.0 * h);
      double an = gph.tape.grad(gph.log_sigma2)[0];
      max_rel = std::max(max_rel, std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)}));
    }
    add("elbo_gradient_fd", max_rel < 1e-3, "max rel error " + fmt(max_rel));
  }

  return out;
}

}  // namespace dvi
