#pragma once

#include <cstdint>
#include <vector>

#include "dvi/model.hpp"
#include "dvi/rng.hpp"
#include "dvi/tape.hpp"
#include "dvi/tensor.hpp"

namespace dvi {

/// Mini-batch for the likelihood term. An empty batch (no rows) drops the
/// data term, which the matched-score sanity checks use.
struct LikelihoodBatch {
  Tensor x;                 // B x D
  Tensor y;                 // length B (Gaussian likelihood)
  std::vector<int> labels;  // length B (categorical likelihood)
  int64_t dataset_size = 0; // N, for the N/B mini-batch scaling

  int batch_size() const { return x.size() == 0 ? 0 : x.rows(); }
  double scale() const;
  void validate(const ModelBundle& bundle) const;
};

/// All stochastic draws of one ELBO evaluation, recorded up front so the
/// estimate is a deterministic function of (parameters, noise).
struct NoiseBundle {
  Tensor init;                     // n x K standard normal
  std::vector<Tensor> step_noise;  // S tensors, n x K

  int n_paths() const { return init.rows(); }
};

NoiseBundle draw_noise_bundle(const DiffusionSchedule& sched, int n_paths, int aux_dim,
                              Rng& rng);

/// Eq.-style breakdown: total = -l1 - ref_terminal + prior + likelihood.
struct ElboTerms {
  double l1 = 0.0;            // path-KL term
  double ref_terminal = 0.0;  // E log N(omega_T | 0, sigma0^2 I)
  double prior = 0.0;         // E log p(omega_T)
  double likelihood = 0.0;    // (N/B) E sum_i log p(y_i | x_i, omega_T)
  double total = 0.0;
  std::vector<double> per_path;  // per-path totals

  double mc_stderr() const;
  /// Throws NumericalError naming the first non-finite term.
  void check_finite() const;
};

/// The differentiable graph of one ELBO evaluation.
struct ElboGraph {
  ad::Tape tape;
  ad::Var total;        // scalar ELBO (maximize)
  std::vector<ad::Var> theta, psi, gamma;
  ad::Var log_sigma2;
  ad::Var terminal;     // n x K terminal states
  ElboTerms terms;
};

ElboGraph build_elbo_graph(const ModelBundle& bundle, const LikelihoodBatch& batch,
                           const NoiseBundle& noise);

/// Monte-Carlo ELBO estimate over freshly drawn paths.
ElboTerms elbo_estimate(const ModelBundle& bundle, const LikelihoodBatch& batch,
                        int n_paths, Rng& rng);

}  // namespace dvi
