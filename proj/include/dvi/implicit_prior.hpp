#pragma once

#include <span>

#include "dvi/mlp.hpp"
#include "dvi/rng.hpp"
#include "dvi/tape.hpp"
#include "dvi/tensor.hpp"

namespace dvi {

/// Simple prior p(omega); standard normal is the only family.
struct AuxiliaryPrior {
  int dim = 1;  // K
  void validate() const;
};

/// n i.i.d. draws as an n x K matrix. With antithetic pairing the draws come
/// in (z, -z) pairs, so n must be even.
Tensor sample_omega_prior(const AuxiliaryPrior& prior, int n, Rng& rng,
                          bool antithetic = false);

/// log N(omega | 0, I) for a single length-K vector.
double log_prior_density(const AuxiliaryPrior& prior, const Tensor& omega);

/// Weight generator beta = G_psi(omega); the MLP maps K -> M*C.
struct GeneratorNet {
  MlpConfig cfg;
  int weight_dim = 0;  // M
  int n_outputs = 1;   // C

  void validate() const;
  /// Linear K -> K generator; with identity_mlp_params it is beta = omega.
  static GeneratorNet identity(int k);
};

/// omega as n x K rows -> beta rows n x (M*C); a single K vector -> M x C.
Tensor generate_weights(const GeneratorNet& gen, std::span<const Tensor> psi,
                        const Tensor& omega);
ad::Var generate_weights(ad::Tape& tape, const GeneratorNet& gen,
                         std::span<const ad::Var> psi, ad::Var omega);

}  // namespace dvi
