#include "dvi/implicit_prior.hpp"

#include <cmath>
#include <numbers>

#include "dvi/errors.hpp"

namespace dvi {

void AuxiliaryPrior::validate() const {
  if (dim < 1) throw ConfigError("auxiliary dimension K must be >= 1, got " + std::to_string(dim));
}

Tensor sample_omega_prior(const AuxiliaryPrior& prior, int n, Rng& rng, bool antithetic) {
  prior.validate();
  if (n < 1) throw ConfigError("need n >= 1 samples, got " + std::to_string(n));
  Tensor out({n, prior.dim});
  if (!antithetic) {
    rng.fill_normal(out.values());
    return out;
  }
  if (n % 2 != 0) throw ConfigError("antithetic sampling needs an even n, got " + std::to_string(n));
  for (int i = 0; i < n; i += 2) {
    for (int j = 0; j < prior.dim; ++j) {
      double z = rng.normal();
      out.at(i, j) = z;
      out.at(i + 1, j) = -z;
    }
  }
  return out;
}

double log_prior_density(const AuxiliaryPrior& prior, const Tensor& omega) {
  prior.validate();
  if (omega.size() != prior.dim) {
    throw ConfigError("omega has length " + std::to_string(omega.size()) + ", expected " +
                      std::to_string(prior.dim));
  }
  double ssq = 0.0;
  for (int64_t i = 0; i < omega.size(); ++i) ssq += omega[i] * omega[i];
  return -0.5 * prior.dim * std::log(2.0 * std::numbers::pi) - 0.5 * ssq;
}

void GeneratorNet::validate() const {
  cfg.validate();
  if (weight_dim < 1 || n_outputs < 1) {
    throw ConfigError("generator needs weight_dim and n_outputs >= 1");
  }
  if (cfg.output_dim != weight_dim * n_outputs) {
    throw ConfigError("generator output dim " + std::to_string(cfg.output_dim) +
                      " != M*C = " + std::to_string(weight_dim * n_outputs));
  }
}

GeneratorNet GeneratorNet::identity(int k) {
  GeneratorNet g;
  g.cfg = MlpConfig{k, {}, k, Activation::kIdentity};
  g.weight_dim = k;
  g.n_outputs = 1;
  return g;
}

Tensor generate_weights(const GeneratorNet& gen, std::span<const Tensor> psi,
                        const Tensor& omega) {
  gen.validate();
  Tensor out = mlp_apply(gen.cfg, psi, omega);
  if (omega.rank() == 1) return out.reshaped({gen.weight_dim, gen.n_outputs});
  return out;
}

ad::Var generate_weights(ad::Tape& tape, const GeneratorNet& gen,
                         std::span<const ad::Var> psi, ad::Var omega) {
  gen.validate();
  return mlp_forward(tape, gen.cfg, psi, omega);
}

}  // namespace dvi
