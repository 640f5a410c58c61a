#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dvi/diffusion.hpp"
#include "dvi/implicit_prior.hpp"
#include "dvi/mlp.hpp"
#include "dvi/rng.hpp"
#include "dvi/tensor.hpp"

namespace dvi {

enum class Likelihood { kGaussian, kCategorical };

Likelihood likelihood_from_string(const std::string& name);
std::string to_string(Likelihood lik);

/// Everything a DVI-IBLL model carries: feature net theta, generator psi,
/// score net gamma, observation noise, schedule and auxiliary prior.
struct ModelBundle {
  MlpConfig feature_cfg;      // D -> M
  std::vector<Tensor> theta;
  GeneratorNet generator;     // K -> M*C
  std::vector<Tensor> psi;
  ScoreNetConfig score_cfg;   // (K, time) -> K
  std::vector<Tensor> gamma;
  Tensor log_sigma2 = Tensor::scalar(0.0);
  DiffusionSchedule schedule;
  AuxiliaryPrior aux;
  Likelihood likelihood = Likelihood::kGaussian;

  bool train_theta = true;
  bool train_psi = true;
  bool train_gamma = true;
  bool train_log_sigma2 = true;

  int input_dim() const { return feature_cfg.input_dim; }
  int feature_dim() const { return feature_cfg.output_dim; }  // M
  int aux_dim() const { return aux.dim; }                     // K
  int n_outputs() const { return generator.n_outputs; }       // C
  double sigma2() const;

  /// Dimensional chain D->M, K->M*C, K->K.
  void validate() const;

  ScoreNet score() const { return ScoreNet(score_cfg, gamma, schedule); }

  /// Feature matrix phi(X) for raw inputs (rows are examples).
  Tensor features(const Tensor& x) const;
};

struct BundleSpec {
  int input_dim = 1;
  std::vector<int> feature_hidden = {50, 50};
  int feature_dim = 50;
  int aux_dim = 0;  // 0 -> defaults to feature_dim
  int n_outputs = 1;
  std::vector<int> generator_hidden = {64};
  std::vector<int> score_hidden = {64, 64};
  bool identity_features = false;   // phi(x) = x (requires feature_dim == input_dim)
  bool identity_generator = false;  // beta = omega (requires aux_dim == feature_dim, C == 1)
  bool score_residual = true;
  Likelihood likelihood = Likelihood::kGaussian;
  double sigma2 = 1.0;
  DiffusionSchedule schedule;
};

ModelBundle make_bundle(const BundleSpec& spec, Rng& rng);

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace dvi
