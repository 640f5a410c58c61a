#pragma once

#include <span>
#include <string>
#include <vector>

#include "dvi/rng.hpp"
#include "dvi/tape.hpp"
#include "dvi/tensor.hpp"

namespace dvi {

inline constexpr double kLeakyReluSlope = 0.01;

enum class Activation { kLeakyRelu, kTanh, kIdentity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

struct MlpConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int output_dim = 0;
  Activation activation = Activation::kLeakyRelu;

  void validate() const;
  /// Layer widths including input and output.
  std::vector<int> layer_dims() const;
  /// Number of parameter tensors (a weight and a bias per layer).
  int param_count() const;
};

/// Parameter layout: [W0, b0, W1, b1, ...]; W is [in, out] row-major.
std::vector<Tensor> init_mlp_params(const MlpConfig& cfg, Rng& rng);
std::vector<Tensor> zero_mlp_params(const MlpConfig& cfg);
/// Single linear layer K->K with W = I, b = 0 (requires no hidden layers).
std::vector<Tensor> identity_mlp_params(const MlpConfig& cfg);

/// Plain forward pass; x is [B, input_dim] or a single [input_dim] vector.
Tensor mlp_apply(const MlpConfig& cfg, std::span<const Tensor> params, const Tensor& x);

/// Tape forward pass for training; x must already live on the tape.
ad::Var mlp_forward(ad::Tape& tape, const MlpConfig& cfg, std::span<const ad::Var> params,
                    ad::Var x);

}  // namespace dvi
