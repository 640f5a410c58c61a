#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dvi/tensor.hpp"

namespace dvi {

struct AdamwConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled-weight-decay Adam over a fixed list of parameter tensors.
class AdamwState {
 public:
  AdamwState(std::span<const Tensor> params, AdamwConfig cfg);

  /// In-place update; throws NumericalError naming the parameter on a
  /// non-finite gradient. `names` is optional diagnostics.
  void step(std::vector<Tensor>& params, std::span<const Tensor> grads,
            std::span<const std::string> names = {});

  int64_t step_count() const { return t_; }
  const AdamwConfig& config() const { return cfg_; }
  AdamwConfig& config() { return cfg_; }

 private:
  AdamwConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace dvi
