#include "dvi/adamw.hpp"

#include <cmath>

#include "dvi/errors.hpp"

namespace dvi {

AdamwState::AdamwState(std::span<const Tensor> params, AdamwConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.push_back(Tensor::zeros_like(p));
    v_.push_back(Tensor::zeros_like(p));
  }
}

void AdamwState::step(std::vector<Tensor>& params, std::span<const Tensor> grads,
                      std::span<const std::string> names) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ConfigError("adamw: expected " + std::to_string(m_.size()) +
                      " tensors, got " + std::to_string(params.size()) + " params / " +
                      std::to_string(grads.size()) + " grads");
  }
  for (size_t k = 0; k < params.size(); ++k) {
    if (!params[k].same_shape(grads[k]) || !params[k].same_shape(m_[k])) {
      throw ConfigError("adamw: shape mismatch at parameter " + std::to_string(k));
    }
    if (!grads[k].all_finite()) {
      std::string name = k < names.size() ? std::string(names[k]) : "param[" + std::to_string(k) + "]";
      throw NumericalError("non-finite gradient for " + name + "; step rejected");
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor &p = params[k], &m = m_[k], &v = v_[k];
    const Tensor& g = grads[k];
    for (int64_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
    }
  }
}

}  // namespace dvi
