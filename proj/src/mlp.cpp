#include "dvi/mlp.hpp"

#include <cmath>

#include "dvi/eigen_bridge.hpp"
#include "dvi/errors.hpp"

namespace dvi {

Activation activation_from_string(const std::string& name) {
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "leaky_relu";
}

void MlpConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw ConfigError("mlp dims must be >= 1, got input " + std::to_string(input_dim) +
                      ", output " + std::to_string(output_dim));
  }
  for (int h : hidden_dims) {
    if (h < 1) throw ConfigError("mlp hidden dim must be >= 1, got " + std::to_string(h));
  }
}

std::vector<int> MlpConfig::layer_dims() const {
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(output_dim);
  return dims;
}

int MlpConfig::param_count() const {
  return 2 * (static_cast<int>(hidden_dims.size()) + 1);
}

std::vector<Tensor> init_mlp_params(const MlpConfig& cfg, Rng& rng) {
  cfg.validate();
  auto dims = cfg.layer_dims();
  std::vector<Tensor> params;
  size_t n_layers = dims.size() - 1;
  for (size_t l = 0; l < n_layers; ++l) {
    int fan_in = dims[l], fan_out = dims[l + 1];
    bool last = (l + 1 == n_layers);
    // He-style for the hidden layers, 1/fan_in for the output layer.
    double std = last ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                      : std::sqrt(2.0 / (fan_in * (1.0 + kLeakyReluSlope * kLeakyReluSlope)));
    Tensor w({fan_in, fan_out});
    for (int64_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
    params.push_back(std::move(w));
    params.push_back(Tensor({fan_out}));
  }
  return params;
}

std::vector<Tensor> zero_mlp_params(const MlpConfig& cfg) {
  cfg.validate();
  auto dims = cfg.layer_dims();
  std::vector<Tensor> params;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    params.push_back(Tensor({dims[l], dims[l + 1]}));
    params.push_back(Tensor({dims[l + 1]}));
  }
  return params;
}

std::vector<Tensor> identity_mlp_params(const MlpConfig& cfg) {
  if (!cfg.hidden_dims.empty() || cfg.input_dim != cfg.output_dim) {
    throw ConfigError("identity params need a single square linear layer");
  }
  auto params = zero_mlp_params(cfg);
  for (int i = 0; i < cfg.input_dim; ++i) params[0].at(i, i) = 1.0;
  return params;
}

namespace {

void check_params(const MlpConfig& cfg, size_t got) {
  if (static_cast<int>(got) != cfg.param_count()) {
    throw ConfigError("mlp expects " + std::to_string(cfg.param_count()) +
                      " parameter tensors, got " + std::to_string(got));
  }
}

}  // namespace

Tensor mlp_apply(const MlpConfig& cfg, std::span<const Tensor> params, const Tensor& x) {
  cfg.validate();
  check_params(cfg, params.size());
  bool vector_in = (x.rank() == 1);
  if (x.cols() != cfg.input_dim) {
    throw ConfigError("mlp input has last dimension " + std::to_string(x.cols()) +
                      ", expected " + std::to_string(cfg.input_dim));
  }
  Tensor h = vector_in ? x.reshaped({1, cfg.input_dim}) : x;
  size_t n_layers = params.size() / 2;
  for (size_t l = 0; l < n_layers; ++l) {
    const Tensor &w = params[2 * l], &b = params[2 * l + 1];
    Tensor out({h.rows(), w.cols()});
    as_matrix(out).noalias() = as_matrix(h) * as_matrix(w);
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) out.at(i, j) += b[j];
    if (l + 1 < n_layers) {
      switch (cfg.activation) {
        case Activation::kLeakyRelu:
          for (int64_t i = 0; i < out.size(); ++i)
            if (out[i] < 0.0) out[i] *= kLeakyReluSlope;
          break;
        case Activation::kTanh:
          for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
          break;
        case Activation::kIdentity:
          break;
      }
    }
    h = std::move(out);
  }
  return vector_in ? h.reshaped({cfg.output_dim}) : h;
}

ad::Var mlp_forward(ad::Tape& tape, const MlpConfig& cfg, std::span<const ad::Var> params,
                    ad::Var x) {
  cfg.validate();
  check_params(cfg, params.size());
  if (tape.value(x).cols() != cfg.input_dim) {
    throw ConfigError("mlp input has last dimension " +
                      std::to_string(tape.value(x).cols()) + ", expected " +
                      std::to_string(cfg.input_dim));
  }
  ad::Var h = x;
  size_t n_layers = params.size() / 2;
  for (size_t l = 0; l < n_layers; ++l) {
    h = tape.add_row(tape.matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < n_layers) {
      switch (cfg.activation) {
        case Activation::kLeakyRelu: h = tape.leaky_relu(h, kLeakyReluSlope); break;
        case Activation::kTanh: h = tape.tanh_op(h); break;
        case Activation::kIdentity: break;
      }
    }
  }
  return h;
}

}  // namespace dvi
