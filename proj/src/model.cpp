#include "dvi/model.hpp"

#include <cmath>

#include "dvi/checkpoint.hpp"
#include "dvi/errors.hpp"

namespace dvi {

Likelihood likelihood_from_string(const std::string& name) {
  if (name == "gaussian") return Likelihood::kGaussian;
  if (name == "categorical") return Likelihood::kCategorical;
  throw ConfigError("unknown likelihood '" + name + "'");
}

std::string to_string(Likelihood lik) {
  return lik == Likelihood::kGaussian ? "gaussian" : "categorical";
}

double ModelBundle::sigma2() const { return std::exp(log_sigma2.item()); }

void ModelBundle::validate() const {
  feature_cfg.validate();
  generator.validate();
  score_cfg.validate();
  aux.validate();
  schedule.validate();
  if (generator.cfg.input_dim != aux.dim) {
    throw ConfigError("generator input dim " + std::to_string(generator.cfg.input_dim) +
                      " != aux dim K = " + std::to_string(aux.dim));
  }
  if (generator.weight_dim != feature_cfg.output_dim) {
    throw ConfigError("generator weight dim M = " + std::to_string(generator.weight_dim) +
                      " != feature dim " + std::to_string(feature_cfg.output_dim));
  }
  if (score_cfg.aux_dim != aux.dim) {
    throw ConfigError("score net dimension != aux dim K");
  }
  if (static_cast<int>(theta.size()) != feature_cfg.param_count() ||
      static_cast<int>(psi.size()) != generator.cfg.param_count() ||
      static_cast<int>(gamma.size()) != score_cfg.mlp().param_count()) {
    throw ConfigError("parameter tensor counts do not match the configs");
  }
  if (log_sigma2.size() != 1) throw ConfigError("log_sigma2 must be a scalar tensor");
  if (likelihood == Likelihood::kCategorical && generator.n_outputs < 2) {
    throw ConfigError("categorical likelihood needs n_outputs >= 2");
  }
}

Tensor ModelBundle::features(const Tensor& x) const {
  return mlp_apply(feature_cfg, theta, x);
}

ModelBundle make_bundle(const BundleSpec& spec, Rng& rng) {
  ModelBundle b;
  int m = spec.feature_dim;
  int k = spec.aux_dim > 0 ? spec.aux_dim : m;
  int c = spec.n_outputs;

  if (spec.identity_features) {
    if (m != spec.input_dim) {
      throw ConfigError("identity features require feature_dim == input_dim");
    }
    b.feature_cfg = MlpConfig{spec.input_dim, {}, m, Activation::kIdentity};
    b.theta = identity_mlp_params(b.feature_cfg);
  } else {
    b.feature_cfg = MlpConfig{spec.input_dim, spec.feature_hidden, m,
                              Activation::kLeakyRelu};
    Rng r = rng.fork("theta");
    b.theta = init_mlp_params(b.feature_cfg, r);
  }

  if (spec.identity_generator) {
    if (k != m || c != 1) {
      throw ConfigError("identity generator requires K == M and a single output");
    }
    b.generator = GeneratorNet::identity(k);
    b.psi = identity_mlp_params(b.generator.cfg);
  } else {
    b.generator.cfg = MlpConfig{k, spec.generator_hidden, m * c, Activation::kLeakyRelu};
    b.generator.weight_dim = m;
    b.generator.n_outputs = c;
    Rng r = rng.fork("psi");
    b.psi = init_mlp_params(b.generator.cfg, r);
  }

  b.score_cfg = ScoreNetConfig{k, spec.score_hidden, Activation::kLeakyRelu,
                               spec.score_residual};
  {
    Rng r = rng.fork("gamma");
    b.gamma = init_mlp_params(b.score_cfg.mlp(), r);
    // Zero output layer: the initial score equals the reference score in
    // residual mode, so the untrained sampler is the reference process.
    b.gamma[b.gamma.size() - 2] = Tensor::zeros_like(b.gamma[b.gamma.size() - 2]);
  }

  b.log_sigma2 = Tensor::scalar(std::log(spec.sigma2));
  b.schedule = spec.schedule;
  b.aux = AuxiliaryPrior{k};
  b.likelihood = spec.likelihood;
  b.validate();
  return b;
}

namespace {

void push_group(Checkpoint& ckpt, const std::string& prefix,
                const std::vector<Tensor>& params) {
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace_back(prefix + "." + std::to_string(i), params[i]);
  }
}

std::vector<Tensor> pull_group(const Checkpoint& ckpt, const std::string& prefix, int count) {
  std::vector<Tensor> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(ckpt.tensor(prefix + "." + std::to_string(i)));
  }
  return out;
}

nlohmann::json mlp_to_json(const MlpConfig& cfg) {
  return {{"input_dim", cfg.input_dim},
          {"hidden_dims", cfg.hidden_dims},
          {"output_dim", cfg.output_dim},
          {"activation", to_string(cfg.activation)}};
}

MlpConfig mlp_from_json(const nlohmann::json& j) {
  MlpConfig cfg;
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  cfg.output_dim = j.at("output_dim").get<int>();
  cfg.activation = activation_from_string(j.at("activation").get<std::string>());
  return cfg;
}

}  // namespace

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
  bundle.validate();
  Checkpoint ckpt;
  ckpt.meta = {
      {"format", "dvi-ibll-bundle"},
      {"feature_cfg", mlp_to_json(bundle.feature_cfg)},
      {"generator_cfg", mlp_to_json(bundle.generator.cfg)},
      {"generator_weight_dim", bundle.generator.weight_dim},
      {"generator_n_outputs", bundle.generator.n_outputs},
      {"score_hidden", bundle.score_cfg.hidden_dims},
      {"score_activation", to_string(bundle.score_cfg.activation)},
      {"score_residual", bundle.score_cfg.residual_to_reference},
      {"aux_dim", bundle.aux.dim},
      {"likelihood", to_string(bundle.likelihood)},
      {"schedule",
       {{"lambda", bundle.schedule.lambda},
        {"g", bundle.schedule.g},
        {"horizon", bundle.schedule.horizon},
        {"steps", bundle.schedule.steps},
        {"sigma0_sq", bundle.schedule.sigma0_sq}}},
      {"train_flags",
       {{"theta", bundle.train_theta},
        {"psi", bundle.train_psi},
        {"gamma", bundle.train_gamma},
        {"log_sigma2", bundle.train_log_sigma2}}},
  };
  push_group(ckpt, "theta", bundle.theta);
  push_group(ckpt, "psi", bundle.psi);
  push_group(ckpt, "gamma", bundle.gamma);
  ckpt.tensors.emplace_back("log_sigma2", bundle.log_sigma2);
  save_checkpoint(path, ckpt);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  const auto& meta = ckpt.meta;
  if (meta.value("format", "") != "dvi-ibll-bundle") {
    throw ConfigError("checkpoint is not a model bundle: " + path.string());
  }
  ModelBundle b;
  b.feature_cfg = mlp_from_json(meta.at("feature_cfg"));
  b.generator.cfg = mlp_from_json(meta.at("generator_cfg"));
  b.generator.weight_dim = meta.at("generator_weight_dim").get<int>();
  b.generator.n_outputs = meta.at("generator_n_outputs").get<int>();
  b.score_cfg.aux_dim = meta.at("aux_dim").get<int>();
  b.score_cfg.hidden_dims = meta.at("score_hidden").get<std::vector<int>>();
  b.score_cfg.activation = activation_from_string(meta.at("score_activation").get<std::string>());
  b.score_cfg.residual_to_reference = meta.at("score_residual").get<bool>();
  b.aux.dim = meta.at("aux_dim").get<int>();
  b.likelihood = likelihood_from_string(meta.at("likelihood").get<std::string>());
  const auto& s = meta.at("schedule");
  b.schedule.lambda = s.at("lambda").get<double>();
  b.schedule.g = s.at("g").get<double>();
  b.schedule.horizon = s.at("horizon").get<double>();
  b.schedule.steps = s.at("steps").get<int>();
  b.schedule.sigma0_sq = s.at("sigma0_sq").get<double>();
  const auto& f = meta.at("train_flags");
  b.train_theta = f.at("theta").get<bool>();
  b.train_psi = f.at("psi").get<bool>();
  b.train_gamma = f.at("gamma").get<bool>();
  b.train_log_sigma2 = f.at("log_sigma2").get<bool>();
  b.theta = pull_group(ckpt, "theta", b.feature_cfg.param_count());
  b.psi = pull_group(ckpt, "psi", b.generator.cfg.param_count());
  b.gamma = pull_group(ckpt, "gamma", b.score_cfg.mlp().param_count());
  b.log_sigma2 = ckpt.tensor("log_sigma2");
  b.validate();
  return b;
}

}  // namespace dvi
