#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvi/adamw.hpp"
#include "dvi/errors.hpp"
#include "dvi/mlp.hpp"
#include "test_util.hpp"

using namespace dvi;
using dvi::test::finite_difference;
using dvi::test::max_rel_error;
using dvi::test::random_tensor;

TEST_CASE("all-zero weights leave only the bias") {
  MlpConfig cfg{3, {4}, 2};
  auto params = zero_mlp_params(cfg);
  params[3] = Tensor({2}, {0.7, -1.1});  // output bias
  Rng rng(3);
  Tensor x = random_tensor({5, 3}, rng);
  Tensor out = mlp_apply(cfg, params, x);
  for (int i = 0; i < 5; ++i) {
    CHECK(out.at(i, 0) == 0.7);
    CHECK(out.at(i, 1) == -1.1);
  }
}

TEST_CASE("single linear layer with identity weights is the identity") {
  MlpConfig cfg{2, {}, 2, Activation::kIdentity};
  auto params = identity_mlp_params(cfg);
  Tensor x({2}, {1.0, 2.0});
  Tensor out = mlp_apply(cfg, params, x);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
}

TEST_CASE("forward pass is deterministic") {
  MlpConfig cfg{4, {8, 8}, 3};
  Rng rng(11);
  auto params = init_mlp_params(cfg, rng);
  Tensor x = random_tensor({6, 4}, rng);
  Tensor a = mlp_apply(cfg, params, x);
  Tensor b = mlp_apply(cfg, params, x);
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("input dimension mismatch is diagnosed") {
  MlpConfig cfg{4, {8}, 3};
  Rng rng(1);
  auto params = init_mlp_params(cfg, rng);
  Tensor x = random_tensor({6, 5}, rng);
  CHECK_THROWS_WITH_AS(mlp_apply(cfg, params, x), doctest::Contains("expected 4"),
                       ConfigError);
}

TEST_CASE("2x50x50x1 MLP gradient matches finite differences under 1e-4") {
  MlpConfig cfg{2, {50, 50}, 1};
  Rng rng(17);
  auto params = init_mlp_params(cfg, rng);
  Tensor x = random_tensor({4, 2}, rng);

  ad::Tape tape;
  std::vector<ad::Var> pvars;
  for (const Tensor& p : params) pvars.push_back(tape.input(p));
  ad::Var loss = tape.sum(mlp_forward(tape, cfg, pvars, tape.input(x)));
  tape.backward(loss);

  for (size_t k = 0; k < params.size(); ++k) {
    auto value = [&](const Tensor& pv) {
      auto perturbed = params;
      perturbed[k] = pv;
      Tensor out = mlp_apply(cfg, perturbed, x);
      double s = 0.0;
      for (int64_t i = 0; i < out.size(); ++i) s += out[i];
      return s;
    };
    Tensor fd = finite_difference(value, params[k], 1e-5);
    CHECK(max_rel_error(tape.grad(pvars[k]), fd) < 1e-4);
  }
}

TEST_CASE("tape and plain forward agree") {
  MlpConfig cfg{3, {16}, 4};
  Rng rng(23);
  auto params = init_mlp_params(cfg, rng);
  Tensor x = random_tensor({7, 3}, rng);
  ad::Tape tape;
  std::vector<ad::Var> pvars;
  for (const Tensor& p : params) pvars.push_back(tape.input(p));
  const Tensor& taped = tape.value(mlp_forward(tape, cfg, pvars, tape.input(x)));
  Tensor plain = mlp_apply(cfg, params, x);
  for (int64_t i = 0; i < plain.size(); ++i) {
    CHECK(taped[i] == doctest::Approx(plain[i]).epsilon(1e-14));
  }
}

TEST_CASE("adamw decay-only step: p' = p (1 - lr wd)") {
  std::vector<Tensor> params{Tensor({2}, {2.0, -3.0})};
  AdamwConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.1;
  AdamwState opt(params, cfg);
  std::vector<Tensor> grads{Tensor({2})};
  opt.step(params, grads);
  CHECK(params[0][0] == doctest::Approx(2.0 * (1.0 - 0.05 * 0.1)).epsilon(1e-12));
  CHECK(params[0][1] == doctest::Approx(-3.0 * (1.0 - 0.05 * 0.1)).epsilon(1e-12));
}

TEST_CASE("first adamw step with unit gradient moves by about -lr") {
  std::vector<Tensor> params{Tensor({1}, {0.0})};
  AdamwConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamwState opt(params, cfg);
  std::vector<Tensor> grads{Tensor({1}, {1.0})};
  opt.step(params, grads);
  // Bias correction gives mhat = 1, vhat = 1 on the first step.
  CHECK(params[0][0] == doctest::Approx(-0.1).epsilon(1e-7));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("identical state and gradients give identical trajectories") {
  Rng rng(31);
  std::vector<Tensor> pa{random_tensor({3, 3}, rng)};
  std::vector<Tensor> pb = pa;
  AdamwState oa(pa, {});
  AdamwState ob(pb, {});
  Rng grng(77);
  for (int step = 0; step < 25; ++step) {
    std::vector<Tensor> g{random_tensor({3, 3}, grng)};
    oa.step(pa, g);
    ob.step(pb, g);
  }
  for (int64_t i = 0; i < pa[0].size(); ++i) CHECK(pa[0][i] == pb[0][i]);
}

TEST_CASE("beta2 -> 0, wd = 0: update direction is -sign(grad)") {
  Rng rng(41);
  AdamwConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.beta2 = 1e-12;

  // Single step from a fresh state, any beta1.
  std::vector<Tensor> params{random_tensor({10}, rng)};
  Tensor before = params[0];
  std::vector<Tensor> grads{random_tensor({10}, rng)};
  AdamwState opt(params, cfg);
  opt.step(params, grads);
  for (int64_t i = 0; i < 10; ++i) {
    if (grads[0][i] != 0.0) CHECK((params[0][i] - before[i]) * grads[0][i] < 0.0);
  }

  // Multi-step with beta1 = 0: the momentum is the current gradient.
  cfg.beta1 = 0.0;
  std::vector<Tensor> p2{random_tensor({10}, rng)};
  AdamwState opt2(p2, cfg);
  for (int step = 0; step < 10; ++step) {
    std::vector<Tensor> g{random_tensor({10}, rng)};
    Tensor prev = p2[0];
    opt2.step(p2, g);
    for (int64_t i = 0; i < 10; ++i) {
      if (g[0][i] != 0.0) CHECK((p2[0][i] - prev[i]) * g[0][i] < 0.0);
    }
  }
}

TEST_CASE("non-finite gradient is rejected with the parameter name") {
  std::vector<Tensor> params{Tensor({2}, {1.0, 2.0})};
  AdamwState opt(params, {});
  std::vector<Tensor> grads{Tensor({2}, {1.0, std::nan("")})};
  std::vector<std::string> names{"psi.0"};
  CHECK_THROWS_WITH_AS(opt.step(params, grads, names), doctest::Contains("psi.0"),
                       NumericalError);
}
