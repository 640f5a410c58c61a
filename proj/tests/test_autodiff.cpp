#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvi/errors.hpp"
#include "dvi/tape.hpp"
#include "dvi/tensor.hpp"
#include "test_util.hpp"

using namespace dvi;
using dvi::test::finite_difference;
using dvi::test::max_rel_error;
using dvi::test::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  t.at(1, 2) = 4.0;
  CHECK(t[5] == 4.0);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ConfigError);
  CHECK_THROWS_AS(t.item(), ConfigError);
  CHECK(Tensor::scalar(3.5).item() == 3.5);
  CHECK(t.reshaped({3, 2}).rows() == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ConfigError);
}

TEST_CASE("quadratic gradient: d||w||^2/dw = 2w") {
  ad::Tape tape;
  ad::Var w = tape.input(Tensor({2}, {1.0, -2.0}));
  ad::Var loss = tape.sum(tape.square(w));
  tape.backward(loss);
  CHECK(tape.grad(w)[0] == doctest::Approx(2.0));
  CHECK(tape.grad(w)[1] == doctest::Approx(-4.0));
}

TEST_CASE("constant loss has zero gradient; unused inputs have zero gradient") {
  ad::Tape tape;
  ad::Var w = tape.input(Tensor({3}, {1.0, 2.0, 3.0}));
  ad::Var unused = tape.input(Tensor({2}, {5.0, 6.0}));
  ad::Var loss = tape.scale(tape.sum(w), 0.0);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(tape.grad(w)[i] == 0.0);
  for (int i = 0; i < 2; ++i) CHECK(tape.grad(unused)[i] == 0.0);
}

TEST_CASE("non-scalar loss is rejected") {
  ad::Tape tape;
  ad::Var w = tape.input(Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(w), ConfigError);
}

namespace {

// Runs f through the tape twice: once for the analytic gradient of input x,
// once as a value function for finite differences.
void check_op_gradient(
    const std::function<ad::Var(ad::Tape&, ad::Var)>& build, const Tensor& x0,
    double tol = 1e-4) {
  ad::Tape tape;
  ad::Var x = tape.input(x0);
  ad::Var y = build(tape, x);
  // Reduce with a fixed random weighting so every output coordinate matters.
  Rng wr(99);
  Tensor w = random_tensor(tape.value(y).shape(), wr);
  ad::Var loss = tape.sum(tape.mul(y, tape.input(w)));
  tape.backward(loss);
  Tensor analytic = tape.grad(x);

  auto value = [&](const Tensor& xv) {
    ad::Tape t2;
    ad::Var xv2 = t2.input(xv);
    ad::Var y2 = build(t2, xv2);
    ad::Var l2 = t2.sum(t2.mul(y2, t2.input(w)));
    return t2.value(l2).item();
  };
  Tensor fd = finite_difference(value, x0);
  CHECK(max_rel_error(analytic, fd) < tol);
}

}  // namespace

TEST_CASE("every primitive op matches central finite differences") {
  Rng rng(7);
  Tensor m34 = random_tensor({3, 4}, rng, 2.0);
  Tensor m43 = random_tensor({4, 3}, rng, 2.0);
  Tensor m34b = random_tensor({3, 4}, rng, 2.0);
  Tensor row4 = random_tensor({4}, rng);
  Tensor col3 = random_tensor({3, 1}, rng);
  Tensor pos = random_tensor({3, 4}, rng);
  for (int64_t i = 0; i < pos.size(); ++i) pos[i] = std::abs(pos[i]) + 0.5;

  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.add(x, t.input(m34b)); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.sub(t.input(m34b), x); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.mul(x, t.input(m34b)); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.div(t.input(m34b), x); }, pos);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.scale(x, -1.7); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.add_const(x, 0.3); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.matmul(x, t.input(m43)); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.matmul(t.input(m34), x); }, m43);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.transpose(x); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.add_row(x, t.input(row4)); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.add_row(t.input(m34), x); }, row4);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.sub_col(x, t.input(col3)); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.sub_col(t.input(m34), x); }, col3);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.leaky_relu(x, 0.01); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.tanh_op(x); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.exp_op(x); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.log_op(x); }, pos);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.square(x); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.sum(x); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.row_sum(x); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.col_sum_t(x); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.concat_cols(x, t.input(m34b)); },
                    m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.concat_cols(t.input(m34b), x); },
                    m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.slice_rows(x, 1, 3); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.reshape(x, {4, 3}); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.mul_scalar(x, t.input(Tensor::scalar(1.3))); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.mul_scalar(t.input(m34), x); },
                    Tensor::scalar(0.8));
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.add_scalar(x, t.input(Tensor::scalar(-0.4))); }, m34);
  check_op_gradient([&](ad::Tape& t, ad::Var x) { return t.add_scalar(t.input(m34), x); },
                    Tensor::scalar(0.5));
}

TEST_CASE("categorical log-prob gradient matches finite differences") {
  Rng rng(11);
  Tensor logits = random_tensor({5, 3}, rng, 2.0);
  std::vector<int> labels{0, 2, 1, 1, 0};
  ad::Tape tape;
  ad::Var x = tape.input(logits);
  ad::Var loss = tape.categorical_logprob_sum(x, labels);
  tape.backward(loss);
  Tensor analytic = tape.grad(x);
  auto value = [&](const Tensor& xv) {
    ad::Tape t2;
    return t2.value(t2.categorical_logprob_sum(t2.input(xv), labels)).item();
  };
  CHECK(max_rel_error(analytic, finite_difference(value, logits)) < 1e-4);
}

TEST_CASE("gradient of a sum equals the sum of gradients on a random graph") {
  Rng rng(21);
  Tensor x0 = random_tensor({4, 4}, rng);
  auto build_a = [](ad::Tape& t, ad::Var x) { return t.sum(t.square(t.leaky_relu(x, 0.01))); };
  auto build_b = [](ad::Tape& t, ad::Var x) { return t.sum(t.tanh_op(t.scale(x, 0.5))); };

  ad::Tape tape;
  ad::Var x = tape.input(x0);
  ad::Var joint = tape.add(build_a(tape, x), build_b(tape, x));
  tape.backward(joint);
  Tensor g_joint = tape.grad(x);

  ad::Tape ta;
  ad::Var xa = ta.input(x0);
  ta.backward(build_a(ta, xa));
  ad::Tape tb;
  ad::Var xb = tb.input(x0);
  tb.backward(build_b(tb, xb));
  for (int64_t i = 0; i < x0.size(); ++i) {
    CHECK(g_joint[i] == doctest::Approx(ta.grad(xa)[i] + tb.grad(xb)[i]).epsilon(1e-12));
  }
}

TEST_CASE("shape mismatches are rejected with diagnostics") {
  ad::Tape tape;
  ad::Var a = tape.input(Tensor({2, 3}));
  ad::Var b = tape.input(Tensor({3, 2}));
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("[2x3]"), ConfigError);
  CHECK_THROWS_AS(tape.matmul(a, a), ConfigError);
  CHECK_THROWS_AS(tape.slice_rows(a, 1, 5), ConfigError);
}
