#include "dvi/tape.hpp"

#include <cmath>
#include <string>

#include "dvi/eigen_bridge.hpp"
#include "dvi/errors.hpp"

namespace dvi::ad {
namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a) {
  throw ConfigError(std::string(op) + ": bad operand shape " + a.shape_str());
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                    b.shape_str());
}

}  // namespace

Var Tape::push(Node node) {
  grads_valid_ = false;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = Op::kInput;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  if (!ta.same_shape(tb)) shape_fail("add", ta, tb);
  Node n{ta, Op::kAdd, a.id, b.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] += tb[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  if (!ta.same_shape(tb)) shape_fail("sub", ta, tb);
  Node n{ta, Op::kSub, a.id, b.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] -= tb[i];
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  if (!ta.same_shape(tb)) shape_fail("mul", ta, tb);
  Node n{ta, Op::kMul, a.id, b.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= tb[i];
  return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  if (!ta.same_shape(tb)) shape_fail("div", ta, tb);
  Node n{ta, Op::kDiv, a.id, b.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] /= tb[i];
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  Node n{val(a.id), Op::kScale, a.id, -1, c};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= c;
  return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
  Node n{val(a.id), Op::kAddConst, a.id, -1, c};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] += c;
  return push(std::move(n));
}

Var Tape::mul_scalar(Var a, Var s) {
  const Tensor &ta = val(a.id), &ts = val(s.id);
  if (ts.size() != 1) shape_fail("mul_scalar", ta, ts);
  Node n{ta, Op::kMulScalar, a.id, s.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= ts[0];
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, Var s) {
  const Tensor &ta = val(a.id), &ts = val(s.id);
  if (ts.size() != 1) shape_fail("add_scalar", ta, ts);
  Node n{ta, Op::kAddScalar, a.id, s.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] += ts[0];
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
    shape_fail("matmul", ta, tb);
  }
  Tensor out({ta.rows(), tb.cols()});
  as_matrix(out).noalias() = as_matrix(ta) * as_matrix(tb);
  Node n{std::move(out), Op::kMatMul, a.id, b.id};
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  const Tensor& ta = val(a.id);
  if (ta.rank() != 2) shape_fail("transpose", ta);
  Tensor out({ta.cols(), ta.rows()});
  as_matrix(out) = as_matrix(ta).transpose();
  return push(Node{std::move(out), Op::kTranspose, a.id});
}

Var Tape::add_row(Var mat, Var row) {
  const Tensor &tm = val(mat.id), &tr = val(row.id);
  if (tm.rank() != 2 || tr.size() != tm.cols()) shape_fail("add_row", tm, tr);
  Node n{tm, Op::kAddRow, mat.id, row.id};
  for (int i = 0; i < tm.rows(); ++i)
    for (int j = 0; j < tm.cols(); ++j) n.value.at(i, j) += tr[j];
  return push(std::move(n));
}

Var Tape::sub_col(Var mat, Var col) {
  const Tensor &tm = val(mat.id), &tc = val(col.id);
  if (tm.rank() != 2 || tc.size() != tm.rows()) shape_fail("sub_col", tm, tc);
  Node n{tm, Op::kSubCol, mat.id, col.id};
  for (int i = 0; i < tm.rows(); ++i)
    for (int j = 0; j < tm.cols(); ++j) n.value.at(i, j) -= tc[i];
  return push(std::move(n));
}

Var Tape::leaky_relu(Var a, double slope) {
  Node n{val(a.id), Op::kLeakyRelu, a.id, -1, slope};
  for (int64_t i = 0; i < n.value.size(); ++i) {
    if (n.value[i] < 0.0) n.value[i] *= slope;
  }
  return push(std::move(n));
}

Var Tape::tanh_op(Var a) {
  Node n{val(a.id), Op::kTanh, a.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(n.value[i]);
  return push(std::move(n));
}

Var Tape::exp_op(Var a) {
  Node n{val(a.id), Op::kExp, a.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] = std::exp(n.value[i]);
  return push(std::move(n));
}

Var Tape::log_op(Var a) {
  Node n{val(a.id), Op::kLog, a.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] = std::log(n.value[i]);
  return push(std::move(n));
}

Var Tape::square(Var a) {
  Node n{val(a.id), Op::kSquare, a.id};
  for (int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= n.value[i];
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  const Tensor& ta = val(a.id);
  double s = 0.0;
  for (int64_t i = 0; i < ta.size(); ++i) s += ta[i];
  return push(Node{Tensor::scalar(s), Op::kSum, a.id});
}

Var Tape::row_sum(Var a) {
  const Tensor& ta = val(a.id);
  if (ta.rank() != 2) shape_fail("row_sum", ta);
  Tensor out({ta.rows(), 1});
  for (int i = 0; i < ta.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < ta.cols(); ++j) s += ta.at(i, j);
    out.at(i, 0) = s;
  }
  return push(Node{std::move(out), Op::kRowSum, a.id});
}

Var Tape::col_sum_t(Var a) {
  const Tensor& ta = val(a.id);
  if (ta.rank() != 2) shape_fail("col_sum_t", ta);
  Tensor out({ta.cols(), 1});
  for (int j = 0; j < ta.cols(); ++j) {
    double s = 0.0;
    for (int i = 0; i < ta.rows(); ++i) s += ta.at(i, j);
    out.at(j, 0) = s;
  }
  return push(Node{std::move(out), Op::kColSumT, a.id});
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows()) {
    shape_fail("concat_cols", ta, tb);
  }
  Tensor out({ta.rows(), ta.cols() + tb.cols()});
  for (int i = 0; i < ta.rows(); ++i) {
    for (int j = 0; j < ta.cols(); ++j) out.at(i, j) = ta.at(i, j);
    for (int j = 0; j < tb.cols(); ++j) out.at(i, ta.cols() + j) = tb.at(i, j);
  }
  return push(Node{std::move(out), Op::kConcatCols, a.id, b.id});
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  const Tensor& ta = val(a.id);
  if (ta.rank() != 2 || r0 < 0 || r1 > ta.rows() || r0 >= r1) {
    throw ConfigError("slice_rows: bad range [" + std::to_string(r0) + "," +
                      std::to_string(r1) + ") for " + ta.shape_str());
  }
  Tensor out({r1 - r0, ta.cols()});
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < ta.cols(); ++j) out.at(i - r0, j) = ta.at(i, j);
  Node n{std::move(out), Op::kSliceRows, a.id};
  n.aux = {r0, r1};
  return push(std::move(n));
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  return push(Node{val(a.id).reshaped(std::move(shape)), Op::kReshape, a.id});
}

Var Tape::categorical_logprob_sum(Var logits, std::vector<int> labels) {
  const Tensor& tl = val(logits.id);
  if (tl.rank() != 2 || static_cast<int>(labels.size()) != tl.rows()) {
    throw ConfigError("categorical_logprob_sum: " + std::to_string(labels.size()) +
                      " labels for logits " + tl.shape_str());
  }
  double total = 0.0;
  for (int i = 0; i < tl.rows(); ++i) {
    int y = labels[i];
    if (y < 0 || y >= tl.cols()) {
      throw DataError("label " + std::to_string(y) + " out of range at row " +
                      std::to_string(i));
    }
    double mx = tl.at(i, 0);
    for (int j = 1; j < tl.cols(); ++j) mx = std::max(mx, tl.at(i, j));
    double lse = 0.0;
    for (int j = 0; j < tl.cols(); ++j) lse += std::exp(tl.at(i, j) - mx);
    total += tl.at(i, y) - mx - std::log(lse);
  }
  Node n{Tensor::scalar(total), Op::kCatLogProb, logits.id};
  n.aux = std::move(labels);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return val(v.id); }

void Tape::backward(Var loss) {
  const Tensor& tl = val(loss.id);
  if (tl.size() != 1) {
    throw ConfigError("backward: loss must be scalar, got shape " + tl.shape_str());
  }
  grads_.assign(nodes_.size(), Tensor());
  for (size_t i = 0; i < nodes_.size(); ++i) grads_[i] = Tensor::zeros_like(nodes_[i].value);
  grads_[static_cast<size_t>(loss.id)][0] = 1.0;
  for (int id = loss.id; id >= 0; --id) backward_node(id);
  grads_valid_ = true;
}

void Tape::backward_node(int id) {
  const Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& g = grads_[static_cast<size_t>(id)];
  if (n.op == Op::kInput) return;
  Tensor& ga = grads_[static_cast<size_t>(n.a)];
  switch (n.op) {
    case Op::kAdd: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      const Tensor &a = val(n.a), &b = val(n.b);
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * b[i];
        gb[i] += g[i] * a[i];
      }
      break;
    }
    case Op::kDiv: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      const Tensor &a = val(n.a), &b = val(n.b);
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] / b[i];
        gb[i] -= g[i] * a[i] / (b[i] * b[i]);
      }
      break;
    }
    case Op::kScale:
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += n.c * g[i];
      break;
    case Op::kAddConst:
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    case Op::kMulScalar: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      const Tensor& a = val(n.a);
      double s = val(n.b)[0];
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * s;
        gb[0] += g[i] * a[i];
      }
      break;
    }
    case Op::kAddScalar: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      for (int64_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[0] += g[i];
      }
      break;
    }
    case Op::kMatMul: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      as_matrix(ga).noalias() += as_matrix(g) * as_matrix(val(n.b)).transpose();
      as_matrix(gb).noalias() += as_matrix(val(n.a)).transpose() * as_matrix(g);
      break;
    }
    case Op::kTranspose:
      as_matrix(ga) += as_matrix(g).transpose();
      break;
    case Op::kAddRow: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      const Tensor& m = val(n.a);
      for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) {
          ga.at(i, j) += g.at(i, j);
          gb[j] += g.at(i, j);
        }
      break;
    }
    case Op::kSubCol: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      const Tensor& m = val(n.a);
      for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) {
          ga.at(i, j) += g.at(i, j);
          gb[i] -= g.at(i, j);
        }
      break;
    }
    case Op::kLeakyRelu: {
      const Tensor& a = val(n.a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (a[i] > 0.0 ? 1.0 : n.c);
      break;
    }
    case Op::kTanh:
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    case Op::kExp:
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
      break;
    case Op::kLog: {
      const Tensor& a = val(n.a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
      break;
    }
    case Op::kSquare: {
      const Tensor& a = val(n.a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * a[i] * g[i];
      break;
    }
    case Op::kSum:
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      break;
    case Op::kRowSum: {
      const Tensor& a = val(n.a);
      for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) ga.at(i, j) += g.at(i, 0);
      break;
    }
    case Op::kColSumT: {
      const Tensor& a = val(n.a);
      for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) ga.at(i, j) += g.at(j, 0);
      break;
    }
    case Op::kConcatCols: {
      Tensor& gb = grads_[static_cast<size_t>(n.b)];
      const Tensor& a = val(n.a);
      int ca = a.cols();
      for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
        for (int j = 0; j < gb.cols(); ++j) gb.at(i, j) += g.at(i, ca + j);
      }
      break;
    }
    case Op::kSliceRows: {
      int r0 = n.aux[0];
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) ga.at(r0 + i, j) += g.at(i, j);
      break;
    }
    case Op::kReshape:
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    case Op::kCatLogProb: {
      const Tensor& z = val(n.a);
      for (int i = 0; i < z.rows(); ++i) {
        double mx = z.at(i, 0);
        for (int j = 1; j < z.cols(); ++j) mx = std::max(mx, z.at(i, j));
        double lse = 0.0;
        for (int j = 0; j < z.cols(); ++j) lse += std::exp(z.at(i, j) - mx);
        for (int j = 0; j < z.cols(); ++j) {
          double p = std::exp(z.at(i, j) - mx) / lse;
          ga.at(i, j) += g[0] * ((j == n.aux[static_cast<size_t>(i)] ? 1.0 : 0.0) - p);
        }
      }
      break;
    }
    case Op::kInput:
      break;
  }
}

const Tensor& Tape::grad(Var v) const {
  if (!grads_valid_) throw ConfigError("grad() before backward()");
  return grads_[static_cast<size_t>(v.id)];
}

std::vector<Tensor> Tape::gradients(Var loss, std::span<const Var> wrt) {
  backward(loss);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (Var v : wrt) out.push_back(grads_[static_cast<size_t>(v.id)]);
  return out;
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  grads_valid_ = false;
}

}  // namespace dvi::ad
