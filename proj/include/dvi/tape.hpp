#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dvi/tensor.hpp"

namespace dvi::ad {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Record-and-replay reverse-mode autodiff over dense tensors.
///
/// Every operation appends one node holding its output value; backward()
/// walks the record once in reverse, accumulating gradients of a scalar
/// loss into every node. Inputs that do not reach the loss keep zero
/// gradients.
class Tape {
 public:
  /// Leaf node (parameter or data constant).
  Var input(Tensor value);

  // Elementwise, same shape.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var scale(Var a, double c);       // c * a
  Var add_const(Var a, double c);   // a + c
  Var neg(Var a) { return scale(a, -1.0); }

  /// Broadcast a [1] tensor across every element.
  Var mul_scalar(Var a, Var s);
  Var add_scalar(Var a, Var s);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  /// mat[i,j] + row[j]
  Var add_row(Var mat, Var row);
  /// mat[i,j] - col[i]
  Var sub_col(Var mat, Var col);

  Var leaky_relu(Var a, double slope);
  Var tanh_op(Var a);
  Var exp_op(Var a);
  Var log_op(Var a);
  Var square(Var a);

  /// Sum of all elements -> shape [1].
  Var sum(Var a);
  /// Row sums: RxC -> Rx1.
  Var row_sum(Var a);
  /// Column sums transposed: RxC -> Cx1.
  Var col_sum_t(Var a);

  Var concat_cols(Var a, Var b);
  Var slice_rows(Var a, int r0, int r1);
  Var reshape(Var a, std::vector<int> shape);

  /// Sum_i log softmax(logits)[i, labels[i]] -> shape [1].
  Var categorical_logprob_sum(Var logits, std::vector<int> labels);

  const Tensor& value(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Reverse pass from a scalar loss; gradients stay valid until the next
  /// recorded op or reset().
  void backward(Var loss);
  const Tensor& grad(Var v) const;
  std::vector<Tensor> gradients(Var loss, std::span<const Var> wrt);

  void reset();

 private:
  enum class Op : uint8_t {
    kInput, kAdd, kSub, kMul, kDiv, kScale, kAddConst, kMulScalar, kAddScalar,
    kMatMul, kTranspose, kAddRow, kSubCol, kLeakyRelu, kTanh, kExp, kLog,
    kSquare, kSum, kRowSum, kColSumT, kConcatCols, kSliceRows, kReshape,
    kCatLogProb,
  };

  struct Node {
    Tensor value;
    Op op = Op::kInput;
    int a = -1;
    int b = -1;
    double c = 0.0;
    std::vector<int> aux;  // labels / slice bounds
  };

  Var push(Node node);
  const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool grads_valid_ = false;
};

}  // namespace dvi::ad
