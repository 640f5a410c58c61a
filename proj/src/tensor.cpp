#include "dvi/tensor.hpp"

#include <cmath>
#include <sstream>

#include "dvi/errors.hpp"

namespace dvi {

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), values_(static_cast<size_t>(shape_size(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != static_cast<int64_t>(values_.size())) {
    throw ConfigError("tensor value count " + std::to_string(values_.size()) +
                      " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : t.values_) x = v;
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

int Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() == 1) return 1;
  throw ConfigError("rows() on tensor of shape " + shape_str());
}

int Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  throw ConfigError("cols() on tensor of shape " + shape_str());
}

double& Tensor::at(int r, int c) {
  return values_[static_cast<size_t>(r) * cols() + c];
}

double Tensor::at(int r, int c) const {
  return values_[static_cast<size_t>(r) * cols() + c];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ConfigError("item() on tensor of shape " + shape_str());
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_size(shape) != size()) {
    throw ConfigError("cannot reshape " + shape_str() + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

}  // namespace dvi
