#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dvi/rng.hpp"
#include "dvi/tape.hpp"
#include "dvi/tensor.hpp"

namespace dvi::test {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

/// Central finite differences of f at x, one coordinate at a time.
inline Tensor finite_difference(const std::function<double(const Tensor&)>& f, Tensor x,
                                double h = 1e-5) {
  Tensor g = Tensor::zeros_like(x);
  for (int64_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + h;
    double up = f(x);
    x[i] = orig - h;
    double dn = f(x);
    x[i] = orig;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

/// Max relative error between analytic and finite-difference gradients,
/// guarded against tiny denominators.
inline double max_rel_error(const Tensor& analytic, const Tensor& fd, double floor = 1.0) {
  double worst = 0.0;
  for (int64_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({floor, std::abs(analytic[i]), std::abs(fd[i])});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;
};

inline MeanVar mean_var(std::span<const double> v) {
  MeanVar mv;
  for (double x : v) mv.mean += x;
  mv.mean /= static_cast<double>(v.size());
  for (double x : v) mv.var += (x - mv.mean) * (x - mv.mean);
  mv.var /= static_cast<double>(v.size() - 1);
  return mv;
}

}  // namespace dvi::test
