#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace trunk {

// Dense row-major tensor of doubles. Double precision keeps the analytic
// gradients comparable with central finite differences at tight tolerances.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    data.assign(numel(), 0.0);
  }

  size_t numel() const {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
  }
  size_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  // NCHW access
  double& at4(size_t n, size_t c, size_t h, size_t w) {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  double at4(size_t n, size_t c, size_t h, size_t w) const {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  // NF access
  double& at2(size_t n, size_t f) { return data[n * shape[1] + f]; }
  double at2(size_t n, size_t f) const { return data[n * shape[1] + f]; }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }
};

}  // namespace trunk
