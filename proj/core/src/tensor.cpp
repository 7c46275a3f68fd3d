#include "mdn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace mdn {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  t.v.assign(shape_numel(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double x) {
  Tensor t;
  t.v.assign(shape_numel(shape), x);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::vector(std::vector<double> data) {
  Tensor t;
  t.shape = {static_cast<int>(data.size())};
  t.v = std::move(data);
  return t;
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> data) {
  if (data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw std::invalid_argument("matrix data size does not match rows*cols");
  Tensor t;
  t.shape = {rows, cols};
  t.v = std::move(data);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace mdn
