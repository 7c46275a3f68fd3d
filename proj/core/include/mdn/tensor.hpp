#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mdn {

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 (vector) or 2 (matrix).
// Shape is fixed at construction; values are mutable.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  static Tensor scalar(double x) { return Tensor{{}, {x}}; }
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double x);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(int rows, int cols, std::vector<double> data);

  std::size_t numel() const { return v.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }

  double& at(int i) { return v[static_cast<std::size_t>(i)]; }
  double at(int i) const { return v[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace mdn
