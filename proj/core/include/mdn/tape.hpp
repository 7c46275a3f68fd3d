#pragma once

#include <cstdint>
#include <vector>

#include "mdn/tensor.hpp"

namespace mdn {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid until Tape::clear().
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Add, Sub, Mul, Div, Neg,
  Scale, AddConst,
  Sigmoid, Tanh, Softplus, Exp, Log, Sqrt, Sin, Cos,
  Lgamma, Digamma,
  Mm, Mv,
  Sum,
  Concat, Slice, Reshape,
};

struct TapeNode {
  Op op = Op::Leaf;
  int a = -1, b = -1;
  int i0 = 0, i1 = 0;  // slice payload
  double c = 0.0;      // scalar payload
  bool requires_grad = false;
  Tensor val;
  Tensor grad;  // empty until backward reaches this node
};

// Reverse-mode tape. Nodes are appended in topological order by construction,
// so backward() is a single reverse sweep. Gradients only accumulate into
// subgraphs that contain a requires_grad leaf.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(double x) { return leaf(Tensor::scalar(x)); }
  Var constant(Tensor value) { return leaf(std::move(value)); }

  const Tensor& val(Var x) const { return nodes_[x.id].val; }
  const Tensor& grad(Var x) const { return nodes_[x.id].grad; }
  bool has_grad(Var x) const { return !nodes_[x.id].grad.v.empty(); }

  // Seeds d(root)/d(root) = 1 and sweeps. root must be scalar.
  void backward(Var root);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  Var emit(Op op, int a, int b, Tensor val, int i0 = 0, int i1 = 0, double c = 0.0);
  TapeNode& node(int id) { return nodes_[id]; }
  const TapeNode& node(int id) const { return nodes_[id]; }

 private:
  Tensor& ensure_grad(int id);
  std::vector<TapeNode> nodes_;
};

// Elementwise (shapes must match).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);

Var scale(Var a, double k);      // k * a
Var add_const(Var a, double k);  // a + k

Var sigmoid(Var a);
Var tanh(Var a);
Var softplus(Var a);  // max(x,0) + log1p(exp(-|x|)); backward is sigmoid
Var exp(Var a);
Var log(Var a);       // domain: positive entries
Var sqrt(Var a);      // domain: non-negative; derivative taken as 0 at 0
Var sin(Var a);
Var cos(Var a);
Var lgamma(Var a);    // domain: positive entries
Var digamma(Var a);   // domain: positive entries

Var mm(Var a, Var b);  // [m,k]x[k,n] -> [m,n]
Var mv(Var a, Var x);  // [m,k]x[k]   -> [m]

Var sum(Var a);  // -> scalar

Var concat(Var a, Var b);             // rank <= 1 operands -> vector
Var slice(Var a, int start, int len); // vector -> vector
Var reshape(Var a, std::vector<int> shape);

// Composites.
Var dot(Var a, Var b);
Var sumsq(Var a);
Var linear(Var w, Var x, Var b);  // w*x + b

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double k, Var a) { return scale(a, k); }
inline Var operator*(Var a, double k) { return scale(a, k); }
inline Var operator+(Var a, double k) { return add_const(a, k); }
inline Var operator+(double k, Var a) { return add_const(a, k); }
inline Var operator-(Var a, double k) { return add_const(a, -k); }
inline Var operator-(double k, Var a) { return add_const(neg(a), k); }

}  // namespace mdn
