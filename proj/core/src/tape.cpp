#include "mdn/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mdn/special.hpp"

namespace mdn {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_same_tape(Var a, Var b) {
  check(a.tape != nullptr && a.tape == b.tape, "tape op: operands on different tapes");
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// C(m,n) += A(m,k) * B(k,n)
void mm_nn_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a_row = A + static_cast<std::size_t>(i) * k;
    double* c_row = C + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      double a = a_row[l];
      const double* b_row = B + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
    }
  }
}

// C(m,n) += A(m,k) * B(n,k)^T
void mm_nt_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a_row = A + static_cast<std::size_t>(i) * k;
    double* c_row = C + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* b_row = B + static_cast<std::size_t>(j) * k;
      double acc = 0;
      for (int l = 0; l < k; ++l) acc += a_row[l] * b_row[l];
      c_row[j] += acc;
    }
  }
}

// C(m,n) += A(k,m)^T * B(k,n)
void mm_tn_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int l = 0; l < k; ++l) {
    const double* a_row = A + static_cast<std::size_t>(l) * m;
    const double* b_row = B + static_cast<std::size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      double a = a_row[i];
      double* c_row = C + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
    }
  }
}

}  // namespace

Var Tape::leaf(Tensor value, bool requires_grad) {
  TapeNode n;
  n.op = Op::Leaf;
  n.requires_grad = requires_grad;
  n.val = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emit(Op op, int a, int b, Tensor val, int i0, int i1, double c) {
  TapeNode n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.i0 = i0;
  n.i1 = i1;
  n.c = c;
  n.requires_grad = (a >= 0 && nodes_[a].requires_grad) || (b >= 0 && nodes_[b].requires_grad);
  n.val = std::move(val);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::ensure_grad(int id) {
  TapeNode& n = nodes_[id];
  if (n.grad.v.empty()) n.grad = Tensor::zeros(n.val.shape);
  return n.grad;
}

void Tape::backward(Var root) {
  check(root.tape == this && root.id >= 0, "backward: var not on this tape");
  check(nodes_[root.id].val.numel() == 1, "backward: root must be scalar");
  ensure_grad(root.id);
  nodes_[root.id].grad.v[0] = 1.0;

  for (int id = root.id; id >= 0; --id) {
    TapeNode& n = nodes_[id];
    if (n.op == Op::Leaf || n.grad.v.empty() || !n.requires_grad) continue;
    const std::vector<double>& g = n.grad.v;
    bool need_a = n.a >= 0 && nodes_[n.a].requires_grad;
    bool need_b = n.b >= 0 && nodes_[n.b].requires_grad;
    if (!need_a && !need_b) continue;

    switch (n.op) {
      case Op::Add: {
        if (need_a) {
          auto& ga = ensure_grad(n.a).v;
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (need_b) {
          auto& gb = ensure_grad(n.b).v;
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
        break;
      }
      case Op::Sub: {
        if (need_a) {
          auto& ga = ensure_grad(n.a).v;
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (need_b) {
          auto& gb = ensure_grad(n.b).v;
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        const auto& av = nodes_[n.a].val.v;
        const auto& bv = nodes_[n.b].val.v;
        if (need_a) {
          auto& ga = ensure_grad(n.a).v;
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (need_b) {
          auto& gb = ensure_grad(n.b).v;
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
        break;
      }
      case Op::Div: {
        const auto& bv = nodes_[n.b].val.v;
        const auto& yv = n.val.v;
        if (need_a) {
          auto& ga = ensure_grad(n.a).v;
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (need_b) {
          auto& gb = ensure_grad(n.b).v;
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * yv[i] / bv[i];
        }
        break;
      }
      case Op::Neg: {
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
        break;
      }
      case Op::Scale: {
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.c * g[i];
        break;
      }
      case Op::AddConst: {
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::Sigmoid: {
        const auto& yv = n.val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i] * (1.0 - yv[i]);
        break;
      }
      case Op::Tanh: {
        const auto& yv = n.val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
        break;
      }
      case Op::Softplus: {
        const auto& xv = nodes_[n.a].val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * stable_sigmoid(xv[i]);
        break;
      }
      case Op::Exp: {
        const auto& yv = n.val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
        break;
      }
      case Op::Log: {
        const auto& xv = nodes_[n.a].val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / xv[i];
        break;
      }
      case Op::Sqrt: {
        const auto& yv = n.val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (yv[i] > 0) ga[i] += g[i] / (2.0 * yv[i]);
        break;
      }
      case Op::Sin: {
        const auto& xv = nodes_[n.a].val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::cos(xv[i]);
        break;
      }
      case Op::Cos: {
        const auto& xv = nodes_[n.a].val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * std::sin(xv[i]);
        break;
      }
      case Op::Lgamma: {
        const auto& xv = nodes_[n.a].val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mdn::digamma(xv[i]);
        break;
      }
      case Op::Digamma: {
        const auto& xv = nodes_[n.a].val.v;
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mdn::trigamma(xv[i]);
        break;
      }
      case Op::Mm: {
        const Tensor& A = nodes_[n.a].val;
        const Tensor& B = nodes_[n.b].val;
        int m = A.rows(), k = A.cols(), nn = B.cols();
        if (need_a) mm_nt_acc(g.data(), B.v.data(), ensure_grad(n.a).v.data(), m, nn, k);
        if (need_b) mm_tn_acc(A.v.data(), g.data(), ensure_grad(n.b).v.data(), k, m, nn);
        break;
      }
      case Op::Mv: {
        const Tensor& A = nodes_[n.a].val;
        const Tensor& x = nodes_[n.b].val;
        int m = A.rows(), k = A.cols();
        if (need_a) {
          auto& ga = ensure_grad(n.a).v;
          for (int i = 0; i < m; ++i) {
            double gi = g[static_cast<std::size_t>(i)];
            double* row = ga.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) row[j] += gi * x.v[static_cast<std::size_t>(j)];
          }
        }
        if (need_b) {
          auto& gx = ensure_grad(n.b).v;
          const auto& Av = A.v;
          for (int i = 0; i < m; ++i) {
            double gi = g[static_cast<std::size_t>(i)];
            const double* row = Av.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) gx[static_cast<std::size_t>(j)] += gi * row[j];
          }
        }
        break;
      }
      case Op::Sum: {
        auto& ga = ensure_grad(n.a).v;
        double gs = g[0];
        for (double& x : ga) x += gs;
        break;
      }
      case Op::Concat: {
        std::size_t na = nodes_[n.a].val.numel();
        if (need_a) {
          auto& ga = ensure_grad(n.a).v;
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (need_b) {
          auto& gb = ensure_grad(n.b).v;
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
        }
        break;
      }
      case Op::Slice: {
        auto& ga = ensure_grad(n.a).v;
        for (int i = 0; i < n.i1; ++i) ga[static_cast<std::size_t>(n.i0 + i)] += g[static_cast<std::size_t>(i)];
        break;
      }
      case Op::Reshape: {
        auto& ga = ensure_grad(n.a).v;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::Leaf:
        break;
    }
  }
}

namespace {

Tensor ew_binary(const Tensor& a, const Tensor& b, const char* name, double (*f)(double, double)) {
  check(a.same_shape(b), std::string(name) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = f(a.v[i], b.v[i]);
  return out;
}

Tensor ew_unary(const Tensor& a, double (*f)(double)) {
  Tensor out = a;
  for (double& x : out.v) x = f(x);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = ew_binary(a.tape->val(a), b.tape->val(b), "add", [](double x, double y) { return x + y; });
  return a.tape->emit(Op::Add, a.id, b.id, std::move(out));
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = ew_binary(a.tape->val(a), b.tape->val(b), "sub", [](double x, double y) { return x - y; });
  return a.tape->emit(Op::Sub, a.id, b.id, std::move(out));
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = ew_binary(a.tape->val(a), b.tape->val(b), "mul", [](double x, double y) { return x * y; });
  return a.tape->emit(Op::Mul, a.id, b.id, std::move(out));
}

Var div(Var a, Var b) {
  check_same_tape(a, b);
  Tensor out = ew_binary(a.tape->val(a), b.tape->val(b), "div", [](double x, double y) { return x / y; });
  return a.tape->emit(Op::Div, a.id, b.id, std::move(out));
}

Var neg(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return -x; });
  return a.tape->emit(Op::Neg, a.id, -1, std::move(out));
}

Var scale(Var a, double k) {
  Tensor out = a.tape->val(a);
  for (double& x : out.v) x *= k;
  return a.tape->emit(Op::Scale, a.id, -1, std::move(out), 0, 0, k);
}

Var add_const(Var a, double k) {
  Tensor out = a.tape->val(a);
  for (double& x : out.v) x += k;
  return a.tape->emit(Op::AddConst, a.id, -1, std::move(out), 0, 0, k);
}

Var sigmoid(Var a) {
  Tensor out = ew_unary(a.tape->val(a), stable_sigmoid);
  return a.tape->emit(Op::Sigmoid, a.id, -1, std::move(out));
}

Var tanh(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return std::tanh(x); });
  return a.tape->emit(Op::Tanh, a.id, -1, std::move(out));
}

Var softplus(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
  return a.tape->emit(Op::Softplus, a.id, -1, std::move(out));
}

Var exp(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return std::exp(x); });
  return a.tape->emit(Op::Exp, a.id, -1, std::move(out));
}

Var log(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return std::log(x); });
  return a.tape->emit(Op::Log, a.id, -1, std::move(out));
}

Var sqrt(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return std::sqrt(x); });
  return a.tape->emit(Op::Sqrt, a.id, -1, std::move(out));
}

Var sin(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return std::sin(x); });
  return a.tape->emit(Op::Sin, a.id, -1, std::move(out));
}

Var cos(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return std::cos(x); });
  return a.tape->emit(Op::Cos, a.id, -1, std::move(out));
}

Var lgamma(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return lgamma_pos(x); });
  return a.tape->emit(Op::Lgamma, a.id, -1, std::move(out));
}

Var digamma(Var a) {
  Tensor out = ew_unary(a.tape->val(a), [](double x) { return mdn::digamma(x); });
  return a.tape->emit(Op::Digamma, a.id, -1, std::move(out));
}

Var mm(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& A = a.tape->val(a);
  const Tensor& B = b.tape->val(b);
  check(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
        "mm: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
  Tensor out = Tensor::zeros({A.rows(), B.cols()});
  mm_nn_acc(A.v.data(), B.v.data(), out.v.data(), A.rows(), A.cols(), B.cols());
  return a.tape->emit(Op::Mm, a.id, b.id, std::move(out));
}

Var mv(Var a, Var x) {
  check_same_tape(a, x);
  const Tensor& A = a.tape->val(a);
  const Tensor& X = x.tape->val(x);
  check(A.rank() == 2 && X.rank() == 1 && A.cols() == X.dim(0),
        "mv: incompatible shapes " + A.shape_str() + " x " + X.shape_str());
  int m = A.rows(), k = A.cols();
  Tensor out = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    const double* row = A.v.data() + static_cast<std::size_t>(i) * k;
    double acc = 0;
    for (int j = 0; j < k; ++j) acc += row[j] * X.v[static_cast<std::size_t>(j)];
    out.v[static_cast<std::size_t>(i)] = acc;
  }
  return a.tape->emit(Op::Mv, a.id, x.id, std::move(out));
}

Var sum(Var a) {
  const Tensor& A = a.tape->val(a);
  double acc = 0;
  for (double x : A.v) acc += x;
  return a.tape->emit(Op::Sum, a.id, -1, Tensor::scalar(acc));
}

Var concat(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& A = a.tape->val(a);
  const Tensor& B = b.tape->val(b);
  check(A.rank() <= 1 && B.rank() <= 1, "concat: operands must be scalars or vectors");
  Tensor out = Tensor::zeros({static_cast<int>(A.numel() + B.numel())});
  std::size_t i = 0;
  for (double x : A.v) out.v[i++] = x;
  for (double x : B.v) out.v[i++] = x;
  return a.tape->emit(Op::Concat, a.id, b.id, std::move(out));
}

Var slice(Var a, int start, int len) {
  const Tensor& A = a.tape->val(a);
  check(A.rank() == 1, "slice: operand must be a vector");
  check(start >= 0 && len >= 0 && start + len <= A.dim(0), "slice: range out of bounds");
  Tensor out = Tensor::zeros({len});
  for (int i = 0; i < len; ++i) out.v[static_cast<std::size_t>(i)] = A.v[static_cast<std::size_t>(start + i)];
  return a.tape->emit(Op::Slice, a.id, -1, std::move(out), start, len);
}

Var reshape(Var a, std::vector<int> shape) {
  const Tensor& A = a.tape->val(a);
  check(shape_numel(shape) == A.numel(), "reshape: element count mismatch");
  Tensor out;
  out.shape = std::move(shape);
  out.v = A.v;
  return a.tape->emit(Op::Reshape, a.id, -1, std::move(out));
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }
Var sumsq(Var a) { return sum(mul(a, a)); }
Var linear(Var w, Var x, Var b) { return add(mv(w, x), b); }

}  // namespace mdn
