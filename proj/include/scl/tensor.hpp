#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "scl/common.hpp"
#include "scl/rng.hpp"

// Reverse-mode automatic differentiation over dense row-major f64 tensors.
// Graphs are define-by-run: every op allocates a fresh node; leaves (model
// parameters, inputs) persist across graphs and accumulate gradients.

namespace scl {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily by backward()
  bool requires_grad = false;
  const char* op = "leaf";
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // pulls this->grad into parents
};

namespace detail {

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
}

// A sum over a buffer is finite iff every element is.
inline bool all_finite(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return std::isfinite(s);
}

}  // namespace detail

class Tensor {
 public:
  Tensor() : n_(std::make_shared<TensorNode>()) {
    n_->shape = {0};
    n_->id = detail::next_node_id();
  }

  Tensor(Shape shape, std::vector<double> data) : n_(std::make_shared<TensorNode>()) {
    if (numel_of(shape) != static_cast<long>(data.size()))
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    n_->shape = std::move(shape);
    n_->value = std::move(data);
    n_->id = detail::next_node_id();
  }

  static Tensor zeros(Shape shape) {
    size_t n = static_cast<size_t>(numel_of(shape));
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor full(Shape shape, double v) {
    size_t n = static_cast<size_t>(numel_of(shape));
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    size_t n = static_cast<size_t>(numel_of(shape));
    std::vector<double> d(n);
    for (auto& x : d) x = rng.normal() * stddev;
    return Tensor(std::move(shape), std::move(d));
  }

  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  long numel() const { return static_cast<long>(n_->value.size()); }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }

  const std::vector<double>& values() const { return n_->value; }
  std::vector<double>& mutable_values() { return n_->value; }
  double at(long i) const { return n_->value[static_cast<size_t>(i)]; }

  double item() const {
    if (numel() != 1)
      throw ShapeError("item: tensor " + shape_str(n_->shape) + " is not a scalar");
    return n_->value[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    n_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<double>& grad() const { return n_->grad; }
  void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }
  void drop_grad() { n_->grad.clear(); }

  std::uint64_t id() const { return n_->id; }
  const char* op() const { return n_->op; }
  const std::shared_ptr<TensorNode>& node() const { return n_; }

 private:
  std::shared_ptr<TensorNode> n_;
};

namespace detail {

inline Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs, std::function<void(TensorNode&)> backprop) {
  Tensor out(std::move(shape), std::move(value));
  TensorNode& n = *out.node();
  n.op = op;
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    n.requires_grad = true;
    n.parents.reserve(inputs.size());
    for (const auto& t : inputs) n.parents.push_back(t.node());
    n.backprop = std::move(backprop);
  }
  return out;
}

inline void check_finite_elementwise(const char* op, const std::vector<double>& v) {
  if (!all_finite(v))
    throw NonFiniteError(std::string("elementwise op '") + op + "' produced a non-finite value");
}

// ---- matmul kernels (row-major). Inner loops contiguous for vectorization.

// C[m,n] += A[m,k] * B[k,n]
inline void mm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* c = C + static_cast<long>(i) * n;
    const double* a = A + static_cast<long>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      double av = a[kk];
      const double* b = B + static_cast<long>(kk) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
inline void mm_nt(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<long>(i) * k;
    double* c = C + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* b = B + static_cast<long>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += a[kk] * b[kk];
      c[j] += s;
    }
  }
}

// C[m,n] += A[p,m]^T * B[p,n]
inline void mm_tn(const double* A, const double* B, double* C, int p, int m, int n) {
  for (int kk = 0; kk < p; ++kk) {
    const double* a = A + static_cast<long>(kk) * m;
    const double* b = B + static_cast<long>(kk) * n;
    for (int i = 0; i < m; ++i) {
      double av = a[i];
      double* c = C + static_cast<long>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------- matmul

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  detail::mm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return detail::make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    if (pa.requires_grad) {
      detail::ensure_grad(pa);
      detail::mm_nt(self.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
    }
    if (pb.requires_grad) {
      detail::ensure_grad(pb);
      detail::mm_tn(pa.value.data(), self.grad.data(), pb.grad.data(), m, k, n);
    }
  });
}

// ---------------------------------------------------------------- conv1d
//
// Valid cross-correlation, implemented as im2col + matmul so the hot path is
// the mm kernels above. x: [c_in,L] or [B,c_in,L]; w: [c_out,c_in,k];
// bias: [c_out] or empty.

inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
  if (x.rank() != 2 && x.rank() != 3)
    throw ShapeError("conv1d: input must be [c_in,L] or [B,c_in,L], got " + shape_str(x.shape()));
  if (w.rank() != 3)
    throw ShapeError("conv1d: weight must be [c_out,c_in,k], got " + shape_str(w.shape()));
  if (stride < 1) throw ShapeError("conv1d: stride must be >= 1, got " + std::to_string(stride));
  const bool batched = x.rank() == 3;
  const int B = batched ? x.dim(0) : 1;
  const int cin = batched ? x.dim(1) : x.dim(0);
  const int L = batched ? x.dim(2) : x.dim(1);
  const int cout = w.dim(0), kw = w.dim(2);
  if (w.dim(1) != cin)
    throw ShapeError("conv1d: weight expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                     std::to_string(cin));
  if (L < kw)
    throw ShapeError("conv1d: input too short, length " + std::to_string(L) + " < kernel " +
                     std::to_string(kw));
  const bool has_bias = bias.numel() > 0;
  if (has_bias && !(bias.rank() == 1 && bias.dim(0) == cout))
    throw ShapeError("conv1d: bias must be [c_out]=" + std::to_string(cout) + ", got " +
                     shape_str(bias.shape()));
  const int lout = (L - kw) / stride + 1;
  const int cols = B * lout;
  const int rows = cin * kw;

  auto col = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * cols);
  const double* xv = x.values().data();
  for (int b = 0; b < B; ++b) {
    for (int ci = 0; ci < cin; ++ci) {
      const double* xr = xv + (static_cast<long>(b) * cin + ci) * L;
      for (int t = 0; t < kw; ++t) {
        double* cr = col->data() + (static_cast<long>(ci) * kw + t) * cols + static_cast<long>(b) * lout;
        for (int o = 0; o < lout; ++o) cr[o] = xr[o * stride + t];
      }
    }
  }
  std::vector<double> y(static_cast<size_t>(cout) * cols, 0.0);
  detail::mm_nn(w.values().data(), col->data(), y.data(), cout, rows, cols);

  Shape out_shape = batched ? Shape{B, cout, lout} : Shape{cout, lout};
  std::vector<double> out(static_cast<size_t>(B) * cout * lout);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < cout; ++co) {
      const double* src = y.data() + static_cast<long>(co) * cols + static_cast<long>(b) * lout;
      double* dst = out.data() + (static_cast<long>(b) * cout + co) * lout;
      double bv = has_bias ? bias.at(co) : 0.0;
      for (int o = 0; o < lout; ++o) dst[o] = src[o] + bv;
    }

  std::vector<Tensor> inputs = {x, w};
  if (has_bias) inputs.push_back(bias);
  return detail::make_op(
      "conv1d", std::move(out_shape), std::move(out), std::move(inputs),
      [B, cin, L, cout, kw, lout, stride, col, has_bias](TensorNode& self) {
        const int cols = B * lout;
        const int rows = cin * kw;
        TensorNode& px = *self.parents[0];
        TensorNode& pw = *self.parents[1];
        // regroup upstream grad into [cout, B*lout]
        std::vector<double> dy(static_cast<size_t>(cout) * cols);
        for (int b = 0; b < B; ++b)
          for (int co = 0; co < cout; ++co) {
            const double* src = self.grad.data() + (static_cast<long>(b) * cout + co) * lout;
            double* dst = dy.data() + static_cast<long>(co) * cols + static_cast<long>(b) * lout;
            std::copy(src, src + lout, dst);
          }
        if (pw.requires_grad) {
          detail::ensure_grad(pw);
          detail::mm_nt(dy.data(), col->data(), pw.grad.data(), cout, cols, rows);
        }
        if (px.requires_grad) {
          detail::ensure_grad(px);
          std::vector<double> dcol(static_cast<size_t>(rows) * cols, 0.0);
          detail::mm_tn(pw.value.data(), dy.data(), dcol.data(), cout, rows, cols);
          for (int b = 0; b < B; ++b)
            for (int ci = 0; ci < cin; ++ci) {
              double* dxr = px.grad.data() + (static_cast<long>(b) * cin + ci) * L;
              for (int t = 0; t < kw; ++t) {
                const double* cr =
                    dcol.data() + (static_cast<long>(ci) * kw + t) * cols + static_cast<long>(b) * lout;
                for (int o = 0; o < lout; ++o) dxr[o * stride + t] += cr[o];
              }
            }
        }
        if (has_bias && self.parents.size() > 2 && self.parents[2]->requires_grad) {
          TensorNode& pbias = *self.parents[2];
          detail::ensure_grad(pbias);
          for (int co = 0; co < cout; ++co) {
            const double* r = dy.data() + static_cast<long>(co) * cols;
            double s = 0.0;
            for (int j = 0; j < cols; ++j) s += r[j];
            pbias.grad[co] += s;
          }
        }
      });
}

inline Tensor conv1d(const Tensor& x, const Tensor& w, int stride) {
  return conv1d(x, w, Tensor({0}, {}), stride);
}

// ------------------------------------------------- elementwise binary ops
//
// Shapes: equal, scalar (1-element) broadcast on either side, or row
// broadcast [1,n] against [m,n].

namespace detail {

enum class Broadcast { Same, ScalarA, ScalarB, RowA, RowB };

inline Broadcast broadcast_mode(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::Same;
  if (numel_of(b) == 1) return Broadcast::ScalarB;
  if (numel_of(a) == 1) return Broadcast::ScalarA;
  if (a.size() == 2 && b.size() == 2 && b[0] == 1 && a[1] == b[1]) return Broadcast::RowB;
  if (a.size() == 2 && b.size() == 2 && a[0] == 1 && a[1] == b[1]) return Broadcast::RowA;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <class F>
inline Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F&& fn,
                        std::function<void(TensorNode&)> backprop) {
  Broadcast mode = broadcast_mode(name, a.shape(), b.shape());
  const Shape& out_shape = (mode == Broadcast::ScalarA || mode == Broadcast::RowA) ? b.shape() : a.shape();
  const long n = numel_of(out_shape);
  const long cols = out_shape.size() == 2 ? out_shape[1] : n;
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<size_t>(n));
  auto ia = [&](long i) -> long {
    switch (mode) {
      case Broadcast::ScalarA: return 0;
      case Broadcast::RowA: return i % cols;
      default: return i;
    }
  };
  auto ib = [&](long i) -> long {
    switch (mode) {
      case Broadcast::ScalarB: return 0;
      case Broadcast::RowB: return i % cols;
      default: return i;
    }
  };
  for (long i = 0; i < n; ++i) out[static_cast<size_t>(i)] = fn(av[ia(i)], bv[ib(i)]);
  check_finite_elementwise(name, out);
  return make_op(name, out_shape, std::move(out), {a, b}, std::move(backprop));
}

// Index helpers reused inside backprop closures.
struct BinIndex {
  Broadcast mode;
  long cols;
  long a_of(long i) const {
    return mode == Broadcast::ScalarA ? 0 : (mode == Broadcast::RowA ? i % cols : i);
  }
  long b_of(long i) const {
    return mode == Broadcast::ScalarB ? 0 : (mode == Broadcast::RowB ? i % cols : i);
  }
};

inline BinIndex bin_index(const char* op, const Shape& a, const Shape& b) {
  Broadcast mode = broadcast_mode(op, a, b);
  const Shape& out = (mode == Broadcast::ScalarA || mode == Broadcast::RowA) ? b : a;
  long cols = out.size() == 2 ? out[1] : numel_of(out);
  return {mode, cols};
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  auto bi = detail::bin_index("add", a.shape(), b.shape());
  return detail::binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [bi](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        const long n = static_cast<long>(self.grad.size());
        if (pa.requires_grad) {
          detail::ensure_grad(pa);
          for (long i = 0; i < n; ++i) pa.grad[static_cast<size_t>(bi.a_of(i))] += self.grad[static_cast<size_t>(i)];
        }
        if (pb.requires_grad) {
          detail::ensure_grad(pb);
          for (long i = 0; i < n; ++i) pb.grad[static_cast<size_t>(bi.b_of(i))] += self.grad[static_cast<size_t>(i)];
        }
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  auto bi = detail::bin_index("sub", a.shape(), b.shape());
  return detail::binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [bi](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        const long n = static_cast<long>(self.grad.size());
        if (pa.requires_grad) {
          detail::ensure_grad(pa);
          for (long i = 0; i < n; ++i) pa.grad[static_cast<size_t>(bi.a_of(i))] += self.grad[static_cast<size_t>(i)];
        }
        if (pb.requires_grad) {
          detail::ensure_grad(pb);
          for (long i = 0; i < n; ++i) pb.grad[static_cast<size_t>(bi.b_of(i))] -= self.grad[static_cast<size_t>(i)];
        }
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  auto bi = detail::bin_index("mul", a.shape(), b.shape());
  return detail::binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [bi](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        const long n = static_cast<long>(self.grad.size());
        if (pa.requires_grad) {
          detail::ensure_grad(pa);
          for (long i = 0; i < n; ++i)
            pa.grad[static_cast<size_t>(bi.a_of(i))] +=
                self.grad[static_cast<size_t>(i)] * pb.value[static_cast<size_t>(bi.b_of(i))];
        }
        if (pb.requires_grad) {
          detail::ensure_grad(pb);
          for (long i = 0; i < n; ++i)
            pb.grad[static_cast<size_t>(bi.b_of(i))] +=
                self.grad[static_cast<size_t>(i)] * pa.value[static_cast<size_t>(bi.a_of(i))];
        }
      });
}

// Denominator magnitudes are floored at eps (sign-preserving; 0 counts as +).
inline Tensor divide(const Tensor& a, const Tensor& b, double eps = 1e-8) {
  auto bi = detail::bin_index("div", a.shape(), b.shape());
  auto guard = [eps](double y) { return std::abs(y) < eps ? (y < 0 ? -eps : eps) : y; };
  return detail::binary_op(
      "div", a, b, [guard](double x, double y) { return x / guard(y); },
      [bi, guard, eps](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        const long n = static_cast<long>(self.grad.size());
        if (pa.requires_grad) {
          detail::ensure_grad(pa);
          for (long i = 0; i < n; ++i)
            pa.grad[static_cast<size_t>(bi.a_of(i))] +=
                self.grad[static_cast<size_t>(i)] / guard(pb.value[static_cast<size_t>(bi.b_of(i))]);
        }
        if (pb.requires_grad) {
          detail::ensure_grad(pb);
          for (long i = 0; i < n; ++i) {
            double y = pb.value[static_cast<size_t>(bi.b_of(i))];
            if (std::abs(y) < eps) continue;  // clamped region: flat
            double x = pa.value[static_cast<size_t>(bi.a_of(i))];
            pb.grad[static_cast<size_t>(bi.b_of(i))] -= self.grad[static_cast<size_t>(i)] * x / (y * y);
          }
        }
      });
}

// ------------------------------------------------------------ unary ops

namespace detail {

template <class FwdF, class GradF>
inline Tensor unary_op(const char* name, const Tensor& x, FwdF&& fwd, GradF&& dfn) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  check_finite_elementwise(name, out);
  return make_op(name, x.shape(), std::move(out), {x}, [dfn](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    detail::ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * dfn(p.value[i]);
  });
}

}  // namespace detail

// relu'(0) = 0 by convention.
inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v) { return v > 0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double v) { return std::exp(v); });
}

// log(max(x, eps)); flat below the floor.
inline Tensor log(const Tensor& x, double eps = 1e-8) {
  return detail::unary_op(
      "log", x, [eps](double v) { return std::log(v < eps ? eps : v); },
      [eps](double v) { return v < eps ? 0.0 : 1.0 / v; });
}

inline Tensor neg(const Tensor& x) {
  return detail::unary_op(
      "neg", x, [](double v) { return -v; }, [](double) { return -1.0; });
}

inline Tensor clamp_min(const Tensor& x, double floor) {
  return detail::unary_op(
      "clamp_min", x, [floor](double v) { return v < floor ? floor : v; },
      [floor](double v) { return v > floor ? 1.0 : 0.0; });
}

// ------------------------------------------------------------ operators

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return divide(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor operator+(double s, const Tensor& a) { return add(Tensor::scalar(s), a); }
inline Tensor operator-(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
inline Tensor operator-(double s, const Tensor& a) { return sub(Tensor::scalar(s), a); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor operator*(double s, const Tensor& a) { return mul(Tensor::scalar(s), a); }
inline Tensor operator/(const Tensor& a, double s) { return divide(a, Tensor::scalar(s)); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ------------------------------------------------------------ reductions

// Full reduction to a 1-element tensor. sum of an empty tensor is 0.
inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return detail::make_op("sum", {1}, {s}, {x}, [](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    detail::ensure_grad(p);
    double g = self.grad[0];
    for (auto& pg : p.grad) pg += g;
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.values()) s += v;
  return detail::make_op("mean", {1}, {s * inv}, {x}, [inv](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    detail::ensure_grad(p);
    double g = self.grad[0] * inv;
    for (auto& pg : p.grad) pg += g;
  });
}

namespace detail {

inline void axis_extents(const Shape& s, int axis, long& outer, long& len, long& inner) {
  outer = 1;
  inner = 1;
  len = s[static_cast<size_t>(axis)];
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

inline Tensor axis_reduce(const char* name, const Tensor& x, int axis, bool take_mean) {
  if (axis < 0 || axis >= x.rank())
    throw ShapeError(std::string(name) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  long outer, len, inner;
  axis_extents(x.shape(), axis, outer, len, inner);
  if (take_mean && len == 0) throw ShapeError("mean: empty axis");
  Shape out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));
  if (out_shape.empty()) out_shape = {1};
  const double scale = take_mean ? 1.0 / static_cast<double>(len) : 1.0;
  std::vector<double> out(static_cast<size_t>(outer * inner), 0.0);
  const auto& xv = x.values();
  for (long o = 0; o < outer; ++o)
    for (long a = 0; a < len; ++a) {
      const double* src = xv.data() + (o * len + a) * inner;
      double* dst = out.data() + o * inner;
      for (long i = 0; i < inner; ++i) dst[i] += src[i];
    }
  if (take_mean)
    for (auto& v : out) v *= scale;
  return make_op(name, std::move(out_shape), std::move(out), {x},
                 [outer, len, inner, scale](TensorNode& self) {
                   TensorNode& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   detail::ensure_grad(p);
                   for (long o = 0; o < outer; ++o)
                     for (long a = 0; a < len; ++a) {
                       double* dst = p.grad.data() + (o * len + a) * inner;
                       const double* src = self.grad.data() + o * inner;
                       for (long i = 0; i < inner; ++i) dst[i] += src[i] * scale;
                     }
                 });
}

}  // namespace detail

inline Tensor sum(const Tensor& x, int axis) { return detail::axis_reduce("sum", x, axis, false); }
inline Tensor mean(const Tensor& x, int axis) { return detail::axis_reduce("mean", x, axis, true); }

// ---------------------------------------------------- cosine similarity
//
// <u,v> / (max(|u|,eps) * max(|v|,eps)), row-wise for [B,d] inputs.
// Norms below eps are treated as the constant eps (flat gradient region).

inline Tensor cosine_similarity(const Tensor& u, const Tensor& v, double eps = 1e-8) {
  if (u.shape() != v.shape())
    throw ShapeError("cosine_similarity: shape mismatch " + shape_str(u.shape()) + " vs " +
                     shape_str(v.shape()));
  if (u.rank() != 1 && u.rank() != 2)
    throw ShapeError("cosine_similarity: expects [d] or [B,d], got " + shape_str(u.shape()));
  const long B = u.rank() == 2 ? u.dim(0) : 1;
  const long d = u.rank() == 2 ? u.dim(1) : u.dim(0);
  if (d < 1) throw ShapeError("cosine_similarity: empty vectors");
  const auto& uv = u.values();
  const auto& vv = v.values();
  std::vector<double> out(static_cast<size_t>(B));
  for (long r = 0; r < B; ++r) {
    const double* ur = uv.data() + r * d;
    const double* vr = vv.data() + r * d;
    double dot = 0, nu2 = 0, nv2 = 0;
    for (long j = 0; j < d; ++j) {
      dot += ur[j] * vr[j];
      nu2 += ur[j] * ur[j];
      nv2 += vr[j] * vr[j];
    }
    double nu = std::max(std::sqrt(nu2), eps);
    double nv = std::max(std::sqrt(nv2), eps);
    out[static_cast<size_t>(r)] = dot / (nu * nv);
  }
  Shape out_shape = u.rank() == 2 ? Shape{static_cast<int>(B)} : Shape{1};
  return detail::make_op(
      "cosine_similarity", std::move(out_shape), std::move(out), {u, v},
      [B, d, eps](TensorNode& self) {
        TensorNode& pu = *self.parents[0];
        TensorNode& pv = *self.parents[1];
        if (pu.requires_grad) detail::ensure_grad(pu);
        if (pv.requires_grad) detail::ensure_grad(pv);
        for (long r = 0; r < B; ++r) {
          const double* ur = pu.value.data() + r * d;
          const double* vr = pv.value.data() + r * d;
          double dot = 0, nu2 = 0, nv2 = 0;
          for (long j = 0; j < d; ++j) {
            dot += ur[j] * vr[j];
            nu2 += ur[j] * ur[j];
            nv2 += vr[j] * vr[j];
          }
          double nu_raw = std::sqrt(nu2), nv_raw = std::sqrt(nv2);
          double nu = std::max(nu_raw, eps), nv = std::max(nv_raw, eps);
          double s = dot / (nu * nv);
          double g = self.grad[static_cast<size_t>(r)];
          if (pu.requires_grad) {
            double* du = pu.grad.data() + r * d;
            double a = g / (nu * nv);
            double b = nu_raw > eps ? g * s / (nu * nu) : 0.0;
            for (long j = 0; j < d; ++j) du[j] += a * vr[j] - b * ur[j];
          }
          if (pv.requires_grad) {
            double* dv = pv.grad.data() + r * d;
            double a = g / (nu * nv);
            double b = nv_raw > eps ? g * s / (nv * nv) : 0.0;
            for (long j = 0; j < d; ++j) dv[j] += a * ur[j] - b * vr[j];
          }
        }
      });
}

// --------------------------------------------------- structural ops

// Slice along the last axis; [d] -> [hi-lo], [B,d] -> [B,hi-lo]. Empty ok.
inline Tensor slice_last(const Tensor& x, int lo, int hi) {
  if (x.rank() != 1 && x.rank() != 2)
    throw ShapeError("slice_last: expects rank 1 or 2, got " + shape_str(x.shape()));
  const long B = x.rank() == 2 ? x.dim(0) : 1;
  const long d = x.rank() == 2 ? x.dim(1) : x.dim(0);
  if (lo < 0 || hi < lo || hi > d)
    throw ShapeError("slice_last: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                     ") invalid for width " + std::to_string(d));
  const long w = hi - lo;
  std::vector<double> out(static_cast<size_t>(B * w));
  const auto& xv = x.values();
  for (long r = 0; r < B; ++r)
    std::copy(xv.data() + r * d + lo, xv.data() + r * d + hi, out.data() + r * w);
  Shape out_shape = x.rank() == 2 ? Shape{static_cast<int>(B), static_cast<int>(w)}
                                  : Shape{static_cast<int>(w)};
  return detail::make_op("slice_last", std::move(out_shape), std::move(out), {x},
                         [B, d, w, lo](TensorNode& self) {
                           TensorNode& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           detail::ensure_grad(p);
                           for (long r = 0; r < B; ++r) {
                             const double* src = self.grad.data() + r * w;
                             double* dst = p.grad.data() + r * d + lo;
                             for (long j = 0; j < w; ++j) dst[j] += src[j];
                           }
                         });
}

// Concatenate along the last axis (inverse of slice_last).
inline Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  const int rank = parts[0].rank();
  const long B = rank == 2 ? parts[0].dim(0) : 1;
  long total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank || (rank == 2 && p.dim(0) != B))
      throw ShapeError("concat_last: incompatible part " + shape_str(p.shape()));
    total += rank == 2 ? p.dim(1) : p.dim(0);
  }
  std::vector<double> out(static_cast<size_t>(B * total));
  std::vector<long> widths;
  long off = 0;
  for (const auto& p : parts) {
    const long w = rank == 2 ? p.dim(1) : p.dim(0);
    widths.push_back(w);
    const auto& pv = p.values();
    for (long r = 0; r < B; ++r)
      std::copy(pv.data() + r * w, pv.data() + (r + 1) * w, out.data() + r * total + off);
    off += w;
  }
  Shape out_shape = rank == 2 ? Shape{static_cast<int>(B), static_cast<int>(total)}
                              : Shape{static_cast<int>(total)};
  return detail::make_op("concat_last", std::move(out_shape), std::move(out), parts,
                         [B, total, widths](TensorNode& self) {
                           long off = 0;
                           for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                             TensorNode& p = *self.parents[pi];
                             const long w = widths[pi];
                             if (p.requires_grad && w > 0) {
                               detail::ensure_grad(p);
                               for (long r = 0; r < B; ++r) {
                                 const double* src = self.grad.data() + r * total + off;
                                 double* dst = p.grad.data() + r * w;
                                 for (long j = 0; j < w; ++j) dst[j] += src[j];
                               }
                             }
                             off += w;
                           }
                         });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return detail::make_op("reshape", std::move(shape), x.values(), {x}, [](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    detail::ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expects rank 2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  const auto& xv = x.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = xv[static_cast<size_t>(i) * n + j];
  return detail::make_op("transpose", {n, m}, std::move(out), {x}, [m, n](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    detail::ensure_grad(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p.grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
  });
}

// Row gather; gradients scatter-add back (rows may repeat).
inline Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  if (x.rank() != 2) throw ShapeError("gather_rows: expects rank 2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= m)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range [0," +
                       std::to_string(m) + ")");
  std::vector<double> out(idx.size() * static_cast<size_t>(n));
  const auto& xv = x.values();
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(xv.data() + static_cast<long>(idx[r]) * n, xv.data() + static_cast<long>(idx[r] + 1) * n,
              out.data() + static_cast<long>(r) * n);
  return detail::make_op("gather_rows", {static_cast<int>(idx.size()), n}, std::move(out), {x},
                         [idx, n](TensorNode& self) {
                           TensorNode& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           detail::ensure_grad(p);
                           for (size_t r = 0; r < idx.size(); ++r) {
                             const double* src = self.grad.data() + static_cast<long>(r) * n;
                             double* dst = p.grad.data() + static_cast<long>(idx[r]) * n;
                             for (int j = 0; j < n; ++j) dst[j] += src[j];
                           }
                         });
}

// ------------------------------------------- softmax cross entropy
//
// Mean over rows of (logsumexp(row) - row[label]); gradient is the usual
// (softmax - onehot) / B.

inline Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw ShapeError("cross_entropy: logits must be [B,C], got " + shape_str(logits.shape()));
  const long B = logits.dim(0), C = logits.dim(1);
  if (static_cast<long>(labels.size()) != B)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(B));
  for (int y : labels)
    if (y < 0 || y >= C)
      throw ShapeError("cross_entropy: class index " + std::to_string(y) + " out of range [0," +
                       std::to_string(C) + ")");
  const auto& lv = logits.values();
  double total = 0.0;
  for (long r = 0; r < B; ++r) {
    const double* row = lv.data() + r * C;
    double mx = row[0];
    for (long c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double se = 0.0;
    for (long c = 0; c < C; ++c) se += std::exp(row[c] - mx);
    total += mx + std::log(se) - row[labels[static_cast<size_t>(r)]];
  }
  return detail::make_op("cross_entropy", {1}, {total / static_cast<double>(B)}, {logits},
                         [B, C, labels](TensorNode& self) {
                           TensorNode& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           detail::ensure_grad(p);
                           const double g = self.grad[0] / static_cast<double>(B);
                           for (long r = 0; r < B; ++r) {
                             const double* row = p.value.data() + r * C;
                             double* drow = p.grad.data() + r * C;
                             double mx = row[0];
                             for (long c = 1; c < C; ++c) mx = std::max(mx, row[c]);
                             double se = 0.0;
                             for (long c = 0; c < C; ++c) se += std::exp(row[c] - mx);
                             for (long c = 0; c < C; ++c) {
                               double p_c = std::exp(row[c] - mx) / se;
                               drow[c] += g * (p_c - (labels[static_cast<size_t>(r)] == c ? 1.0 : 0.0));
                             }
                           }
                         });
}

// ------------------------------------------------------------- backward

// Reverse-topological gradient accumulation from a scalar loss. Populates
// .grad on every requires_grad leaf reachable from the loss.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!std::isfinite(loss.item()))
    throw NonFiniteError("backward: loss is non-finite");
  if (!loss.requires_grad()) return;  // nothing differentiable upstream

  // Iterative postorder DFS over requires_grad nodes.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  detail::ensure_grad(*loss.node());
  loss.node()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (!n->backprop) continue;  // leaf
    detail::ensure_grad(*n);
    if (!detail::all_finite(n->grad))
      throw NonFiniteError(std::string("backward: non-finite gradient at op '") + n->op + "'");
    n->backprop(*n);
  }
  for (TensorNode* n : order) {
    if (n->backprop) continue;
    detail::ensure_grad(*n);
    if (!detail::all_finite(n->grad))
      throw NonFiniteError("backward: non-finite gradient on a leaf tensor");
  }
}

}  // namespace scl
