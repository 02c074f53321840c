#pragma once

// Mixed-mode automatic differentiation.
//
//   Var        reverse-mode scalar recorded on a thread-local Tape
//   Dual<T,N>  forward-mode scalar carrying N tangents of type T
//
// Dual<Var, N> gives reverse-over-forward: a state gradient computed by
// forward sweeps stays differentiable with respect to tape leaves (model
// parameters). Constants are never recorded, and multiplying by an exact
// constant zero yields a constant, so structurally-zero tangents cost
// nothing on the tape.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "hdl/errors.hpp"

namespace hdl::ad {

class Tape {
 public:
  struct Node {
    double w0;
    double w1;
    std::uint32_t a;
    std::uint32_t b;
  };

  Tape() {
    nodes_.reserve(1u << 16);
    nodes_.push_back({0.0, 0.0, 0, 0});  // slot 0: sink for constants
  }

  std::uint32_t size() const { return static_cast<std::uint32_t>(nodes_.size()); }

  std::uint32_t push(std::uint32_t a, double wa, std::uint32_t b, double wb) {
    nodes_.push_back({wa, wb, a, b});
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  std::uint32_t leaf() { return push(0, 0.0, 0, 0.0); }

  void rewind(std::uint32_t mark) { nodes_.resize(std::max<std::uint32_t>(mark, 1)); }

  // Reverse sweep over nodes [mark, size) seeded with d(root)/d(root) = 1.
  // The returned adjoint vector is indexed by node id.
  const std::vector<double>& sweep(std::uint32_t root, std::uint32_t mark) {
    adjoint_.assign(nodes_.size(), 0.0);
    if (root == 0) return adjoint_;
    adjoint_[root] = 1.0;
    const std::uint32_t lo = std::max<std::uint32_t>(mark, 1);
    for (std::uint32_t k = root; k >= lo; --k) {
      const double g = adjoint_[k];
      if (g != 0.0) {
        const Node& n = nodes_[k];
        adjoint_[n.a] += n.w0 * g;
        adjoint_[n.b] += n.w1 * g;
      }
      if (k == lo) break;
    }
    return adjoint_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<double> adjoint_;
};

inline Tape& tape() {
  thread_local Tape t;
  return t;
}

// Rewinds the thread's tape to the size it had at construction.
class TapeScope {
 public:
  TapeScope() : mark_(tape().size()) {}
  ~TapeScope() { tape().rewind(mark_); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  std::uint32_t mark() const { return mark_; }

 private:
  std::uint32_t mark_;
};

class Var {
 public:
  Var() = default;
  Var(double v) : v_(v) {}  // NOLINT: implicit constants are the point

  static Var leaf(double v) { return Var(v, tape().leaf()); }

  double value() const { return v_; }
  std::uint32_t index() const { return i_; }
  bool is_constant() const { return i_ == 0; }

  static Var unary(double v, const Var& a, double da) {
    if (a.i_ == 0) return Var(v);
    return Var(v, tape().push(a.i_, da, 0, 0.0));
  }
  static Var binary(double v, const Var& a, double da, const Var& b, double db) {
    if (a.i_ == 0) return unary(v, b, db);
    if (b.i_ == 0) return unary(v, a, da);
    return Var(v, tape().push(a.i_, da, b.i_, db));
  }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var operator+(const Var& a, const Var& b) {
    // Adding a constant keeps the node: d(a + c)/da = 1.
    if (b.i_ == 0) return Var(a.v_ + b.v_, a.i_);
    if (a.i_ == 0) return Var(a.v_ + b.v_, b.i_);
    return Var(a.v_ + b.v_, tape().push(a.i_, 1.0, b.i_, 1.0));
  }
  friend Var operator-(const Var& a, const Var& b) {
    if (b.i_ == 0) return Var(a.v_ - b.v_, a.i_);
    return binary(a.v_ - b.v_, a, 1.0, b, -1.0);
  }
  friend Var operator-(const Var& a) { return unary(-a.v_, a, -1.0); }
  friend Var operator*(const Var& a, const Var& b) {
    if (a.i_ == 0) {
      if (a.v_ == 0.0) return Var(0.0);
      if (a.v_ == 1.0) return b;
    }
    if (b.i_ == 0) {
      if (b.v_ == 0.0) return Var(0.0);
      if (b.v_ == 1.0) return a;
    }
    return binary(a.v_ * b.v_, a, b.v_, b, a.v_);
  }
  friend Var operator/(const Var& a, const Var& b) {
    if (a.i_ == 0 && a.v_ == 0.0) return Var(0.0 / b.v_);
    const double inv = 1.0 / b.v_;
    const double q = a.v_ * inv;
    return binary(q, a, inv, b, -q * inv);
  }

 private:
  Var(double v, std::uint32_t i) : v_(v), i_(i) {}
  double v_ = 0.0;
  std::uint32_t i_ = 0;
};

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

inline double squareplus(double x) { return 0.5 * (x + std::sqrt(x * x + 4.0)); }
inline double squareplus_slope(double x) { return 0.5 * (1.0 + x / std::sqrt(x * x + 4.0)); }

inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return Var::unary(s, a, 0.5 / s);
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return Var::unary(e, a, e);
}
inline Var log(const Var& a) { return Var::unary(std::log(a.value()), a, 1.0 / a.value()); }
inline Var pow(const Var& a, int k) {
  if (k == 0) return Var(1.0);
  if (k == 1) return a;
  const double v = a.value();
  return Var::unary(std::pow(v, k), a, k * std::pow(v, k - 1));
}
inline Var squareplus(const Var& a) {
  return Var::unary(squareplus(a.value()), a, squareplus_slope(a.value()));
}

// ---------------------------------------------------------------------------
// Forward mode.

template <class T, int N>
struct Dual {
  T v{};
  std::array<T, N> d{};

  Dual() = default;
  Dual(double c) : v(c) {}  // NOLINT
  template <class U = T, std::enable_if_t<!std::is_same_v<U, double>, int> = 0>
  Dual(const T& c) : v(c) {}  // NOLINT

  Dual& operator+=(const Dual& o) {
    v = v + o.v;
    for (int k = 0; k < N; ++k) d[k] = d[k] + o.d[k];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v = v - o.v;
    for (int k = 0; k < N; ++k) d[k] = d[k] - o.d[k];
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }
};

template <class T, int N>
double value_of(const Dual<T, N>& x) {
  return value_of(x.v);
}

template <class T, int N>
Dual<T, N> operator+(Dual<T, N> a, const Dual<T, N>& b) {
  a += b;
  return a;
}
template <class T, int N>
Dual<T, N> operator-(Dual<T, N> a, const Dual<T, N>& b) {
  a -= b;
  return a;
}
template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& a) {
  Dual<T, N> r;
  r.v = -a.v;
  for (int k = 0; k < N; ++k) r.d[k] = -a.d[k];
  return r;
}
template <class T, int N>
Dual<T, N> operator*(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v * b.v;
  for (int k = 0; k < N; ++k) r.d[k] = a.v * b.d[k] + a.d[k] * b.v;
  return r;
}
template <class T, int N>
Dual<T, N> operator/(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  const T inv = T(1.0) / b.v;
  r.v = a.v * inv;
  for (int k = 0; k < N; ++k) r.d[k] = (a.d[k] - r.v * b.d[k]) * inv;
  return r;
}

// Mixed Dual/T operations: a weight of the underlying type scales every
// tangent without forming the zero-tangent product.
template <class T, int N>
Dual<T, N> operator*(const Dual<T, N>& a, const T& w) {
  Dual<T, N> r;
  r.v = a.v * w;
  for (int k = 0; k < N; ++k) r.d[k] = a.d[k] * w;
  return r;
}
template <class T, int N>
Dual<T, N> operator*(const T& w, const Dual<T, N>& a) {
  return a * w;
}
template <class T, int N>
Dual<T, N> operator+(Dual<T, N> a, const T& c) {
  a.v = a.v + c;
  return a;
}
template <class T, int N>
Dual<T, N> operator+(const T& c, Dual<T, N> a) {
  a.v = a.v + c;
  return a;
}
template <class T, int N>
Dual<T, N> operator-(Dual<T, N> a, const T& c) {
  a.v = a.v - c;
  return a;
}
template <class T, int N>
Dual<T, N> operator-(const T& c, const Dual<T, N>& a) {
  return Dual<T, N>(c) - a;
}
template <class T, int N>
Dual<T, N> operator/(const Dual<T, N>& a, const T& c) {
  const T inv = T(1.0) / c;
  return a * inv;
}
template <class T, int N>
Dual<T, N> operator/(const T& c, const Dual<T, N>& a) {
  return Dual<T, N>(c) / a;
}

// double operands when T is not double (T == double is covered above).
#define HDL_DUAL_MIXED_DOUBLE(op)                                                        \
  template <class T, int N, std::enable_if_t<!std::is_same_v<T, double>, int> = 0>      \
  Dual<T, N> operator op(const Dual<T, N>& a, double c) {                               \
    return a op T(c);                                                                   \
  }                                                                                     \
  template <class T, int N, std::enable_if_t<!std::is_same_v<T, double>, int> = 0>      \
  Dual<T, N> operator op(double c, const Dual<T, N>& a) {                               \
    return T(c) op a;                                                                   \
  }
HDL_DUAL_MIXED_DOUBLE(+)
HDL_DUAL_MIXED_DOUBLE(-)
HDL_DUAL_MIXED_DOUBLE(*)
HDL_DUAL_MIXED_DOUBLE(/)
#undef HDL_DUAL_MIXED_DOUBLE

// Chain rule helper: f(a) with f'(a) = slope.
template <class T, int N>
Dual<T, N> chain(const Dual<T, N>& a, const T& value, const T& slope) {
  Dual<T, N> r;
  r.v = value;
  for (int k = 0; k < N; ++k) r.d[k] = a.d[k] * slope;
  return r;
}

template <class T, int N>
Dual<T, N> sqrt(const Dual<T, N>& a) {
  using std::sqrt;
  const T s = sqrt(a.v);
  return chain(a, s, T(0.5) / s);
}
template <class T, int N>
Dual<T, N> exp(const Dual<T, N>& a) {
  using std::exp;
  const T e = exp(a.v);
  return chain(a, e, e);
}
template <class T, int N>
Dual<T, N> log(const Dual<T, N>& a) {
  using std::log;
  return chain(a, log(a.v), T(1.0) / a.v);
}
template <class T, int N>
Dual<T, N> pow(const Dual<T, N>& a, int k) {
  using std::pow;
  if (k == 0) return Dual<T, N>(1.0);
  if (k == 1) return a;
  return chain(a, T(pow(a.v, k)), T(double(k)) * T(pow(a.v, k - 1)));
}
template <class T, int N>
Dual<T, N> squareplus(const Dual<T, N>& a) {
  using std::sqrt;
  const T root = sqrt(a.v * a.v + T(4.0));
  const T value = T(0.5) * (a.v + root);
  const T slope = T(0.5) * (T(1.0) + a.v / root);
  return chain(a, value, slope);
}

// ---------------------------------------------------------------------------
// Generic vector primitives used by the model code.

template <class S>
S sum(std::span<const S> xs) {
  S acc(0.0);
  for (const S& x : xs) acc += x;
  return acc;
}

template <class S>
S dot(std::span<const S> a, std::span<const S> b) {
  S acc(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <class S>
S norm(std::span<const S> a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

template <class S>
std::vector<S> concat(std::span<const S> a, std::span<const S> b) {
  std::vector<S> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// y = W x (+ bias), W row-major rows x cols. W and bias may be a "weight"
// scalar type P different from the activation type S.
template <class P, class S>
std::vector<S> matmul(std::span<const P> w, std::size_t rows, std::span<const S> x,
                      std::span<const P> bias = {}) {
  const std::size_t cols = x.size();
  std::vector<S> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    S acc = bias.empty() ? S(0.0) : S(bias[r]);
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    y[r] = acc;
  }
  return y;
}

// out[segment[i]] += values[i]; values are width-wide rows.
template <class S>
std::vector<S> segment_sum(std::span<const S> values, std::size_t width,
                           std::span<const int> segment, std::size_t segments) {
  std::vector<S> out(segments * width, S(0.0));
  for (std::size_t i = 0; i < segment.size(); ++i)
    for (std::size_t k = 0; k < width; ++k)
      out[segment[i] * width + k] += values[i * width + k];
  return out;
}

// ---------------------------------------------------------------------------
// Drivers.

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite value");
}

// Gradient of f at z by forward sweeps, N coordinates per sweep. T may be
// double or Var; with Var the result remains differentiable on the tape.
template <int N = 8, class T, class F>
std::vector<T> grad_state(F&& f, std::span<const T> z) {
  using D = Dual<T, N>;
  std::vector<D> zd(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) zd[i].v = z[i];
  std::vector<T> g(z.size());
  for (std::size_t start = 0; start < z.size(); start += N) {
    const std::size_t m = std::min<std::size_t>(N, z.size() - start);
    for (std::size_t k = 0; k < m; ++k) zd[start + k].d[k] = T(1.0);
    const D out = f(std::span<const D>(zd));
    require_finite(value_of(out.v), "grad_state");
    for (std::size_t k = 0; k < m; ++k) {
      require_finite(value_of(out.d[k]), "grad_state");
      g[start + k] = out.d[k];
      zd[start + k].d[k] = T(0.0);
    }
  }
  return g;
}

template <class T>
struct ValueGrad {
  T value;
  std::vector<T> grad;
};

template <int N = 8, class T, class F>
ValueGrad<T> value_and_grad_forward(F&& f, std::span<const T> z) {
  using D = Dual<T, N>;
  std::vector<D> zc(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) zc[i].v = z[i];
  T value = f(std::span<const D>(zc)).v;
  return {value, grad_state<N>(f, z)};
}

// Reverse-mode value and gradient of a scalar function of doubles. f takes
// std::span<const Var>. Safe to nest inside another taped computation; the
// inner result is a plain double.
template <class F>
ValueGrad<double> value_and_grad(F&& f, std::span<const double> x) {
  TapeScope scope;
  std::vector<Var> xv;
  xv.reserve(x.size());
  for (double xi : x) xv.push_back(Var::leaf(xi));
  const Var y = f(std::span<const Var>(xv));
  require_finite(y.value(), "value_and_grad");
  const auto& adj = tape().sweep(y.index(), scope.mark());
  ValueGrad<double> out{y.value(), std::vector<double>(x.size(), 0.0)};
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.grad[i] = adj[xv[i].index()];
    require_finite(out.grad[i], "value_and_grad");
  }
  return out;
}

// Parameter gradient of a loss; f may use Dual<Var, N> internally
// (reverse over forward).
template <class F>
ValueGrad<double> grad_params(F&& f, std::span<const double> theta) {
  return value_and_grad(std::forward<F>(f), theta);
}

}  // namespace hdl::ad
