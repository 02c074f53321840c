#pragma once

// Symbolic distillation of learned energy heads.
//
// Expressions are prefix-ordered node vectors over the grammar
//   {constant, variable, add, mul, pow_k}
// with complexity = node count. Constants are fitted per structure by
// damped Gauss-Newton (Levenberg-Marquardt) followed by a short coordinate
// descent pass. Search is generational GP with a Pareto archive; the
// reported equation maximises
//   S_i = (ln L_{i-1} - ln L_i) / (C_i - C_{i-1})
// along the front.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdl/autodiff.hpp"
#include "hdl/errors.hpp"
#include "hdl/hgnn.hpp"
#include "hdl/linalg.hpp"
#include "hdl/training.hpp"

namespace hdl::sr {

enum class Op : std::uint8_t { Const, Var, Add, Mul, Pow };

struct Node {
  Op op = Op::Const;
  int k = 0;         // exponent for Pow
  double c = 0.0;    // value for Const
};

inline int arity(Op op) {
  switch (op) {
    case Op::Const:
    case Op::Var: return 0;
    case Op::Pow: return 1;
    default: return 2;
  }
}

struct ExprTree {
  std::vector<Node> nodes;  // prefix order
  double loss = std::numeric_limits<double>::infinity();
  double score = 0.0;

  int complexity() const { return static_cast<int>(nodes.size()); }
};

// End index (exclusive) of the subtree starting at i.
inline std::size_t subtree_end(const std::vector<Node>& t, std::size_t i) {
  int need = 1;
  while (need > 0) {
    if (i >= t.size()) throw FormatError("malformed expression");
    need += arity(t[i].op) - 1;
    ++i;
  }
  return i;
}

inline bool well_formed(const std::vector<Node>& t) {
  if (t.empty()) return false;
  int need = 1;
  for (const Node& n : t) {
    if (need <= 0) return false;
    need += arity(n.op) - 1;
  }
  return need == 0;
}

inline int depth_of(const std::vector<Node>& t) {
  int best = 0;
  std::vector<int> open;  // remaining children per ancestor
  for (const Node& n : t) {
    best = std::max(best, static_cast<int>(open.size()) + 1);
    if (!open.empty()) --open.back();
    if (arity(n.op) > 0) open.push_back(arity(n.op));
    while (!open.empty() && open.back() == 0) open.pop_back();
  }
  return best;
}

inline int constant_count(const std::vector<Node>& t) {
  return static_cast<int>(std::count_if(t.begin(), t.end(), [](const Node& n) { return n.op == Op::Const; }));
}

// Structure key: the tree with constant values erased.
inline std::string structure_key(const std::vector<Node>& t) {
  std::string s;
  for (const Node& n : t) {
    switch (n.op) {
      case Op::Const: s += 'C'; break;
      case Op::Var: s += 'x'; break;
      case Op::Add: s += '+'; break;
      case Op::Mul: s += '*'; break;
      case Op::Pow: s += 'p' + std::to_string(n.k) + ';'; break;
    }
  }
  return s;
}

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

inline std::string to_string_at(const std::vector<Node>& t, std::size_t& i) {
  const Node& n = t[i++];
  switch (n.op) {
    case Op::Const: return fmt(n.c);
    case Op::Var: return "x";
    case Op::Pow: {
      const std::string a = to_string_at(t, i);
      return "(" + a + ")^" + (n.k < 0 ? "(" + std::to_string(n.k) + ")" : std::to_string(n.k));
    }
    case Op::Add: {
      const std::string a = to_string_at(t, i);
      const std::string b = to_string_at(t, i);
      return "(" + a + " + " + b + ")";
    }
    case Op::Mul: {
      const std::string a = to_string_at(t, i);
      const std::string b = to_string_at(t, i);
      return a + "*" + b;
    }
  }
  return "?";
}

}  // namespace detail

inline std::string to_string(const std::vector<Node>& t) {
  std::size_t i = 0;
  return detail::to_string_at(t, i);
}

template <class S>
S ipow(const S& x, int k) {
  using ad::pow;
  using std::pow;
  if constexpr (std::is_same_v<S, double>) return std::pow(x, k);
  else return pow(x, k);
}

// Evaluates the tree at every sample; constants are taken from `consts`
// in prefix order. Returns false on a zero base with a negative exponent.
template <class S>
bool evaluate_batch(const std::vector<Node>& t, std::span<const S> consts, std::span<const double> xs,
                    std::vector<S>& out) {
  const std::size_t m = xs.size();
  std::vector<std::vector<S>> stack;
  std::size_t ci = consts.size();
  for (std::size_t idx = t.size(); idx-- > 0;) {
    const Node& n = t[idx];
    switch (n.op) {
      case Op::Const: stack.emplace_back(m, consts[--ci]); break;
      case Op::Var: {
        std::vector<S> v(m);
        for (std::size_t i = 0; i < m; ++i) v[i] = S(xs[i]);
        stack.push_back(std::move(v));
        break;
      }
      case Op::Pow: {
        auto& a = stack.back();
        for (std::size_t i = 0; i < m; ++i) {
          if (n.k < 0 && ad::value_of(a[i]) == 0.0) return false;
          a[i] = ipow(a[i], n.k);
        }
        break;
      }
      case Op::Add:
      case Op::Mul: {
        std::vector<S> a = std::move(stack.back());
        stack.pop_back();
        auto& b = stack.back();
        // a is the left operand (pushed last)
        for (std::size_t i = 0; i < m; ++i) b[i] = (n.op == Op::Add) ? a[i] + b[i] : a[i] * b[i];
        break;
      }
    }
  }
  out = std::move(stack.back());
  return true;
}

inline std::vector<double> constants_of(const std::vector<Node>& t) {
  std::vector<double> c;
  for (const Node& n : t)
    if (n.op == Op::Const) c.push_back(n.c);
  return c;
}

inline void set_constants(std::vector<Node>& t, std::span<const double> c) {
  std::size_t k = 0;
  for (Node& n : t)
    if (n.op == Op::Const) n.c = c[k++];
}

inline double evaluate_expr(const ExprTree& tree, double x) {
  if (!well_formed(tree.nodes)) throw FormatError("malformed expression");
  const auto c = constants_of(tree.nodes);
  std::vector<double> out;
  const double xs[1] = {x};
  if (!evaluate_batch<double>(tree.nodes, c, std::span<const double>(xs, 1), out))
    throw DomainError("zero raised to a negative power");
  return out[0];
}

// ---------------------------------------------------------------------------
// Samples.

enum class HeadKind { Kinetic, Edge, Node };

struct HeadSpec {
  HeadKind kind = HeadKind::Kinetic;
  int ta = 0;  // species (kinetic/node) or first species of the pair
  int tb = 0;
  int axis = -1;  // node head: varied coordinate, -1 = last
};

inline HeadSpec parse_head(const std::string& s) {
  HeadSpec h;
  if (s == "kinetic") return h;
  if (s == "node") {
    h.kind = HeadKind::Node;
    return h;
  }
  if (s.rfind("edge:", 0) == 0 && s.size() == 8 && s[6] == '-') {
    h.kind = HeadKind::Edge;
    h.ta = s[5] - '0';
    h.tb = s[7] - '0';
    if (h.ta < 0 || h.ta > 1 || h.tb < 0 || h.tb > 1) throw DomainError("bad species in head '" + s + "'");
    return h;
  }
  throw DomainError("unknown head '" + s + "' (kinetic, edge:A-B, node)");
}

inline std::string head_name(const HeadSpec& h) {
  switch (h.kind) {
    case HeadKind::Kinetic: return "kinetic";
    case HeadKind::Node: return "node";
    case HeadKind::Edge: return "edge:" + std::to_string(h.ta) + "-" + std::to_string(h.tb);
  }
  return "?";
}

struct SampleSet {
  std::vector<double> x, y;
  double lo = 0.0, hi = 0.0;
  double reference = 0.0;  // input whose head value was subtracted
  HeadSpec head;
};

enum class GridKind { Uniform, DenseLow };

// Scalar view of one head of a trained network.
inline std::function<double(double)> head_function(const HgnnNet<double>& net, const HeadSpec& h,
                                                   std::vector<double> node_base = {}) {
  const int D = net.hp().dim;
  switch (h.kind) {
    case HeadKind::Kinetic:
      return [&net, h, D](double s) {
        std::vector<double> v(D, 0.0);
        v[0] = s;
        return net.kinetic_head<double>(h.ta, v);
      };
    case HeadKind::Edge:
      return [&net, h](double r) {
        const std::vector<int> types = {h.ta, h.tb};
        const std::vector<Edge> edges = {{0, 1}, {1, 0}};
        const std::vector<double> d = {r, r};
        return net.edge_terms<double>(d, types, edges)[0];
      };
    case HeadKind::Node: {
      if (node_base.empty()) node_base.assign(D, 0.0);
      const int axis = h.axis < 0 ? D - 1 : h.axis;
      return [&net, h, axis, node_base](double u) {
        std::vector<double> x = node_base;
        x[axis] = u;
        return net.node_head<double>(h.ta, x);
      };
    }
  }
  throw DomainError("unknown head");
}

// Analytic stand-in heads: kinetic 1/2 m v^2, spring edge 1/2 k (r - r0)^2,
// LJ edge 2 eps [(s/r)^12 - (s/r)^6] (one directed edge's share), pendulum
// node -m g y.
inline std::function<double(double)> analytic_head(SystemKind kind, const HeadSpec& h) {
  switch (h.kind) {
    case HeadKind::Kinetic: return [](double v) { return 0.5 * v * v; };
    case HeadKind::Node: return [](double y) { return -10.0 * y; };
    case HeadKind::Edge:
      if (kind == SystemKind::BinaryLJ) {
        const LJTable& t = kob_andersen();
        const double eps = t.eps[h.ta][h.tb], sig = t.sigma[h.ta][h.tb];
        return [eps, sig](double r) {
          const double s6 = std::pow(sig / r, 6);
          return 2.0 * eps * (s6 * s6 - s6);
        };
      }
      return [](double r) { return 0.5 * (r - 1.0) * (r - 1.0); };
  }
  throw DomainError("unknown head");
}

inline double default_reference(const HeadSpec& h, double lo, double hi) {
  switch (h.kind) {
    case HeadKind::Kinetic: return 0.0;
    case HeadKind::Edge: return hi;
    case HeadKind::Node: return 0.5 * (lo + hi);
  }
  return lo;
}

// Samples f on [lo, hi]; targets are f(x) - f(reference). `observed`
// (when given) is the admissible input range.
inline SampleSet sample_head(const std::function<double(double)>& f, const HeadSpec& head, double lo, double hi,
                             int count, GridKind grid = GridKind::Uniform,
                             std::optional<std::pair<double, double>> observed = std::nullopt,
                             std::optional<double> reference = std::nullopt) {
  if (count <= 0) throw DomainError("sample count must be positive");
  if (!(hi > lo) && count > 1) throw DomainError("empty sampling domain");
  if (observed && (lo < observed->first || hi > observed->second))
    throw DomainError("sampling domain [" + detail::fmt(lo) + ", " + detail::fmt(hi) +
                      "] leaves the observed training range [" + detail::fmt(observed->first) + ", " +
                      detail::fmt(observed->second) + "]");
  SampleSet s;
  s.head = head;
  s.lo = lo;
  s.hi = hi;
  s.reference = reference.value_or(default_reference(head, lo, hi));
  const double base = f(s.reference);
  for (int i = 0; i < count; ++i) {
    double x;
    if (count == 1) {
      x = 0.5 * (lo + hi);
    } else {
      const double u = static_cast<double>(i) / (count - 1);
      x = lo + (hi - lo) * (grid == GridKind::DenseLow ? u * u : u);
    }
    s.x.push_back(x);
    s.y.push_back(f(x) - base);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Constant fitting.

inline double mse(std::span<const double> pred, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return s / static_cast<double>(y.size());
}

inline double tree_loss(const std::vector<Node>& t, std::span<const double> c, const SampleSet& s) {
  std::vector<double> pred;
  if (!evaluate_batch<double>(t, c, s.x, pred)) return std::numeric_limits<double>::infinity();
  const double l = mse(pred, s.y);
  return std::isfinite(l) ? l : std::numeric_limits<double>::infinity();
}

// Residual Jacobian with respect to the constants by forward sweeps.
inline bool jacobian(const std::vector<Node>& t, std::span<const double> c, const SampleSet& s,
                     std::vector<double>& resid, linalg::Matrix<double>& jac) {
  constexpr int N = 8;
  using D = ad::Dual<double, N>;
  const std::size_t p = c.size(), m = s.x.size();
  jac = linalg::Matrix<double>(m, p);
  resid.assign(m, 0.0);
  std::vector<D> cd(p);
  for (std::size_t j = 0; j < p; ++j) cd[j].v = c[j];
  std::vector<D> out;
  for (std::size_t start = 0; start < std::max<std::size_t>(p, 1); start += N) {
    const std::size_t w = std::min<std::size_t>(N, p - std::min(p, start));
    for (std::size_t k = 0; k < w; ++k) cd[start + k].d[k] = 1.0;
    if (!evaluate_batch<D>(t, cd, s.x, out)) return false;
    for (std::size_t i = 0; i < m; ++i) {
      resid[i] = out[i].v - s.y[i];
      if (!std::isfinite(resid[i])) return false;
      for (std::size_t k = 0; k < w; ++k) jac(i, start + k) = out[i].d[k];
    }
    for (std::size_t k = 0; k < w; ++k) cd[start + k].d[k] = 0.0;
    if (p == 0) break;
  }
  return true;
}

struct FitResult {
  std::vector<double> constants;
  double loss = std::numeric_limits<double>::infinity();
};

inline FitResult levenberg_marquardt(const std::vector<Node>& t, std::vector<double> c, const SampleSet& s,
                                     int max_iter = 40) {
  FitResult best{c, tree_loss(t, c, s)};
  if (c.empty() || !std::isfinite(best.loss)) return best;
  const std::size_t p = c.size();
  double mu = 1e-3;
  std::vector<double> r;
  linalg::Matrix<double> j;
  for (int it = 0; it < max_iter && best.loss > 0.0; ++it) {
    if (!jacobian(t, best.constants, s, r, j)) break;
    linalg::Matrix<double> a(p, p);
    std::vector<double> g(p, 0.0);
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t u = 0; u < p; ++u) {
        g[u] -= j(i, u) * r[i];
        for (std::size_t v = u; v < p; ++v) a(u, v) += j(i, u) * j(i, v);
      }
    for (std::size_t u = 0; u < p; ++u)
      for (std::size_t v = 0; v < u; ++v) a(u, v) = a(v, u);
    bool improved = false;
    for (int tries = 0; tries < 8; ++tries) {
      linalg::Matrix<double> damped = a;
      for (std::size_t u = 0; u < p; ++u) damped(u, u) += mu * std::max(a(u, u), 1e-12);
      std::vector<double> step;
      try {
        step = linalg::solve(damped, g);
      } catch (const Error&) {
        mu *= 10.0;
        continue;
      }
      std::vector<double> trial(p);
      for (std::size_t u = 0; u < p; ++u) trial[u] = best.constants[u] + step[u];
      const double l = tree_loss(t, trial, s);
      if (l < best.loss) {
        const double gain = (best.loss - l) / best.loss;
        best = {trial, l};
        mu = std::max(mu / 10.0, 1e-12);
        improved = true;
        if (gain < 1e-12) it = max_iter;
        break;
      }
      mu *= 10.0;
    }
    if (!improved) break;
  }
  return best;
}

// A few rounds of per-constant step search around the current optimum.
inline FitResult coordinate_descent(const std::vector<Node>& t, FitResult f, const SampleSet& s, int rounds = 3) {
  for (int r = 0; r < rounds; ++r) {
    for (std::size_t j = 0; j < f.constants.size(); ++j) {
      double h = 1e-3 * std::max(std::abs(f.constants[j]), 1e-3);
      for (int k = 0; k < 6; ++k) {
        bool moved = false;
        for (double sgn : {1.0, -1.0}) {
          std::vector<double> trial = f.constants;
          trial[j] += sgn * h;
          const double l = tree_loss(t, trial, s);
          if (l < f.loss) {
            f = {trial, l};
            moved = true;
            break;
          }
        }
        if (!moved) h *= 0.25;
      }
    }
  }
  return f;
}

inline SampleSet strided_subset(const SampleSet& s, std::size_t max_points) {
  if (s.x.size() <= max_points) return s;
  SampleSet sub = s;
  sub.x.clear();
  sub.y.clear();
  for (std::size_t k = 0; k < max_points; ++k) {
    const std::size_t i = k * (s.x.size() - 1) / (max_points - 1);
    sub.x.push_back(s.x[i]);
    sub.y.push_back(s.y[i]);
  }
  return sub;
}

// Constants are fitted on `fit_set` and scored on `s`.
inline FitResult fit_constants(const std::vector<Node>& t, const SampleSet& s, const SampleSet& fit_set,
                               std::mt19937_64& rng, int restarts = 2) {
  FitResult best = levenberg_marquardt(t, constants_of(t), fit_set);
  const int p = constant_count(t);
  if (p > 1) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int r = 0; r < restarts; ++r) {
      std::vector<double> c(p);
      for (double& v : c) v = u(rng);
      FitResult f = levenberg_marquardt(t, c, fit_set);
      if (f.loss < best.loss) best = f;
    }
  }
  if (std::isfinite(best.loss) && best.loss > 0.0) best = coordinate_descent(t, best, fit_set);
  if (&fit_set != &s) best.loss = tree_loss(t, best.constants, s);
  return best;
}

inline FitResult fit_constants(const std::vector<Node>& t, const SampleSet& s, std::mt19937_64& rng,
                               int restarts = 2) {
  return fit_constants(t, s, s, rng, restarts);
}

// ---------------------------------------------------------------------------
// Simplification.

inline std::vector<Node> simplify(const std::vector<Node>& t) {
  // Rebuild bottom-up with constant folding.
  std::vector<std::vector<Node>> stack;
  for (std::size_t idx = t.size(); idx-- > 0;) {
    const Node& n = t[idx];
    if (arity(n.op) == 0) {
      stack.push_back({n});
    } else if (n.op == Op::Pow) {
      std::vector<Node> a = std::move(stack.back());
      stack.pop_back();
      if (a.size() == 1 && a[0].op == Op::Const && !(n.k < 0 && a[0].c == 0.0)) {
        stack.push_back({Node{Op::Const, 0, std::pow(a[0].c, n.k)}});
      } else if (n.k == 1) {
        stack.push_back(std::move(a));
      } else if (n.k == 0) {
        stack.push_back({Node{Op::Const, 0, 1.0}});
      } else {
        std::vector<Node> r = {n};
        r.insert(r.end(), a.begin(), a.end());
        stack.push_back(std::move(r));
      }
    } else {
      std::vector<Node> a = std::move(stack.back());
      stack.pop_back();
      std::vector<Node> b = std::move(stack.back());
      stack.pop_back();
      const bool ca = a.size() == 1 && a[0].op == Op::Const;
      const bool cb = b.size() == 1 && b[0].op == Op::Const;
      if (ca && cb) {
        stack.push_back({Node{Op::Const, 0, n.op == Op::Add ? a[0].c + b[0].c : a[0].c * b[0].c}});
        continue;
      }
      std::vector<Node> r = {n};
      // Constants first for a canonical shape.
      if (cb && !ca) std::swap(a, b);
      r.insert(r.end(), a.begin(), a.end());
      r.insert(r.end(), b.begin(), b.end());
      stack.push_back(std::move(r));
    }
  }
  return stack.back();
}

// Expansion into sum_k a_k x^k when the tree is a Laurent polynomial.
using Laurent = std::map<int, double>;

namespace detail {

inline Laurent mul(const Laurent& a, const Laurent& b) {
  Laurent r;
  for (auto [ka, va] : a)
    for (auto [kb, vb] : b) r[ka + kb] += va * vb;
  return r;
}

inline std::optional<Laurent> expand_at(const std::vector<Node>& t, std::size_t& i) {
  const Node& n = t[i++];
  switch (n.op) {
    case Op::Const: return Laurent{{0, n.c}};
    case Op::Var: return Laurent{{1, 1.0}};
    case Op::Add: {
      auto a = expand_at(t, i);
      auto b = expand_at(t, i);
      if (!a || !b) return std::nullopt;
      for (auto [k, v] : *b) (*a)[k] += v;
      return a;
    }
    case Op::Mul: {
      auto a = expand_at(t, i);
      auto b = expand_at(t, i);
      if (!a || !b) return std::nullopt;
      return mul(*a, *b);
    }
    case Op::Pow: {
      auto a = expand_at(t, i);
      if (!a) return std::nullopt;
      if (n.k >= 0) {
        Laurent r{{0, 1.0}};
        for (int k = 0; k < n.k; ++k) r = mul(r, *a);
        return r;
      }
      Laurent nz;
      for (auto [k, v] : *a)
        if (v != 0.0) nz[k] = v;
      if (nz.size() != 1) return std::nullopt;
      const auto [k, v] = *nz.begin();
      return Laurent{{k * n.k, std::pow(v, n.k)}};
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline std::optional<Laurent> expand(const std::vector<Node>& t) {
  std::size_t i = 0;
  auto r = detail::expand_at(t, i);
  if (!r) return r;
  Laurent clean;
  for (auto [k, v] : *r)
    if (v != 0.0) clean[k] = v;
  return clean;
}

// ---------------------------------------------------------------------------
// Pareto front, score and selection.

struct FrontEntry {
  int complexity = 0;
  double loss = 0.0;
  double score = 0.0;
  std::vector<Node> nodes;
  std::string equation;
};

using ParetoFront = std::vector<FrontEntry>;

inline constexpr double kLossFloor = 1e-30;

// Keeps per-complexity bests with strictly decreasing loss.
inline ParetoFront pareto_filter(std::vector<FrontEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const FrontEntry& a, const FrontEntry& b) {
    return a.complexity != b.complexity ? a.complexity < b.complexity : a.loss < b.loss;
  });
  ParetoFront out;
  for (FrontEntry& e : entries) {
    if (!std::isfinite(e.loss)) continue;
    if (!out.empty() && out.back().complexity == e.complexity) continue;
    if (!out.empty() && !(e.loss < out.back().loss)) continue;
    out.push_back(std::move(e));
  }
  return out;
}

// Scores along the front (ascending complexity); returns entries sorted
// by score, descending.
inline ParetoFront score_front(ParetoFront front) {
  if (front.empty()) throw DomainError("empty front");
  std::sort(front.begin(), front.end(),
            [](const FrontEntry& a, const FrontEntry& b) { return a.complexity < b.complexity; });
  front[0].score = 0.0;
  for (std::size_t i = 1; i < front.size(); ++i) {
    const double l0 = std::max(front[i - 1].loss, kLossFloor);
    const double l1 = std::max(front[i].loss, kLossFloor);
    const int dc = front[i].complexity - front[i - 1].complexity;
    front[i].score = dc > 0 ? (std::log(l0) - std::log(l1)) / dc : 0.0;
  }
  std::stable_sort(front.begin(), front.end(), [](const FrontEntry& a, const FrontEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.complexity != b.complexity) return a.complexity < b.complexity;
    return a.loss < b.loss;
  });
  return front;
}

inline FrontEntry select_best(const ParetoFront& scored, std::size_t top_k = 10) {
  if (scored.empty()) throw DomainError("nothing to select from");
  const std::size_t n = std::min(top_k, scored.size());
  const FrontEntry* best = &scored[0];
  for (std::size_t i = 1; i < n; ++i) {
    const FrontEntry& e = scored[i];
    if (e.score > best->score || (e.score == best->score && (e.complexity < best->complexity ||
                                                              (e.complexity == best->complexity && e.loss < best->loss))))
      best = &e;
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Genetic programming.

struct GpConfig {
  int population = 512;
  int generations = 200;
  int tournament = 5;
  double crossover = 0.7;
  double mutation = 0.25;
  std::vector<int> powers = {2, 3};
  int max_size = 15;
  int max_depth = 6;
  int init_depth = 4;
  double parsimony = 0.1;  // per node, on the log-loss scale
  int stagnation = 25;     // generations without front change before stopping
  std::size_t fit_points = 128;  // constants are fitted on a strided subset
  std::uint64_t seed = 0;
  int workers = 1;
};

namespace detail {

class Builder {
 public:
  Builder(const GpConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  Node random_terminal() {
    if (coin(0.5)) return Node{Op::Var, 0, 0.0};
    return Node{Op::Const, 0, std::uniform_real_distribution<double>(-2.0, 2.0)(rng_)};
  }

  Node random_function() {
    const int nf = 2 + static_cast<int>(cfg_.powers.size());
    const int pick = std::uniform_int_distribution<int>(0, nf - 1)(rng_);
    if (pick == 0) return Node{Op::Add, 0, 0.0};
    if (pick == 1) return Node{Op::Mul, 0, 0.0};
    return Node{Op::Pow, cfg_.powers[pick - 2], 0.0};
  }

  void grow(std::vector<Node>& out, int depth) {
    if (depth <= 1 || coin(0.3)) {
      out.push_back(random_terminal());
      return;
    }
    const Node f = random_function();
    out.push_back(f);
    for (int k = 0; k < arity(f.op); ++k) grow(out, depth - 1);
  }

  std::vector<Node> random_tree(int depth) {
    std::vector<Node> t;
    grow(t, depth);
    return t;
  }

  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

  std::size_t random_index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  std::vector<Node> crossover(const std::vector<Node>& a, const std::vector<Node>& b) {
    const std::size_t i = random_index(a.size());
    const std::size_t ie = subtree_end(a, i);
    const std::size_t j = random_index(b.size());
    const std::size_t je = subtree_end(b, j);
    std::vector<Node> c(a.begin(), a.begin() + i);
    c.insert(c.end(), b.begin() + j, b.begin() + je);
    c.insert(c.end(), a.begin() + ie, a.end());
    return c;
  }

  std::vector<Node> mutate(const std::vector<Node>& a) {
    std::vector<Node> c = a;
    const std::size_t i = random_index(c.size());
    if (coin(0.5)) {
      Node& n = c[i];
      switch (n.op) {
        case Op::Const:
          if (coin(0.5)) n.c *= std::exp(std::normal_distribution<double>(0.0, 0.5)(rng_));
          else n = Node{Op::Var, 0, 0.0};
          break;
        case Op::Var: n = Node{Op::Const, 0, std::uniform_real_distribution<double>(-2.0, 2.0)(rng_)}; break;
        case Op::Add: n.op = Op::Mul; break;
        case Op::Mul: n.op = Op::Add; break;
        case Op::Pow:
          if (!cfg_.powers.empty()) n.k = cfg_.powers[random_index(cfg_.powers.size())];
          break;
      }
      return c;
    }
    const std::size_t ie = subtree_end(c, i);
    std::vector<Node> r(c.begin(), c.begin() + i);
    const auto sub = random_tree(3);
    r.insert(r.end(), sub.begin(), sub.end());
    r.insert(r.end(), c.begin() + ie, c.end());
    return r;
  }

 private:
  const GpConfig& cfg_;
  std::mt19937_64& rng_;
};

struct Individual {
  std::vector<Node> nodes;
  double loss = std::numeric_limits<double>::infinity();
  double fitness = std::numeric_limits<double>::infinity();
};

}  // namespace detail

struct FitReport {
  ParetoFront front;  // ascending complexity
  int generations_run = 0;
  std::size_t structures_fitted = 0;
};

inline FitReport fit(const SampleSet& samples, const GpConfig& cfg) {
  if (samples.x.size() < 10) throw DomainError("symbolic fit needs at least 10 samples");
  std::mt19937_64 rng(cfg.seed);
  detail::Builder builder(cfg, rng);
  const SampleSet fit_set = strided_subset(samples, std::max<std::size_t>(cfg.fit_points, 10));
  struct Memo {
    std::vector<double> constants;
    double loss;
  };
  std::unordered_map<std::string, Memo> memo;
  std::map<int, FrontEntry> archive;  // complexity -> best
  FitReport rep;

  auto admissible = [&](const std::vector<Node>& t) {
    return well_formed(t) && static_cast<int>(t.size()) <= cfg.max_size && depth_of(t) <= cfg.max_depth;
  };

  // Fits every not-yet-seen structure (in parallel when asked), then
  // fills losses from the memo in population order.
  auto evaluate = [&](std::vector<detail::Individual>& pop, std::uint64_t gen) {
    for (auto& ind : pop) ind.nodes = simplify(ind.nodes);
    std::vector<std::size_t> todo;
    std::unordered_map<std::string, std::size_t> first;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      const std::string key = structure_key(pop[i].nodes);
      if (memo.count(key) || first.count(key)) continue;
      first[key] = i;
      todo.push_back(i);
    }
    std::vector<FitResult> results(todo.size());
    auto work = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t k = lo; k < hi; ++k) {
        std::mt19937_64 local(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (gen + 1)) ^ (todo[k] * 0xbf58476d1ce4e5b9ULL));
        results[k] = fit_constants(pop[todo[k]].nodes, samples, fit_set, local);
      }
    };
    const int w = std::min<int>(std::max(1, cfg.workers), static_cast<int>(std::max<std::size_t>(1, todo.size())));
    if (w <= 1) {
      work(0, todo.size());
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < w; ++t) pool.emplace_back(work, todo.size() * t / w, todo.size() * (t + 1) / w);
      for (auto& th : pool) th.join();
    }
    for (std::size_t k = 0; k < todo.size(); ++k)
      memo[structure_key(pop[todo[k]].nodes)] = {results[k].constants, results[k].loss};
    rep.structures_fitted += todo.size();
    for (auto& ind : pop) {
      const Memo& m = memo.at(structure_key(ind.nodes));
      set_constants(ind.nodes, m.constants);
      ind.loss = m.loss;
      ind.fitness = std::isfinite(m.loss)
                        ? std::log(std::max(m.loss, kLossFloor)) + cfg.parsimony * static_cast<double>(ind.nodes.size())
                        : std::numeric_limits<double>::infinity();
    }
  };

  auto update_archive = [&](const std::vector<detail::Individual>& pop) {
    bool changed = false;
    for (const auto& ind : pop) {
      if (!std::isfinite(ind.loss)) continue;
      const int c = static_cast<int>(ind.nodes.size());
      auto it = archive.find(c);
      if (it == archive.end() || ind.loss < it->second.loss * (1.0 - 1e-9)) {
        archive[c] = FrontEntry{c, ind.loss, 0.0, ind.nodes, to_string(ind.nodes)};
        changed = true;
      }
    }
    return changed;
  };

  std::vector<detail::Individual> pop;
  pop.push_back({{Node{Op::Const, 0, 1.0}}});
  pop.push_back({{Node{Op::Var, 0, 0.0}}});
  while (static_cast<int>(pop.size()) < cfg.population) {
    const int depth = 2 + static_cast<int>(pop.size() % std::max(1, cfg.init_depth - 1));
    auto t = builder.random_tree(depth);
    if (admissible(t)) pop.push_back({t});
  }
  evaluate(pop, 0);
  update_archive(pop);

  auto tournament = [&]() -> const detail::Individual& {
    const detail::Individual* best = nullptr;
    for (int k = 0; k < cfg.tournament; ++k) {
      const auto& c = pop[builder.random_index(pop.size())];
      if (!best || c.fitness < best->fitness) best = &c;
    }
    return *best;
  };

  int stagnant = 0;
  for (int gen = 1; gen <= cfg.generations; ++gen) {
    std::vector<detail::Individual> next;
    next.reserve(cfg.population);
    for (const auto& [c, e] : archive) next.push_back({e.nodes});  // elitism
    while (static_cast<int>(next.size()) < cfg.population) {
      const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      std::vector<Node> child;
      if (r < cfg.crossover) child = builder.crossover(tournament().nodes, tournament().nodes);
      else if (r < cfg.crossover + cfg.mutation) child = builder.mutate(tournament().nodes);
      else child = tournament().nodes;
      if (admissible(child)) next.push_back({std::move(child)});
    }
    pop = std::move(next);
    evaluate(pop, static_cast<std::uint64_t>(gen));
    rep.generations_run = gen;
    stagnant = update_archive(pop) ? 0 : stagnant + 1;
    if (stagnant >= cfg.stagnation) break;
  }
  std::vector<FrontEntry> entries;
  for (auto& [c, e] : archive) entries.push_back(e);
  rep.front = pareto_filter(std::move(entries));
  return rep;
}

// ---------------------------------------------------------------------------
// Distillation report.

struct DistillReport {
  SampleSet samples;
  ParetoFront scored;  // by score
  FrontEntry selected;
  std::optional<Laurent> coefficients;
  std::vector<int> powers;
  int generations_run = 0;
};

inline DistillReport distill(const SampleSet& samples, const GpConfig& cfg) {
  DistillReport r;
  r.samples = samples;
  r.powers = cfg.powers;
  const FitReport f = fit(samples, cfg);
  r.generations_run = f.generations_run;
  r.scored = score_front(f.front);
  r.selected = select_best(r.scored);
  r.coefficients = expand(r.selected.nodes);
  return r;
}

inline nlohmann::json report_to_json(const DistillReport& r) {
  nlohmann::json j;
  j["head"] = head_name(r.samples.head);
  j["domain"] = {r.samples.lo, r.samples.hi};
  j["reference_input"] = r.samples.reference;
  j["samples"] = r.samples.x.size();
  j["powers"] = r.powers;
  j["generations_run"] = r.generations_run;
  nlohmann::json front = nlohmann::json::array();
  for (const FrontEntry& e : r.scored)
    front.push_back({{"equation", e.equation}, {"complexity", e.complexity}, {"loss", e.loss}, {"score", e.score}});
  j["front"] = front;
  j["selected"] = {{"equation", r.selected.equation},
                   {"complexity", r.selected.complexity},
                   {"loss", r.selected.loss},
                   {"score", r.selected.score}};
  if (r.coefficients) {
    nlohmann::json c = nlohmann::json::object();
    for (auto [k, v] : *r.coefficients) c[std::to_string(k)] = v;
    j["selected"]["coefficients_by_power"] = c;
  }
  return j;
}

// Quadratic a (x - x0)^2 + b read off a Laurent expansion with powers 0..2.
struct Quadratic {
  double a = 0.0, x0 = 0.0, b = 0.0;
};

inline std::optional<Quadratic> as_quadratic(const Laurent& l) {
  for (auto [k, v] : l)
    if (k < 0 || k > 2) return std::nullopt;
  const double a = l.count(2) ? l.at(2) : 0.0;
  if (a == 0.0) return std::nullopt;
  const double b1 = l.count(1) ? l.at(1) : 0.0;
  const double b0 = l.count(0) ? l.at(0) : 0.0;
  Quadratic q;
  q.a = a;
  q.x0 = -b1 / (2.0 * a);
  q.b = b0 - a * q.x0 * q.x0;
  return q;
}

}  // namespace hdl::sr
