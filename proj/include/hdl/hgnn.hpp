#pragma once

// Hamiltonian graph network.
//
//   h0_i  = sp(MLP_em(one-hot t_i))           (separate embedders for T and V)
//   h0_ij = sp(MLP_em(d_ij))
//   h_i   <- sp(MLP(h_i  + sum_j W_V (h_j || h_ij)))
//   h_ij  <- sp(MLP(h_ij + W_E (h_i || h_j)))
//   tau_i = sp(MLP_T(g0_i || xdot_i))
//   v_i   = sp(MLP_v(h0_i || x_i)),   v_ij = sp(MLP_e(z_ij))
//   H     = sum tau_i + sum v_i + sum v_ij      (edges directed)
//
// Weights may be double or ad::Var; activations may be any scalar the
// autodiff header defines, so one evaluation path serves inference,
// state gradients and parameter gradients.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hdl/autodiff.hpp"
#include "hdl/core_state.hpp"
#include "hdl/dynamics.hpp"
#include "hdl/errors.hpp"
#include "hdl/ground_truth.hpp"

namespace hdl {

struct HyperParams {
  int embed = 5;
  int hidden = 5;
  int depth = 2;  // hidden layers per MLP
  int layers = 1;  // message-passing rounds L
  int species = 2;
  int dim = 2;
};

inline int default_layers(SystemKind k) { return k == SystemKind::Pendulum ? 2 : 1; }

inline constexpr std::size_t kNoBias = std::numeric_limits<std::size_t>::max();

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::size_t w = 0;
  std::size_t b = kNoBias;
};

struct TensorInfo {
  std::string name;
  std::size_t offset;
  std::size_t size;
  int fan_in;
  int fan_out;
  bool bias;
};

using Mlp = std::vector<DenseLayer>;

struct ParamLayout {
  Mlp em_T, em_V, em_E;
  std::vector<DenseLayer> wv, we;
  std::vector<Mlp> node_mlp, edge_mlp;
  Mlp head_T, head_v, head_e;
  std::vector<TensorInfo> tensors;
  std::size_t size = 0;
};

namespace detail {

inline DenseLayer add_dense(ParamLayout& lay, const std::string& name, int in, int out, bool bias) {
  DenseLayer d{in, out, lay.size, kNoBias};
  lay.tensors.push_back({name + ".w", lay.size, static_cast<std::size_t>(in) * out, in, out, false});
  lay.size += static_cast<std::size_t>(in) * out;
  if (bias) {
    d.b = lay.size;
    lay.tensors.push_back({name + ".b", lay.size, static_cast<std::size_t>(out), in, out, true});
    lay.size += out;
  }
  return d;
}

inline Mlp add_mlp(ParamLayout& lay, const std::string& name, int in, int hidden, int depth, int out) {
  Mlp m;
  int width = in;
  for (int k = 0; k < depth; ++k) {
    m.push_back(add_dense(lay, name + "." + std::to_string(k), width, hidden, true));
    width = hidden;
  }
  m.push_back(add_dense(lay, name + "." + std::to_string(depth), width, out, true));
  return m;
}

}  // namespace detail

inline ParamLayout make_layout(const HyperParams& hp) {
  if (hp.embed <= 0 || hp.hidden <= 0 || hp.depth < 0 || hp.layers < 0 || hp.species <= 0)
    throw DomainError("invalid hyperparameters");
  if (hp.dim != 2 && hp.dim != 3) throw DomainError("hyperparameter dim must be 2 or 3");
  ParamLayout lay;
  const int e = hp.embed;
  lay.em_T = detail::add_mlp(lay, "em_T", hp.species, hp.hidden, hp.depth, e);
  lay.em_V = detail::add_mlp(lay, "em_V", hp.species, hp.hidden, hp.depth, e);
  lay.em_E = detail::add_mlp(lay, "em_E", 1, hp.hidden, hp.depth, e);
  for (int l = 0; l < hp.layers; ++l) {
    const std::string tag = std::to_string(l);
    lay.wv.push_back(detail::add_dense(lay, "W_V." + tag, 2 * e, e, false));
    lay.we.push_back(detail::add_dense(lay, "W_E." + tag, 2 * e, e, false));
    lay.node_mlp.push_back(detail::add_mlp(lay, "node_mlp." + tag, e, hp.hidden, hp.depth, e));
    lay.edge_mlp.push_back(detail::add_mlp(lay, "edge_mlp." + tag, e, hp.hidden, hp.depth, e));
  }
  lay.head_T = detail::add_mlp(lay, "head_T", e + hp.dim, hp.hidden, hp.depth, 1);
  lay.head_v = detail::add_mlp(lay, "head_v", e + hp.dim, hp.hidden, hp.depth, 1);
  lay.head_e = detail::add_mlp(lay, "head_e", e, hp.hidden, hp.depth, 1);
  return lay;
}

struct ModelParams {
  HyperParams hp;
  std::vector<double> values;
  std::uint64_t seed = 0;

  std::size_t size() const { return values.size(); }
};

// Xavier-uniform weights, zero biases.
inline ModelParams init_params(const HyperParams& hp, std::uint64_t seed) {
  const ParamLayout lay = make_layout(hp);
  ModelParams m{hp, std::vector<double>(lay.size, 0.0), seed};
  std::mt19937_64 rng(seed);
  for (const TensorInfo& t : lay.tensors) {
    if (t.bias) continue;
    const double a = std::sqrt(6.0 / (t.fan_in + t.fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (std::size_t k = 0; k < t.size; ++k) m.values[t.offset + k] = u(rng);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Generic dense evaluation.

namespace detail {

// y = W x + b. When `offset` is given it replaces the bias and the first
// `skip` input columns (a precomputed partial product).
template <class P, class S>
std::vector<S> dense(std::span<const P> th, const DenseLayer& L, std::span<const S> x, const P* offset = nullptr,
                     int skip = 0) {
  std::vector<S> y(L.out);
  for (int r = 0; r < L.out; ++r) {
    S acc = offset ? S(offset[r]) : (L.b != kNoBias ? S(th[L.b + r]) : S(0.0));
    const P* w = th.data() + L.w + static_cast<std::size_t>(r) * L.in;
    for (int c = skip; c < L.in; ++c) acc += w[c] * x[c - skip];
    y[r] = acc;
  }
  return y;
}

template <class S>
void squareplus_inplace(std::vector<S>& v) {
  using ad::squareplus;
  for (S& s : v) s = squareplus(s);
}

template <class P, class S>
std::vector<S> mlp(std::span<const P> th, const Mlp& m, std::span<const S> x, const P* offset = nullptr,
                   int skip = 0) {
  std::vector<S> h = dense<P, S>(th, m[0], x, offset, skip);
  for (std::size_t k = 1; k < m.size(); ++k) {
    squareplus_inplace(h);
    h = dense<P, S>(th, m[k], std::span<const S>(h));
  }
  return h;
}

// Bias plus the first `cols` input columns applied to a known prefix.
template <class P>
std::vector<P> partial_first_layer(std::span<const P> th, const DenseLayer& L, std::span<const P> prefix) {
  std::vector<P> y(L.out);
  for (int r = 0; r < L.out; ++r) {
    P acc = L.b != kNoBias ? th[L.b + r] : P(0.0);
    const P* w = th.data() + L.w + static_cast<std::size_t>(r) * L.in;
    for (std::size_t c = 0; c < prefix.size(); ++c) acc += w[c] * prefix[c];
    y[r] = acc;
  }
  return y;
}

// Sum in ascending value order, which makes the total independent of the
// order the terms were produced in.
template <class S>
S canonical_sum(std::vector<S> terms) {
  std::sort(terms.begin(), terms.end(),
            [](const S& a, const S& b) { return ad::value_of(a) < ad::value_of(b); });
  S acc(0.0);
  for (const S& t : terms) acc += t;
  return acc;
}

}  // namespace detail

template <class S>
struct Embedding {
  int width = 0;
  std::vector<S> node;  // n x width
  std::vector<S> edge;  // |E| x width
};

template <class S>
struct GraphInput {
  int dim = 2;
  std::vector<int> types;
  std::vector<Edge> edges;  // directed
  std::vector<S> x;
  std::vector<S> xdot;
  std::vector<S> d;  // per directed edge
};

template <class S>
S edge_distance(std::span<const S> x, int dim, const Edge& e, double box) {
  using std::sqrt;
  S r2(0.0);
  for (int k = 0; k < dim; ++k) {
    S dx = x[static_cast<std::size_t>(e.b) * dim + k] - x[static_cast<std::size_t>(e.a) * dim + k];
    if (box > 0.0) dx = minimum_image_s(dx, box);
    r2 += dx * dx;
  }
  return sqrt(r2);
}

inline std::vector<Edge> directed(std::span<const Edge> undirected) {
  std::vector<Edge> out;
  out.reserve(2 * undirected.size());
  for (const Edge& e : undirected) {
    out.push_back(e);
    out.push_back({e.b, e.a});
  }
  return out;
}

// Directed edge list for a spec at positions x (LJ: cutoff neighbours).
inline std::vector<Edge> graph_edges(const SystemSpec& spec, std::span<const double> x) {
  if (spec.kind == SystemKind::BinaryLJ) return lj_cutoff_edges(spec, x);
  return directed(spec.edges);
}

template <class S>
GraphInput<S> build_graph(const SystemSpec& spec, std::span<const S> x, std::span<const S> xdot) {
  GraphInput<S> g;
  g.dim = spec.dim;
  g.types = spec.types;
  std::vector<double> xv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xv[i] = ad::value_of(x[i]);
  g.edges = graph_edges(spec, xv);
  g.x.assign(x.begin(), x.end());
  g.xdot.assign(xdot.begin(), xdot.end());
  const double box = spec.pbc ? spec.box() : 0.0;
  for (const Edge& e : g.edges) g.d.push_back(edge_distance<S>(x, spec.dim, e, box));
  return g;
}

template <class S>
struct EnergyBreakdown {
  S T{};
  std::vector<S> tau;
  std::vector<S> V_nodes;
  std::vector<S> V_edges;
  S H{};
};

// Parameters plus the per-species quantities that depend on weights only.
template <class P>
class HgnnNet {
 public:
  HgnnNet(const HyperParams& hp, std::vector<P> theta)
      : hp_(hp), layout_(std::make_shared<const ParamLayout>(make_layout(hp))), theta_(std::move(theta)) {
    if (theta_.size() != layout_->size) throw ShapeError("parameter vector does not match layout");
    precompute();
  }

  static HgnnNet from(const ModelParams& m) {
    std::vector<P> th(m.values.begin(), m.values.end());
    return HgnnNet(m.hp, std::move(th));
  }

  const HyperParams& hp() const { return hp_; }
  const ParamLayout& layout() const { return *layout_; }
  std::span<const P> theta() const { return theta_; }

  void check_type(int t) const {
    if (t < 0 || t >= hp_.species) throw DomainError("unknown species " + std::to_string(t));
  }

  // h0 for the V path (message passing and node head) and g0 for the T head.
  const std::vector<P>& h0(int t) const { return hV_[t]; }
  const std::vector<P>& g0(int t) const { return gT_[t]; }

  template <class S>
  Embedding<S> embed(const GraphInput<S>& g) const {
    Embedding<S> out;
    out.width = hp_.embed;
    for (int t : g.types) {
      check_type(t);
      for (const P& v : hV_[t]) out.node.push_back(S(v));
    }
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      auto h = edge_embed<S>(g.d[e]);
      out.edge.insert(out.edge.end(), h.begin(), h.end());
    }
    return out;
  }

  // L rounds of node and edge updates. With skip_final_nodes the node
  // update of the last round (which no head reads) is left out.
  template <class S>
  Embedding<S> message_pass(const std::vector<int>& types, const std::vector<Edge>& edges, Embedding<S> h,
                            bool skip_final_nodes = false) const {
    const int E = hp_.embed;
    const std::size_t n = types.size();
    for (int l = 0; l < hp_.layers; ++l) {
      const std::span<const P> th(theta_);
      const bool first = (l == 0);
      const bool nodes = !(skip_final_nodes && l + 1 == hp_.layers);
      std::vector<S> node_next;
      if (nodes) {
        std::vector<std::vector<S>> incoming(n * E);
        for (std::size_t e = 0; e < edges.size(); ++e) {
          const Edge& ed = edges[e];
          std::vector<S> msg;
          std::span<const S> he(h.edge.data() + e * E, E);
          if (first) {
            msg = detail::dense<P, S>(th, layout_->wv[l], he, wv0_[types[ed.b]].data(), E);
          } else {
            std::vector<S> cat(h.node.begin() + ed.b * E, h.node.begin() + (ed.b + 1) * E);
            cat.insert(cat.end(), he.begin(), he.end());
            msg = detail::dense<P, S>(th, layout_->wv[l], std::span<const S>(cat));
          }
          for (int k = 0; k < E; ++k) incoming[ed.a * E + k].push_back(msg[k]);
        }
        node_next.resize(n * E);
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<S> u(E);
          for (int k = 0; k < E; ++k) {
            auto& terms = incoming[i * E + k];
            terms.push_back(h.node[i * E + k]);
            u[k] = detail::canonical_sum(std::move(terms));
          }
          auto y = detail::mlp<P, S>(th, layout_->node_mlp[l], std::span<const S>(u));
          detail::squareplus_inplace(y);
          std::copy(y.begin(), y.end(), node_next.begin() + i * E);
        }
      }
      std::vector<S> edge_next(edges.size() * E);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const Edge& ed = edges[e];
        std::vector<S> u(E);
        if (first) {
          const std::vector<P>& c = we0_[types[ed.a] * hp_.species + types[ed.b]];
          for (int k = 0; k < E; ++k) u[k] = h.edge[e * E + k] + S(c[k]);
        } else {
          std::vector<S> cat(h.node.begin() + ed.a * E, h.node.begin() + (ed.a + 1) * E);
          cat.insert(cat.end(), h.node.begin() + ed.b * E, h.node.begin() + (ed.b + 1) * E);
          auto w = detail::dense<P, S>(th, layout_->we[l], std::span<const S>(cat));
          for (int k = 0; k < E; ++k) u[k] = h.edge[e * E + k] + w[k];
        }
        auto y = detail::mlp<P, S>(th, layout_->edge_mlp[l], std::span<const S>(u));
        detail::squareplus_inplace(y);
        std::copy(y.begin(), y.end(), edge_next.begin() + e * E);
      }
      h.edge = std::move(edge_next);
      if (nodes) h.node = std::move(node_next);
    }
    return h;
  }

  template <class S>
  S kinetic_head(int type, std::span<const S> xdot) const {
    using ad::squareplus;
    check_type(type);
    auto y = detail::mlp<P, S>(theta_, layout_->head_T, xdot, headT_[type].data(), hp_.embed);
    return squareplus(y[0]);
  }

  template <class S>
  S node_head(int type, std::span<const S> x) const {
    using ad::squareplus;
    check_type(type);
    auto y = detail::mlp<P, S>(theta_, layout_->head_v, x, headv_[type].data(), hp_.embed);
    return squareplus(y[0]);
  }

  template <class S>
  S edge_head(std::span<const S> z) const {
    using ad::squareplus;
    auto y = detail::mlp<P, S>(theta_, layout_->head_e, z);
    return squareplus(y[0]);
  }

  template <class S>
  std::vector<S> edge_embed(const S& d) const {
    const S in[1] = {d};
    auto h = detail::mlp<P, S>(theta_, layout_->em_E, std::span<const S>(in, 1));
    detail::squareplus_inplace(h);
    return h;
  }

  // tau_i for the listed particles; velocities are p / m.
  template <class S>
  std::vector<S> kinetic_terms(std::span<const S> p, std::span<const int> types, std::span<const double> masses,
                               std::span<const int> particles) const {
    const int D = hp_.dim;
    std::vector<S> out;
    out.reserve(particles.size());
    std::vector<S> v(D);
    for (int i : particles) {
      const S inv(1.0 / masses[i]);
      for (int k = 0; k < D; ++k) v[k] = p[static_cast<std::size_t>(i) * D + k] * inv;
      out.push_back(kinetic_head<S>(types[i], std::span<const S>(v)));
    }
    return out;
  }

  // v_ij for one directed edge when L <= 1: z_ij then depends on d_ij and
  // the two species only.
  template <class S>
  S single_edge_term(const S& d, int ta, int tb) const {
    std::vector<S> h = edge_embed<S>(d);
    if (hp_.layers == 1) {
      const std::vector<P>& c = we0_[ta * hp_.species + tb];
      for (int k = 0; k < hp_.embed; ++k) h[k] = h[k] + S(c[k]);
      h = detail::mlp<P, S>(theta_, layout_->edge_mlp[0], std::span<const S>(h));
      detail::squareplus_inplace(h);
    }
    return edge_head<S>(std::span<const S>(h));
  }

  // v_ij for every directed edge given the edge distances.
  template <class S>
  std::vector<S> edge_terms(std::span<const S> d, std::span<const int> types, const std::vector<Edge>& edges) const {
    const int E = hp_.embed;
    std::vector<S> ve;
    ve.reserve(edges.size());
    if (hp_.layers <= 1) {
      for (std::size_t e = 0; e < edges.size(); ++e) {
        check_type(types[edges[e].a]);
        check_type(types[edges[e].b]);
        ve.push_back(single_edge_term<S>(d[e], types[edges[e].a], types[edges[e].b]));
      }
      return ve;
    }
    Embedding<S> h;
    h.width = E;
    for (int t : types) {
      check_type(t);
      for (const P& v : hV_[t]) h.node.push_back(S(v));
    }
    h.edge.reserve(edges.size() * E);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      auto he = edge_embed<S>(d[e]);
      h.edge.insert(h.edge.end(), he.begin(), he.end());
    }
    std::vector<int> tv(types.begin(), types.end());
    const Embedding<S> z = message_pass<S>(tv, edges, std::move(h), true);
    for (std::size_t e = 0; e < edges.size(); ++e)
      ve.push_back(edge_head<S>(std::span<const S>(z.edge.data() + e * E, E)));
    return ve;
  }

  // Node terms for `particles` and edge terms for the directed `edges`.
  template <class S>
  std::pair<std::vector<S>, std::vector<S>> potential_terms(std::span<const S> x, std::span<const int> types,
                                                            std::span<const int> particles,
                                                            const std::vector<Edge>& edges, double box) const {
    const int D = hp_.dim;
    std::vector<S> vn;
    vn.reserve(particles.size());
    for (int i : particles)
      vn.push_back(node_head<S>(types[i], x.subspan(static_cast<std::size_t>(i) * D, D)));
    std::vector<S> d;
    d.reserve(edges.size());
    for (const Edge& e : edges) d.push_back(edge_distance<S>(x, D, e, box));
    return {std::move(vn), edge_terms<S>(std::span<const S>(d), types, edges)};
  }

  // d/dx of the summed node and edge terms. Node terms are differentiated
  // per particle; edge terms through their distances (one tangent per edge
  // when L <= 1, chunks of the whole distance vector otherwise).
  template <class S>
  std::vector<S> potential_gradient(std::span<const S> x, std::span<const int> types, std::span<const int> particles,
                                    const std::vector<Edge>& edges, double box) const {
    using std::sqrt;
    const int D = hp_.dim;
    std::vector<S> g(x.size(), S(0.0));
    for (int i : particles) {
      const auto gi = local_gradient<S>(x.subspan(static_cast<std::size_t>(i) * D, D),
                                        [&](auto xi) { return node_head(types[i], xi); });
      for (int k = 0; k < D; ++k) g[static_cast<std::size_t>(i) * D + k] += gi[k];
    }
    if (edges.empty()) return g;
    const std::size_t ne = edges.size();
    std::vector<S> d(ne), unit(ne * D);
    for (std::size_t e = 0; e < ne; ++e) {
      S r2(0.0);
      for (int k = 0; k < D; ++k) {
        S dx = x[static_cast<std::size_t>(edges[e].b) * D + k] - x[static_cast<std::size_t>(edges[e].a) * D + k];
        if (box > 0.0) dx = minimum_image_s(dx, box);
        unit[e * D + k] = dx;
        r2 += dx * dx;
      }
      d[e] = sqrt(r2);
      const S inv = S(1.0) / d[e];
      for (int k = 0; k < D; ++k) unit[e * D + k] = unit[e * D + k] * inv;
    }
    std::vector<S> dvdd(ne);
    if (hp_.layers <= 1) {
      using D1 = ad::Dual<S, 1>;
      for (std::size_t e = 0; e < ne; ++e) {
        D1 de;
        de.v = d[e];
        de.d[0] = S(1.0);
        check_type(types[edges[e].a]);
        check_type(types[edges[e].b]);
        dvdd[e] = single_edge_term<D1>(de, types[edges[e].a], types[edges[e].b]).d[0];
      }
    } else {
      constexpr int N = 8;
      using DN = ad::Dual<S, N>;
      std::vector<DN> dd(ne);
      for (std::size_t e = 0; e < ne; ++e) dd[e].v = d[e];
      for (std::size_t start = 0; start < ne; start += N) {
        const std::size_t m = std::min<std::size_t>(N, ne - start);
        for (std::size_t k = 0; k < m; ++k) dd[start + k].d[k] = S(1.0);
        const auto terms = edge_terms<DN>(std::span<const DN>(dd), types, edges);
        DN total(0.0);
        for (const DN& t : terms) total += t;
        for (std::size_t k = 0; k < m; ++k) {
          dvdd[start + k] = total.d[k];
          dd[start + k].d[k] = S(0.0);
        }
      }
    }
    for (std::size_t e = 0; e < ne; ++e)
      for (int k = 0; k < D; ++k) {
        const S f = dvdd[e] * unit[e * D + k];
        g[static_cast<std::size_t>(edges[e].b) * D + k] += f;
        g[static_cast<std::size_t>(edges[e].a) * D + k] -= f;
      }
    return g;
  }

  // d/dp of the summed tau_i, one particle at a time.
  template <class S>
  std::vector<S> kinetic_gradient(std::span<const S> p, std::span<const int> types, std::span<const double> masses,
                                  std::span<const int> particles) const {
    const int D = hp_.dim;
    std::vector<S> g(p.size(), S(0.0));
    std::vector<S> v(D);
    for (int i : particles) {
      const S inv(1.0 / masses[i]);
      for (int k = 0; k < D; ++k) v[k] = p[static_cast<std::size_t>(i) * D + k] * inv;
      const auto gi = local_gradient<S>(std::span<const S>(v), [&](auto vi) { return kinetic_head(types[i], vi); });
      for (int k = 0; k < D; ++k) g[static_cast<std::size_t>(i) * D + k] += gi[k] * inv;
    }
    return g;
  }

 private:
  // Gradient of f over a D-vector (D = 2 or 3) by a single forward sweep.
  template <class S, class F>
  std::array<S, 3> local_gradient(std::span<const S> u, F&& f) const {
    std::array<S, 3> out{S(0.0), S(0.0), S(0.0)};
    auto run = [&]<int N>() {
      using DN = ad::Dual<S, N>;
      std::array<DN, N> ud;
      for (int k = 0; k < N; ++k) {
        ud[k].v = u[k];
        ud[k].d[k] = S(1.0);
      }
      const DN y = f(std::span<const DN>(ud.data(), N));
      for (int k = 0; k < N; ++k) out[k] = y.d[k];
    };
    if (u.size() == 2) run.template operator()<2>();
    else run.template operator()<3>();
    return out;
  }

  void precompute() {
    const std::span<const P> th(theta_);
    const int E = hp_.embed;
    for (int t = 0; t < hp_.species; ++t) {
      std::vector<P> onehot(hp_.species, P(0.0));
      onehot[t] = P(1.0);
      auto g = detail::mlp<P, P>(th, layout_->em_T, std::span<const P>(onehot));
      auto h = detail::mlp<P, P>(th, layout_->em_V, std::span<const P>(onehot));
      detail::squareplus_inplace(g);
      detail::squareplus_inplace(h);
      gT_.push_back(g);
      hV_.push_back(h);
      headT_.push_back(detail::partial_first_layer<P>(th, layout_->head_T[0], g));
      headv_.push_back(detail::partial_first_layer<P>(th, layout_->head_v[0], h));
    }
    if (hp_.layers > 0) {
      for (int t = 0; t < hp_.species; ++t) {
        // W_V (h0_j || .): the h0_j half, no bias
        std::vector<P> y(E, P(0.0));
        const DenseLayer& L = layout_->wv[0];
        for (int r = 0; r < E; ++r)
          for (int c = 0; c < E; ++c) y[r] += th[L.w + r * L.in + c] * hV_[t][c];
        wv0_.push_back(y);
      }
      for (int a = 0; a < hp_.species; ++a)
        for (int b = 0; b < hp_.species; ++b) {
          std::vector<P> cat(hV_[a]);
          cat.insert(cat.end(), hV_[b].begin(), hV_[b].end());
          we0_.push_back(detail::dense<P, P>(th, layout_->we[0], std::span<const P>(cat)));
        }
    }
  }

  HyperParams hp_;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<P> theta_;
  std::vector<std::vector<P>> gT_, hV_, headT_, headv_, wv0_, we0_;
};

// A network bound to a system description; models SeparableModel.
template <class P>
class HgnnModel {
 public:
  HgnnModel(HgnnNet<P> net, SystemSpec spec) : net_(std::move(net)), spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.dim != net_.hp().dim) throw ShapeError("model dimension does not match system");
    for (int t : spec_.types) net_.check_type(t);
    all_.resize(spec_.n);
    for (int i = 0; i < spec_.n; ++i) all_[i] = i;
    if (spec_.kind != SystemKind::BinaryLJ) edges_ = directed(spec_.edges);
  }

  const HgnnNet<P>& net() const { return net_; }
  const SystemSpec& spec() const { return spec_; }
  const std::vector<double>& masses() const { return spec_.masses; }
  int dim() const { return spec_.dim; }

  template <class S>
  S kinetic(std::span<const S> p) const {
    return detail::canonical_sum(net_.template kinetic_terms<S>(p, spec_.types, spec_.masses, all_));
  }

  template <class S>
  S potential(std::span<const S> x) const {
    auto [vn, ve] = potential_parts<S>(x);
    vn.insert(vn.end(), ve.begin(), ve.end());
    return detail::canonical_sum(std::move(vn));
  }

  template <class S>
  std::pair<std::vector<S>, std::vector<S>> potential_parts(std::span<const S> x) const {
    return net_.template potential_terms<S>(x, spec_.types, all_, edges_at(x), box());
  }

  template <class S>
  std::vector<S> potential_gradient(std::span<const S> x) const {
    return net_.template potential_gradient<S>(x, spec_.types, all_, edges_at(x), box());
  }

  template <class S>
  std::vector<S> kinetic_gradient(std::span<const S> p) const {
    return net_.template kinetic_gradient<S>(p, spec_.types, spec_.masses, all_);
  }

  template <class S>
  std::vector<Edge> edges_at(std::span<const S> x) const {
    if (spec_.kind != SystemKind::BinaryLJ) return edges_;
    std::vector<double> xv(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xv[i] = ad::value_of(x[i]);
    return lj_cutoff_edges(spec_, xv);
  }

  double box() const { return spec_.pbc ? spec_.box() : 0.0; }

 private:
  HgnnNet<P> net_;
  SystemSpec spec_;
  std::vector<int> all_;
  std::vector<Edge> edges_;
};

template <class P>
EnergyBreakdown<double> hamiltonian(const HgnnModel<P>& model, const PhaseState& s) {
  EnergyBreakdown<double> out;
  const auto& spec = model.spec();
  if (s.x.size() != spec.coords() || s.p.size() != spec.coords()) throw ShapeError("state shape does not match system");
  std::vector<int> all(spec.n);
  for (int i = 0; i < spec.n; ++i) all[i] = i;
  out.tau = model.net().template kinetic_terms<double>(s.p, spec.types, spec.masses, all);
  auto [vn, ve] = model.template potential_parts<double>(s.x);
  out.V_nodes = std::move(vn);
  out.V_edges = std::move(ve);
  out.T = detail::canonical_sum(out.tau);
  out.H = out.T + detail::canonical_sum(out.V_nodes) + detail::canonical_sum(out.V_edges);
  return out;
}

// ---------------------------------------------------------------------------
// Hybrid superposition.

template <class P>
struct HybridComponent {
  HgnnNet<P> net;
  std::vector<int> particles;
  std::vector<Edge> edges;  // directed, global indices
  std::vector<int> kinetic;
};

template <class P>
class HybridModel {
 public:
  HybridModel(std::vector<HybridComponent<P>> parts, SystemSpec spec)
      : parts_(std::move(parts)), spec_(std::move(spec)) {
    std::vector<int> owners(spec_.n, 0);
    for (const auto& c : parts_) {
      if (c.net.hp().dim != spec_.dim) throw ShapeError("component dimension does not match hybrid system");
      for (int i : c.kinetic) {
        if (i < 0 || i >= spec_.n) throw ShapeError("kinetic owner references an invalid particle");
        ++owners[i];
      }
      for (int i : c.particles)
        if (i < 0 || i >= spec_.n) throw ShapeError("component references an invalid particle");
    }
    for (int i = 0; i < spec_.n; ++i) {
      if (owners[i] == 0) throw DomainError("particle " + std::to_string(i) + " has no kinetic owner");
      if (owners[i] > 1) throw DomainError("particle " + std::to_string(i) + " has more than one kinetic owner");
    }
  }

  const std::vector<double>& masses() const { return spec_.masses; }
  int dim() const { return spec_.dim; }
  const SystemSpec& spec() const { return spec_; }

  template <class S>
  S kinetic(std::span<const S> p) const {
    S acc(0.0);
    for (const auto& c : parts_)
      acc += detail::canonical_sum(c.net.template kinetic_terms<S>(p, spec_.types, spec_.masses, c.kinetic));
    return acc;
  }

  template <class S>
  S potential(std::span<const S> x) const {
    S acc(0.0);
    for (const auto& c : parts_) {
      auto [vn, ve] = c.net.template potential_terms<S>(x, spec_.types, c.particles, c.edges, 0.0);
      vn.insert(vn.end(), ve.begin(), ve.end());
      acc += detail::canonical_sum(std::move(vn));
    }
    return acc;
  }

  template <class S>
  std::vector<S> kinetic_gradient(std::span<const S> p) const {
    std::vector<S> g(p.size(), S(0.0));
    for (const auto& c : parts_) {
      const auto gc = c.net.template kinetic_gradient<S>(p, spec_.types, spec_.masses, c.kinetic);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i];
    }
    return g;
  }

  template <class S>
  std::vector<S> potential_gradient(std::span<const S> x) const {
    std::vector<S> g(x.size(), S(0.0));
    for (const auto& c : parts_) {
      const auto gc = c.net.template potential_gradient<S>(x, spec_.types, c.particles, c.edges, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i];
    }
    return g;
  }

 private:
  std::vector<HybridComponent<P>> parts_;
  SystemSpec spec_;
};

// H_hybrid = sum_k H_k(sub-graph k). `nets` are matched to spec.parts by
// position.
template <class P>
HamiltonianField<HybridModel<P>> compose_hybrid(const std::vector<HgnnNet<P>>& nets, const SystemSpec& spec) {
  if (nets.size() != spec.parts.size()) throw ShapeError("one network per hybrid part is required");
  std::vector<HybridComponent<P>> comps;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    const HybridPart& part = spec.parts[k];
    comps.push_back({nets[k], part.particles, directed(part.edges), part.kinetic});
  }
  return HamiltonianField<HybridModel<P>>(HybridModel<P>(std::move(comps), spec));
}

}  // namespace hdl
