#pragma once

// Single-step training of the graph network:
//   L = mean over pairs of sum_k (Z_{t+1,k} - Zhat_{t+1,k})^2
// where Zhat_{t+1} is one constrained velocity-Verlet step of the learned
// Hamiltonian from Z_t.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hdl/autodiff.hpp"
#include "hdl/dynamics.hpp"
#include "hdl/errors.hpp"
#include "hdl/ground_truth.hpp"
#include "hdl/hgnn.hpp"

namespace hdl {

struct StatePair {
  PhaseState z0;
  PhaseState z1;
};

struct Dataset {
  SystemSpec spec;
  double dt = 0.0;
  std::vector<StatePair> train;
  std::vector<StatePair> validation;

  std::size_t size() const { return train.size() + validation.size(); }
};

// Picks `pairs_per_traj` recorded frames per trajectory (each paired with
// its stored one-step successor), shuffles all pairs and splits 75:25.
inline Dataset build_dataset(const std::vector<Trajectory>& trajs, int pairs_per_traj, std::uint64_t seed) {
  if (pairs_per_traj <= 0) throw DomainError("pairs_per_traj must be positive");
  if (trajs.empty()) throw DomainError("no trajectories given");
  Dataset ds;
  ds.spec = trajs.front().spec;
  ds.dt = trajs.front().dt;
  std::mt19937_64 rng(seed);
  std::vector<StatePair> all;
  for (const Trajectory& t : trajs) {
    if (t.spec.kind != ds.spec.kind || t.spec.n != ds.spec.n)
      throw DomainError("trajectories must share one system");
    if (t.dt != ds.dt) throw DomainError("trajectories must share one time step");
    if (t.successors.size() != t.frames.size()) throw DomainError("trajectory lacks one-step successors");
    if (static_cast<int>(t.frames.size()) < pairs_per_traj)
      throw DomainError("trajectory has " + std::to_string(t.frames.size()) + " frames, fewer than requested " +
                        std::to_string(pairs_per_traj));
    std::vector<std::size_t> idx(t.frames.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(pairs_per_traj);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) all.push_back({t.frames[i], t.successors[i]});
  }
  std::shuffle(all.begin(), all.end(), rng);
  const std::size_t ntrain = all.size() * 3 / 4;
  ds.train.assign(all.begin(), all.begin() + ntrain);
  ds.validation.assign(all.begin() + ntrain, all.end());
  return ds;
}

// Observed input ranges of the training states; symbolic distillation
// refuses to sample outside them.
struct DataRanges {
  double speed_min = 0.0, speed_max = 0.0;
  double dist_min[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  double dist_max[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  bool has_dist[2][2] = {{false, false}, {false, false}};
  std::vector<double> coord_min, coord_max;  // per axis
};

inline DataRanges observed_ranges(const Dataset& ds) {
  DataRanges r;
  const SystemSpec& spec = ds.spec;
  const int D = spec.dim;
  r.speed_min = std::numeric_limits<double>::infinity();
  r.speed_max = 0.0;
  r.coord_min.assign(D, std::numeric_limits<double>::infinity());
  r.coord_max.assign(D, -std::numeric_limits<double>::infinity());
  const double box = spec.pbc ? spec.box() : 0.0;
  for (const StatePair& pr : ds.train) {
    const PhaseState& s = pr.z0;
    for (int i = 0; i < spec.n; ++i) {
      double v2 = 0.0;
      for (int k = 0; k < D; ++k) {
        v2 += s.v[i * D + k] * s.v[i * D + k];
        r.coord_min[k] = std::min(r.coord_min[k], s.x[i * D + k]);
        r.coord_max[k] = std::max(r.coord_max[k], s.x[i * D + k]);
      }
      r.speed_min = std::min(r.speed_min, std::sqrt(v2));
      r.speed_max = std::max(r.speed_max, std::sqrt(v2));
    }
    for (const Edge& e : graph_edges(spec, s.x)) {
      const double d = edge_distance<double>(s.x, D, e, box);
      const int a = std::min(spec.types[e.a], spec.types[e.b]);
      const int b = std::max(spec.types[e.a], spec.types[e.b]);
      if (!r.has_dist[a][b]) {
        r.dist_min[a][b] = r.dist_max[a][b] = d;
        r.has_dist[a][b] = true;
      }
      r.dist_min[a][b] = std::min(r.dist_min[a][b], d);
      r.dist_max[a][b] = std::max(r.dist_max[a][b], d);
    }
  }
  return r;
}

// Squared error of one predicted step for any separable field.
template <class Field, class S>
S pair_loss(const Field& field, const ConstraintSet& cs, const StatePair& pr, double dt) {
  PhasePoint<S> z{std::vector<S>(pr.z0.x.begin(), pr.z0.x.end()), std::vector<S>(pr.z0.p.begin(), pr.z0.p.end())};
  const StepResult<S> r = velocity_verlet_step<Field, S>(field, cs, z, dt);
  S acc(0.0);
  for (std::size_t i = 0; i < r.state.x.size(); ++i) {
    const S ex = r.state.x[i] - S(pr.z1.x[i]);
    const S ep = r.state.p[i] - S(pr.z1.p[i]);
    acc += ex * ex;
    acc += ep * ep;
  }
  return acc;
}

// Mean pair loss of a parameter vector over `pairs`.
template <class S>
S loss(const HyperParams& hp, std::span<const S> theta, const SystemSpec& spec, const ConstraintSet& cs,
       std::span<const StatePair> pairs, double dt) {
  if (pairs.empty()) throw DomainError("empty batch");
  HgnnNet<S> net(hp, std::vector<S>(theta.begin(), theta.end()));
  const HamiltonianField<HgnnModel<S>> field(HgnnModel<S>(std::move(net), spec));
  S acc(0.0);
  for (const StatePair& pr : pairs) acc += pair_loss<decltype(field), S>(field, cs, pr, dt);
  return acc / S(static_cast<double>(pairs.size()));
}

inline double loss(const ModelParams& mp, const Dataset& ds, std::span<const StatePair> pairs) {
  return loss<double>(mp.hp, std::span<const double>(mp.values), ds.spec, constraints_for(ds.spec), pairs, ds.dt);
}

struct TrainConfig {
  double lr = 1e-3;
  int batch = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_epochs = 2000;
  int window = 100;            // epochs over which the decrease is measured
  double min_decrease = 1e-3;  // relative
  double divergence = 1e6;
  std::uint64_t seed = 0;
  int workers = 1;
  double time_budget_s = 0.0;  // 0: unlimited
};

struct EpochLoss {
  int epoch;
  double train;
  double validation;
};

struct TrainResult {
  ModelParams params;  // best validation
  std::vector<EpochLoss> history;
  int best_epoch = -1;
  double best_validation = std::numeric_limits<double>::infinity();
  std::string stop_reason;
};

class Adam {
 public:
  Adam(std::size_t n, const TrainConfig& c) : m_(n, 0.0), v_(n, 0.0), c_(c) {}

  void step(std::vector<double>& theta, const std::vector<double>& g) {
    ++t_;
    const double b1t = 1.0 - std::pow(c_.beta1, t_);
    const double b2t = 1.0 - std::pow(c_.beta2, t_);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = c_.beta1 * m_[i] + (1.0 - c_.beta1) * g[i];
      v_[i] = c_.beta2 * v_[i] + (1.0 - c_.beta2) * g[i] * g[i];
      theta[i] -= c_.lr * (m_[i] / b1t) / (std::sqrt(v_[i] / b2t) + c_.eps);
    }
  }

 private:
  std::vector<double> m_, v_;
  TrainConfig c_;
  long t_ = 0;
};

namespace detail {

// Per-pair losses and parameter gradients for pairs[lo, hi), on the
// calling thread's tape.
inline void pair_gradients(const ModelParams& mp, const SystemSpec& spec, const ConstraintSet& cs,
                           std::span<const StatePair> pairs, double dt, std::size_t lo, std::size_t hi,
                           std::vector<double>& losses, std::vector<std::vector<double>>& grads) {
  using ad::Var;
  ad::TapeScope outer;
  std::vector<Var> leaves;
  leaves.reserve(mp.values.size());
  for (double v : mp.values) leaves.push_back(Var::leaf(v));
  const HamiltonianField<HgnnModel<Var>> field(HgnnModel<Var>(HgnnNet<Var>(mp.hp, leaves), spec));
  for (std::size_t k = lo; k < hi; ++k) {
    ad::TapeScope inner;
    const Var l = pair_loss<decltype(field), Var>(field, cs, pairs[k], dt);
    ad::require_finite(l.value(), "loss");
    const auto& adj = ad::tape().sweep(l.index(), outer.mark());
    std::vector<double>& g = grads[k];
    g.resize(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) g[i] = adj[leaves[i].index()];
    losses[k] = l.value();
  }
}

inline int resolve_workers(int requested) {
  if (const char* env = std::getenv("HDL_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w > 0) return w;
    } catch (const std::exception&) {
    }
    throw DomainError(std::string("HDL_WORKERS must be a positive integer, got '") + env + "'");
  }
  return std::max(1, requested);
}

}  // namespace detail

// Mean loss and gradient over a batch. The reduction runs in pair order,
// so the result does not depend on the worker count.
inline ad::ValueGrad<double> batch_value_and_grad(const ModelParams& mp, const SystemSpec& spec,
                                                  const ConstraintSet& cs, std::span<const StatePair> pairs,
                                                  double dt, int workers = 1) {
  const std::size_t n = pairs.size();
  if (n == 0) throw DomainError("empty batch");
  std::vector<double> losses(n);
  std::vector<std::vector<double>> grads(n);
  const int w = std::min<int>(std::max(1, workers), static_cast<int>(n));
  if (w == 1) {
    detail::pair_gradients(mp, spec, cs, pairs, dt, 0, n, losses, grads);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(w);
    for (int t = 0; t < w; ++t) {
      const std::size_t lo = n * t / w, hi = n * (t + 1) / w;
      pool.emplace_back([&, t, lo, hi] {
        try {
          detail::pair_gradients(mp, spec, cs, pairs, dt, lo, hi, losses, grads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  ad::ValueGrad<double> out{0.0, std::vector<double>(mp.values.size(), 0.0)};
  for (std::size_t k = 0; k < n; ++k) {
    out.value += losses[k];
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += grads[k][i];
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.value *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

using EpochCallback = std::function<void(const EpochLoss&)>;

inline TrainResult train(ModelParams params, const Dataset& ds, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  if (!(cfg.lr >= 0.0)) throw DomainError("learning rate must be non-negative");
  if (cfg.batch <= 0) throw DomainError("batch size must be positive");
  if (ds.train.empty() || ds.validation.empty()) throw DomainError("dataset needs train and validation pairs");
  if (static_cast<std::size_t>(cfg.batch) > ds.train.size()) throw DomainError("batch larger than training set");
  if (params.hp.dim != ds.spec.dim) throw ShapeError("model dimension does not match dataset");
  const int workers = detail::resolve_workers(cfg.workers);
  const ConstraintSet cs = constraints_for(ds.spec);
  std::mt19937_64 rng(cfg.seed);
  Adam adam(params.values.size(), cfg);
  TrainResult res;
  res.params = params;
  std::vector<std::size_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<StatePair> batch;
  std::vector<double> best_so_far;  // running minimum of validation loss
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    int nb = 0;
    for (std::size_t b = 0; b + cfg.batch <= order.size(); b += cfg.batch) {
      batch.clear();
      for (std::size_t k = b; k < b + cfg.batch; ++k) batch.push_back(ds.train[order[k]]);
      const auto vg = batch_value_and_grad(params, ds.spec, cs, batch, ds.dt, workers);
      if (!std::isfinite(vg.value) || vg.value > cfg.divergence)
        throw NumericalError("training diverged at epoch " + std::to_string(epoch));
      adam.step(params.values, vg.grad);
      train_sum += vg.value;
      ++nb;
    }
    const double val = loss(params, ds, ds.validation);
    if (!std::isfinite(val) || val > cfg.divergence)
      throw NumericalError("validation loss diverged at epoch " + std::to_string(epoch));
    const EpochLoss el{epoch, train_sum / nb, val};
    res.history.push_back(el);
    if (on_epoch) on_epoch(el);
    if (val < res.best_validation) {
      res.best_validation = val;
      res.best_epoch = epoch;
      res.params = params;
    }
    best_so_far.push_back(res.best_validation);
    if (epoch > cfg.window) {
      const double before = best_so_far[epoch - 1 - cfg.window];
      if ((before - res.best_validation) < cfg.min_decrease * before) {
        res.stop_reason = "loss decrease below threshold over window";
        return res;
      }
    }
    if (cfg.time_budget_s > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() > cfg.time_budget_s) {
      res.stop_reason = "time budget reached";
      return res;
    }
  }
  res.stop_reason = "max epochs reached";
  return res;
}

}  // namespace hdl
