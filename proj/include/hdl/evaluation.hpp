#pragma once

// Rollout-based evaluation: energy violation, momentum error, frame-wise
// comparison of energies and forces, and size transfer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include "hdl/dynamics.hpp"
#include "hdl/errors.hpp"
#include "hdl/ground_truth.hpp"
#include "hdl/hgnn.hpp"

namespace hdl {

inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

// EE(t) = |Hhat - H| / (|Hhat| + |H|), 0/0 := 0.
inline std::vector<double> energy_violation(std::span<const double> true_h, std::span<const double> pred_h) {
  if (true_h.size() != pred_h.size()) throw ShapeError("energy series lengths differ");
  std::vector<double> out(true_h.size());
  for (std::size_t t = 0; t < out.size(); ++t)
    out[t] = safe_ratio(std::abs(pred_h[t] - true_h[t]), std::abs(pred_h[t]) + std::abs(true_h[t]));
  return out;
}

// ME(t) = |Mhat - M| / (|Mhat| + |M|) with Euclidean norms, 0/0 := 0.
inline std::vector<double> momentum_error(const std::vector<std::vector<double>>& true_m,
                                          const std::vector<std::vector<double>>& pred_m) {
  if (true_m.size() != pred_m.size()) throw ShapeError("momentum series lengths differ");
  std::vector<double> out(true_m.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (true_m[t].size() != pred_m[t].size()) throw ShapeError("momentum vectors differ in shape");
    double diff = 0.0, a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < true_m[t].size(); ++k) {
      diff += std::pow(pred_m[t][k] - true_m[t][k], 2);
      a += pred_m[t][k] * pred_m[t][k];
      b += true_m[t][k] * true_m[t][k];
    }
    out[t] = safe_ratio(std::sqrt(diff), std::sqrt(a) + std::sqrt(b));
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Frame-wise predicted versus true quantities along one trajectory.
struct MetricSeries {
  std::vector<double> times;
  std::vector<double> EE, ME;
  std::vector<double> T_true, T_pred, V_true, V_pred, H_true, H_pred;
  std::vector<std::vector<double>> force_true, force_pred;  // -grad_x H per frame
  double force_mse = 0.0;
  double T_centered_mae = 0.0;  // after removing each series' mean
  double V_centered_mae = 0.0;
};

namespace detail {
inline double centered_mae(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs((a[i] - ma) - (b[i] - mb));
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}
}  // namespace detail

template <class Field>
MetricSeries compare_quantities(const Field& model, const AnalyticSystem& sys, const Trajectory& traj) {
  if (model.dim() != sys.spec.dim || model.masses().size() != static_cast<std::size_t>(sys.spec.n))
    throw ShapeError("model and system disagree on shape");
  MetricSeries m;
  double se = 0.0;
  std::size_t count = 0;
  for (const PhaseState& s : traj.frames) {
    m.times.push_back(s.time);
    m.T_true.push_back(sys.field.template kinetic<double>(s.p));
    m.V_true.push_back(sys.field.template potential<double>(s.x));
    m.T_pred.push_back(model.template kinetic<double>(s.p));
    m.V_pred.push_back(model.template potential<double>(s.x));
    m.H_true.push_back(m.T_true.back() + m.V_true.back());
    m.H_pred.push_back(m.T_pred.back() + m.V_pred.back());
    auto ft = sys.field.template grad_x<double>(s.x);
    auto fp = model.template grad_x<double>(s.x);
    for (std::size_t i = 0; i < ft.size(); ++i) {
      ft[i] = -ft[i];
      fp[i] = -fp[i];
      se += (fp[i] - ft[i]) * (fp[i] - ft[i]);
      ++count;
    }
    m.force_true.push_back(std::move(ft));
    m.force_pred.push_back(std::move(fp));
  }
  m.force_mse = count ? se / static_cast<double>(count) : 0.0;
  m.T_centered_mae = detail::centered_mae(m.T_true, m.T_pred);
  m.V_centered_mae = detail::centered_mae(m.V_true, m.V_pred);
  return m;
}

// Model rollout against the ground-truth rollout from the same initial
// state. EE compares the true Hamiltonian evaluated on both trajectories;
// ME compares their total momenta.
struct RolloutMetrics {
  std::vector<double> times;
  std::vector<double> EE, ME;
  std::vector<double> H_gt, H_model;  // true H on each trajectory
  double max_rod_violation = 0.0;     // model trajectory
  Trajectory predicted, reference;
};

template <class Field>
RolloutMetrics rollout_metrics(const Field& model, const AnalyticSystem& sys, const PhaseState& init, double dt,
                               long steps, int stride) {
  RolloutMetrics r;
  r.reference = generate_trajectory(sys, init, dt, steps, stride);
  r.predicted = rollout(model, sys.constraints, sys.spec, init, dt, steps, stride);
  std::vector<std::vector<double>> mt, mp;
  for (std::size_t f = 0; f < r.reference.frames.size(); ++f) {
    const PhaseState& g = r.reference.frames[f];
    const PhaseState& p = r.predicted.frames[f];
    r.times.push_back(g.time);
    r.H_gt.push_back(sys.hamiltonian(g));
    r.H_model.push_back(sys.hamiltonian(p));
    mt.push_back(total_momentum(g, sys.spec.dim));
    mp.push_back(total_momentum(p, sys.spec.dim));
    if (!sys.constraints.empty())
      r.max_rod_violation = std::max(r.max_rod_violation, sys.constraints.max_length_violation(p.x));
  }
  r.EE = energy_violation(r.H_gt, r.H_model);
  r.ME = momentum_error(mt, mp);
  return r;
}

struct SeedSummary {
  std::uint64_t seed = 0;
  double ee_median = 0.0;
  double me_median = 0.0;
  double force_mse = 0.0;
  double max_rod_violation = 0.0;
  RolloutMetrics rollout;
};

struct TransferReport {
  std::vector<SeedSummary> seeds;  // sorted by seed
  double ee_median = 0.0;          // median over seeds of per-seed medians
  double me_median = 0.0;
  double force_mse_median = 0.0;
  double max_rod_violation = 0.0;
};

struct TransferOptions {
  long steps = 1000;
  int stride = 1;
  double dt = 0.0;  // 0: system default
  int workers = 1;
  bool keep_rollouts = false;
};

// Evaluates `make_field(spec)` on fresh initial states of `spec`, one
// rollout per seed. Seeds run on up to `workers` threads; results are
// ordered by seed.
template <class MakeField>
TransferReport transfer_harness(MakeField&& make_field, const SystemSpec& spec, std::span<const std::uint64_t> seeds,
                                const TransferOptions& opt = {}) {
  const AnalyticSystem sys(spec);
  const auto field = make_field(spec);
  const double dt = opt.dt > 0.0 ? opt.dt : default_dt(spec.kind);
  std::vector<SeedSummary> out(seeds.size());
  auto run = [&](std::size_t k) {
    const PhaseState init = sample_initial(spec, seeds[k]);
    SeedSummary s;
    s.seed = seeds[k];
    s.rollout = rollout_metrics(field, sys, init, dt, opt.steps, opt.stride);
    s.ee_median = median(s.rollout.EE);
    s.me_median = median(s.rollout.ME);
    s.max_rod_violation = s.rollout.max_rod_violation;
    s.force_mse = compare_quantities(field, sys, s.rollout.reference).force_mse;
    if (!opt.keep_rollouts) {
      s.rollout.predicted.frames.clear();
      s.rollout.reference.frames.clear();
    }
    out[k] = std::move(s);
  };
  const int w = std::min<int>(std::max(1, opt.workers), static_cast<int>(seeds.size()));
  if (w <= 1) {
    for (std::size_t k = 0; k < seeds.size(); ++k) run(k);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(w);
    for (int t = 0; t < w; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t k = t; k < seeds.size(); k += w) run(k);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::sort(out.begin(), out.end(), [](const SeedSummary& a, const SeedSummary& b) { return a.seed < b.seed; });
  TransferReport rep;
  std::vector<double> ee, me, fm;
  for (const SeedSummary& s : out) {
    ee.push_back(s.ee_median);
    me.push_back(s.me_median);
    fm.push_back(s.force_mse);
    rep.max_rod_violation = std::max(rep.max_rod_violation, s.max_rod_violation);
  }
  rep.ee_median = median(ee);
  rep.me_median = median(me);
  rep.force_mse_median = median(fm);
  rep.seeds = std::move(out);
  return rep;
}

// Field factory for a trained network bound to any system of its kind.
inline auto hgnn_field_factory(const ModelParams& mp) {
  return [mp](const SystemSpec& spec) {
    return HamiltonianField<HgnnModel<double>>(HgnnModel<double>(HgnnNet<double>::from(mp), spec));
  };
}

}  // namespace hdl
