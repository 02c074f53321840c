#pragma once

// Constrained Hamiltonian dynamics for any separable Hamiltonian
// H(x, p) = T(p) + V(x), analytic or learned.
//
//   Z = [x; p],  J = [0, I; -I, 0]
//   unconstrained:  Zdot = J grad H
//   constrained:    lambda = -[(D Psi) J (D Psi)^T]^-1 (D Psi) J grad H
//                   Zdot   = J (grad H + (D Psi)^T lambda)
//
// Every routine is templated on the scalar type so one code path serves
// plain simulation (double) and training (ad::Var).

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "hdl/autodiff.hpp"
#include "hdl/constraints.hpp"
#include "hdl/core_state.hpp"
#include "hdl/errors.hpp"
#include "hdl/linalg.hpp"

namespace hdl {

// A model exposes kinetic(p) and potential(x) as templates over the scalar
// type, plus the per-particle masses and spatial dimension.
template <class M>
concept SeparableModel = requires(const M& m, std::span<const double> s) {
  { m.template kinetic<double>(s) } -> std::convertible_to<double>;
  { m.template potential<double>(s) } -> std::convertible_to<double>;
  { m.masses() } -> std::convertible_to<const std::vector<double>&>;
  { m.dim() } -> std::convertible_to<int>;
};

inline constexpr int kChunk = 8;

template <SeparableModel Model>
class HamiltonianField {
 public:
  explicit HamiltonianField(Model model) : model_(std::move(model)) {}

  const Model& model() const { return model_; }
  const std::vector<double>& masses() const { return model_.masses(); }
  int dim() const { return model_.dim(); }

  template <class S>
  S value(std::span<const S> x, std::span<const S> p) const {
    return model_.template kinetic<S>(p) + model_.template potential<S>(x);
  }

  template <class S>
  S kinetic(std::span<const S> p) const {
    return model_.template kinetic<S>(p);
  }
  template <class S>
  S potential(std::span<const S> x) const {
    return model_.template potential<S>(x);
  }

  // grad_x H = grad V. Models may supply a structured gradient; otherwise
  // plain doubles take one reverse sweep and any other scalar goes through
  // forward sweeps so the result stays differentiable.
  template <class S>
  std::vector<S> grad_x(std::span<const S> x) const {
    if constexpr (requires { model_.template potential_gradient<S>(x); }) {
      return model_.template potential_gradient<S>(x);
    } else {
      return generic_grad_x<S>(x);
    }
  }

  template <class S>
  std::vector<S> grad_p(std::span<const S> p) const {
    if constexpr (requires { model_.template kinetic_gradient<S>(p); }) {
      return model_.template kinetic_gradient<S>(p);
    } else {
      return generic_grad_p<S>(p);
    }
  }

  // Gradients straight from the autodiff drivers, bypassing any model hook.
  template <class S>
  std::vector<S> generic_grad_x(std::span<const S> x) const {
    if constexpr (std::is_same_v<S, double>) {
      return ad::value_and_grad(
                 [&](std::span<const ad::Var> xs) { return model_.template potential<ad::Var>(xs); }, x)
          .grad;
    } else {
      using D = ad::Dual<S, kChunk>;
      return ad::grad_state<kChunk>(
          [&](std::span<const D> xs) { return model_.template potential<D>(xs); }, x);
    }
  }

  template <class S>
  std::vector<S> generic_grad_p(std::span<const S> p) const {
    if constexpr (std::is_same_v<S, double>) {
      return ad::value_and_grad(
                 [&](std::span<const ad::Var> ps) { return model_.template kinetic<ad::Var>(ps); }, p)
          .grad;
    } else {
      using D = ad::Dual<S, kChunk>;
      return ad::grad_state<kChunk>(
          [&](std::span<const D> ps) { return model_.template kinetic<D>(ps); }, p);
    }
  }

  // grad_Z H = [grad_x H; grad_p H].
  template <class S>
  std::vector<S> grad_z(std::span<const S> x, std::span<const S> p) const {
    std::vector<S> g = grad_x(x);
    const std::vector<S> gp = grad_p(p);
    g.insert(g.end(), gp.begin(), gp.end());
    return g;
  }

 private:
  Model model_;
};

template <class S>
struct PhasePoint {
  std::vector<S> x;
  std::vector<S> p;
};

template <class S>
struct Derivative {
  std::vector<S> xdot;
  std::vector<S> pdot;
  std::vector<S> lambda;  // empty when unconstrained
};

template <class S>
struct StepResult {
  PhasePoint<S> state;
  std::vector<S> lambda;
};

namespace detail {

template <class S>
void check_finite(std::span<const S> v, const char* what) {
  for (const S& s : v)
    if (!std::isfinite(ad::value_of(s))) throw NumericalError(std::string(what) + ": non-finite value");
}

// lambda from grad H = [gx; gp] at (x, p).
template <class S>
std::vector<S> lambda_from_grad(const ConstraintSet& cs, std::span<const S> x, std::span<const S> p,
                                std::span<const S> gx, std::span<const S> gp) {
  const std::size_t nd = x.size();
  const std::size_t rows = 2 * static_cast<std::size_t>(cs.k());
  const linalg::Matrix<S> d = cs.jacobian(x, p);
  // b = D J grad H, with J grad H = [gp; -gx].
  std::vector<S> b(rows, S(0.0));
  for (std::size_t r = 0; r < rows; ++r) {
    S acc(0.0);
    for (std::size_t c = 0; c < nd; ++c) {
      acc += d(r, c) * gp[c];
      acc -= d(r, nd + c) * gx[c];
    }
    b[r] = acc;
  }
  // A = D J D^T: A(i,j) = D_i,x . D_j,p - D_i,p . D_j,x
  linalg::Matrix<S> a(rows, rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < rows; ++j) {
      S acc(0.0);
      for (std::size_t c = 0; c < nd; ++c) {
        acc += d(i, c) * d(j, nd + c);
        acc -= d(i, nd + c) * d(j, c);
      }
      a(i, j) = acc;
    }
  std::vector<S> lam = linalg::solve(a, b);
  for (S& l : lam) l = -l;
  check_finite<S>(lam, "solve_lambda");
  return lam;
}

}  // namespace detail

template <class Field, class S>
std::vector<S> unconstrained_rhs(const Field& field, std::span<const S> x, std::span<const S> p) {
  const std::vector<S> gx = field.grad_x(x);
  const std::vector<S> gp = field.grad_p(p);
  detail::check_finite<S>(gx, "unconstrained_rhs");
  detail::check_finite<S>(gp, "unconstrained_rhs");
  std::vector<S> zdot(gp.begin(), gp.end());
  for (const S& g : gx) zdot.push_back(-g);
  return zdot;
}

template <class Field, class S>
std::vector<S> solve_lambda(const Field& field, const ConstraintSet& cs, std::span<const S> x,
                            std::span<const S> p) {
  if (cs.empty()) return {};
  const std::vector<S> gx = field.grad_x(x);
  const std::vector<S> gp = field.grad_p(p);
  return detail::lambda_from_grad<S>(cs, x, p, gx, gp);
}

namespace detail {

// Zdot from precomputed gradients. gp may be empty when there are no
// constraints and only pdot is wanted.
template <class S>
Derivative<S> derivative_from_grad(const ConstraintSet& cs, std::span<const S> x, std::span<const S> p,
                                   std::vector<S> gx, std::vector<S> gp) {
  check_finite<S>(gx, "constrained_rhs");
  check_finite<S>(gp, "constrained_rhs");
  Derivative<S> out;
  if (cs.empty()) {
    out.xdot = std::move(gp);
    out.pdot.reserve(gx.size());
    for (const S& g : gx) out.pdot.push_back(-g);
    return out;
  }
  out.lambda = lambda_from_grad<S>(cs, x, p, gx, gp);
  const std::size_t nd = x.size();
  const linalg::Matrix<S> d = cs.jacobian(x, p);
  // w = grad H + D^T lambda; Zdot = J w = [w_p; -w_x]
  out.xdot.resize(nd);
  out.pdot.resize(nd);
  for (std::size_t c = 0; c < nd; ++c) {
    S wx = gx[c];
    S wp = gp[c];
    for (std::size_t r = 0; r < out.lambda.size(); ++r) {
      wx += d(r, c) * out.lambda[r];
      wp += d(r, nd + c) * out.lambda[r];
    }
    out.xdot[c] = wp;
    out.pdot[c] = -wx;
  }
  return out;
}

}  // namespace detail

// Full Zdot split into (xdot, pdot, lambda). With k = 0 this is exactly
// unconstrained_rhs.
template <class Field, class S>
Derivative<S> constrained_derivative(const Field& field, const ConstraintSet& cs, std::span<const S> x,
                                     std::span<const S> p) {
  return detail::derivative_from_grad<S>(cs, x, p, field.grad_x(x), field.grad_p(p));
}

template <class Field, class S>
std::vector<S> constrained_rhs(const Field& field, const ConstraintSet& cs, std::span<const S> x,
                               std::span<const S> p) {
  if (cs.empty()) return unconstrained_rhs<Field, S>(field, x, p);
  Derivative<S> d = constrained_derivative<Field, S>(field, cs, x, p);
  std::vector<S> zdot = std::move(d.xdot);
  zdot.insert(zdot.end(), d.pdot.begin(), d.pdot.end());
  return zdot;
}

// Velocity Verlet with the constrained momentum derivative as force:
//   p' = p + dt/2 pdot(x, p)
//   x1 = x + dt grad_p H(p')
//   p1 = p' + dt/2 pdot(x1, p')
// grad_p H equals M^-1 p for any analytic Hamiltonian; for a learned one it
// is the model's own velocity.
template <class Field, class S>
StepResult<S> velocity_verlet_step(const Field& field, const ConstraintSet& cs, const PhasePoint<S>& z,
                                   double dt) {
  const std::size_t nd = z.x.size();
  const S half(0.5 * dt);
  const S step(dt);
  // grad_p at the old momenta is only needed by the constraint solve.
  std::vector<S> gp0;
  if (!cs.empty()) gp0 = field.grad_p(std::span<const S>(z.p));
  const Derivative<S> d0 =
      detail::derivative_from_grad<S>(cs, z.x, z.p, field.grad_x(std::span<const S>(z.x)), std::move(gp0));
  std::vector<S> p_half(nd);
  for (std::size_t i = 0; i < nd; ++i) p_half[i] = z.p[i] + half * d0.pdot[i];
  std::vector<S> xdot = field.grad_p(std::span<const S>(p_half));
  detail::check_finite<S>(xdot, "velocity_verlet_step");
  StepResult<S> out;
  out.state.x.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) out.state.x[i] = z.x[i] + step * xdot[i];
  const std::span<const S> x1(out.state.x);
  Derivative<S> d1 = detail::derivative_from_grad<S>(cs, x1, std::span<const S>(p_half), field.grad_x(x1),
                                                     cs.empty() ? std::vector<S>{} : std::move(xdot));
  out.state.p.resize(nd);
  for (std::size_t i = 0; i < nd; ++i) out.state.p[i] = p_half[i] + half * d1.pdot[i];
  out.lambda = std::move(d1.lambda);
  detail::check_finite<S>(out.state.x, "velocity_verlet_step");
  detail::check_finite<S>(out.state.p, "velocity_verlet_step");
  return out;
}

// PhaseState convenience wrappers (double precision).
template <class Field>
PhaseState to_phase_state(const Field& field, PhasePoint<double> z, double time) {
  PhaseState s;
  const auto& m = field.masses();
  const int dim = field.dim();
  s.v.resize(z.p.size());
  for (std::size_t i = 0; i < z.p.size(); ++i) s.v[i] = z.p[i] / m[i / dim];
  s.x = std::move(z.x);
  s.p = std::move(z.p);
  s.time = time;
  return s;
}

template <class Field>
PhaseState verlet_step(const Field& field, const ConstraintSet& cs, const PhaseState& s, double dt) {
  PhasePoint<double> z{s.x, s.p};
  auto r = velocity_verlet_step<Field, double>(field, cs, z, dt);
  return to_phase_state(field, std::move(r.state), s.time + dt);
}

struct RolloutOptions {
  bool record_successors = false;
};

// Repeated Verlet steps from init; frames are recorded every `stride`
// steps, starting with init itself.
template <class Field>
Trajectory rollout(const Field& field, const ConstraintSet& cs, const SystemSpec& spec, const PhaseState& init,
                   double dt, long steps, int stride, RolloutOptions opts = {}) {
  if (stride <= 0) throw DomainError("stride must be positive");
  if (steps < 0) throw DomainError("step count must be non-negative");
  Trajectory traj;
  traj.spec = spec;
  traj.dt = dt;
  traj.stride = stride;
  traj.frames.push_back(init);
  PhaseState cur = init;
  auto record_successor = [&](const PhaseState& s) {
    if (opts.record_successors) traj.successors.push_back(verlet_step(field, cs, s, dt));
  };
  record_successor(cur);
  for (long step = 1; step <= steps; ++step) {
    try {
      cur = verlet_step(field, cs, cur, dt);
    } catch (const NumericalError& e) {
      throw NumericalError("rollout failed at step " + std::to_string(step) + ": " + e.what());
    }
    cur.time = init.time + dt * static_cast<double>(step);
    if (step % stride == 0) {
      traj.frames.push_back(cur);
      record_successor(cur);
    }
  }
  return traj;
}

}  // namespace hdl
