#pragma once

// Holonomic distance constraints (rigid rods) in Pfaffian form.
//
// Each rod r joins particles a and b (a = -1 means the fixed anchor at the
// origin) and contributes
//   phi_r     = 1/2 (|x_b - x_a|^2 - l_r^2)
//   phidot_r  = (x_b - x_a) . (v_b - v_a),   v = M^-1 p
// Psi stacks (phi; phidot) and jacobian() returns D_Z Psi over Z = [x; p].

#include <cstddef>
#include <span>
#include <vector>

#include "hdl/autodiff.hpp"
#include "hdl/errors.hpp"
#include "hdl/linalg.hpp"

namespace hdl {

struct Rod {
  int a = -1;
  int b = 0;
  double length = 1.0;
};

class ConstraintSet {
 public:
  ConstraintSet() = default;
  ConstraintSet(std::vector<Rod> rods, std::vector<double> masses, int dim)
      : rods_(std::move(rods)), masses_(std::move(masses)), dim_(dim) {
    const int n = static_cast<int>(masses_.size());
    for (const Rod& r : rods_) {
      if (r.b < 0 || r.b >= n || r.a < -1 || r.a >= n || r.a == r.b)
        throw ShapeError("rod references an invalid particle");
      if (!(r.length > 0.0)) throw DomainError("rod length must be positive");
    }
  }

  int k() const { return static_cast<int>(rods_.size()); }
  bool empty() const { return rods_.empty(); }
  int dim() const { return dim_; }
  const std::vector<Rod>& rods() const { return rods_; }
  const std::vector<double>& masses() const { return masses_; }

  template <class S>
  std::vector<S> phi(std::span<const S> x) const {
    std::vector<S> out;
    out.reserve(rods_.size());
    for (const Rod& r : rods_) {
      S acc(0.0);
      for (int d = 0; d < dim_; ++d) {
        const S delta = diff(x, r, d);
        acc += delta * delta;
      }
      out.push_back(S(0.5) * (acc - S(r.length * r.length)));
    }
    return out;
  }

  template <class S>
  std::vector<S> phi_dot(std::span<const S> x, std::span<const S> p) const {
    std::vector<S> out;
    out.reserve(rods_.size());
    for (const Rod& r : rods_) {
      S acc(0.0);
      for (int d = 0; d < dim_; ++d) acc += diff(x, r, d) * vdiff(p, r, d);
      out.push_back(acc);
    }
    return out;
  }

  // D_Z Psi, shape (2k) x (2 n D); columns [x block | p block].
  template <class S>
  linalg::Matrix<S> jacobian(std::span<const S> x, std::span<const S> p) const {
    const std::size_t nd = x.size();
    const std::size_t k = rods_.size();
    linalg::Matrix<S> j(2 * k, 2 * nd);
    for (std::size_t r = 0; r < k; ++r) {
      const Rod& rod = rods_[r];
      for (int d = 0; d < dim_; ++d) {
        const S dx = diff(x, rod, d);
        const S dv = vdiff(p, rod, d);
        const std::size_t cb = static_cast<std::size_t>(rod.b) * dim_ + d;
        j(r, cb) = dx;
        j(k + r, cb) = dv;
        j(k + r, nd + cb) = dx * S(1.0 / masses_[rod.b]);
        if (rod.a >= 0) {
          const std::size_t ca = static_cast<std::size_t>(rod.a) * dim_ + d;
          j(r, ca) = -dx;
          j(k + r, ca) = -dv;
          j(k + r, nd + ca) = -dx * S(1.0 / masses_[rod.a]);
        }
      }
    }
    return j;
  }

  std::vector<double> rod_lengths(std::span<const double> x) const {
    std::vector<double> out;
    for (const Rod& r : rods_) {
      double acc = 0.0;
      for (int d = 0; d < dim_; ++d) acc += diff(x, r, d) * diff(x, r, d);
      out.push_back(std::sqrt(acc));
    }
    return out;
  }

  // Largest | |x_b - x_a| - l | over all rods.
  double max_length_violation(std::span<const double> x) const {
    double worst = 0.0;
    const auto lengths = rod_lengths(x);
    for (std::size_t r = 0; r < rods_.size(); ++r)
      worst = std::max(worst, std::abs(lengths[r] - rods_[r].length));
    return worst;
  }

 private:
  template <class S>
  S diff(std::span<const S> x, const Rod& r, int d) const {
    const S xb = x[static_cast<std::size_t>(r.b) * dim_ + d];
    if (r.a < 0) return xb;
    return xb - x[static_cast<std::size_t>(r.a) * dim_ + d];
  }
  template <class S>
  S vdiff(std::span<const S> p, const Rod& r, int d) const {
    const S vb = p[static_cast<std::size_t>(r.b) * dim_ + d] * S(1.0 / masses_[r.b]);
    if (r.a < 0) return vb;
    return vb - p[static_cast<std::size_t>(r.a) * dim_ + d] * S(1.0 / masses_[r.a]);
  }

  std::vector<Rod> rods_;
  std::vector<double> masses_;
  int dim_ = 2;
};

}  // namespace hdl
