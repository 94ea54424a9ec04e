#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "celltrain/errors.hpp"

namespace celltrain {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Closed real interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {}

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// Axis-aligned box: Cartesian product of simple intervals. Dimension is
// fixed at construction; a 0-dimensional box is a valid value (volume 1).
class Box {
 public:
  Box() = default;
  explicit Box(std::vector<Interval> dims) : dims_(std::move(dims)) {}
  Box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.size() != hi.size())
      throw DimensionMismatch("box lo/hi length mismatch");
    dims_.reserve(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) dims_.push_back({lo[i], hi[i]});
  }

  std::size_t dim() const { return dims_.size(); }
  const Interval& operator[](std::size_t i) const { return dims_[i]; }
  Interval& operator[](std::size_t i) { return dims_[i]; }
  const std::vector<Interval>& dims() const { return dims_; }

  bool contains(const std::vector<double>& x) const {
    if (x.size() != dims_.size()) throw DimensionMismatch("point/box dim");
    for (std::size_t i = 0; i < dims_.size(); ++i)
      if (!dims_[i].contains(x[i])) return false;
    return true;
  }

 private:
  std::vector<Interval> dims_;
};

// Volume with per-dimension scaling: prod_i delta_i * width_i.
// The empty product makes the 0-dimensional box have volume 1.
inline double volume_scaled(const Box& b, const std::vector<double>& delta) {
  if (delta.size() != b.dim())
    throw DimensionMismatch("delta length != box dimension");
  double v = 1.0;
  for (std::size_t i = 0; i < b.dim(); ++i) v *= delta[i] * b[i].width();
  return v;
}

inline double volume(const Box& b) {
  double v = 1.0;
  for (std::size_t i = 0; i < b.dim(); ++i) v *= b[i].width();
  return v;
}

// Componentwise intersection; empty optional when any component inverts.
inline std::optional<Box> intersect(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("intersect: box dims");
  std::vector<Interval> dims(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) {
    double lo = std::max(a[i].lo, b[i].lo);
    double hi = std::min(a[i].hi, b[i].hi);
    if (lo > hi) return std::nullopt;
    dims[i] = {lo, hi};
  }
  return Box(std::move(dims));
}

// Volume of the intersection without materializing the box (0 when disjoint).
inline double intersection_volume_scaled(const Box& a, const Box& b,
                                         const std::vector<double>& delta) {
  if (a.dim() != b.dim()) throw DimensionMismatch("intersect: box dims");
  if (delta.size() != a.dim()) throw DimensionMismatch("delta length");
  double v = 1.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    double w = std::min(a[i].hi, b[i].hi) - std::max(a[i].lo, b[i].lo);
    if (w <= 0.0) return 0.0;
    v *= delta[i] * w;
  }
  return v;
}

inline Box minkowski_sum(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("minkowski_sum: box dims");
  std::vector<Interval> dims(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i)
    dims[i] = {a[i].lo + b[i].lo, a[i].hi + b[i].hi};
  return Box(std::move(dims));
}

// Configuration box: position intervals in meters, heading in radians.
// Partition cells keep theta within [0, 2pi); reachable boxes may leave
// that range and are re-wrapped with wrap_theta before any set query.
struct ConfigBox {
  Interval x, y, theta;

  double volume() const { return x.width() * y.width() * theta.width(); }
  bool contains(double px, double py, double pth) const {
    return x.contains(px) && y.contains(py) && theta.contains(pth);
  }
};

// State cell X = X_p x X_q: configuration part plus a (possibly empty)
// box of miscellaneous states.
struct StateBox {
  ConfigBox cfg;
  Box misc;

  std::size_t dim() const { return 3 + misc.dim(); }

  // Flattened [x, y, theta, q...] box, the network/dynamics input domain.
  Box flat() const {
    std::vector<Interval> dims;
    dims.reserve(dim());
    dims.push_back(cfg.x);
    dims.push_back(cfg.y);
    dims.push_back(cfg.theta);
    for (std::size_t i = 0; i < misc.dim(); ++i) dims.push_back(misc[i]);
    return Box(std::move(dims));
  }

  static StateBox from_flat(const Box& b) {
    if (b.dim() < 3) throw DimensionMismatch("state box needs >= 3 dims");
    StateBox s;
    s.cfg = {b[0], b[1], b[2]};
    std::vector<Interval> misc(b.dims().begin() + 3, b.dims().end());
    s.misc = Box(std::move(misc));
    return s;
  }
};

// Splits a theta interval into fragments that all lie in [0, 2pi).
// Total theta length is preserved; at most two fragments result.
inline std::vector<ConfigBox> wrap_theta(const ConfigBox& c) {
  double lo = c.theta.lo;
  double hi = c.theta.hi;
  if (hi - lo >= kTwoPi) {
    // Full circle (or numerically beyond): a single canonical fragment.
    return {{c.x, c.y, {0.0, kTwoPi}}};
  }
  double shift = std::floor(lo / kTwoPi) * kTwoPi;
  lo -= shift;
  hi -= shift;
  if (hi <= kTwoPi) return {{c.x, c.y, {lo, hi}}};
  return {{c.x, c.y, {lo, kTwoPi}}, {c.x, c.y, {0.0, hi - kTwoPi}}};
}

// Per-configuration-dimension subdivision thresholds (eps_x, eps_y, eps_theta).
struct EpsWidths {
  double x = 0.0, y = 0.0, theta = 0.0;

  double product() const { return x * y * theta; }
};

// max_i width_i / eps_i over the configuration dimensions.
inline double normalized_width(const StateBox& b, const EpsWidths& eps) {
  return std::max({b.cfg.x.width() / eps.x, b.cfg.y.width() / eps.y,
                   b.cfg.theta.width() / eps.theta});
}

// Subdivision predicate "MaxWidth > eps", with an ulp cushion so that cells
// whose widths land exactly on a threshold (up to accumulated rounding) do
// not get halved below it.
inline bool exceeds_widths(const StateBox& b, const EpsWidths& eps) {
  return normalized_width(b, eps) > 1.0 + 1e-9;
}

// Bisects the configuration dimension with the largest normalized width at
// its midpoint (ties break toward the lowest index: x, then y, then theta).
// The miscellaneous part is never subdivided.
inline std::pair<StateBox, StateBox> split(const StateBox& b,
                                           const EpsWidths& eps) {
  double nw[3] = {b.cfg.x.width() / eps.x, b.cfg.y.width() / eps.y,
                  b.cfg.theta.width() / eps.theta};
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (nw[i] > nw[k]) k = i;
  if (nw[k] <= 1.0 + 1e-9)
    throw BelowThreshold("split: all normalized widths <= 1");
  StateBox a = b, c = b;
  Interval& ia = (k == 0 ? a.cfg.x : k == 1 ? a.cfg.y : a.cfg.theta);
  Interval& ic = (k == 0 ? c.cfg.x : k == 1 ? c.cfg.y : c.cfg.theta);
  double m = ia.mid();
  ia.hi = m;
  ic.lo = m;
  return {a, c};
}

}  // namespace celltrain
