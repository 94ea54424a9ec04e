#pragma once

// Shared fixtures for the test suites: the two-room benchmark workspace,
// a rectangular robot, and sampling utilities used by the oracles.

#include <vector>

#include "celltrain/boxes.hpp"
#include "celltrain/footprint.hpp"
#include "celltrain/geometry.hpp"
#include "celltrain/rng.hpp"

namespace celltrain::testing {

// Two rooms joined by a corridor; bounding box [0,6.4] x [0,1.6] so that
// bisection from the seed lands exactly on the benchmark thresholds.
inline Workspace two_room_workspace() {
  Polygon outer({{0.0, 0.0},
                 {2.53, 0.0},
                 {2.53, 0.57},
                 {3.87, 0.57},
                 {3.87, 0.0},
                 {6.4, 0.0},
                 {6.4, 1.6},
                 {3.87, 1.6},
                 {3.87, 1.03},
                 {2.53, 1.03},
                 {2.53, 1.6},
                 {0.0, 1.6}});
  return Workspace(std::move(outer), {});
}

inline RobotBody rect_robot(double hx = 0.15, double hy = 0.09) {
  return RobotBody(make_rect(-hx, -hy, hx, hy));
}

// 10x10 empty square used by small partition tests.
inline Workspace square_workspace(double side = 10.0) {
  return Workspace(make_rect(0.0, 0.0, side, side), {});
}

// Uniform point inside a convex polygon via fan triangulation.
inline Vec2 sample_in_convex(const Polygon& poly, Rng& rng) {
  std::vector<double> cum;
  double total = 0.0;
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
    total += std::abs(cross3(poly[0], poly[i], poly[i + 1])) * 0.5;
    cum.push_back(total);
  }
  double pick = rng.uniform() * total;
  std::size_t k = 0;
  while (k + 1 < cum.size() && cum[k] < pick) ++k;
  const Vec2& a = poly[0];
  const Vec2& b = poly[k + 1];
  const Vec2& c = poly[k + 2];
  double u = rng.uniform(), v = rng.uniform();
  if (u + v > 1.0) {
    u = 1.0 - u;
    v = 1.0 - v;
  }
  return a + (b - a) * u + (c - a) * v;
}

inline Configuration sample_in_box(const ConfigBox& box, Rng& rng) {
  return {rng.uniform(box.x.lo, box.x.hi), rng.uniform(box.y.lo, box.y.hi),
          rng.uniform(box.theta.lo, box.theta.hi)};
}

}  // namespace celltrain::testing
