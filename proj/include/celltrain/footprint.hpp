#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "celltrain/boxes.hpp"
#include "celltrain/errors.hpp"
#include "celltrain/geometry.hpp"

namespace celltrain {

// Configuration (x, y, theta) of the robot's body frame.
struct Configuration {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

// Rigid polygonal robot given in its body frame. Non-convex footprints carry
// a convex decomposition; queries run per piece.
class RobotBody {
 public:
  RobotBody() = default;
  explicit RobotBody(Polygon footprint) : footprint_(std::move(footprint)) {
    if (footprint_.size() < 3)
      throw ValidationError("robot", "footprint needs at least 3 vertices");
    if (!footprint_.is_simple())
      throw ValidationError("robot", "footprint is self-intersecting");
    if (!footprint_.is_ccw())
      throw ValidationError("robot", "footprint must be counter-clockwise");
    if (footprint_.is_convex())
      pieces_.push_back(footprint_);
    else
      pieces_ = triangulate(footprint_);
    radius_ = footprint_.max_vertex_radius();
  }

  const Polygon& footprint() const { return footprint_; }
  const std::vector<Polygon>& convex_pieces() const { return pieces_; }
  double radius() const { return radius_; }

 private:
  Polygon footprint_;
  std::vector<Polygon> pieces_;
  double radius_ = 0.0;
};

// R(theta) * footprint + (x, y). Vertex count and order are preserved.
inline Polygon footprint_at(const RobotBody& robot, const Configuration& p) {
  double c = std::cos(p.theta);
  double s = std::sin(p.theta);
  return robot.footprint().transformed(c, s, {p.x, p.y});
}

inline PolyUnion footprint_pieces_at(const RobotBody& robot,
                                     const Configuration& p) {
  double c = std::cos(p.theta);
  double s = std::sin(p.theta);
  PolyUnion u;
  for (const auto& piece : robot.convex_pieces())
    u.pieces.push_back(piece.transformed(c, s, {p.x, p.y}));
  return u;
}

// Over-approximation A_o of the swept footprint over a configuration box:
// per convex piece, each vertex's rotation arc is bounded by the triangle
// {R(theta_l)v, R(theta_u)v, sec(dtheta/2) R(theta_mid)v} (tangent-line
// intersection, valid for dtheta < pi); the hull of those points is then
// Minkowski-summed with the position rectangle.
inline PolyUnion footprint_over_approx(const RobotBody& robot,
                                       const ConfigBox& box) {
  double dtheta = box.theta.width();
  if (dtheta >= std::numbers::pi)
    throw RotationSpanTooLarge("theta span must be < pi; pre-split the cell");
  double tl = box.theta.lo;
  double tu = box.theta.hi;
  double tm = box.theta.mid();
  double cl = std::cos(tl), sl = std::sin(tl);
  double cu = std::cos(tu), su = std::sin(tu);
  double sec = 1.0 / std::cos(0.5 * dtheta);
  double cm = sec * std::cos(tm), sm = sec * std::sin(tm);
  Polygon pos_rect = make_rect(box.x.lo, box.y.lo, box.x.hi, box.y.hi);

  PolyUnion out;
  for (const auto& piece : robot.convex_pieces()) {
    std::vector<Vec2> pts;
    pts.reserve(3 * piece.size());
    for (std::size_t i = 0; i < piece.size(); ++i) {
      const Vec2& v = piece[i];
      pts.push_back(rotate(v, cl, sl));
      pts.push_back(rotate(v, cu, su));
      pts.push_back(rotate(v, cm, sm));
    }
    Polygon hull = convex_hull(std::move(pts));
    out.pieces.push_back(minkowski_convex(hull, pos_rect));
  }
  return out;
}

// Under-approximation A_u: footprint at theta_mid, eroded per convex piece
// by the rotation displacement bound r*dtheta/2, then intersected with its
// translates at the four position-rectangle corners. May come out empty.
inline PolyUnion footprint_under_approx(const RobotBody& robot,
                                        const ConfigBox& box) {
  double dtheta = box.theta.width();
  if (dtheta >= std::numbers::pi)
    throw RotationSpanTooLarge("theta span must be < pi; pre-split the cell");
  double tm = box.theta.mid();
  double cm = std::cos(tm), sm = std::sin(tm);
  double rho = robot.radius() * 0.5 * dtheta;
  Vec2 corners[4] = {{box.x.lo, box.y.lo},
                     {box.x.hi, box.y.lo},
                     {box.x.hi, box.y.hi},
                     {box.x.lo, box.y.hi}};
  PolyUnion out;
  for (const auto& piece : robot.convex_pieces()) {
    Polygon eroded = erode_convex(piece.transformed(cm, sm, {0.0, 0.0}), rho);
    if (eroded.empty()) continue;
    Polygon inter = eroded.translated(corners[0]);
    for (int k = 1; k < 4 && !inter.empty(); ++k)
      inter = clip_convex(inter, eroded.translated(corners[k]));
    if (!inter.empty()) out.pieces.push_back(std::move(inter));
  }
  return out;
}

// Exact safety predicate for a single configuration.
inline bool configuration_safe(const RobotBody& robot, const Workspace& ws,
                               const Configuration& p) {
  // Fast accept: the footprint fits in the clearance disk of the reference
  // point, so a deep interior point needs no polygon test.
  Vec2 ref{p.x, p.y};
  if (ws.contains_point(ref) && ws.boundary_distance(ref) > robot.radius())
    return true;
  return ws.contains(footprint_at(robot, p));
}

// Violation area of the swept footprint over a configuration box, summed
// over theta chunks of width < pi/2 after wrapping into [0, 2pi). Chunking
// keeps the tangent-cone bound valid for arbitrarily wide reach boxes; the
// sum over chunks over-counts overlap, which is conservative.
inline double swept_violation_area(const RobotBody& robot, const Workspace& ws,
                                   const ConfigBox& box) {
  double total = 0.0;
  for (const ConfigBox& frag : wrap_theta(box)) {
    double width = frag.theta.width();
    int chunks = std::max(1, static_cast<int>(
                                 std::ceil(width / (0.5 * std::numbers::pi))));
    double step = width / chunks;
    for (int k = 0; k < chunks; ++k) {
      ConfigBox piece = frag;
      piece.theta = {frag.theta.lo + k * step, frag.theta.lo + (k + 1) * step};
      total += violation_area(footprint_over_approx(robot, piece), ws);
    }
  }
  return total;
}

}  // namespace celltrain
