#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "celltrain/errors.hpp"

namespace celltrain {

inline constexpr double kGeomEps = 1e-9;  // vertex snapping tolerance (m)

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double norm2() const { return x * x + y * y; }
};

inline Vec2 rotate(const Vec2& v, double c, double s) {
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline double cross3(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b - a).cross(c - a);
}

inline double segment_point_dist(const Vec2& a, const Vec2& b, const Vec2& p) {
  Vec2 ab = b - a;
  double t = ab.norm2() <= 0.0 ? 0.0 : (p - a).dot(ab) / ab.norm2();
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

// Proper or touching intersection test for closed segments.
inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c,
                               const Vec2& d) {
  auto sgn = [](double v) { return v > kGeomEps ? 1 : (v < -kGeomEps ? -1 : 0); };
  int d1 = sgn(cross3(c, d, a));
  int d2 = sgn(cross3(c, d, b));
  int d3 = sgn(cross3(a, b, c));
  int d4 = sgn(cross3(a, b, d));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  auto on = [&](const Vec2& p, const Vec2& q, const Vec2& r) {
    return sgn(cross3(p, q, r)) == 0 && r.x >= std::min(p.x, q.x) - kGeomEps &&
           r.x <= std::max(p.x, q.x) + kGeomEps &&
           r.y >= std::min(p.y, q.y) - kGeomEps &&
           r.y <= std::max(p.y, q.y) + kGeomEps;
  };
  return on(c, d, a) || on(c, d, b) || on(a, b, c) || on(a, b, d);
}

// Simple polygon given by its vertex ring. Counter-clockwise orientation for
// positively-oriented regions; the empty polygon is a first-class value with
// area 0 that is contained in everything.
class Polygon {
 public:
  Polygon() = default;
  explicit Polygon(std::vector<Vec2> v) : v_(std::move(v)) {}

  bool empty() const { return v_.empty(); }
  std::size_t size() const { return v_.size(); }
  const Vec2& operator[](std::size_t i) const { return v_[i]; }
  const std::vector<Vec2>& vertices() const { return v_; }

  double signed_area() const {
    double a = 0.0;
    for (std::size_t i = 0, n = v_.size(); i < n; ++i)
      a += v_[i].cross(v_[(i + 1) % n]);
    return 0.5 * a;
  }
  double area() const { return std::abs(signed_area()); }
  bool is_ccw() const { return signed_area() > 0.0; }

  Vec2 centroid_vertex_mean() const {
    Vec2 c;
    for (const auto& p : v_) c = c + p;
    return v_.empty() ? c : c * (1.0 / static_cast<double>(v_.size()));
  }

  double max_vertex_radius() const {
    double r = 0.0;
    for (const auto& p : v_) r = std::max(r, p.norm());
    return r;
  }

  // No two non-adjacent edges intersect and no repeated vertices.
  bool is_simple() const {
    std::size_t n = v_.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
      if ((v_[(i + 1) % n] - v_[i]).norm() <= kGeomEps) return false;
      for (std::size_t j = i + 1; j < n; ++j) {
        bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
        if (adjacent) continue;
        if (segments_intersect(v_[i], v_[(i + 1) % n], v_[j], v_[(j + 1) % n]))
          return false;
      }
    }
    return true;
  }

  bool is_convex() const {
    std::size_t n = v_.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
      if (cross3(v_[i], v_[(i + 1) % n], v_[(i + 2) % n]) < -kGeomEps)
        return false;
    return true;
  }

  // Winding-free even-odd test; points within kGeomEps of the boundary count
  // as inside so that touching contacts resolve consistently.
  bool contains_point(const Vec2& p) const {
    std::size_t n = v_.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
      if (segment_point_dist(v_[i], v_[(i + 1) % n], p) <= kGeomEps) return true;
    bool in = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      bool cond = (v_[i].y > p.y) != (v_[j].y > p.y);
      if (cond) {
        double t = (p.y - v_[i].y) / (v_[j].y - v_[i].y);
        double xx = v_[i].x + t * (v_[j].x - v_[i].x);
        if (p.x < xx) in = !in;
      }
    }
    return in;
  }

  bool contains_point_strict(const Vec2& p) const {
    std::size_t n = v_.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
      if (segment_point_dist(v_[i], v_[(i + 1) % n], p) <= kGeomEps)
        return false;
    return contains_point(p);
  }

  Polygon translated(const Vec2& t) const {
    std::vector<Vec2> out(v_.size());
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = v_[i] + t;
    return Polygon(std::move(out));
  }

  Polygon transformed(double c, double s, const Vec2& t) const {
    std::vector<Vec2> out(v_.size());
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = rotate(v_[i], c, s) + t;
    return Polygon(std::move(out));
  }

  void bounding_box(Vec2& lo, Vec2& hi) const {
    lo = {std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
    hi = {-std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};
    for (const auto& p : v_) {
      lo.x = std::min(lo.x, p.x);
      lo.y = std::min(lo.y, p.y);
      hi.x = std::max(hi.x, p.x);
      hi.y = std::max(hi.y, p.y);
    }
  }

 private:
  std::vector<Vec2> v_;
};

inline Polygon make_rect(double x0, double y0, double x1, double y1) {
  return Polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

// Andrew monotone chain; collinear points are dropped.
inline Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Vec2& a, const Vec2& b) {
                          return (a - b).norm() <= kGeomEps;
                        }),
            pts.end());
  std::size_t n = pts.size();
  if (n < 3) return Polygon(std::move(pts));
  std::vector<Vec2> h(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross3(h[k - 2], h[k - 1], pts[i]) <= kGeomEps) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = n - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross3(h[k - 2], h[k - 1], pts[i]) <= kGeomEps) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return Polygon(std::move(h));
}

// Sutherland-Hodgman clip of a convex (or simple) subject against one
// half-plane {p : (b-a) x (p-a) >= 0}, i.e. the left side of a->b.
inline Polygon clip_halfplane(const Polygon& subject, const Vec2& a,
                              const Vec2& b) {
  if (subject.empty()) return subject;
  std::vector<Vec2> out;
  std::size_t n = subject.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = subject[i];
    const Vec2& q = subject[(i + 1) % n];
    double dp = cross3(a, b, p);
    double dq = cross3(a, b, q);
    if (dp >= -kGeomEps) out.push_back(p);
    if ((dp > kGeomEps && dq < -kGeomEps) || (dp < -kGeomEps && dq > kGeomEps)) {
      double t = dp / (dp - dq);
      out.push_back(p + (q - p) * t);
    }
  }
  if (out.size() < 3) return Polygon();
  return Polygon(std::move(out));
}

// Intersection of two convex polygons (CCW). Result may be empty.
inline Polygon clip_convex(const Polygon& subject, const Polygon& clipper) {
  if (subject.empty() || clipper.empty()) return Polygon();
  Polygon out = subject;
  std::size_t n = clipper.size();
  for (std::size_t i = 0; i < n && !out.empty(); ++i)
    out = clip_halfplane(out, clipper[i], clipper[(i + 1) % n]);
  return out;
}

// Erosion of a convex CCW polygon by a closed disk of radius rho: every edge
// half-plane is shifted inward; the empty polygon is returned when the
// offset annihilates the region.
inline Polygon erode_convex(const Polygon& poly, double rho) {
  if (poly.empty() || rho < 0.0) return poly;
  if (rho == 0.0) return poly;
  Polygon out = poly;
  std::size_t n = poly.size();
  for (std::size_t i = 0; i < n && !out.empty(); ++i) {
    Vec2 a = poly[i];
    Vec2 b = poly[(i + 1) % n];
    Vec2 e = b - a;
    double len = e.norm();
    if (len <= kGeomEps) continue;
    // Inward (left) normal of a CCW edge.
    Vec2 nrm = Vec2{-e.y, e.x} * (1.0 / len);
    out = clip_halfplane(out, a + nrm * rho, b + nrm * rho);
  }
  return out;
}

// Minkowski sum of two convex polygons via the hull of pairwise vertex sums.
inline Polygon minkowski_convex(const Polygon& a, const Polygon& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  std::vector<Vec2> pts;
  pts.reserve(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) pts.push_back(a[i] + b[j]);
  return convex_hull(std::move(pts));
}

// Ear-clipping triangulation of a simple CCW polygon.
inline std::vector<Polygon> triangulate(const Polygon& poly) {
  std::vector<Polygon> tris;
  if (poly.size() < 3) return tris;
  std::vector<Vec2> v = poly.vertices();
  if (!poly.is_ccw()) std::reverse(v.begin(), v.end());
  auto is_ear = [&](std::size_t i) {
    std::size_t n = v.size();
    const Vec2& a = v[(i + n - 1) % n];
    const Vec2& b = v[i];
    const Vec2& c = v[(i + 1) % n];
    if (cross3(a, b, c) <= kGeomEps) return false;  // reflex or degenerate
    Polygon tri({a, b, c});
    for (std::size_t j = 0; j < n; ++j) {
      if (j == (i + n - 1) % n || j == i || j == (i + 1) % n) continue;
      // Reflex vertices on the candidate's boundary still invalidate the
      // ear (the diagonal would cut through the notch), so test them with
      // the inclusive predicate.
      bool reflex =
          cross3(v[(j + n - 1) % n], v[j], v[(j + 1) % n]) < -kGeomEps;
      if (reflex ? tri.contains_point(v[j]) : tri.contains_point_strict(v[j]))
        return false;
    }
    return true;
  };
  std::size_t guard = 0;
  while (v.size() > 3 && guard++ < 4 * poly.size() * poly.size()) {
    bool clipped = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (is_ear(i)) {
        std::size_t n = v.size();
        tris.emplace_back(std::vector<Vec2>{v[(i + n - 1) % n], v[i],
                                            v[(i + 1) % n]});
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
        clipped = true;
        break;
      }
    }
    if (!clipped) {
      // Drop a degenerate (collinear) vertex if one exists, else give up.
      bool dropped = false;
      for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t n = v.size();
        if (std::abs(cross3(v[(i + n - 1) % n], v[i], v[(i + 1) % n])) <=
            kGeomEps) {
          v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
          dropped = true;
          break;
        }
      }
      if (!dropped) break;
    }
  }
  if (v.size() == 3) tris.emplace_back(std::move(v));
  return tris;
}

// Union of convex polygons. Pieces may overlap; queries use the union
// semantics. Kept small (robot decompositions), so the inclusion-exclusion
// area expansion below stays cheap.
struct PolyUnion {
  std::vector<Polygon> pieces;

  bool empty() const {
    for (const auto& p : pieces)
      if (!p.empty()) return false;
    return true;
  }
  bool contains_point(const Vec2& p) const {
    for (const auto& piece : pieces)
      if (piece.contains_point(p)) return true;
    return false;
  }
};

// Area of the intersection of a convex polygon with a simple polygon,
// computed by triangulating the simple polygon and summing convex clips.
inline double area_convex_with_simple(const Polygon& convex,
                                      const std::vector<Polygon>& tris) {
  double a = 0.0;
  for (const auto& t : tris) a += clip_convex(convex, t).area();
  return a;
}

// Polygonal workspace: free region W = interior(outer) minus hole interiors,
// taken as a closed set (touching the boundary is not a violation).
class Workspace {
 public:
  Workspace() = default;
  Workspace(Polygon outer, std::vector<Polygon> holes)
      : outer_(std::move(outer)), holes_(std::move(holes)) {
    validate();
    outer_tris_ = triangulate(outer_);
    for (const auto& h : holes_) hole_tris_.push_back(triangulate(h));
    outer_.bounding_box(bb_lo_, bb_hi_);
  }

  const Polygon& outer() const { return outer_; }
  const std::vector<Polygon>& holes() const { return holes_; }
  void bounding_box(Vec2& lo, Vec2& hi) const {
    lo = bb_lo_;
    hi = bb_hi_;
  }

  double free_area() const {
    double a = outer_.area();
    for (const auto& h : holes_) a -= h.area();
    return a;
  }

  bool contains_point(const Vec2& p) const {
    if (!outer_.contains_point(p)) return false;
    for (const auto& h : holes_)
      if (h.contains_point_strict(p)) return false;
    return true;
  }

  // Distance from p to the workspace boundary (outer ring and hole rings).
  double boundary_distance(const Vec2& p) const {
    double d = std::numeric_limits<double>::infinity();
    auto ring = [&](const Polygon& poly) {
      for (std::size_t i = 0, n = poly.size(); i < n; ++i)
        d = std::min(d, segment_point_dist(poly[i], poly[(i + 1) % n], p));
    };
    ring(outer_);
    for (const auto& h : holes_) ring(h);
    return d;
  }

  // poly subset of W. Works for simple polygons; the empty polygon is
  // vacuously contained.
  bool contains(const Polygon& poly) const {
    if (poly.empty()) return true;
    for (std::size_t i = 0; i < poly.size(); ++i)
      if (!outer_.contains_point(poly[i])) return false;
    if (crosses(poly, outer_)) return false;
    for (const auto& h : holes_) {
      if (crosses(poly, h)) return false;
      // No crossings: overlap exists iff one region swallows the other.
      if (h.size() > 0 && poly.contains_point_strict(h[0])) return false;
      if (poly.size() > 0 && h.contains_point_strict(poly[0])) return false;
      if (h.contains_point_strict(centroid_inside(poly))) return false;
    }
    return true;
  }

  bool contains(const PolyUnion& u) const {
    for (const auto& p : u.pieces)
      if (!contains(p)) return false;
    return true;
  }

  // Area of poly inside W (convex poly fast path; simple polygons are
  // triangulated). Boundaries are measure zero.
  double area_inside(const Polygon& poly) const {
    if (poly.empty()) return 0.0;
    std::vector<Polygon> parts;
    if (poly.is_convex())
      parts.push_back(poly);
    else
      parts = triangulate(poly);
    double a = 0.0;
    for (const auto& part : parts) {
      a += area_convex_with_simple(part, outer_tris_);
      for (const auto& ht : hole_tris_) a -= area_convex_with_simple(part, ht);
    }
    return std::max(a, 0.0);
  }

  // Area of the union of convex pieces inside W, by inclusion-exclusion.
  double area_inside(const PolyUnion& u) const {
    std::vector<const Polygon*> ps;
    for (const auto& p : u.pieces)
      if (!p.empty()) ps.push_back(&p);
    std::size_t n = ps.size();
    if (n == 0) return 0.0;
    if (n == 1) return area_inside(*ps[0]);
    if (n > 12)
      throw Error("PolyUnion too large for inclusion-exclusion area");
    double total = 0.0;
    for (std::size_t mask = 1; mask < (1u << n); ++mask) {
      Polygon inter = *ps[static_cast<std::size_t>(std::countr_zero(mask))];
      int bits = 0;
      for (std::size_t i = 0; i < n && !inter.empty(); ++i)
        if (mask & (1u << i)) {
          ++bits;
          if (i != static_cast<std::size_t>(std::countr_zero(mask)))
            inter = clip_convex(inter, *ps[i]);
        }
      if (inter.empty()) continue;
      double term = area_inside(inter);
      total += (bits % 2 == 1) ? term : -term;
    }
    return std::max(total, 0.0);
  }

  double union_area(const PolyUnion& u) const {
    std::vector<const Polygon*> ps;
    for (const auto& p : u.pieces)
      if (!p.empty()) ps.push_back(&p);
    std::size_t n = ps.size();
    if (n == 0) return 0.0;
    if (n == 1) return ps[0]->area();
    if (n > 12)
      throw Error("PolyUnion too large for inclusion-exclusion area");
    double total = 0.0;
    for (std::size_t mask = 1; mask < (1u << n); ++mask) {
      Polygon inter = *ps[static_cast<std::size_t>(std::countr_zero(mask))];
      int bits = 0;
      for (std::size_t i = 0; i < n && !inter.empty(); ++i)
        if (mask & (1u << i)) {
          ++bits;
          if (i != static_cast<std::size_t>(std::countr_zero(mask)))
            inter = clip_convex(inter, *ps[i]);
        }
      if (inter.empty()) continue;
      total += (bits % 2 == 1) ? inter.area() : -inter.area();
    }
    return std::max(total, 0.0);
  }

 private:
  static bool crosses(const Polygon& a, const Polygon& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j)
        if (proper_cross(a[i], a[(i + 1) % a.size()], b[j],
                         b[(j + 1) % b.size()]))
          return true;
    return false;
  }

  // Strict transversal crossing; touching within tolerance does not count.
  static bool proper_cross(const Vec2& a, const Vec2& b, const Vec2& c,
                           const Vec2& d) {
    auto sgn = [](double v) {
      return v > kGeomEps ? 1 : (v < -kGeomEps ? -1 : 0);
    };
    int d1 = sgn(cross3(c, d, a));
    int d2 = sgn(cross3(c, d, b));
    int d3 = sgn(cross3(a, b, c));
    int d4 = sgn(cross3(a, b, d));
    return d1 * d2 < 0 && d3 * d4 < 0;
  }

  static Vec2 centroid_inside(const Polygon& poly) {
    // A point in the interior: centroid of the first triangulation ear or
    // vertex mean for convex rings.
    if (poly.is_convex()) return poly.centroid_vertex_mean();
    auto tris = triangulate(poly);
    if (!tris.empty()) {
      const Polygon& t = tris.front();
      return (t[0] + t[1] + t[2]) * (1.0 / 3.0);
    }
    return poly.centroid_vertex_mean();
  }

  void validate() const {
    if (outer_.size() < 3)
      throw ValidationError("outer", "polygon needs at least 3 vertices");
    if (!outer_.is_simple())
      throw ValidationError("outer", "polygon is self-intersecting");
    if (!outer_.is_ccw())
      throw ValidationError("outer", "polygon must be counter-clockwise");
    for (std::size_t k = 0; k < holes_.size(); ++k) {
      const std::string where = "holes[" + std::to_string(k) + "]";
      const Polygon& h = holes_[k];
      if (h.size() < 3)
        throw ValidationError(where, "polygon needs at least 3 vertices");
      if (!h.is_simple())
        throw ValidationError(where, "polygon is self-intersecting");
      if (!h.is_ccw())
        throw ValidationError(where, "polygon must be counter-clockwise");
      for (std::size_t i = 0; i < h.size(); ++i)
        if (!outer_.contains_point_strict(h[i]))
          throw ValidationError(where, "hole touches or leaves the outer boundary");
      if (crosses(h, outer_))
        throw ValidationError(where, "hole crosses the outer boundary");
      for (std::size_t j = 0; j < k; ++j) {
        if (crosses(h, holes_[j]))
          throw ValidationError(where, "holes overlap");
        if (holes_[j].contains_point(h[0]) || h.contains_point(holes_[j][0]))
          throw ValidationError(where, "holes overlap");
      }
    }
  }

  Polygon outer_;
  std::vector<Polygon> holes_;
  std::vector<Polygon> outer_tris_;
  std::vector<std::vector<Polygon>> hole_tris_;
  Vec2 bb_lo_, bb_hi_;
};

// Area of poly outside the free region W; 0 iff ws.contains(poly) up to
// geometric tolerance.
inline double violation_area(const Polygon& poly, const Workspace& ws) {
  if (poly.empty()) return 0.0;
  return std::max(poly.area() - ws.area_inside(poly), 0.0);
}

inline double violation_area(const PolyUnion& u, const Workspace& ws) {
  if (u.empty()) return 0.0;
  return std::max(ws.union_area(u) - ws.area_inside(u), 0.0);
}

}  // namespace celltrain
