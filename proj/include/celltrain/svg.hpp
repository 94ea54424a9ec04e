#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "celltrain/dataset.hpp"
#include "celltrain/footprint.hpp"
#include "celltrain/geometry.hpp"
#include "celltrain/partition.hpp"
#include "celltrain/reach.hpp"

namespace celltrain {

// Deterministic SVG figure: workspace outline, xy-projections of partition
// leaves (blue) and of their one-step reachable boxes (red), rollout paths
// (red lines) with robot outlines (green). Element order follows leaf ids.
class SvgFigure {
 public:
  SvgFigure(const Workspace& ws, double scale = 120.0, double margin = 0.3)
      : scale_(scale) {
    ws.bounding_box(lo_, hi_);
    lo_.x -= margin;
    lo_.y -= margin;
    hi_.x += margin;
    hi_.y += margin;
    body_ << polygon_path(ws.outer(), "none", "#222222", 2.0);
    for (const auto& h : ws.holes())
      body_ << polygon_path(h, "#bbbbbb", "#222222", 1.5);
  }

  void add_leaf_boxes(const PartitionTree& tree) {
    for (const Cell& c : tree.cells()) {
      if (!c.leaf) continue;
      body_ << rect(c.box.cfg.x.lo, c.box.cfg.y.lo, c.box.cfg.x.width(),
                    c.box.cfg.y.width(), "#2a6fdb", 0.18, 0.5);
    }
  }

  void add_reach_boxes(const PartitionTree& tree, const Mlp& net,
                       const Dynamics& dyn) {
    for (const Cell& c : tree.cells()) {
      if (!c.leaf) continue;
      StateBox y = reach_box(net, c.box, dyn);
      body_ << rect(y.cfg.x.lo, y.cfg.y.lo, y.cfg.x.width(), y.cfg.y.width(),
                    "#d62d20", 0.12, 0.4);
    }
  }

  void add_rollout(const RolloutResult& r, const RobotBody& robot,
                   int glyph_every = 200) {
    if (r.states.empty()) return;
    std::ostringstream pts;
    for (const auto& z : r.states) pts << px(z[0]) << ',' << py(z[1]) << ' ';
    body_ << "<polyline points=\"" << pts.str()
          << "\" fill=\"none\" stroke=\"#d62d20\" stroke-width=\"1.5\"/>\n";
    for (std::size_t i = 0; i < r.states.size();
         i += static_cast<std::size_t>(glyph_every)) {
      const auto& z = r.states[i];
      Polygon fp = footprint_at(robot, {z[0], z[1], z[2]});
      body_ << polygon_path(fp, "none", "#1c8a43", 1.0);
    }
  }

  std::string str() const {
    std::ostringstream out;
    double w = (hi_.x - lo_.x) * scale_;
    double h = (hi_.y - lo_.y) * scale_;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
        << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double px(double x) const { return (x - lo_.x) * scale_; }
  double py(double y) const { return (hi_.y - y) * scale_; }  // y up

  std::string rect(double x, double y, double w, double h,
                   const std::string& color, double opacity,
                   double stroke_w) const {
    std::ostringstream s;
    s << "<rect x=\"" << px(x) << "\" y=\"" << py(y + h) << "\" width=\""
      << w * scale_ << "\" height=\"" << h * scale_ << "\" fill=\"" << color
      << "\" fill-opacity=\"" << opacity << "\" stroke=\"" << color
      << "\" stroke-width=\"" << stroke_w << "\"/>\n";
    return s.str();
  }

  std::string polygon_path(const Polygon& poly, const std::string& fill,
                           const std::string& stroke, double sw) const {
    std::ostringstream s;
    s << "<polygon points=\"";
    for (std::size_t i = 0; i < poly.size(); ++i)
      s << px(poly[i].x) << ',' << py(poly[i].y) << ' ';
    s << "\" fill=\"" << fill << "\" stroke=\"" << stroke
      << "\" stroke-width=\"" << sw << "\"/>\n";
    return s.str();
  }

  Vec2 lo_, hi_;
  double scale_;
  std::ostringstream body_;
};

}  // namespace celltrain
