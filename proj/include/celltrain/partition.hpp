#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "celltrain/boxes.hpp"
#include "celltrain/errors.hpp"
#include "celltrain/footprint.hpp"
#include "celltrain/geometry.hpp"
#include "celltrain/parallel.hpp"

namespace celltrain {

enum class CellLabel : std::uint8_t { kSafe, kMixed };
enum class Classification : std::uint8_t { kSafe, kUnsafe, kMixed };

// Node of the subdivision tree. `leaf` marks membership in the current
// partition P; nodes that were subdivided, merged away, or dropped during
// refinement stay in the store as history with leaf=false.
struct Cell {
  std::uint32_t id = 0;
  StateBox box;
  CellLabel label = CellLabel::kMixed;
  std::int32_t parent = -1;
  std::int32_t sibling = -1;
  std::int32_t child0 = -1;
  std::int32_t child1 = -1;
  bool leaf = true;
  bool active = false;
};

struct BuildDiagnostics {
  std::size_t loop_count = 0;   // cells examined by the build loop
  double loop_bound = 0.0;      // 2 Vol_cfg(F_0) / (eps_x eps_y eps_theta)
  double loop_guard = 0.0;      // rigorous variant using terminal cell widths
  double discarded_volume = 0.0;  // config volume classified unsafe
};

// Width at which the halving chain from seed_width stops subdividing, i.e.
// the first value with width/eps <= 1. Equals eps when the chain lands
// exactly; never below eps/2.
inline double terminal_width(double seed_width, double eps) {
  double w = seed_width;
  while (w / eps > 1.0) w *= 0.5;
  return w;
}

// Safe iff the footprint over-approximation stays in W; unsafe iff the
// under-approximation leaves W; mixed otherwise. Requires theta width < pi.
//
// For cells wider than the robot the intersection-based under-approximation
// is empty and the plain test can never certify unsafety, which would leave
// obstacle interiors as mixed cells forever. A sound strengthening tiles
// such cells with robot-sized sub-boxes: if every sub-box's A_u leaves W,
// every configuration in the cell collides.
inline Classification classify_cell(const ConfigBox& cfg_box,
                                    const Workspace& ws,
                                    const RobotBody& robot) {
  PolyUnion ao = footprint_over_approx(robot, cfg_box);
  if (ws.contains(ao)) return Classification::kSafe;
  PolyUnion au = footprint_under_approx(robot, cfg_box);
  if (!au.empty() && !ws.contains(au)) return Classification::kUnsafe;

  // all-unsafe certificate over a virtual refinement; sub-boxes stay well
  // below the eroded footprint extent so their A_u cannot vanish
  double theta_chunk = 0.3;
  int nt = std::max(1, static_cast<int>(
                           std::ceil(cfg_box.theta.width() / theta_chunk)));
  double rho = robot.radius() * 0.5 * (cfg_box.theta.width() / nt);
  double ex = std::numeric_limits<double>::infinity();
  double ey = ex;
  for (const auto& piece : robot.convex_pieces()) {
    Vec2 lo, hi;
    piece.bounding_box(lo, hi);
    ex = std::min(ex, hi.x - lo.x);
    ey = std::min(ey, hi.y - lo.y);
  }
  double sub = 0.5 * (std::min(ex, ey) - 2.0 * rho);
  if (sub <= kGeomEps) return Classification::kMixed;  // cannot certify
  int nx = std::max(1, static_cast<int>(std::ceil(cfg_box.x.width() / sub)));
  int ny = std::max(1, static_cast<int>(std::ceil(cfg_box.y.width() / sub)));
  if (static_cast<long>(nx) * ny * nt > 4096)
    return Classification::kMixed;  // certification not worth the work here
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy)
      for (int it = 0; it < nt; ++it) {
        ConfigBox sb;
        sb.x = {cfg_box.x.lo + ix * cfg_box.x.width() / nx,
                cfg_box.x.lo + (ix + 1) * cfg_box.x.width() / nx};
        sb.y = {cfg_box.y.lo + iy * cfg_box.y.width() / ny,
                cfg_box.y.lo + (iy + 1) * cfg_box.y.width() / ny};
        sb.theta = {cfg_box.theta.lo + it * cfg_box.theta.width() / nt,
                    cfg_box.theta.lo + (it + 1) * cfg_box.theta.width() / nt};
        PolyUnion sub_au = footprint_under_approx(robot, sb);
        if (sub_au.empty() || ws.contains(sub_au))
          return Classification::kMixed;  // cannot rule out a safe pose here
      }
  return Classification::kUnsafe;
}

// Adaptive cover P of the safe set, stored as a binary forest over the four
// theta-quadrant seed cells.
class PartitionTree {
 public:
  PartitionTree() = default;
  PartitionTree(EpsWidths eps, Box q) : eps_(eps), q_(std::move(q)) {}

  const EpsWidths& eps() const { return eps_; }
  const Box& q() const { return q_; }
  const std::vector<Cell>& cells() const { return cells_; }
  std::vector<Cell>& cells() { return cells_; }
  const Cell& cell(std::uint32_t id) const { return cells_[id]; }
  Cell& cell(std::uint32_t id) { return cells_[id]; }
  BuildDiagnostics& diagnostics() { return diag_; }
  const BuildDiagnostics& diagnostics() const { return diag_; }

  std::uint32_t add_cell(const StateBox& box, CellLabel label,
                         std::int32_t parent) {
    Cell c;
    c.id = static_cast<std::uint32_t>(cells_.size());
    c.box = box;
    c.label = label;
    c.parent = parent;
    cells_.push_back(std::move(c));
    return cells_.back().id;
  }

  // Ordered ids of the current partition members.
  std::vector<std::uint32_t> leaf_ids() const {
    std::vector<std::uint32_t> out;
    for (const auto& c : cells_)
      if (c.leaf) out.push_back(c.id);
    return out;
  }

  std::vector<std::uint32_t> safe_leaf_ids() const {
    std::vector<std::uint32_t> out;
    for (const auto& c : cells_)
      if (c.leaf && c.label == CellLabel::kSafe) out.push_back(c.id);
    return out;
  }

  std::size_t leaf_count() const {
    std::size_t n = 0;
    for (const auto& c : cells_)
      if (c.leaf) ++n;
    return n;
  }

  double leaf_config_volume() const {
    double v = 0.0;
    for (const auto& c : cells_)
      if (c.leaf) v += c.box.cfg.volume();
    return v;
  }

  // Bisects a leaf along its widest normalized configuration dimension.
  // Children created by an earlier subdivision are revived rather than
  // duplicated, keeping ids stable across refinement epochs.
  std::pair<std::uint32_t, std::uint32_t> subdivide(std::uint32_t id) {
    Cell& c = cells_[id];
    if (!c.leaf) throw Error("subdivide: cell is not a partition member");
    if (c.child0 >= 0 && c.child1 >= 0) {
      c.leaf = false;
      std::uint32_t a = static_cast<std::uint32_t>(c.child0);
      std::uint32_t b = static_cast<std::uint32_t>(c.child1);
      cells_[a].leaf = true;
      cells_[b].leaf = true;
      return {a, b};
    }
    auto [lo, hi] = split(c.box, eps_);
    CellLabel lbl = c.label;
    c.leaf = false;
    std::uint32_t a = add_cell(lo, lbl, static_cast<std::int32_t>(id));
    std::uint32_t b = add_cell(hi, lbl, static_cast<std::int32_t>(id));
    cells_[a].sibling = static_cast<std::int32_t>(b);
    cells_[b].sibling = static_cast<std::int32_t>(a);
    cells_[id].child0 = static_cast<std::int32_t>(a);
    cells_[id].child1 = static_cast<std::int32_t>(b);
    return {a, b};
  }

  // Reinstates a parent whose two children both sit in the partition.
  void merge_children(std::uint32_t parent_id) {
    Cell& p = cells_[parent_id];
    if (p.child0 < 0 || p.child1 < 0) throw Error("merge: missing children");
    cells_[static_cast<std::size_t>(p.child0)].leaf = false;
    cells_[static_cast<std::size_t>(p.child1)].leaf = false;
    p.leaf = true;
  }

 private:
  EpsWidths eps_;
  Box q_;
  std::vector<Cell> cells_;
  BuildDiagnostics diag_;
};

// Builds the cell cover of the safe set. The frontier is seeded with the
// workspace bounding box, widened per axis to eps * 2^k so that bisection
// lands exactly on the thresholds, crossed with ceil(2pi/eps_theta) equal
// theta slabs (the four quadrants when eps_theta = pi/2) and Q. Mixed cells
// subdivide while any normalized configuration width exceeds 1; with the
// snapped seed no cell ever drops below eps, which makes the counter bound
// hold by the volume argument.
inline PartitionTree build_partition(const Workspace& ws,
                                     const RobotBody& robot, const Box& q,
                                     const EpsWidths& eps) {
  if (!(eps.x > 0.0 && eps.y > 0.0 && eps.theta > 0.0))
    throw ValidationError("eps", "subdivision thresholds must be positive");
  PartitionTree tree(eps, q);

  Vec2 lo, hi;
  ws.bounding_box(lo, hi);
  auto snap_up = [](double width, double eps_i) {
    double w = eps_i;
    while (w < width) w *= 2.0;
    return w;
  };
  double span_x = snap_up(hi.x - lo.x, eps.x);
  double span_y = snap_up(hi.y - lo.y, eps.y);
  std::size_t slabs =
      std::max<std::size_t>(3, static_cast<std::size_t>(
                                   std::ceil(kTwoPi / eps.theta - 1e-12)));
  double slab_w = kTwoPi / static_cast<double>(slabs);

  struct WorkItem {
    StateBox box;
    std::int32_t parent;
  };
  std::vector<WorkItem> wave;
  for (std::size_t k = 0; k < slabs; ++k) {
    StateBox seed;
    seed.cfg = {{lo.x, lo.x + span_x},
                {lo.y, lo.y + span_y},
                {static_cast<double>(k) * slab_w,
                 static_cast<double>(k + 1) * slab_w}};
    seed.misc = q;
    wave.push_back({seed, -1});
  }

  double seed_cfg_volume = span_x * span_y * kTwoPi;
  tree.diagnostics().loop_bound = 2.0 * seed_cfg_volume / eps.product();
  // Rigorous form of the same bound: cell widths stay on the halving chains
  // from the seed, so every cell's volume is at least the product of the
  // terminal widths (equal to eps when 2pi/eps_theta is integral).
  double min_cell_volume = terminal_width(span_x, eps.x) *
                           terminal_width(span_y, eps.y) *
                           terminal_width(slab_w, eps.theta);
  tree.diagnostics().loop_guard = 2.0 * seed_cfg_volume / min_cell_volume;

  while (!wave.empty()) {
    std::vector<Classification> cls(wave.size());
    parallel_for(wave.size(), [&](std::size_t i) {
      cls[i] = classify_cell(wave[i].box.cfg, ws, robot);
    });

    std::vector<WorkItem> next;
    for (std::size_t i = 0; i < wave.size(); ++i) {
      tree.diagnostics().loop_count++;
      const WorkItem& item = wave[i];
      switch (cls[i]) {
        case Classification::kSafe:
          tree.add_cell(item.box, CellLabel::kSafe, item.parent);
          break;
        case Classification::kUnsafe:
          tree.diagnostics().discarded_volume += item.box.cfg.volume();
          break;
        case Classification::kMixed: {
          if (exceeds_widths(item.box, eps)) {
            std::uint32_t id =
                tree.add_cell(item.box, CellLabel::kMixed, item.parent);
            tree.cell(id).leaf = false;  // internal node pending children
            auto [l, r] = split(item.box, eps);
            next.push_back({l, static_cast<std::int32_t>(id)});
            next.push_back({r, static_cast<std::int32_t>(id)});
          } else {
            tree.add_cell(item.box, CellLabel::kMixed, item.parent);
          }
          break;
        }
      }
    }
    wave = std::move(next);

    if (static_cast<double>(tree.diagnostics().loop_count) >
        tree.diagnostics().loop_guard)
      throw Error("build_partition exceeded its termination bound");
  }

  // Wire child and sibling links (children were appended after parents, in
  // wave order, so child0 always gets the lower half of the split). Parents
  // with a discarded child keep no child links: the surviving child records
  // ancestry through its parent pointer, matching the file schema where
  // children are either both present or absent.
  std::vector<std::array<std::int32_t, 2>> kids(tree.cells().size(),
                                                {-1, -1});
  for (auto& c : tree.cells()) {
    if (c.parent >= 0) {
      auto& slot = kids[static_cast<std::size_t>(c.parent)];
      (slot[0] < 0 ? slot[0] : slot[1]) = static_cast<std::int32_t>(c.id);
    }
  }
  for (auto& c : tree.cells()) {
    const auto& slot = kids[c.id];
    if (slot[0] >= 0 && slot[1] >= 0) {
      c.child0 = slot[0];
      c.child1 = slot[1];
      tree.cell(static_cast<std::uint32_t>(slot[0])).sibling = slot[1];
      tree.cell(static_cast<std::uint32_t>(slot[1])).sibling = slot[0];
    }
  }
  return tree;
}

// Uniform-grid index over leaf configuration boxes for point-location and
// box-overlap queries. Rebuilt per epoch; queries return ids in increasing
// order so that reductions stay bit-reproducible.
class LeafIndex {
 public:
  LeafIndex() = default;

  LeafIndex(const PartitionTree& tree, const std::vector<std::uint32_t>& ids) {
    double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
    for (std::uint32_t id : ids) {
      const ConfigBox& b = tree.cell(id).box.cfg;
      lo_x = std::min(lo_x, b.x.lo);
      lo_y = std::min(lo_y, b.y.lo);
      hi_x = std::max(hi_x, b.x.hi);
      hi_y = std::max(hi_y, b.y.hi);
    }
    if (ids.empty()) return;
    lo_ = {lo_x, lo_y};
    hi_ = {hi_x, hi_y};
    std::size_t n = ids.size();
    nx_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n))));
    ny_ = nx_;
    nth_ = 16;
    bins_.assign(nx_ * ny_ * nth_, {});
    for (std::uint32_t id : ids) {
      const ConfigBox& b = tree.cell(id).box.cfg;
      auto [ix0, ix1] = range_x(b.x);
      auto [iy0, iy1] = range_y(b.y);
      auto [it0, it1] = range_theta(b.theta);
      for (std::size_t ix = ix0; ix <= ix1; ++ix)
        for (std::size_t iy = iy0; iy <= iy1; ++iy)
          for (std::size_t it = it0; it <= it1; ++it)
            bins_[(ix * ny_ + iy) * nth_ + (it % nth_)].push_back(id);
    }
  }

  // Ids of leaves whose boxes may overlap the query box (superset).
  std::vector<std::uint32_t> candidates(const ConfigBox& query) const {
    if (bins_.empty()) return {};
    std::vector<std::uint32_t> out;
    auto [ix0, ix1] = range_x(query.x);
    auto [iy0, iy1] = range_y(query.y);
    auto [it0, it1] = range_theta(query.theta);
    for (std::size_t ix = ix0; ix <= ix1; ++ix)
      for (std::size_t iy = iy0; iy <= iy1; ++iy)
        for (std::size_t it = it0; it <= it1; ++it) {
          const auto& bin = bins_[(ix * ny_ + iy) * nth_ + (it % nth_)];
          out.insert(out.end(), bin.begin(), bin.end());
        }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::vector<std::uint32_t> candidates_at(double x, double y,
                                           double theta) const {
    return candidates({{x, x}, {y, y}, {theta, theta}});
  }

 private:
  std::pair<std::size_t, std::size_t> range_x(const Interval& iv) const {
    return clamp_range(iv.lo, iv.hi, lo_.x, hi_.x, nx_);
  }
  std::pair<std::size_t, std::size_t> range_y(const Interval& iv) const {
    return clamp_range(iv.lo, iv.hi, lo_.y, hi_.y, ny_);
  }
  std::pair<std::size_t, std::size_t> range_theta(const Interval& iv) const {
    if (iv.width() >= kTwoPi) return {0, nth_ - 1};
    double lo = iv.lo, hi = iv.hi;
    double span = kTwoPi / static_cast<double>(nth_);
    auto bin = [&](double v) {
      double w = v - std::floor(v / kTwoPi) * kTwoPi;
      return static_cast<std::size_t>(
          std::min(static_cast<double>(nth_ - 1), std::floor(w / span)));
    };
    std::size_t b0 = bin(lo), b1 = bin(hi);
    if (b1 < b0) b1 += nth_;  // wrapped range; callers take modulo
    return {b0, b1};
  }
  static std::pair<std::size_t, std::size_t> clamp_range(double lo, double hi,
                                                         double dlo, double dhi,
                                                         std::size_t n) {
    double span = (dhi - dlo) / static_cast<double>(n);
    if (span <= 0.0) return {0, 0};
    auto bin = [&](double v) {
      double t = std::floor((v - dlo) / span);
      t = std::max(0.0, std::min(static_cast<double>(n - 1), t));
      return static_cast<std::size_t>(t);
    };
    return {bin(lo), bin(hi)};
  }

  Vec2 lo_, hi_;
  std::size_t nx_ = 0, ny_ = 0, nth_ = 0;
  std::vector<std::vector<std::uint32_t>> bins_;
};

}  // namespace celltrain
