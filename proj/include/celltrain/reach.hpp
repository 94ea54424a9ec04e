#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "celltrain/boxes.hpp"
#include "celltrain/errors.hpp"
#include "celltrain/footprint.hpp"
#include "celltrain/ibp.hpp"
#include "celltrain/net.hpp"
#include "celltrain/parallel.hpp"
#include "celltrain/partition.hpp"

namespace celltrain {

// Discrete-time dynamics with a matching interval extension: step(z, u) must
// lie in propagate(A, B) for every z in A, u in B.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual Eigen::VectorXd step(const Eigen::VectorXd& z,
                               const Eigen::VectorXd& u) const = 0;
  virtual StateBox propagate(const StateBox& x, const Box& u) const = 0;
  // Pulls cotangents on the propagated box bounds back to the control box
  // bounds (the state box is constant during training).
  virtual void pullback(const StateBox& x, const Box& u,
                        const Eigen::VectorXd& gy_lo,
                        const Eigen::VectorXd& gy_hi, Eigen::VectorXd& gu_lo,
                        Eigen::VectorXd& gu_hi) const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t control_dim() const = 0;
};

// z' = z + K u on the configuration; the interval extension is the
// Minkowski sum of the cell with the scaled control box.
class HolonomicDynamics final : public Dynamics {
 public:
  explicit HolonomicDynamics(double gain) : gain_(gain) {}
  double gain() const { return gain_; }

  Eigen::VectorXd step(const Eigen::VectorXd& z,
                       const Eigen::VectorXd& u) const override {
    return z + gain_ * u;
  }

  StateBox propagate(const StateBox& x, const Box& u) const override {
    if (u.dim() != 3) throw DimensionMismatch("holonomic: control dim");
    StateBox y = x;
    auto shift = [&](Interval& iv, const Interval& du) {
      iv = {iv.lo + gain_ * du.lo, iv.hi + gain_ * du.hi};
    };
    shift(y.cfg.x, u[0]);
    shift(y.cfg.y, u[1]);
    shift(y.cfg.theta, u[2]);
    return y;
  }

  void pullback(const StateBox&, const Box&, const Eigen::VectorXd& gy_lo,
                const Eigen::VectorXd& gy_hi, Eigen::VectorXd& gu_lo,
                Eigen::VectorXd& gu_hi) const override {
    gu_lo = gain_ * gy_lo.head(3);
    gu_hi = gain_ * gy_hi.head(3);
  }

  std::size_t state_dim() const override { return 3; }
  std::size_t control_dim() const override { return 3; }

 private:
  double gain_ = 0.01;
};

// One-step forward reachable box of a cell with its safety violations:
// violation_p is the area (m^2) of the reached footprint bound outside W,
// violation_q the volume of the reached miscellaneous box outside Q.
struct ReachBox {
  std::uint32_t source = 0;
  StateBox box;
  double violation_p = 0.0;
  double violation_q = 0.0;
};

inline double misc_violation(const Box& misc, const Box& q) {
  if (misc.dim() == 0) return 0.0;
  double vol = volume(misc);
  double inside = 1.0;
  for (std::size_t i = 0; i < misc.dim(); ++i) {
    double w = std::min(misc[i].hi, q[i].hi) - std::max(misc[i].lo, q[i].lo);
    if (w <= 0.0) {
      inside = 0.0;
      break;
    }
    inside *= w;
  }
  return std::max(vol - inside, 0.0);
}

// F(X) = f_oa(X, ibp(X)) without the violation geometry.
inline StateBox reach_box(const Mlp& net, const StateBox& cell_box,
                          const Dynamics& dyn) {
  Box u = ibp(net, cell_box.flat());
  return dyn.propagate(cell_box, u);
}

inline ReachBox cell_reach(const Mlp& net, const PartitionTree& tree,
                           std::uint32_t cell_id, const Dynamics& dyn,
                           const Workspace& ws, const RobotBody& robot) {
  const Cell& cell = tree.cell(cell_id);
  ReachBox rb;
  rb.source = cell_id;
  rb.box = reach_box(net, cell.box, dyn);
  rb.violation_p = swept_violation_area(robot, ws, rb.box.cfg);
  rb.violation_q = misc_violation(rb.box.misc, tree.q());
  return rb;
}

// Alg. 3: does the one-step reachable set violate the safety margins?
inline bool penalty_test(const ReachBox& rb, double eps_p, double eps_q) {
  return rb.violation_p > eps_p || rb.violation_q > eps_q;
}

struct RefineStats {
  std::size_t loop_count = 0;
  double loop_bound = 0.0;  // #(Q) Vol(P_[p]) / (eps_x eps_y eps_theta)
  double loop_guard = 0.0;  // rigorous variant used for the internal assert
  std::size_t subdivided = 0;
  std::size_t dropped = 0;
  std::size_t merged = 0;
  double residual_unsafe_volume = 0.0;  // scaled by delta
  double input_volume = 0.0;            // scaled leaf volume before refining
};

inline double scaled_volume(const StateBox& b, const std::vector<double>& delta) {
  if (delta.size() != b.dim())
    throw DimensionMismatch("delta length != state dimension");
  double v = delta[0] * b.cfg.x.width() * delta[1] * b.cfg.y.width() *
             delta[2] * b.cfg.theta.width();
  for (std::size_t i = 0; i < b.misc.dim(); ++i)
    v *= delta[3 + i] * b.misc[i].width();
  return v;
}

inline std::vector<double> default_delta(std::size_t misc_dim) {
  std::vector<double> d = {1.0, 1.0, 1.0 / kTwoPi};
  d.resize(3 + misc_dim, 1.0);
  return d;
}

// Alg. 4: subdivide cells whose reachable set violates the margins, drop the
// ones already at minimum width (their scaled volume becomes the residual
// unsafe certificate), and merge sibling pairs that pass when their parent
// also passes under the current controller. Postconditions are asserted:
// every retained leaf re-passes the penalty test and the loop counter stays
// within its termination bound.
inline RefineStats refine_partition(PartitionTree& tree, const Mlp& net,
                                    const Dynamics& dyn, const Workspace& ws,
                                    const RobotBody& robot, double eps_p,
                                    double eps_q,
                                    const std::vector<double>& delta) {
  RefineStats stats;
  const EpsWidths& eps = tree.eps();

  std::vector<std::uint32_t> frontier = tree.leaf_ids();
  double cfg_volume = tree.leaf_config_volume();
  stats.loop_bound = cfg_volume / eps.product();
  for (std::uint32_t id : frontier)
    stats.input_volume += scaled_volume(tree.cell(id).box, delta);

  // Rigorous counter guard: cells stay on the halving chains of the input
  // leaves, so distinct boxes of volume >= 2^k V_min are disjoint per level
  // and sum to at most 2 Vol / V_min; merged parents re-enter at most once
  // per merge.
  double min_cell_volume = std::numeric_limits<double>::infinity();
  for (std::uint32_t id : frontier) {
    const ConfigBox& b = tree.cell(id).box.cfg;
    double v = terminal_width(b.x.width(), eps.x) *
               terminal_width(b.y.width(), eps.y) *
               terminal_width(b.theta.width(), eps.theta);
    min_cell_volume = std::min(min_cell_volume, v);
  }
  if (frontier.empty()) return stats;
  stats.loop_guard = 3.0 * cfg_volume / min_cell_volume +
                     2.0 * static_cast<double>(frontier.size());

  std::vector<char> committed(tree.cells().size(), 0);

  while (!frontier.empty()) {
    std::vector<std::uint32_t> wave = std::move(frontier);
    frontier.clear();

    std::vector<char> fails(wave.size(), 0);
    std::vector<double> volumes(wave.size(), 0.0);
    parallel_for(wave.size(), [&](std::size_t i) {
      ReachBox rb = cell_reach(net, tree, wave[i], dyn, ws, robot);
      fails[i] = penalty_test(rb, eps_p, eps_q) ? 1 : 0;
    });
    // wave index by id for sibling lookups
    std::vector<std::int64_t> pos_of(tree.cells().size(), -1);
    for (std::size_t i = 0; i < wave.size(); ++i) pos_of[wave[i]] = static_cast<std::int64_t>(i);

    for (std::size_t i = 0; i < wave.size(); ++i) {
      std::uint32_t id = wave[i];
      Cell& cell = tree.cell(id);
      if (!cell.leaf) continue;  // absorbed by an earlier merge in this wave
      ++stats.loop_count;

      if (fails[i]) {
        if (exceeds_widths(cell.box, eps)) {
          auto [a, b] = tree.subdivide(id);
          committed.resize(tree.cells().size(), 0);
          frontier.push_back(a);
          frontier.push_back(b);
          ++stats.subdivided;
        } else {
          cell.leaf = false;  // residual unsafe: certified bound, not in P'
          stats.residual_unsafe_volume += scaled_volume(cell.box, delta);
          ++stats.dropped;
        }
        continue;
      }

      // Merge policy: sibling exists as an uncommitted leaf in this wave,
      // both pass, labels agree, and the merged parent also passes under
      // the current network.
      std::int32_t sib = cell.sibling;
      bool merged = false;
      if (sib >= 0 && tree.cell(static_cast<std::uint32_t>(sib)).leaf &&
          !committed[static_cast<std::size_t>(sib)] &&
          pos_of[static_cast<std::size_t>(sib)] >= 0 &&
          !fails[static_cast<std::size_t>(pos_of[static_cast<std::size_t>(sib)])] &&
          tree.cell(static_cast<std::uint32_t>(sib)).label == cell.label &&
          cell.parent >= 0) {
        std::uint32_t parent = static_cast<std::uint32_t>(cell.parent);
        ReachBox prb = cell_reach(net, tree, parent, dyn, ws, robot);
        if (!penalty_test(prb, eps_p, eps_q)) {
          tree.merge_children(parent);
          frontier.push_back(parent);
          ++stats.merged;
          merged = true;
        }
      }
      if (!merged) committed[id] = 1;
    }

    if (static_cast<double>(stats.loop_count) > stats.loop_guard)
      throw Error("refine_partition exceeded its termination bound");
  }

  // Theorem-2 style postcondition: exact re-check of every retained leaf.
  std::vector<std::uint32_t> leaves = tree.leaf_ids();
  std::vector<char> ok(leaves.size(), 0);
  parallel_for(leaves.size(), [&](std::size_t i) {
    ReachBox rb = cell_reach(net, tree, leaves[i], dyn, ws, robot);
    ok[i] = penalty_test(rb, eps_p, eps_q) ? 0 : 1;
  });
  for (std::size_t i = 0; i < leaves.size(); ++i)
    if (!ok[i])
      throw Error("refine_partition: retained leaf fails the penalty re-check");

  return stats;
}

// Per-epoch violation summary. Volumes are scaled by delta; J and J_S are
// filled in by the training driver.
struct ViolationReport {
  int epoch = 0;
  double J = 0.0;
  double J_S = 0.0;
  double lambda_S = 0.0;
  double total_outside_volume = 0.0;
  std::size_t active_cell_count = 0;
  double residual_unsafe_volume = 0.0;
  std::size_t leaf_count = 0;
  double wall_time_s = 0.0;
};

// Marks cells whose reachable box is not covered by the safe leaves and
// totals the scaled volume lying outside that cover. Reductions run in
// fixed leaf order for bit-reproducibility.
inline ViolationReport violation_report(PartitionTree& tree, const Mlp& net,
                                        const Dynamics& dyn,
                                        const Workspace& ws,
                                        const RobotBody& robot,
                                        const std::vector<double>& delta,
                                        double eps_smooth = 1e-12) {
  ViolationReport rep;
  std::vector<std::uint32_t> leaves = tree.leaf_ids();
  std::vector<std::uint32_t> safe = tree.safe_leaf_ids();
  LeafIndex safe_index(tree, safe);
  rep.leaf_count = leaves.size();

  std::vector<double> outside(leaves.size(), 0.0);
  parallel_for(leaves.size(), [&](std::size_t i) {
    StateBox reached = reach_box(net, tree.cell(leaves[i]).box, dyn);
    double vol = 0.0;
    double covered = 0.0;
    for (const ConfigBox& frag : wrap_theta(reached.cfg)) {
      StateBox fbox{frag, reached.misc};
      vol += scaled_volume(fbox, delta);
      for (std::uint32_t sid : safe_index.candidates(frag)) {
        const StateBox& sb = tree.cell(sid).box;
        double inter = delta[0] *
                       std::max(0.0, std::min(frag.x.hi, sb.cfg.x.hi) -
                                         std::max(frag.x.lo, sb.cfg.x.lo));
        if (inter <= 0.0) continue;
        inter *= delta[1] * std::max(0.0, std::min(frag.y.hi, sb.cfg.y.hi) -
                                              std::max(frag.y.lo, sb.cfg.y.lo));
        if (inter <= 0.0) continue;
        inter *= delta[2] *
                 std::max(0.0, std::min(frag.theta.hi, sb.cfg.theta.hi) -
                                   std::max(frag.theta.lo, sb.cfg.theta.lo));
        if (inter <= 0.0) continue;
        for (std::size_t d = 0; d < reached.misc.dim() && inter > 0.0; ++d)
          inter *= delta[3 + d] *
                   std::max(0.0, std::min(reached.misc[d].hi, sb.misc[d].hi) -
                                     std::max(reached.misc[d].lo, sb.misc[d].lo));
        covered += inter;
      }
    }
    outside[i] = std::max(vol - covered, 0.0);
  });

  for (std::size_t i = 0; i < leaves.size(); ++i) {
    bool active = outside[i] > eps_smooth;
    tree.cell(leaves[i]).active = active;
    if (active) ++rep.active_cell_count;
    rep.total_outside_volume += outside[i];
  }
  return rep;
}

}  // namespace celltrain
