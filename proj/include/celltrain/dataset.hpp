#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "celltrain/errors.hpp"
#include "celltrain/footprint.hpp"
#include "celltrain/geometry.hpp"
#include "celltrain/parallel.hpp"
#include "celltrain/reach.hpp"
#include "celltrain/rng.hpp"

namespace celltrain {

// Difference a - b wrapped into (-pi, pi].
inline double angle_diff(double a, double b) {
  double d = std::fmod(a - b, kTwoPi);
  if (d > std::numbers::pi) d -= kTwoPi;
  if (d <= -std::numbers::pi) d += kTwoPi;
  return d;
}

inline double wrap_angle(double a) {
  double w = std::fmod(a, kTwoPi);
  return w < 0.0 ? w + kTwoPi : w;
}

// Goal displacement with the heading difference taken along the short arc.
inline Eigen::Vector3d goal_error(const Eigen::Vector3d& goal,
                                  const Eigen::Vector3d& z) {
  return {goal[0] - z[0], goal[1] - z[1], angle_diff(goal[2], z[2])};
}

struct Trajectory {
  std::vector<Configuration> waypoints;
  bool collision_free = false;
  double cost = 0.0;
};

struct PlannerParams {
  int max_iters = 2000;
  double step = 0.4;            // steering limit in the weighted metric
  double rewire_radius = 0.8;
  std::uint64_t seed = 1;
  double goal_bias = 0.1;
  double check_resolution = 0.025;  // collision sampling step (m)
};

namespace detail {

// Planner metric: Euclidean in position with rotation weighted by the robot
// radius, so turning costs are commensurate with arc displacement.
inline double se2_dist(const Configuration& a, const Configuration& b,
                       double radius) {
  double dth = angle_diff(b.theta, a.theta);
  return std::sqrt((b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y) +
                   radius * radius * dth * dth);
}

inline Configuration se2_lerp(const Configuration& a, const Configuration& b,
                              double t) {
  double dth = angle_diff(b.theta, a.theta);
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y),
          wrap_angle(a.theta + t * dth)};
}

inline bool edge_free(const RobotBody& robot, const Workspace& ws,
                      const Configuration& a, const Configuration& b,
                      double radius, double resolution) {
  double len = se2_dist(a, b, radius);
  int n = std::max(1, static_cast<int>(std::ceil(len / resolution)));
  for (int i = 0; i <= n; ++i) {
    Configuration p = se2_lerp(a, b, static_cast<double>(i) / n);
    if (!configuration_safe(robot, ws, p)) return false;
  }
  return true;
}

}  // namespace detail

// RRT* over (x, y, theta) with straight-line steering in position and
// shortest-arc interpolation in heading. Throws UnreachableGoal when the
// iteration budget runs out before the goal connects.
inline Trajectory rrt_star_plan(const Workspace& ws, const RobotBody& robot,
                                const Configuration& start,
                                const Configuration& goal,
                                const PlannerParams& params) {
  double radius = robot.radius();
  if (!configuration_safe(robot, ws, start))
    throw ValidationError("start", "start configuration is not safe");
  if (!configuration_safe(robot, ws, goal))
    throw ValidationError("goal", "goal configuration is not safe");

  if (detail::se2_dist(start, goal, radius) <= 1e-12) {
    Trajectory t;
    t.waypoints = {start};
    t.collision_free = true;
    return t;
  }

  struct Node {
    Configuration cfg;
    int parent = -1;
    double cost = 0.0;
  };
  std::vector<Node> nodes{{start, -1, 0.0}};
  Rng rng(params.seed);
  Vec2 lo, hi;
  ws.bounding_box(lo, hi);

  int goal_node = -1;

  auto try_goal_link = [&](int idx) {
    double d = detail::se2_dist(nodes[idx].cfg, goal, radius);
    if (d > params.step) return;
    if (!detail::edge_free(robot, ws, nodes[idx].cfg, goal, radius,
                           params.check_resolution))
      return;
    double cost = nodes[idx].cost + d;
    if (goal_node < 0 || cost < nodes[goal_node].cost) {
      if (goal_node < 0) {
        nodes.push_back({goal, idx, cost});
        goal_node = static_cast<int>(nodes.size()) - 1;
      } else {
        nodes[goal_node].parent = idx;
        nodes[goal_node].cost = cost;
      }
    }
  };

  for (int iter = 0; iter < params.max_iters; ++iter) {
    Configuration target =
        rng.uniform() < params.goal_bias
            ? goal
            : Configuration{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y),
                            rng.uniform(0, kTwoPi)};
    // nearest existing node
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (static_cast<int>(i) == goal_node) continue;
      double d = detail::se2_dist(nodes[i].cfg, target, radius);
      if (d < best) {
        best = d;
        nearest = static_cast<int>(i);
      }
    }
    Configuration candidate =
        best <= params.step
            ? target
            : detail::se2_lerp(nodes[nearest].cfg, target, params.step / best);
    if (!configuration_safe(robot, ws, candidate)) continue;

    // choose the cheapest collision-free parent in the rewire ball
    double d_near =
        detail::se2_dist(nodes[nearest].cfg, candidate, radius);
    if (!detail::edge_free(robot, ws, nodes[nearest].cfg, candidate, radius,
                           params.check_resolution))
      continue;
    int parent = nearest;
    double cost = nodes[nearest].cost + d_near;
    std::vector<int> neighbors;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (static_cast<int>(i) == goal_node) continue;
      double d = detail::se2_dist(nodes[i].cfg, candidate, radius);
      if (d <= params.rewire_radius) {
        neighbors.push_back(static_cast<int>(i));
        double c = nodes[i].cost + d;
        if (c < cost && detail::edge_free(robot, ws, nodes[i].cfg, candidate,
                                          radius, params.check_resolution)) {
          cost = c;
          parent = static_cast<int>(i);
        }
      }
    }
    nodes.push_back({candidate, parent, cost});
    int new_idx = static_cast<int>(nodes.size()) - 1;

    // rewire neighbors through the new node when that shortens them
    for (int i : neighbors) {
      double d = detail::se2_dist(candidate, nodes[i].cfg, radius);
      double c = cost + d;
      if (c + 1e-12 < nodes[i].cost &&
          detail::edge_free(robot, ws, candidate, nodes[i].cfg, radius,
                            params.check_resolution)) {
        nodes[i].parent = new_idx;
        nodes[i].cost = c;
      }
    }
    try_goal_link(new_idx);
  }

  if (goal_node < 0)
    throw UnreachableGoal("rrt_star_plan: goal not connected within budget");

  // Costs may be stale after rewiring; recompute along the extracted chain.
  Trajectory t;
  std::vector<int> chain;
  for (int i = goal_node; i >= 0; i = nodes[i].parent) chain.push_back(i);
  std::reverse(chain.begin(), chain.end());
  double cost = 0.0;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    t.waypoints.push_back(nodes[chain[i]].cfg);
    if (i > 0)
      cost += detail::se2_dist(nodes[chain[i - 1]].cfg, nodes[chain[i]].cfg,
                               radius);
  }
  t.cost = cost;
  t.collision_free = true;
  return t;
}

// Demonstration dataset of (state, control) pairs with the goal-vanishing
// vector-field shaping applied to the raw trajectory controls.
struct Dataset {
  Eigen::MatrixXd states;    // 3 x N
  Eigen::MatrixXd controls;  // 3 x N
  Eigen::Vector3d goal = Eigen::Vector3d::Zero();
  double gain = 0.01;
  double u_max = 50.0;
  std::string mode = "saturating";
  std::uint64_t seed = 0;
  std::size_t trajectories_requested = 0;
  std::size_t trajectories_completed = 0;

  std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
  bool complete() const {
    return trajectories_completed == trajectories_requested;
  }
};

// Shaped control: the raw direction u'/|u'| scaled so the implied vector
// field vanishes at the goal. The denominator (1 - |e|) follows the source
// formula and flips sign beyond |e| = 1; the saturating variant (1 + |e|)
// stays positive and is the end-to-end default. Magnitudes clamp to u_max.
inline Eigen::Vector3d shape_control(const Eigen::Vector3d& raw_dir,
                                     const Eigen::Vector3d& err,
                                     const std::string& mode, double u_max) {
  double dist = err.norm();
  if (dist <= 0.0) return Eigen::Vector3d::Zero();
  double denom = mode == "paper" ? (1.0 - dist) : (1.0 + dist);
  if (std::abs(denom) < 1e-9) denom = denom < 0 ? -1e-9 : 1e-9;
  Eigen::Vector3d u = 10.0 * raw_dir * (dist / denom);
  double mag = u.norm();
  if (mag > u_max) u *= u_max / mag;
  return u;
}

inline Dataset build_dataset(const std::vector<Trajectory>& trajs,
                             const HolonomicDynamics& dyn,
                             const Eigen::Vector3d& goal, double u_max,
                             const std::string& mode, const Workspace& ws,
                             const RobotBody& robot,
                             double sample_spacing = 0.05) {
  std::vector<Eigen::Vector3d> zs, us;
  for (const auto& traj : trajs) {
    // densify the polyline, then difference consecutive samples
    std::vector<Configuration> pts;
    for (std::size_t i = 0; i + 1 < traj.waypoints.size(); ++i) {
      const Configuration& a = traj.waypoints[i];
      const Configuration& b = traj.waypoints[i + 1];
      double len = detail::se2_dist(a, b, robot.radius());
      int n = std::max(1, static_cast<int>(std::ceil(len / sample_spacing)));
      for (int k = 0; k < n; ++k)
        pts.push_back(detail::se2_lerp(a, b, static_cast<double>(k) / n));
    }
    if (!traj.waypoints.empty()) pts.push_back(traj.waypoints.back());

    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      Eigen::Vector3d z(pts[k].x, pts[k].y, pts[k].theta);
      Eigen::Vector3d znext(pts[k + 1].x, pts[k + 1].y, pts[k + 1].theta);
      Eigen::Vector3d dz(znext[0] - z[0], znext[1] - z[1],
                         angle_diff(znext[2], z[2]));
      if (dz.norm() <= 1e-15) continue;  // degenerate step: point skipped
      Eigen::Vector3d raw = dz / dyn.gain();
      Eigen::Vector3d dir = raw / raw.norm();
      Eigen::Vector3d u = shape_control(dir, goal_error(goal, z), mode, u_max);
      if (!configuration_safe(robot, ws, pts[k])) continue;
      zs.push_back(z);
      us.push_back(u);
    }
  }
  // the goal itself anchors the vanishing field
  zs.emplace_back(goal);
  us.emplace_back(Eigen::Vector3d::Zero());

  Dataset d;
  d.states.resize(3, static_cast<Eigen::Index>(zs.size()));
  d.controls.resize(3, static_cast<Eigen::Index>(us.size()));
  for (std::size_t i = 0; i < zs.size(); ++i) {
    d.states.col(static_cast<Eigen::Index>(i)) = zs[i];
    d.controls.col(static_cast<Eigen::Index>(i)) = us[i];
  }
  d.goal = goal;
  d.gain = dyn.gain();
  d.u_max = u_max;
  d.mode = mode;
  d.trajectories_requested = trajs.size();
  d.trajectories_completed = trajs.size();
  return d;
}

// Plans `count` trajectories from random safe starts to the goal, in
// parallel with per-trajectory seeds derived from the master seed. Plans
// that fail within their budget are skipped (the dataset records how many
// completed).
inline std::vector<Trajectory> plan_demonstrations(
    const Workspace& ws, const RobotBody& robot, const Configuration& goal,
    std::size_t count, const PlannerParams& base) {
  std::vector<std::optional<Trajectory>> out(count);
  Vec2 lo, hi;
  ws.bounding_box(lo, hi);
  parallel_for(count, [&](std::size_t i) {
    PlannerParams p = base;
    p.seed = Rng::derive(base.seed, i);
    Rng rng(Rng::derive(base.seed, i * 2 + 1));
    // rejection-sample a safe start
    Configuration start;
    bool found = false;
    for (int tries = 0; tries < 5000; ++tries) {
      start = {rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y),
               rng.uniform(0, kTwoPi)};
      if (configuration_safe(robot, ws, start)) {
        found = true;
        break;
      }
    }
    if (!found) return;
    try {
      out[i] = rrt_star_plan(ws, robot, start, goal, p);
    } catch (const UnreachableGoal&) {
      // skipped; completion count reflects it
    }
  });
  std::vector<Trajectory> trajs;
  for (auto& t : out)
    if (t) trajs.push_back(std::move(*t));
  return trajs;
}

struct RolloutResult {
  std::vector<Eigen::Vector3d> states;
  int collision_step = -1;  // first exact-footprint violation, -1 if none
  bool reached = false;
};

// Closed-loop rollout z <- z + K phi(z) with heading wrapped to [0, 2pi).
inline RolloutResult rollout(const Mlp& net, const HolonomicDynamics& dyn,
                             const Eigen::Vector3d& z0, int n_steps,
                             const Workspace& ws, const RobotBody& robot,
                             const Eigen::Vector3d& goal,
                             double goal_tol = 0.1) {
  RolloutResult r;
  Eigen::Vector3d z = z0;
  z[2] = wrap_angle(z[2]);
  for (int k = 0; k <= n_steps; ++k) {
    r.states.push_back(z);
    if (r.collision_step < 0 &&
        !configuration_safe(robot, ws, {z[0], z[1], z[2]}))
      r.collision_step = k;
    if (goal_error(goal, z).norm() <= goal_tol) {
      r.reached = true;
      break;
    }
    if (k == n_steps) break;
    Eigen::Vector3d u = net.forward(z);
    z = dyn.step(z, u);
    z[2] = wrap_angle(z[2]);
  }
  return r;
}

}  // namespace celltrain
