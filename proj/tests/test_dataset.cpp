#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "celltrain/dataset.hpp"
#include "helpers.hpp"

using namespace celltrain;
using celltrain::testing::rect_robot;
using celltrain::testing::two_room_workspace;

TEST_CASE("angle helpers") {
  CHECK(angle_diff(0.1, 0.3) == Catch::Approx(-0.2));
  CHECK(angle_diff(6.2, 0.1) == Catch::Approx(6.1 - kTwoPi));
  CHECK(wrap_angle(-0.1) == Catch::Approx(kTwoPi - 0.1));
  CHECK(wrap_angle(7.0) == Catch::Approx(7.0 - kTwoPi));
}

TEST_CASE("rrt: start equals goal") {
  Workspace ws = testing::square_workspace(10.0);
  RobotBody robot = rect_robot();
  Configuration g{5, 5, 1.0};
  Trajectory t = rrt_star_plan(ws, robot, g, g, PlannerParams{});
  REQUIRE(t.waypoints.size() == 1);
  CHECK(t.collision_free);
}

TEST_CASE("rrt: near-straight path in an empty corridor") {
  Workspace ws(make_rect(0, 0, 8, 1.2), {});
  RobotBody robot = rect_robot(0.1, 0.08);
  Configuration start{0.6, 0.6, 0.0};
  Configuration goal{7.4, 0.6, 0.0};
  PlannerParams p;
  p.max_iters = 1500;
  p.step = 0.6;
  p.rewire_radius = 1.2;
  p.seed = 3;
  Trajectory t = rrt_star_plan(ws, robot, start, goal, p);
  double straight = 7.4 - 0.6;
  CHECK(t.cost <= straight * 1.05);
  CHECK(t.waypoints.front().x == Catch::Approx(0.6));
  CHECK(t.waypoints.back().x == Catch::Approx(7.4));
}

TEST_CASE("rrt: sealed goal is unreachable") {
  // goal ringed by walls whose gaps are narrower than the robot
  std::vector<Polygon> walls = {
      make_rect(4, 4, 6, 4.3), make_rect(4, 5.7, 6, 6),
      make_rect(4, 4.35, 4.3, 5.65), make_rect(5.7, 4.35, 6, 5.65)};
  Workspace ws(make_rect(0, 0, 10, 10), walls);
  RobotBody robot = rect_robot(0.1, 0.08);
  PlannerParams p;
  p.max_iters = 300;
  CHECK_THROWS_AS(
      rrt_star_plan(ws, robot, {1, 1, 0}, {5, 5, 0}, p), UnreachableGoal);
}

TEST_CASE("shaping arithmetic at the half-distance point") {
  // |e| = 0.5 in paper mode: 10 * 0.5/(1-0.5) = 10
  Eigen::Vector3d u = shape_control({1, 0, 0}, {0.5, 0, 0}, "paper", 50.0);
  CHECK(u[0] == Catch::Approx(10.0));
  CHECK(u[1] == 0.0);

  // saturating mode stays bounded and positive
  Eigen::Vector3d us = shape_control({1, 0, 0}, {0.5, 0, 0}, "saturating", 50);
  CHECK(us[0] == Catch::Approx(10.0 * 0.5 / 1.5));

  // paper mode flips direction beyond |e| = 1 (formula kept as written)
  Eigen::Vector3d uf = shape_control({1, 0, 0}, {2.0, 0, 0}, "paper", 50.0);
  CHECK(uf[0] < 0.0);

  // magnitude clamp
  Eigen::Vector3d uc =
      shape_control({1, 0, 0}, {0.999, 0, 0}, "paper", 50.0);
  CHECK(uc.norm() <= 50.0 + 1e-12);

  // vanishing at the goal
  CHECK(shape_control({1, 0, 0}, {0, 0, 0}, "paper", 50.0).norm() == 0.0);
}

TEST_CASE("build_dataset: safety, direction preservation, completion flag") {
  Workspace ws = two_room_workspace();
  RobotBody robot = rect_robot();
  HolonomicDynamics dyn(0.01);
  Eigen::Vector3d goal(5.1, 0.8, 0.0);

  PlannerParams p;
  p.max_iters = 900;
  p.step = 0.5;
  p.rewire_radius = 0.9;
  p.seed = 11;
  std::vector<Trajectory> trajs =
      plan_demonstrations(ws, robot, {goal[0], goal[1], goal[2]}, 6, p);
  REQUIRE(trajs.size() >= 4);

  Dataset d = build_dataset(trajs, dyn, goal, 50.0, "saturating", ws, robot);
  CHECK(d.trajectories_requested == trajs.size());
  CHECK(d.complete());
  REQUIRE(d.size() > 50);

  int unsafe = 0;
  for (Eigen::Index i = 0; i < d.states.cols(); ++i) {
    Configuration c{d.states(0, i), d.states(1, i), d.states(2, i)};
    if (!configuration_safe(robot, ws, c)) ++unsafe;
    CHECK(d.controls.col(i).allFinite());
  }
  CHECK(unsafe == 0);

  // the goal anchor is present with zero control
  Eigen::Index last = d.states.cols() - 1;
  CHECK((d.states.col(last) - goal).norm() <= 1e-12);
  CHECK(d.controls.col(last).norm() == 0.0);
}

TEST_CASE("paper-mode shaping keeps the raw direction within the unit ball") {
  Workspace ws = two_room_workspace();
  RobotBody robot = rect_robot();
  HolonomicDynamics dyn(0.01);
  Eigen::Vector3d goal(5.1, 0.8, 0.0);
  // one short trajectory near the goal so that |e| < 1 along it
  Trajectory t;
  t.waypoints = {{4.6, 0.8, 0.0}, {4.9, 0.8, 0.0}, {5.1, 0.8, 0.0}};
  t.collision_free = true;
  Dataset d = build_dataset({t}, dyn, goal, 50.0, "paper", ws, robot);
  for (Eigen::Index i = 0; i + 1 < d.states.cols(); ++i) {
    Eigen::Vector3d e = goal_error(goal, d.states.col(i));
    if (e.norm() >= 1.0 || e.norm() < 1e-9) continue;
    // control points along +x here; positive scale preserves direction
    CHECK(d.controls(0, i) > 0.0);
  }
}

TEST_CASE("rollout closed forms") {
  Workspace ws = testing::square_workspace(10.0);
  RobotBody robot = rect_robot();
  HolonomicDynamics dyn(0.01);
  Eigen::Vector3d goal(9.0, 9.0, 0.0);

  Mlp zero({Layer{Eigen::MatrixXd::Zero(3, 3), Eigen::VectorXd::Zero(3),
                  Activation::kIdentity}});
  RolloutResult r = rollout(zero, dyn, {5, 5, 1}, 50, ws, robot, goal);
  CHECK(r.collision_step == -1);
  CHECK_FALSE(r.reached);
  CHECK(r.states.size() == 51);
  CHECK((r.states.back() - r.states.front()).norm() == 0.0);

  Eigen::Vector3d c(2.0, 1.0, 0.0);
  Mlp constant({Layer{Eigen::MatrixXd::Zero(3, 3), c, Activation::kIdentity}});
  RolloutResult rc = rollout(constant, dyn, {5, 5, 0}, 40, ws, robot, goal);
  // z_k = z_0 + k K c exactly
  Eigen::Vector3d expect = Eigen::Vector3d(5, 5, 0) + 40 * 0.01 * c;
  CHECK((rc.states.back() - expect).norm() <= 1e-12);

  // determinism
  RolloutResult rc2 = rollout(constant, dyn, {5, 5, 0}, 40, ws, robot, goal);
  REQUIRE(rc.states.size() == rc2.states.size());
  for (std::size_t i = 0; i < rc.states.size(); ++i)
    CHECK((rc.states[i] - rc2.states[i]).norm() == 0.0);
}

TEST_CASE("rollout records the first collision") {
  Workspace ws = testing::square_workspace(10.0);
  RobotBody robot = rect_robot();
  HolonomicDynamics dyn(0.01);
  // drive hard into the wall at x = 0
  Eigen::Vector3d c(-100.0, 0.0, 0.0);
  Mlp net({Layer{Eigen::MatrixXd::Zero(3, 3), c, Activation::kIdentity}});
  RolloutResult r = rollout(net, dyn, {0.5, 5, 0}, 200, ws, robot,
                            {9, 9, 0});
  CHECK(r.collision_step > 0);
  // reference point crosses after ~(0.5 - 0.15)/1.0 per step
  CHECK(r.collision_step < 60);
}
