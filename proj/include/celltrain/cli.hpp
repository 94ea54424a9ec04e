#pragma once

#include <CLI11.hpp>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "celltrain/dataset.hpp"
#include "celltrain/io.hpp"
#include "celltrain/parallel.hpp"
#include "celltrain/svg.hpp"
#include "celltrain/train.hpp"

namespace celltrain {

inline constexpr const char* kVersion = "0.1.0";

namespace cli_detail {

inline std::vector<int> parse_arch(const std::string& s) {
  std::vector<int> arch;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, 'x')) {
    try {
      arch.push_back(std::stoi(tok));
    } catch (...) {
      throw ValidationError("arch", "expected sizes like 3x16x16x3");
    }
  }
  if (arch.size() < 2) throw ValidationError("arch", "needs >= 2 sizes");
  return arch;
}

inline std::vector<double> parse_csv_doubles(const std::string& s,
                                             std::size_t expect,
                                             const std::string& name) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      throw ValidationError(name, "not a number: " + tok);
    }
  }
  if (expect != 0 && out.size() != expect)
    throw ValidationError(name,
                          "expected " + std::to_string(expect) + " values");
  return out;
}

inline void emit_error(const std::string& type, const std::string& message,
                       const std::string& where = "") {
  json err{{"error", {{"type", type}, {"message", message}}}};
  if (!where.empty()) err["error"]["where"] = where;
  std::cerr << err.dump() << std::endl;
}

struct ManifestInput {
  std::string path;
};

inline void write_manifest(const std::string& path, const std::string& command,
                           std::uint64_t seed,
                           const std::vector<std::string>& inputs,
                           const json& params) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = seed;
  m["inputs"] = json::array();
  for (const auto& in : inputs)
    m["inputs"].push_back({{"path", in}, {"sha256", sha256_file(in)}});
  m["params"] = params;
  write_text_file(path, m.dump(2) + "\n");
}

}  // namespace cli_detail

// All tunables of the pipeline with their defaults. A configuration file can
// pre-load any of them; explicit flags win.
struct RunConfig {
  std::string workspace_path;
  std::string data_path;
  std::string model_path;
  std::string partition_path;
  std::string out;
  std::string out_dir = "out";
  std::string arch = "3x16x16x3";
  std::string mode = "saturating";
  std::string eps = "0.25,0.25,0.6283185307179586";
  double eps_p = 1e-2;
  double eps_q = 1e-2;
  double gain = 0.01;
  double u_max = 50.0;
  std::string goal = "5.1,0.8,0";
  int trajectories = 60;
  int planner_iters = 1200;
  double planner_step = 0.5;
  double rewire_radius = 0.9;
  double check_resolution = 0.025;
  double sample_spacing = 0.05;
  int epochs = 10;
  int base_steps = 2000;
  int inner_steps = 200;
  int batch = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double lambda_e = -1.0;
  double lambda_r = -1.0;
  double lambda_step = 1e-3;
  double lambda_target = 1e-2;
  double eps_smooth = 1e-12;
  std::string delta;  // empty: (1, 1, 1/2pi)
  std::uint64_t seed = 1;
  int threads = 0;
  int sim_starts = 50;
  int sim_steps = 2000;
  double goal_tol = 0.1;
  bool timings = false;

  void load_json(const std::string& path) {
    json j = parse_json_file(path);
    auto s = [&](const char* k, std::string& v) { if (j.contains(k)) v = j[k].get<std::string>(); };
    auto d = [&](const char* k, double& v) { if (j.contains(k)) v = j[k].get<double>(); };
    auto i = [&](const char* k, int& v) { if (j.contains(k)) v = j[k].get<int>(); };
    s("workspace", workspace_path);
    s("data", data_path);
    s("model", model_path);
    s("partition", partition_path);
    s("out", out);
    s("out_dir", out_dir);
    s("arch", arch);
    s("mode", mode);
    s("eps", eps);
    s("goal", goal);
    d("eps_p", eps_p);
    d("eps_q", eps_q);
    d("gain", gain);
    d("u_max", u_max);
    i("trajectories", trajectories);
    i("planner_iters", planner_iters);
    d("planner_step", planner_step);
    d("rewire_radius", rewire_radius);
    d("check_resolution", check_resolution);
    d("sample_spacing", sample_spacing);
    i("epochs", epochs);
    i("base_steps", base_steps);
    i("inner_steps", inner_steps);
    i("batch", batch);
    d("lr", lr);
    d("beta1", beta1);
    d("beta2", beta2);
    d("lambda_e", lambda_e);
    d("lambda_r", lambda_r);
    d("lambda_step", lambda_step);
    d("lambda_target", lambda_target);
    d("eps_smooth", eps_smooth);
    s("delta", delta);
    if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
    i("threads", threads);
    i("sim_starts", sim_starts);
    i("sim_steps", sim_steps);
    d("goal_tol", goal_tol);
    if (j.contains("timings")) timings = j["timings"].get<bool>();
  }

  EpsWidths eps_widths() const {
    auto v = cli_detail::parse_csv_doubles(eps, 3, "eps");
    return {v[0], v[1], v[2]};
  }
  Eigen::Vector3d goal_vec() const {
    auto v = cli_detail::parse_csv_doubles(goal, 3, "goal");
    return {v[0], v[1], v[2]};
  }
  LossConfig loss_config() const {
    LossConfig c;
    c.lambda_E = lambda_e;
    c.lambda_R = lambda_r;
    c.lambda_s = {lambda_step, lambda_target};
    c.eps_smooth = eps_smooth;
    if (!delta.empty())
      c.delta = cli_detail::parse_csv_doubles(delta, 0, "delta");
    c.lr = lr;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.base_steps = base_steps;
    c.inner_steps = inner_steps;
    c.batch = batch;
    c.seed = seed;
    return c;
  }
  PlannerParams planner_params() const {
    PlannerParams p;
    p.max_iters = planner_iters;
    p.step = planner_step;
    p.rewire_radius = rewire_radius;
    p.seed = seed;
    p.check_resolution = check_resolution;
    return p;
  }
};

namespace cli_detail {

inline int cmd_validate(const RunConfig& cfg) {
  WorkspaceFile wf = load_workspace_file(cfg.workspace_path);
  json ok{{"workspace", cfg.workspace_path},
          {"outer_vertices", wf.workspace.outer().size()},
          {"holes", wf.workspace.holes().size()},
          {"free_area", wf.workspace.free_area()},
          {"robot_vertices", wf.robot.footprint().size()},
          {"robot_radius", wf.robot.radius()}};
  std::cout << ok.dump(2) << std::endl;
  return 0;
}

inline int cmd_gen_data(const RunConfig& cfg) {
  WorkspaceFile wf = load_workspace_file(cfg.workspace_path);
  Eigen::Vector3d goal = cfg.goal_vec();
  PlannerParams p = cfg.planner_params();
  std::vector<Trajectory> trajs = plan_demonstrations(
      wf.workspace, wf.robot, {goal[0], goal[1], goal[2]},
      static_cast<std::size_t>(cfg.trajectories), p);
  if (trajs.empty())
    throw UnreachableGoal("no demonstration trajectory reached the goal");
  HolonomicDynamics dyn(cfg.gain);
  Dataset d = build_dataset(trajs, dyn, goal, cfg.u_max, cfg.mode,
                            wf.workspace, wf.robot, cfg.sample_spacing);
  d.seed = cfg.seed;
  d.trajectories_requested = static_cast<std::size_t>(cfg.trajectories);
  d.trajectories_completed = trajs.size();
  save_dataset(cfg.out, d);
  write_manifest(cfg.out + ".manifest.json", "gen-data", cfg.seed,
                 {cfg.workspace_path},
                 json{{"trajectories", cfg.trajectories},
                      {"completed", trajs.size()},
                      {"mode", cfg.mode},
                      {"gain", cfg.gain},
                      {"u_max", cfg.u_max},
                      {"goal", cfg.goal},
                      {"planner_iters", cfg.planner_iters},
                      {"planner_step", cfg.planner_step},
                      {"rewire_radius", cfg.rewire_radius},
                      {"check_resolution", cfg.check_resolution},
                      {"sample_spacing", cfg.sample_spacing}});
  json ok{{"dataset", cfg.out},
          {"points", d.size()},
          {"trajectories_completed", trajs.size()},
          {"trajectories_requested", cfg.trajectories}};
  std::cout << ok.dump(2) << std::endl;
  return 0;
}

inline int cmd_train_base(const RunConfig& cfg) {
  Dataset d = load_dataset(cfg.data_path);
  LossConfig lc = cfg.loss_config();
  TrainState ts = train_base(d, parse_arch(cfg.arch), lc);
  save_model(cfg.out, ts.net, cfg.seed, json{{"J", ts.last_J}});
  write_manifest(cfg.out + ".manifest.json", "train-base", cfg.seed,
                 {cfg.data_path},
                 json{{"arch", cfg.arch},
                      {"base_steps", cfg.base_steps},
                      {"lr", cfg.lr},
                      {"batch", cfg.batch},
                      {"lambda_e", cfg.lambda_e},
                      {"lambda_r", cfg.lambda_r}});
  json ok{{"model", cfg.out}, {"J", ts.last_J}};
  std::cout << ok.dump(2) << std::endl;
  return 0;
}

inline int cmd_partition(const RunConfig& cfg) {
  WorkspaceFile wf = load_workspace_file(cfg.workspace_path);
  PartitionTree tree =
      build_partition(wf.workspace, wf.robot, Box{}, cfg.eps_widths());
  if (tree.leaf_count() == 0) {
    emit_error("EmptyPartition", "no safe or mixed cells remain");
    return 3;
  }
  save_partition(cfg.out, tree);
  write_manifest(cfg.out + ".manifest.json", "partition", cfg.seed,
                 {cfg.workspace_path}, json{{"eps", cfg.eps}});
  json ok{{"partition", cfg.out},
          {"leaves", tree.leaf_count()},
          {"safe_leaves", tree.safe_leaf_ids().size()},
          {"loop_count", tree.diagnostics().loop_count},
          {"loop_bound", tree.diagnostics().loop_bound},
          {"discarded_volume", tree.diagnostics().discarded_volume}};
  std::cout << ok.dump(2) << std::endl;
  return 0;
}

inline int cmd_refine(const RunConfig& cfg) {
  WorkspaceFile wf = load_workspace_file(cfg.workspace_path);
  Mlp net = load_model(cfg.model_path);
  PartitionTree tree = load_partition(cfg.partition_path);
  HolonomicDynamics dyn(cfg.gain);
  std::vector<double> delta = default_delta(tree.q().dim());
  RefineStats stats = refine_partition(tree, net, dyn, wf.workspace, wf.robot,
                                       cfg.eps_p, cfg.eps_q, delta);
  save_partition(cfg.out, tree);
  write_manifest(cfg.out + ".manifest.json", "refine", cfg.seed,
                 {cfg.workspace_path, cfg.model_path, cfg.partition_path},
                 json{{"eps_p", cfg.eps_p}, {"eps_q", cfg.eps_q},
                      {"gain", cfg.gain}});
  json ok{{"partition", cfg.out},
          {"leaves", tree.leaf_count()},
          {"loop_count", stats.loop_count},
          {"loop_bound", stats.loop_bound},
          {"subdivided", stats.subdivided},
          {"dropped", stats.dropped},
          {"merged", stats.merged},
          {"residual_unsafe_volume", stats.residual_unsafe_volume}};
  std::cout << ok.dump(2) << std::endl;
  return 0;
}

inline int cmd_verify(const RunConfig& cfg) {
  WorkspaceFile wf = load_workspace_file(cfg.workspace_path);
  Mlp net = load_model(cfg.model_path);
  PartitionTree tree = load_partition(cfg.partition_path);
  HolonomicDynamics dyn(cfg.gain);
  std::vector<double> delta = default_delta(tree.q().dim());
  ViolationReport rep = violation_report(tree, net, dyn, wf.workspace,
                                         wf.robot, delta, cfg.eps_smooth);
  json line = report_to_json(rep);
  std::cout << line.dump() << std::endl;
  if (!cfg.out.empty()) write_text_file(cfg.out, line.dump() + "\n");
  return 0;
}

inline int cmd_retrain(const RunConfig& cfg) {
  WorkspaceFile wf = load_workspace_file(cfg.workspace_path);
  Dataset d = load_dataset(cfg.data_path);
  LossConfig lc = cfg.loss_config();
  if (cfg.gain != d.gain && d.gain != 0.0) {
    // the dataset sidecar wins; flags only fill gaps
  }
  auto t0 = std::chrono::steady_clock::now();
  PipelineResult res =
      run_pipeline(wf.workspace, wf.robot, d, parse_arch(cfg.arch),
                   cfg.eps_widths(), cfg.eps_p, cfg.eps_q, cfg.epochs, lc);
  if (res.tree.leaf_count() == 0) {
    emit_error("EmptyPartition", "no safe or mixed cells remain");
    return 3;
  }
  if (cfg.timings) {
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
    for (auto& r : res.history) r.wall_time_s = dt;  // total run time
  }
  std::string dir = cfg.out_dir;
  save_model(dir + "/model.json", res.net, cfg.seed,
             json{{"J", res.history.back().J}});
  save_partition(dir + "/partition.json", res.tree);
  save_reports(dir + "/report.jsonl", res.history);
  write_manifest(dir + "/manifest.json", "retrain", cfg.seed,
                 {cfg.workspace_path, cfg.data_path},
                 json{{"arch", cfg.arch},
                      {"eps", cfg.eps},
                      {"eps_p", cfg.eps_p},
                      {"eps_q", cfg.eps_q},
                      {"epochs", cfg.epochs},
                      {"base_steps", cfg.base_steps},
                      {"inner_steps", cfg.inner_steps},
                      {"batch", cfg.batch},
                      {"lr", cfg.lr},
                      {"lambda_step", cfg.lambda_step},
                      {"lambda_target", cfg.lambda_target},
                      {"eps_smooth", cfg.eps_smooth},
                      {"mode", d.mode}});
  json ok{{"out_dir", dir},
          {"epochs", cfg.epochs},
          {"violation_volume_epoch0", res.history.front().total_outside_volume},
          {"violation_volume_final", res.history.back().total_outside_volume},
          {"active_epoch0", res.history.front().active_cell_count},
          {"active_final", res.history.back().active_cell_count},
          {"leaves", res.tree.leaf_count()},
          {"residual_unsafe_volume", res.final_residual_unsafe}};
  std::cout << ok.dump(2) << std::endl;
  return 0;
}

inline int cmd_simulate(const RunConfig& cfg) {
  WorkspaceFile wf = load_workspace_file(cfg.workspace_path);
  Mlp net = load_model(cfg.model_path);
  HolonomicDynamics dyn(cfg.gain);
  Eigen::Vector3d goal = cfg.goal_vec();
  Rng rng(cfg.seed);
  Vec2 lo, hi;
  wf.workspace.bounding_box(lo, hi);

  json runs = json::array();
  int collisions = 0, reached = 0;
  for (int i = 0; i < cfg.sim_starts; ++i) {
    Configuration start;
    int guard = 0;
    do {
      start = {rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y),
               rng.uniform(0, kTwoPi)};
    } while (!configuration_safe(wf.robot, wf.workspace, start) &&
             ++guard < 10000);
    RolloutResult r = rollout(net, dyn, {start.x, start.y, start.theta},
                              cfg.sim_steps, wf.workspace, wf.robot, goal,
                              cfg.goal_tol);
    if (r.collision_step >= 0) ++collisions;
    if (r.reached) ++reached;
    runs.push_back({{"start", {start.x, start.y, start.theta}},
                    {"steps", r.states.size() - 1},
                    {"collision_step", r.collision_step},
                    {"reached", r.reached}});
  }
  json ok{{"starts", cfg.sim_starts},
          {"collisions", collisions},
          {"reached", reached},
          {"goal", {goal[0], goal[1], goal[2]}},
          {"runs", runs}};
  if (!cfg.out.empty()) {
    write_text_file(cfg.out, ok.dump(2) + "\n");
    write_manifest(cfg.out + ".manifest.json", "simulate", cfg.seed,
                   {cfg.workspace_path, cfg.model_path},
                   json{{"sim_starts", cfg.sim_starts},
                        {"sim_steps", cfg.sim_steps},
                        {"goal", cfg.goal},
                        {"goal_tol", cfg.goal_tol},
                        {"gain", cfg.gain}});
  }
  json summary = ok;
  summary.erase("runs");
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

inline int cmd_export_svg(const RunConfig& cfg) {
  WorkspaceFile wf = load_workspace_file(cfg.workspace_path);
  SvgFigure fig(wf.workspace);
  std::vector<std::string> inputs = {cfg.workspace_path};
  std::optional<PartitionTree> tree;
  if (!cfg.partition_path.empty()) {
    tree = load_partition(cfg.partition_path);
    fig.add_leaf_boxes(*tree);
    inputs.push_back(cfg.partition_path);
  }
  if (!cfg.model_path.empty()) {
    Mlp net = load_model(cfg.model_path);
    inputs.push_back(cfg.model_path);
    HolonomicDynamics dyn(cfg.gain);
    if (tree) fig.add_reach_boxes(*tree, net, dyn);
    // a few rollouts from deterministic starts
    Rng rng(cfg.seed);
    Vec2 lo, hi;
    wf.workspace.bounding_box(lo, hi);
    Eigen::Vector3d goal = cfg.goal_vec();
    for (int i = 0; i < 6; ++i) {
      Configuration start;
      int guard = 0;
      do {
        start = {rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y),
                 rng.uniform(0, kTwoPi)};
      } while (!configuration_safe(wf.robot, wf.workspace, start) &&
               ++guard < 10000);
      fig.add_rollout(rollout(net, dyn, {start.x, start.y, start.theta},
                              cfg.sim_steps, wf.workspace, wf.robot, goal,
                              cfg.goal_tol),
                      wf.robot);
    }
  }
  write_text_file(cfg.out, fig.str());
  write_manifest(cfg.out + ".manifest.json", "export-svg", cfg.seed, inputs,
                 json{{"gain", cfg.gain}, {"goal", cfg.goal}});
  std::cout << json{{"svg", cfg.out}}.dump(2) << std::endl;
  return 0;
}

}  // namespace cli_detail

// Dispatches one CLI invocation; returns the process exit code.
// 0 success, 2 validation error, 3 unreachable goal / empty partition,
// 1 internal error.
inline int run_cli(std::vector<std::string> args) {
  CLI::App app{"Safety-aware training of neural network controllers for "
               "planar robots"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  RunConfig cfg;
  // pre-scan for --config so that file values become defaults
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") cfg.load_json(args[i + 1]);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--threads", cfg.threads, "worker thread cap (0 = auto)");
  app.add_option("--seed", cfg.seed, "master seed");

  auto add_common = [&](CLI::App* sub) {
    sub->fallthrough();  // let --seed/--threads/--config follow the subcommand
    sub->add_option("--workspace", cfg.workspace_path, "workspace JSON file");
    sub->add_option("--out", cfg.out, "output path");
    sub->add_option("--gain", cfg.gain, "holonomic gain K");
    sub->add_option("--goal", cfg.goal, "goal configuration x,y,theta");
  };

  CLI::App* validate = app.add_subcommand("validate", "validate a workspace file");
  validate->add_option("workspace", cfg.workspace_path, "workspace JSON file")
      ->required();

  CLI::App* gen = app.add_subcommand("gen-data", "plan demonstrations and build the dataset");
  add_common(gen);
  gen->add_option("--trajectories", cfg.trajectories, "number of plans");
  gen->add_option("--mode", cfg.mode, "shaping mode: saturating | paper");
  gen->add_option("--u-max", cfg.u_max, "control magnitude clamp");
  gen->add_option("--planner-iters", cfg.planner_iters, "RRT* iterations");
  gen->add_option("--planner-step", cfg.planner_step, "steering step");
  gen->add_option("--rewire-radius", cfg.rewire_radius, "rewire radius");
  gen->add_option("--check-resolution", cfg.check_resolution,
                  "collision sampling step");
  gen->add_option("--sample-spacing", cfg.sample_spacing,
                  "dataset sample spacing");

  CLI::App* tb = app.add_subcommand("train-base", "fit the base regression problem");
  add_common(tb);
  tb->add_option("--data", cfg.data_path, "dataset CSV")->required();
  tb->add_option("--arch", cfg.arch, "layer sizes, e.g. 3x16x16x3");
  tb->add_option("--steps", cfg.base_steps, "Adam steps");
  tb->add_option("--batch", cfg.batch, "mini-batch size (0 = full)");
  tb->add_option("--lr", cfg.lr, "learning rate");
  tb->add_option("--lambda-e", cfg.lambda_e, "data term weight (<0: 1/|D|)");
  tb->add_option("--lambda-r", cfg.lambda_r,
                 "ridge weight (<0: 1/#params)");

  CLI::App* part = app.add_subcommand("partition", "build the safe-set cell cover");
  add_common(part);
  part->add_option("--eps", cfg.eps, "thresholds eps_x,eps_y,eps_theta");

  CLI::App* refine = app.add_subcommand("refine", "refine a partition for a controller");
  add_common(refine);
  refine->add_option("--model", cfg.model_path, "model JSON")->required();
  refine->add_option("--partition", cfg.partition_path, "partition JSON")
      ->required();
  refine->add_option("--eps-p", cfg.eps_p, "footprint violation margin");
  refine->add_option("--eps-q", cfg.eps_q, "misc violation margin");

  CLI::App* retrain = app.add_subcommand("retrain", "full safety-aware training loop");
  add_common(retrain);
  retrain->add_option("--data", cfg.data_path, "dataset CSV");
  retrain->add_option("--arch", cfg.arch, "layer sizes");
  retrain->add_option("--eps", cfg.eps, "partition thresholds");
  retrain->add_option("--eps-p", cfg.eps_p, "footprint violation margin");
  retrain->add_option("--eps-q", cfg.eps_q, "misc violation margin");
  retrain->add_option("--epochs", cfg.epochs, "refinement/update epochs");
  retrain->add_option("--base-steps", cfg.base_steps, "base Adam steps");
  retrain->add_option("--inner-steps", cfg.inner_steps, "Adam steps per epoch");
  retrain->add_option("--batch", cfg.batch, "mini-batch size (0 = full)");
  retrain->add_option("--lr", cfg.lr, "learning rate");
  retrain->add_option("--lambda-step", cfg.lambda_step, "lambda_S ramp step");
  retrain->add_option("--lambda-target", cfg.lambda_target,
                      "lambda_S ramp target");
  retrain->add_option("--delta", cfg.delta,
                      "volume scaling per dimension, e.g. 1,1,0.159");
  retrain->add_option("--out-dir", cfg.out_dir, "output directory");
  retrain->add_flag("--timings", cfg.timings,
                    "record wall time in reports (off keeps outputs "
                    "byte-reproducible)");

  CLI::App* verify = app.add_subcommand("verify", "one violation report for a model + partition");
  add_common(verify);
  verify->add_option("--model", cfg.model_path, "model JSON")->required();
  verify->add_option("--partition", cfg.partition_path, "partition JSON")
      ->required();

  CLI::App* sim = app.add_subcommand("simulate", "closed-loop rollouts from random safe starts");
  add_common(sim);
  sim->add_option("--model", cfg.model_path, "model JSON")->required();
  sim->add_option("--starts", cfg.sim_starts, "number of rollouts");
  sim->add_option("--steps", cfg.sim_steps, "steps per rollout");
  sim->add_option("--goal-tol", cfg.goal_tol, "goal ball radius");

  CLI::App* svg = app.add_subcommand("export-svg", "export workspace/partition/reach figure");
  add_common(svg);
  svg->add_option("--partition", cfg.partition_path, "partition JSON");
  svg->add_option("--model", cfg.model_path, "model JSON");
  svg->add_option("--steps", cfg.sim_steps, "rollout steps in the figure");

  std::vector<const char*> argv;
  argv.push_back("celltrain");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help / --version
      std::cout << app.help() << std::endl;
      return 0;
    }
    cli_detail::emit_error("UsageError", e.what());
    return 2;
  }

  worker_cap() = cfg.threads <= 0 ? 0 : static_cast<unsigned>(cfg.threads);

  try {
    if (validate->parsed()) return cli_detail::cmd_validate(cfg);
    if (gen->parsed()) return cli_detail::cmd_gen_data(cfg);
    if (tb->parsed()) return cli_detail::cmd_train_base(cfg);
    if (part->parsed()) return cli_detail::cmd_partition(cfg);
    if (refine->parsed()) return cli_detail::cmd_refine(cfg);
    if (retrain->parsed()) return cli_detail::cmd_retrain(cfg);
    if (verify->parsed()) return cli_detail::cmd_verify(cfg);
    if (sim->parsed()) return cli_detail::cmd_simulate(cfg);
    if (svg->parsed()) return cli_detail::cmd_export_svg(cfg);
  } catch (const ValidationError& e) {
    cli_detail::emit_error("ValidationError", e.what(), e.where);
    return 2;
  } catch (const UnreachableGoal& e) {
    cli_detail::emit_error("Unreachable", e.what());
    return 3;
  } catch (const Error& e) {
    cli_detail::emit_error("InternalError", e.what());
    return 1;
  } catch (const std::exception& e) {
    cli_detail::emit_error("InternalError", e.what());
    return 1;
  }
  return 0;
}

}  // namespace celltrain
