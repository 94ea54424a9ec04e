#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "celltrain/dataset.hpp"
#include "celltrain/errors.hpp"
#include "celltrain/ibp.hpp"
#include "celltrain/net.hpp"
#include "celltrain/parallel.hpp"
#include "celltrain/partition.hpp"
#include "celltrain/reach.hpp"

namespace celltrain {

// lambda_S ramp: min(step * epoch, target), starting at 0 for epoch 0.
struct LambdaSchedule {
  double step = 0.0;
  double target = 0.0;
  double at(int epoch) const {
    return std::min(step * static_cast<double>(epoch), target);
  }
};

struct LossConfig {
  double lambda_E = -1.0;  // < 0: 1/|D|
  double lambda_R = -1.0;  // < 0: 1/(#weights + #biases)
  LambdaSchedule lambda_s;
  std::vector<double> delta;  // empty: default (1, 1, 1/2pi, 1...)
  double eps_smooth = 1e-12;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int base_steps = 2000;   // full-batch Adam steps for the base problem
  int inner_steps = 200;   // Adam steps per retraining epoch
  int batch = 0;           // 0: full batch
  std::uint64_t seed = 1;

  double effective_lambda_e(std::size_t n) const {
    return lambda_E >= 0 ? lambda_E : 1.0 / static_cast<double>(n);
  }
  double effective_lambda_r(std::size_t params) const {
    return lambda_R >= 0 ? lambda_R : 1.0 / static_cast<double>(params);
  }
};

// J = lambda_E sum |u - phi(z)|^2 + lambda_R (sum W^2 + sum b^2).
inline std::pair<double, ParamGrad> base_loss_and_grad(const Mlp& net,
                                                       const Dataset& data,
                                                       const LossConfig& cfg) {
  if (data.size() == 0) throw EmptyDataset("base loss needs data points");
  double lam_e = cfg.effective_lambda_e(data.size());
  double lam_r = cfg.effective_lambda_r(net.parameter_count());

  ForwardTrace t = forward_trace(net, data.states);
  Eigen::MatrixXd resid = t.out - data.controls;
  double ridge = 0.0;
  for (const auto& l : net.layers())
    ridge += l.W.squaredNorm() + l.b.squaredNorm();
  double J = lam_e * resid.squaredNorm() + lam_r * ridge;

  ParamGrad g = net.zero_grad();
  backward_into(net, t, 2.0 * lam_e * resid, g);
  for (std::size_t i = 0; i < g.dW.size(); ++i) {
    g.dW[i] += 2.0 * lam_r * net.layers()[i].W;
    g.db[i] += 2.0 * lam_r * net.layers()[i].b;
  }
  return {J, std::move(g)};
}

// Safe-cover context frozen for one epoch of penalty evaluations.
struct SafeCover {
  std::vector<std::uint32_t> safe_ids;
  LeafIndex index;

  explicit SafeCover(const PartitionTree& tree)
      : safe_ids(tree.safe_leaf_ids()), index(tree, safe_ids) {}
};

// V(X, P_A): cube-root scaled volume of X minus cube-root covered volume,
// clamped at zero, accumulated over theta wrap fragments. When grad_lo /
// grad_hi are non-null they receive dV/d(box bounds) for the state box
// (x, y, theta, misc...), with subgradient 0 at clamp and tie points.
inline double metric_v(const StateBox& box, const PartitionTree& tree,
                       const SafeCover& cover,
                       const std::vector<double>& delta, double eps_smooth,
                       Eigen::VectorXd* grad_lo = nullptr,
                       Eigen::VectorXd* grad_hi = nullptr) {
  std::size_t dim = box.dim();
  if (grad_lo) {
    grad_lo->setZero(static_cast<Eigen::Index>(dim));
    grad_hi->setZero(static_cast<Eigen::Index>(dim));
  }
  double total = 0.0;

  auto frags = wrap_theta(box.cfg);
  for (std::size_t fi = 0; fi < frags.size(); ++fi) {
    const ConfigBox& frag = frags[fi];
    // moving endpoints: fragment 0 keeps the source lo, the last keeps hi
    bool lo_moves = fi == 0;
    bool hi_moves = fi + 1 == frags.size();

    std::vector<double> w(dim), dlo(dim);
    w[0] = frag.x.width();
    w[1] = frag.y.width();
    w[2] = frag.theta.width();
    for (std::size_t d = 0; d < box.misc.dim(); ++d)
      w[3 + d] = box.misc[d].width();

    double vol = 1.0;
    for (std::size_t d = 0; d < dim; ++d) vol *= delta[d] * w[d];
    if (vol <= 0.0) continue;

    std::vector<double> frag_lo = {frag.x.lo, frag.y.lo, frag.theta.lo};
    std::vector<double> frag_hi = {frag.x.hi, frag.y.hi, frag.theta.hi};
    for (std::size_t d = 0; d < box.misc.dim(); ++d) {
      frag_lo.push_back(box.misc[d].lo);
      frag_hi.push_back(box.misc[d].hi);
    }

    double covered = 0.0;
    std::vector<double> dcov_lo(dim, 0.0), dcov_hi(dim, 0.0);
    for (std::uint32_t sid : cover.index.candidates(frag)) {
      const StateBox& sb = tree.cell(sid).box;
      std::vector<double> s_lo = {sb.cfg.x.lo, sb.cfg.y.lo, sb.cfg.theta.lo};
      std::vector<double> s_hi = {sb.cfg.x.hi, sb.cfg.y.hi, sb.cfg.theta.hi};
      for (std::size_t d = 0; d < sb.misc.dim(); ++d) {
        s_lo.push_back(sb.misc[d].lo);
        s_hi.push_back(sb.misc[d].hi);
      }
      double inter = 1.0;
      std::vector<double> ow(dim);
      bool empty = false;
      for (std::size_t d = 0; d < dim; ++d) {
        ow[d] = std::min(frag_hi[d], s_hi[d]) - std::max(frag_lo[d], s_lo[d]);
        if (ow[d] <= 0.0) {
          empty = true;
          break;
        }
        inter *= delta[d] * ow[d];
      }
      if (empty) continue;
      covered += inter;
      if (grad_lo) {
        for (std::size_t d = 0; d < dim; ++d) {
          double partial = inter / ow[d];  // d(inter)/d(overlap width)
          if (frag_hi[d] < s_hi[d]) dcov_hi[d] += partial;
          if (frag_lo[d] > s_lo[d]) dcov_lo[d] -= partial;
        }
      }
    }

    double a = std::cbrt(vol);
    double b = std::cbrt(covered + eps_smooth);
    double v = a - b;
    if (v <= 0.0) continue;  // clamped: no contribution, no gradient
    total += v;

    if (grad_lo) {
      double da = 1.0 / (3.0 * a * a);  // d cbrt(vol)/d vol
      double db = 1.0 / (3.0 * b * b);
      for (std::size_t d = 0; d < dim; ++d) {
        double dvol = vol / w[d];
        double g_lo_d = -da * dvol - db * dcov_lo[d];
        double g_hi_d = da * dvol - db * dcov_hi[d];
        // theta fragment endpoints move only with the source box endpoints
        bool apply_lo = d != 2 || lo_moves;
        bool apply_hi = d != 2 || hi_moves;
        if (apply_lo) (*grad_lo)[static_cast<Eigen::Index>(d)] += g_lo_d;
        if (apply_hi) (*grad_hi)[static_cast<Eigen::Index>(d)] += g_hi_d;
      }
    }
  }
  return total;
}

// S = sum over cells of V(F(X), P_A)^2 and its parameter gradient through
// the interval bounds. Contributions accumulate in cell-id order.
inline std::pair<double, ParamGrad> penalty_and_grad(
    const Mlp& net, const PartitionTree& tree,
    const std::vector<std::uint32_t>& cells, const SafeCover& cover,
    const Dynamics& dyn, const std::vector<double>& delta, double eps_smooth,
    bool with_grad = true) {
  struct CellOut {
    double v2 = 0.0;
    ParamGrad g;
    bool has_g = false;
  };
  std::vector<CellOut> outs(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const StateBox& box = tree.cell(cells[i]).box;
    IbpTrace trace = ibp_trace(net, box.flat());
    std::vector<Interval> udims(static_cast<std::size_t>(trace.out_lo.size()));
    for (std::size_t d = 0; d < udims.size(); ++d)
      udims[d] = {trace.out_lo[static_cast<Eigen::Index>(d)],
                  trace.out_hi[static_cast<Eigen::Index>(d)]};
    Box ubox(std::move(udims));
    StateBox reached = dyn.propagate(box, ubox);

    Eigen::VectorXd gy_lo, gy_hi;
    double v = metric_v(reached, tree, cover, delta, eps_smooth,
                        with_grad ? &gy_lo : nullptr,
                        with_grad ? &gy_hi : nullptr);
    outs[i].v2 = v * v;
    if (with_grad && v > 0.0) {
      Eigen::VectorXd gu_lo, gu_hi;
      dyn.pullback(box, ubox, 2.0 * v * gy_lo, 2.0 * v * gy_hi, gu_lo, gu_hi);
      outs[i].g = net.zero_grad();
      ibp_backward_into(net, trace, gu_lo, gu_hi, outs[i].g);
      outs[i].has_g = true;
    }
  });

  double S = 0.0;
  ParamGrad g = net.zero_grad();
  for (const auto& o : outs) {
    S += o.v2;
    if (o.has_g) g.add_scaled(o.g, 1.0);
  }
  return {S, std::move(g)};
}

// Adam with bias correction; moments are parameter-shaped.
class Adam {
 public:
  explicit Adam(const Mlp& net) : m_(net.zero_grad()), v_(net.zero_grad()) {}

  void step(Mlp& net, const ParamGrad& g, const LossConfig& cfg) {
    ++t_;
    double c1 = 1.0 - std::pow(cfg.beta1, t_);
    double c2 = 1.0 - std::pow(cfg.beta2, t_);
    for (std::size_t i = 0; i < m_.dW.size(); ++i) {
      m_.dW[i] = cfg.beta1 * m_.dW[i] + (1.0 - cfg.beta1) * g.dW[i];
      m_.db[i] = cfg.beta1 * m_.db[i] + (1.0 - cfg.beta1) * g.db[i];
      v_.dW[i] = cfg.beta2 * v_.dW[i] +
                 (1.0 - cfg.beta2) * g.dW[i].cwiseProduct(g.dW[i]);
      v_.db[i] = cfg.beta2 * v_.db[i] +
                 (1.0 - cfg.beta2) * g.db[i].cwiseProduct(g.db[i]);
      net.layers()[i].W -= (cfg.lr / c1) *
                           m_.dW[i].cwiseQuotient(
                               (v_.dW[i] / c2).cwiseSqrt() +
                               Eigen::MatrixXd::Constant(v_.dW[i].rows(),
                                                         v_.dW[i].cols(),
                                                         cfg.adam_eps));
      net.layers()[i].b -= (cfg.lr / c1) *
                           m_.db[i].cwiseQuotient(
                               (v_.db[i] / c2).cwiseSqrt() +
                               Eigen::VectorXd::Constant(v_.db[i].size(),
                                                         cfg.adam_eps));
    }
  }

  int steps_taken() const { return t_; }

 private:
  ParamGrad m_, v_;
  int t_ = 0;
};

struct TrainState {
  Mlp net;
  Adam opt;
  double last_J = 0.0;
  std::vector<ViolationReport> history;

  TrainState(Mlp n) : net(std::move(n)), opt(net) {}
};

namespace detail {

// Deterministic contiguous mini-batch view; the full dataset when batch <= 0.
inline Dataset batch_view(const Dataset& data, int batch, int step) {
  if (batch <= 0 || static_cast<std::size_t>(batch) >= data.size())
    return data;
  Dataset out = data;
  Eigen::Index n = static_cast<Eigen::Index>(data.size());
  Eigen::Index b = static_cast<Eigen::Index>(batch);
  Eigen::Index start = (static_cast<Eigen::Index>(step) * b) % n;
  Eigen::Index take = std::min(b, n - start);
  out.states = data.states.middleCols(start, take);
  out.controls = data.controls.middleCols(start, take);
  return out;
}

}  // namespace detail

// Solves the base regression problem with full-batch Adam.
inline TrainState train_base(const Dataset& data, const std::vector<int>& arch,
                             const LossConfig& cfg) {
  if (data.size() == 0) throw EmptyDataset("train_base needs data");
  TrainState ts(Mlp::xavier(arch, cfg.seed));
  for (int s = 0; s < cfg.base_steps; ++s) {
    Dataset view = detail::batch_view(data, cfg.batch, s);
    auto [J, g] = base_loss_and_grad(ts.net, view, cfg);
    ts.opt.step(ts.net, g, cfg);
    ts.last_J = J;
  }
  auto [J, g] = base_loss_and_grad(ts.net, data, cfg);
  ts.last_J = J;
  return ts;
}

struct PipelineResult {
  Mlp net;
  PartitionTree tree;
  std::vector<ViolationReport> history;
  double final_residual_unsafe = 0.0;
};

// Full training loop: base fit, safe-set partition, then alternating
// refinement and penalized updates under the lambda_S ramp.
inline PipelineResult run_pipeline(const Workspace& ws, const RobotBody& robot,
                                   const Dataset& data,
                                   const std::vector<int>& arch,
                                   const EpsWidths& eps_w, double eps_p,
                                   double eps_q, int n_epochs,
                                   LossConfig cfg, const Box& q = Box{}) {
  HolonomicDynamics dyn(data.gain);
  if (cfg.delta.empty()) cfg.delta = default_delta(q.dim());

  TrainState ts = train_base(data, arch, cfg);
  PartitionTree tree = build_partition(ws, robot, q, eps_w);

  double residual_total = 0.0;
  {
    ViolationReport rep = violation_report(tree, ts.net, dyn, ws, robot,
                                           cfg.delta, cfg.eps_smooth);
    rep.epoch = 0;
    rep.J = ts.last_J;
    rep.J_S = ts.last_J;
    rep.lambda_S = 0.0;
    ts.history.push_back(rep);
  }

  for (int epoch = 1; epoch <= n_epochs; ++epoch) {
    RefineStats stats = refine_partition(tree, ts.net, dyn, ws, robot, eps_p,
                                         eps_q, cfg.delta);
    residual_total += stats.residual_unsafe_volume;
    double lambda = cfg.lambda_s.at(epoch);

    // refresh activity flags for the frozen penalty set of this epoch
    violation_report(tree, ts.net, dyn, ws, robot, cfg.delta, cfg.eps_smooth);
    std::vector<std::uint32_t> active;
    for (const Cell& c : tree.cells())
      if (c.leaf && c.active) active.push_back(c.id);
    SafeCover cover(tree);

    for (int s = 0; s < cfg.inner_steps; ++s) {
      Dataset view = detail::batch_view(data, cfg.batch, s);
      auto [J, g] = base_loss_and_grad(ts.net, view, cfg);
      if (lambda > 0.0 && !active.empty()) {
        auto [S, gs] = penalty_and_grad(ts.net, tree, active, cover, dyn,
                                        cfg.delta, cfg.eps_smooth);
        g.add_scaled(gs, lambda);
        (void)S;
      }
      ts.opt.step(ts.net, g, cfg);
      ts.last_J = J;
    }

    ViolationReport rep = violation_report(tree, ts.net, dyn, ws, robot,
                                           cfg.delta, cfg.eps_smooth);
    std::vector<std::uint32_t> active_now;
    for (const Cell& c : tree.cells())
      if (c.leaf && c.active) active_now.push_back(c.id);
    auto [J_full, g_unused] = base_loss_and_grad(ts.net, data, cfg);
    (void)g_unused;
    auto [S_now, gs_unused] =
        penalty_and_grad(ts.net, tree, active_now, cover, dyn, cfg.delta,
                         cfg.eps_smooth, /*with_grad=*/false);
    (void)gs_unused;
    rep.epoch = epoch;
    rep.J = J_full;
    rep.J_S = J_full + lambda * S_now;
    rep.lambda_S = lambda;
    rep.residual_unsafe_volume = residual_total;
    ts.history.push_back(rep);
    ts.last_J = J_full;
  }

  return {std::move(ts.net), std::move(tree), std::move(ts.history),
          residual_total};
}

}  // namespace celltrain
