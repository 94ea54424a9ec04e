#pragma once

#include <Eigen/Dense>
#include <vector>

#include "celltrain/boxes.hpp"
#include "celltrain/errors.hpp"
#include "celltrain/net.hpp"

namespace celltrain {

// Interval bound propagation state kept for the backward pass.
struct IbpTrace {
  std::vector<Eigen::VectorXd> in_lo, in_hi;    // layer input bounds
  std::vector<Eigen::VectorXd> pre_lo, pre_hi;  // pre-activation bounds
  Eigen::VectorXd out_lo, out_hi;
};

inline IbpTrace ibp_trace(const Mlp& net, const Box& box) {
  if (static_cast<Eigen::Index>(box.dim()) != net.input_dim())
    throw DimensionMismatch("ibp: box dimension");
  IbpTrace t;
  Eigen::VectorXd lo(box.dim()), hi(box.dim());
  for (std::size_t i = 0; i < box.dim(); ++i) {
    lo[static_cast<Eigen::Index>(i)] = box[i].lo;
    hi[static_cast<Eigen::Index>(i)] = box[i].hi;
  }
  for (const auto& l : net.layers()) {
    t.in_lo.push_back(lo);
    t.in_hi.push_back(hi);
    Eigen::VectorXd c = 0.5 * (lo + hi);
    Eigen::VectorXd r = 0.5 * (hi - lo);
    Eigen::VectorXd pc = l.W * c + l.b;
    Eigen::VectorXd pr = l.W.cwiseAbs() * r;
    Eigen::VectorXd plo = pc - pr;
    Eigen::VectorXd phi = pc + pr;
    t.pre_lo.push_back(plo);
    t.pre_hi.push_back(phi);
    // Monotone activations map interval endpoints to endpoints.
    lo = act_apply(l.act, plo.array()).matrix();
    hi = act_apply(l.act, phi.array()).matrix();
  }
  t.out_lo = lo;
  t.out_hi = hi;
  return t;
}

// Sound output enclosure: forward(net, z) lies in the result for every z in
// box (componentwise).
inline Box ibp(const Mlp& net, const Box& box) {
  IbpTrace t = ibp_trace(net, box);
  std::vector<Interval> dims(static_cast<std::size_t>(t.out_lo.size()));
  for (std::size_t i = 0; i < dims.size(); ++i)
    dims[i] = {t.out_lo[static_cast<Eigen::Index>(i)],
               t.out_hi[static_cast<Eigen::Index>(i)]};
  return Box(std::move(dims));
}

// Reverse-mode gradient of a scalar with cotangents (g_lo, g_hi) on the IBP
// output bounds. The |W| factor differentiates through sign(W), with
// subgradient 0 at exact zeros.
inline void ibp_backward_into(const Mlp& net, const IbpTrace& t,
                              Eigen::VectorXd g_lo, Eigen::VectorXd g_hi,
                              ParamGrad& g) {
  for (std::size_t i = net.layers().size(); i-- > 0;) {
    const Layer& l = net.layers()[i];
    Eigen::ArrayXd p_lo = g_lo.array() * act_deriv(l.act, t.pre_lo[i].array());
    Eigen::ArrayXd p_hi = g_hi.array() * act_deriv(l.act, t.pre_hi[i].array());
    Eigen::VectorXd cbar = (p_lo + p_hi).matrix();
    Eigen::VectorXd rbar = (p_hi - p_lo).matrix();
    Eigen::VectorXd c = 0.5 * (t.in_lo[i] + t.in_hi[i]);
    Eigen::VectorXd r = 0.5 * (t.in_hi[i] - t.in_lo[i]);
    Eigen::MatrixXd signW =
        l.W.unaryExpr([](double w) { return w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0); });
    g.dW[i] += cbar * c.transpose() +
               (rbar * r.transpose()).cwiseProduct(signW);
    g.db[i] += cbar;
    if (i > 0) {
      Eigen::VectorXd c_in = l.W.transpose() * cbar;
      Eigen::VectorXd r_in = l.W.cwiseAbs().transpose() * rbar;
      g_lo = 0.5 * (c_in - r_in);
      g_hi = 0.5 * (c_in + r_in);
    }
  }
}

}  // namespace celltrain
