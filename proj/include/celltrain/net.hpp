#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "celltrain/boxes.hpp"
#include "celltrain/errors.hpp"
#include "celltrain/rng.hpp"

namespace celltrain {

enum class Activation { kTanh, kIdentity };

inline Eigen::ArrayXd act_apply(Activation a, const Eigen::ArrayXd& x) {
  return a == Activation::kTanh ? x.tanh() : x;
}

inline Eigen::ArrayXd act_deriv(Activation a, const Eigen::ArrayXd& pre) {
  if (a == Activation::kIdentity) return Eigen::ArrayXd::Ones(pre.size());
  Eigen::ArrayXd t = pre.tanh();
  return 1.0 - t * t;
}

struct Layer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Activation act = Activation::kTanh;
};

// Parameter-shaped gradient / moment container.
struct ParamGrad {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  void add_scaled(const ParamGrad& g, double a) {
    for (std::size_t i = 0; i < dW.size(); ++i) {
      dW[i] += a * g.dW[i];
      db[i] += a * g.db[i];
    }
  }
  void scale(double a) {
    for (std::size_t i = 0; i < dW.size(); ++i) {
      dW[i] *= a;
      db[i] *= a;
    }
  }
  double squared_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dW.size(); ++i)
      s += dW[i].squaredNorm() + db[i].squaredNorm();
    return s;
  }
};

// Fully connected feed-forward network u = h^L(h^{L-1}(... h^1(z) ...)),
// h^i(x) = act^i(W^i x + b^i). Hidden activations are tanh; an identity
// output layer keeps controls unbounded.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw BadArch("network needs at least one layer");
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
      if (layers_[i + 1].W.cols() != layers_[i].W.rows())
        throw BadArch("layer dimensions do not chain");
  }

  // Xavier-uniform weights, zero biases, deterministic under seed.
  static Mlp xavier(const std::vector<int>& arch, std::uint64_t seed) {
    if (arch.size() < 2) throw BadArch("arch needs input and output sizes");
    for (int n : arch)
      if (n <= 0) throw BadArch("arch sizes must be positive");
    Rng rng(seed);
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < arch.size(); ++i) {
      Layer l;
      int rows = arch[i + 1];
      int cols = arch[i];
      double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
      l.W.resize(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) l.W(r, c) = rng.uniform(-bound, bound);
      l.b = Eigen::VectorXd::Zero(rows);
      l.act = (i + 2 == arch.size()) ? Activation::kIdentity
                                     : Activation::kTanh;
      layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers));
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Eigen::Index input_dim() const { return layers_.front().W.cols(); }
  Eigen::Index output_dim() const { return layers_.back().W.rows(); }

  std::vector<int> arch() const {
    std::vector<int> a;
    a.push_back(static_cast<int>(input_dim()));
    for (const auto& l : layers_) a.push_back(static_cast<int>(l.W.rows()));
    return a;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_)
      n += static_cast<std::size_t>(l.W.size() + l.b.size());
    return n;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& z) const {
    if (z.size() != input_dim())
      throw DimensionMismatch("forward: input dimension");
    Eigen::VectorXd x = z;
    for (const auto& l : layers_)
      x = act_apply(l.act, (l.W * x + l.b).array()).matrix();
    return x;
  }

  // Column-per-sample batch evaluation.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& Z) const {
    if (Z.rows() != input_dim())
      throw DimensionMismatch("forward_batch: input dimension");
    Eigen::MatrixXd X = Z;
    for (const auto& l : layers_) {
      Eigen::MatrixXd P = (l.W * X).colwise() + l.b;
      X = l.act == Activation::kTanh ? P.array().tanh().matrix() : P;
    }
    return X;
  }

  ParamGrad zero_grad() const {
    ParamGrad g;
    for (const auto& l : layers_) {
      g.dW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
      g.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
    return g;
  }

 private:
  std::vector<Layer> layers_;
};

// Batched forward pass keeping the activations needed for backprop.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;  // X^{i-1} per layer
  std::vector<Eigen::MatrixXd> pre;     // W^i X + b^i per layer
  Eigen::MatrixXd out;
};

inline ForwardTrace forward_trace(const Mlp& net, const Eigen::MatrixXd& Z) {
  if (Z.rows() != net.input_dim())
    throw DimensionMismatch("forward_trace: input dimension");
  ForwardTrace t;
  Eigen::MatrixXd X = Z;
  for (const auto& l : net.layers()) {
    t.inputs.push_back(X);
    Eigen::MatrixXd P = (l.W * X).colwise() + l.b;
    t.pre.push_back(P);
    X = l.act == Activation::kTanh ? P.array().tanh().matrix() : P;
  }
  t.out = X;
  return t;
}

// Accumulates d(scalar)/d(W, b) into g for upstream cotangents dOut on the
// batch outputs.
inline void backward_into(const Mlp& net, const ForwardTrace& t,
                          Eigen::MatrixXd dOut, ParamGrad& g) {
  for (std::size_t i = net.layers().size(); i-- > 0;) {
    const Layer& l = net.layers()[i];
    Eigen::MatrixXd dP =
        l.act == Activation::kTanh
            ? (dOut.array() * (1.0 - t.pre[i].array().tanh().square()))
                  .matrix()
            : dOut;
    g.dW[i] += dP * t.inputs[i].transpose();
    g.db[i] += dP.rowwise().sum();
    if (i > 0) dOut = l.W.transpose() * dP;
  }
}

}  // namespace celltrain
