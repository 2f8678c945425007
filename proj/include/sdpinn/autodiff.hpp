#pragma once

// Differentiation engine for the coordinate network.
//
// Input derivatives are propagated forward as second-order jets: every layer
// carries seven channels per point (value, d/dx, d/dy, d/dt, d2/dx2, d2/dy2,
// d2/dt2). The forward pass keeps the per-layer channel matrices as a trace;
// parameter gradients of any scalar built from the output channels are then
// obtained by a reverse sweep over that trace (forward-over-reverse), which
// yields the third-order mixed terms d/dtheta d2Net/dx2 needed by the PDE loss.
//
// Channel matrices are laid out as `width x (channels * batch)`: block c holds
// columns [c * batch, (c + 1) * batch).

#include "sdpinn/mlp.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sdpinn {

enum class JetComponent : int { Value = 0, Dx, Dy, Dt, Dxx, Dyy, Dtt };
inline constexpr int kJetChannels = 7;

/// Network value with first and pure second input derivatives.
struct Jet2 {
  double value = 0.0;
  std::array<double, 3> d1{};  // u_x, u_y, u_t
  std::array<double, 3> d2{};  // u_xx, u_yy, u_tt
};

/// Flat d(loss)/d(theta) in the order produced by flatten(): per layer,
/// weights row-major followed by biases.
using GradientVector = Vector;

/// How many derivative channels a trace carries.
enum class JetOrder : int { ValueOnly = 0, Second = 2 };

inline int channel_count(JetOrder order) { return order == JetOrder::Second ? kJetChannels : 1; }

/// Forward trace of a batch of points.
struct JetTrace {
  JetOrder order = JetOrder::Second;
  Eigen::Index batch = 0;
  std::vector<Matrix> inputs;  // per layer input channels, fan_in x (C * batch)
  std::vector<Matrix> preact;  // per hidden layer pre-activation channels
  Matrix output;               // 1 x (C * batch)

  [[nodiscard]] int channels() const { return channel_count(order); }

  [[nodiscard]] double at(JetComponent c, Eigen::Index point) const {
    return output(0, Eigen::Index(c) * batch + point);
  }

  [[nodiscard]] Jet2 jet(Eigen::Index point) const {
    Jet2 j;
    j.value = at(JetComponent::Value, point);
    if (order == JetOrder::Second) {
      for (int i = 0; i < 3; ++i) {
        j.d1[i] = output(0, (1 + i) * batch + point);
        j.d2[i] = output(0, (4 + i) * batch + point);
      }
    }
    return j;
  }
};

namespace detail {

// tanh(z) = 1 - 2 / (exp(2z) + 1): vectorises through Eigen's packet exp and
// saturates to +-1; absolute error stays at the unit roundoff.
template <class Expr>
inline auto fast_tanh(const Expr& z) {
  return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

// tanh jet: h = tanh(z), h_i = s1 z_i, h_ii = s2 z_i^2 + s1 z_ii.
inline Matrix tanh_jet(const Matrix& z, Eigen::Index batch, int channels) {
  Matrix h(z.rows(), z.cols());
  h.middleCols(0, batch).array() = fast_tanh(z.middleCols(0, batch).array());
  if (channels == 1) return h;
  const auto hv = h.middleCols(0, batch).array();
  const Eigen::ArrayXXd s1 = 1.0 - hv.square();
  const Eigen::ArrayXXd s2 = -2.0 * hv * s1;
  for (int i = 0; i < 3; ++i) {
    auto zi = z.middleCols((1 + i) * batch, batch).array();
    auto zii = z.middleCols((4 + i) * batch, batch).array();
    h.middleCols((1 + i) * batch, batch).array() = s1 * zi;
    h.middleCols((4 + i) * batch, batch).array() = s2 * zi.square() + s1 * zii;
  }
  return h;
}

// Reverse sweep of tanh_jet, in place: output adjoints become pre-activation
// adjoints.
//   zbar_ii = hbar_ii s1
//   zbar_i  = hbar_i s1 + 2 hbar_ii s2 z_i
//   zbar    = hbar s1 + sum_i [hbar_i s2 z_i + hbar_ii (s3 z_i^2 + s2 z_ii)]
// where s1, s2, s3 are the first three derivatives of tanh at z.
inline void tanh_jet_adjoint(const Matrix& z, const Matrix& h, Matrix& bar, Eigen::Index batch,
                             int channels) {
  const auto hv = h.middleCols(0, batch).array();
  const Eigen::ArrayXXd s1 = 1.0 - hv.square();
  if (channels == 1) {
    bar.array() *= s1;
    return;
  }
  const Eigen::ArrayXXd s2 = -2.0 * hv * s1;
  const Eigen::ArrayXXd s3 = -2.0 * s1.square() + 4.0 * hv.square() * s1;
  auto value_bar = bar.middleCols(0, batch).array();
  value_bar *= s1;
  for (int i = 0; i < 3; ++i) {
    auto zi = z.middleCols((1 + i) * batch, batch).array();
    auto zii = z.middleCols((4 + i) * batch, batch).array();
    auto hi_bar = bar.middleCols((1 + i) * batch, batch).array();
    auto hii_bar = bar.middleCols((4 + i) * batch, batch).array();
    value_bar += hi_bar * s2 * zi + hii_bar * (s3 * zi.square() + s2 * zii);
    hi_bar = hi_bar * s1 + 2.0 * hii_bar * s2 * zi;
    hii_bar *= s1;
  }
}

}  // namespace detail

/// Forward pass of a batch of coordinates (3 x batch, rows x, y, t).
inline JetTrace trace_jets(const MlpParams& params, const Matrix& coords, JetOrder order) {
  if (coords.rows() != 3) throw Error("autodiff: coordinates must have 3 rows");
  if (params.layers() < 1 || params.weights.front().cols() != 3 ||
      params.weights.back().rows() != 1)
    throw Error("autodiff: parameters do not match a 3-input scalar network");
  for (int l = 1; l < params.layers(); ++l)
    if (params.weights[l].cols() != params.weights[l - 1].rows() ||
        params.biases[l].size() != params.weights[l].rows())
      throw Error("autodiff: dimension mismatch at layer " + std::to_string(l + 1));

  JetTrace tr;
  tr.order = order;
  tr.batch = coords.cols();
  const Eigen::Index b = tr.batch;
  const int ch = tr.channels();

  Matrix a0 = Matrix::Zero(3, ch * b);
  a0.middleCols(0, b) = coords;
  if (ch > 1)
    for (int i = 0; i < 3; ++i) a0.row(i).segment((1 + i) * b, b).setOnes();
  tr.inputs.push_back(std::move(a0));

  const int last = params.layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Matrix z = params.weights[l] * tr.inputs.back();
    z.middleCols(0, b).colwise() += params.biases[l];
    if (l == last) {
      tr.output = std::move(z);
    } else {
      tr.inputs.push_back(detail::tanh_jet(z, b, ch));
      tr.preact.push_back(std::move(z));
    }
  }
  return tr;
}

/// Accumulates into `grad` the parameter gradient of a scalar whose partial
/// derivatives w.r.t. the trace outputs are `seeds` (1 x (C * batch)).
inline void backpropagate(const MlpParams& params, const JetTrace& tr, const Matrix& seeds,
                          MlpParams& grad) {
  const Eigen::Index b = tr.batch;
  const int ch = tr.channels();
  if (seeds.rows() != 1 || seeds.cols() != ch * b)
    throw Error("autodiff: seed shape does not match trace");
  const int last = params.layers() - 1;
  Matrix z_bar = seeds;
  for (int l = last; l >= 0; --l) {
    grad.weights[l].noalias() += z_bar * tr.inputs[l].transpose();
    grad.biases[l] += z_bar.middleCols(0, b).rowwise().sum();
    if (l == 0) break;
    Matrix a_bar = params.weights[l].transpose() * z_bar;
    detail::tanh_jet_adjoint(tr.preact[l - 1], tr.inputs[l], a_bar, b, ch);
    z_bar = std::move(a_bar);
  }
}

/// Network value and input derivatives at one point.
inline Jet2 eval_jet(const MlpParams& params, const std::array<double, 3>& input) {
  Matrix coords(3, 1);
  coords << input[0], input[1], input[2];
  return trace_jets(params, coords, JetOrder::Second).jet(0);
}

/// Value-only evaluation of a batch (3 x batch) returning one prediction per column.
inline Vector forward_batch(const MlpParams& params, const Matrix& coords) {
  return trace_jets(params, coords, JetOrder::ValueOnly).output.row(0).transpose();
}

// ---------------------------------------------------------------------------
// Scalar reverse-mode tape used to express loss graphs over jet outputs.

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  [[nodiscard]] double value() const;
  [[nodiscard]] const Tape* tape() const { return tape_; }
  [[nodiscard]] int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Var leaf(double value) { return push(value, -1, 0.0, -1, 0.0); }
  Var constant(double value) { return leaf(value); }

  Var add(Var a, Var b) { return push(val(a) + val(b), own(a), 1.0, own(b), 1.0); }
  Var sub(Var a, Var b) { return push(val(a) - val(b), own(a), 1.0, own(b), -1.0); }
  Var mul(Var a, Var b) { return push(val(a) * val(b), own(a), val(b), own(b), val(a)); }
  Var scale(Var a, double k) { return push(k * val(a), own(a), k, -1, 0.0); }
  Var square(Var a) { return push(val(a) * val(a), own(a), 2.0 * val(a), -1, 0.0); }
  Var relu(Var a) {
    const double v = val(a);
    return push(v > 0.0 ? v : 0.0, own(a), v > 0.0 ? 1.0 : 0.0, -1, 0.0);
  }
  Var sum(std::span<const Var> terms) {
    Var acc = constant(0.0);
    for (const Var& t : terms) acc = add(acc, t);
    return acc;
  }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] double value_of(int id) const { return nodes_[std::size_t(id)].value; }

  /// Adjoints d(out)/d(node) for every node on the tape.
  [[nodiscard]] std::vector<double> gradient(Var out) const {
    if (out.tape_ != this || out.id_ < 0 || out.id_ >= int(nodes_.size()))
      throw Error("autodiff: loss node is not recorded on this tape (non-differentiable node)");
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[std::size_t(out.id_)] = 1.0;
    for (int i = out.id_; i >= 0; --i) {
      const Node& n = nodes_[std::size_t(i)];
      const double a = adj[std::size_t(i)];
      if (a == 0.0) continue;
      if (n.lhs >= 0) adj[std::size_t(n.lhs)] += a * n.dl;
      if (n.rhs >= 0) adj[std::size_t(n.rhs)] += a * n.dr;
    }
    return adj;
  }

 private:
  struct Node {
    double value;
    int lhs;
    double dl;
    int rhs;
    double dr;
  };

  int own(Var v) const {
    if (v.tape_ != this || v.id_ < 0)
      throw Error("autodiff: operand is not recorded on this tape (non-differentiable node)");
    return v.id_;
  }
  double val(Var v) const { return nodes_[std::size_t(own(v))].value; }

  Var push(double value, int lhs, double dl, int rhs, double dr) {
    nodes_.push_back({value, lhs, dl, rhs, dr});
    return Var(this, int(nodes_.size()) - 1);
  }

  std::vector<Node> nodes_;
};

inline double Var::value() const {
  if (!tape_) throw Error("autodiff: detached variable");
  return tape_->value_of(id_);
}

inline Var operator+(Var a, Var b) { return const_cast<Tape*>(a.tape())->add(a, b); }
inline Var operator-(Var a, Var b) { return const_cast<Tape*>(a.tape())->sub(a, b); }
inline Var operator*(Var a, Var b) { return const_cast<Tape*>(a.tape())->mul(a, b); }
inline Var operator*(double k, Var a) { return const_cast<Tape*>(a.tape())->scale(a, k); }
inline Var square(Var a) { return const_cast<Tape*>(a.tape())->square(a); }
inline Var relu(Var a) { return const_cast<Tape*>(a.tape())->relu(a); }

/// Tape leaves for the jet outputs of every point in a batch.
class JetVars {
 public:
  JetVars(Tape& tape, const JetTrace& tr) : batch_(tr.batch), channels_(tr.channels()) {
    leaves_.reserve(std::size_t(channels_ * batch_));
    for (Eigen::Index k = 0; k < channels_ * batch_; ++k) leaves_.push_back(tape.leaf(tr.output(0, k)));
  }
  [[nodiscard]] Var operator()(JetComponent c, Eigen::Index point) const {
    const int ci = int(c);
    if (ci >= channels_) throw Error("autodiff: component not available in a value-only trace");
    return leaves_[std::size_t(ci * batch_ + point)];
  }
  [[nodiscard]] Eigen::Index batch() const { return batch_; }
  [[nodiscard]] const std::vector<Var>& leaves() const { return leaves_; }

 private:
  Eigen::Index batch_;
  int channels_;
  std::vector<Var> leaves_;
};

struct LossGradient {
  double loss = 0.0;
  GradientVector gradient;
};

/// Builds a loss graph over the jets at `coords` and returns d(loss)/d(theta).
inline LossGradient loss_param_gradient(
    const MlpParams& params, const Matrix& coords,
    const std::function<Var(Tape&, const JetVars&)>& build_loss,
    JetOrder order = JetOrder::Second) {
  const JetTrace tr = trace_jets(params, coords, order);
  Tape tape;
  JetVars vars(tape, tr);
  const Var loss = build_loss(tape, vars);
  const std::vector<double> adj = tape.gradient(loss);
  Matrix seeds(1, tr.channels() * tr.batch);
  for (Eigen::Index k = 0; k < seeds.cols(); ++k) {
    const double s = adj[std::size_t(vars.leaves()[std::size_t(k)].id())];
    if (!std::isfinite(s)) throw Error("autodiff: non-finite adjoint in loss graph");
    seeds(0, k) = s;
  }
  MlpParams grad = MlpParams::zeros(params.config);
  backpropagate(params, tr, seeds, grad);
  return {loss.value(), flatten(grad)};
}

}  // namespace sdpinn
