#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "deepinv/core/tensor.hpp"

namespace deepinv {

/// Named trainable array. Models own their parameters at stable addresses; a
/// frozen parameter (trainable == false) still receives gradients but the
/// optimizer skips it.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of a scalar loss with respect to every parameter leaf on the tape.
class Gradients {
 public:
  /// Gradient for `p`; all zeros when `p` was not reached or never used.
  Tensor of(const Parameter& p) const;
  const Tensor* find(const Parameter& p) const;
  void set(const Parameter& p, Tensor g) { grads_[&p] = std::move(g); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

/// Linear record of primitive operations for reverse-mode differentiation.
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted by construction. A tape is single-owner and is discarded after one
/// backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is tracked but which is not a Parameter (used by tests and probes).
  Var input(Tensor value);
  /// Leaf bound to a model parameter; repeated calls for the same parameter return the same node.
  Var param(Parameter& p);

  /// Reverse sweep from a scalar loss. Visits each node at most once, in reverse order.
  Gradients backward(Var loss);

  /// Gradient accumulated at a node by the last backward(); zeros if unreached.
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Appends an op result. `backward` is only kept when some input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  /// Gradient buffer of node `id` for accumulation inside backward rules;
  /// nullptr when the node does not require grad.
  Tensor* grad_sink(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Primitive operations. Binary ops require equal shapes or a Real scalar;
// there is no general broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add(Var a, Real b);
Var mul(Var a, Real b);
Var div(Var a, Real b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator+(Var a, Real b) { return add(a, b); }
inline Var operator*(Var a, Real b) { return mul(a, b); }
inline Var operator*(Real a, Var b) { return mul(b, a); }

/// [m x k] . [k x n]
Var matmul(Var a, Var b);
/// Adds a length-n vector to every row of an [m x n] matrix.
Var add_row(Var x, Var bias);
/// x . w + b
Var linear(Var x, Var w, Var b);
Var silu(Var x);
/// Per-row normalization over the last extent (variance epsilon 1e-5), then gain and bias.
Var layer_norm(Var x, Var gain, Var bias);
/// Mean of squared elements, as a scalar.
Var mean_squared(Var x);
Var sum(Var x);
/// [m x p] ++ [m x q] -> [m x (p+q)]
Var concat_cols(Var a, Var b);
/// Columns [begin, end) of a matrix.
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// Rows of `table` selected by `indices`; the backward rule scatter-adds.
Var gather_rows(Var table, std::vector<std::size_t> indices);

inline constexpr Real kLayerNormEps = 1e-5;
inline constexpr Real kMinDivisor = 1e-12;

}  // namespace deepinv
