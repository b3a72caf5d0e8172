#pragma once

// Tape-based reverse mode. Each op evaluates its forward kernel immediately
// and records a closure holding its backward rule; Tape::backward replays the
// closures in reverse evaluation order.

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "mnm/matrix.hpp"
#include "mnm/ops.hpp"

namespace mnm {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  bool valid() const { return id_ != kNone; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  explicit Var(std::size_t id) : id_(id) {}
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id_ = kNone;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  /// With record_backward == false the tape only evaluates (no closures kept).
  explicit Tape(bool record_backward = true) : record_backward_(record_backward) {}

  Var constant(Matrix value);
  /// A leaf whose gradient can be read back with grad().
  Var input(Matrix value);
  /// A leaf bound to a Parameter (one leaf per parameter per tape); its
  /// gradient is collected per parameter.
  Var param(const Parameter& p);

  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  /// Gradient accumulated at v by the last backward(); zeros if none reached it.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool recording() const { return record_backward_; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds g to the gradient of v (no-op for values that need no gradient).
  void accumulate(Var v, const Matrix& g);

  /// Seeds d(output) = seed and propagates to every leaf.
  void backward(Var output, const Matrix& seed);
  /// For a 1×1 output, seeds with 1.
  void backward(Var output);

  /// Gradient collected for p over every param() leaf bound to it.
  const Matrix* param_grad(const Parameter& p) const;
  /// Adds the collected gradient into p.grad.
  void flush_param_grad(Parameter& p) const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool requires_grad = false;
  };

  bool record_backward_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_leaves_;
  std::unordered_map<const Parameter*, Matrix> param_grads_;
};

// Differentiable ops. Vectors are 1×d rows.
Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
/// a (n×d) plus a broadcast 1×d row.
Var add_row(Tape& t, Var a, Var row);
/// Element-wise product of a (n×d) with a broadcast 1×d row.
Var mul_row(Tape& t, Var a, Var row);
Var scale(Tape& t, Var a, double s);
/// Element-wise product with a constant matrix of the same shape.
Var mul_const(Tape& t, Var a, const Matrix& c);
Var transpose(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double epsilon = kLayerNormEpsilon);
Var activation(Tape& t, Var x, Activation kind);
Var masked_softmax_rows(Tape& t, Var z, const MaskBits& row_mask, const MaskBits& col_mask);
Var masked_max_pool(Tape& t, Var x, const MaskBits& mask);
/// Element-wise maximum; ties send the gradient to a.
Var maximum(Tape& t, Var a, Var b);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t count);
Var stack_rows(Tape& t, std::span<const Var> rows);
Var repeat_rows(Tape& t, Var row, std::size_t n);
Var reshape(Tape& t, Var a, std::size_t rows, std::size_t cols);
/// Clamps to [lo, hi]; the gradient is zero where the clamp is active.
Var clamp(Tape& t, Var a, double lo, double hi);
/// Scalar <a, weights> as a 1×1 value.
Var dot_const(Tape& t, Var a, const Matrix& weights);

}  // namespace mnm
