#pragma once

#include "glumind/tensor.hpp"

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glumind {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] Index rows() const { return value().rows(); }
  [[nodiscard]] Index cols() const { return value().cols(); }
  [[nodiscard]] bool requires_grad() const;
  /// Scalar value of a 1x1 node.
  [[nodiscard]] double item() const;
};

/// Append-only record of operations for reverse-mode differentiation.
///
/// Node ids are assigned in creation order, so inputs always precede the
/// nodes that consume them and a single reverse sweep suffices. A tape
/// constructed with `recording = false` stores values only: every node is a
/// constant and backward() is unavailable.
class Tape {
 public:
  using BackwardFn = std::function<void(const Matrix& out_grad, Tape& tape)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Differentiable leaf. Degrades to a constant on a non-recording tape.
  Var leaf(Matrix value);

  /// Records an op result. `fn` is kept only when some input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  /// Reverse sweep from a 1x1 loss. Throws ContractError otherwise.
  void backward(Var loss);

  [[nodiscard]] const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Gradient of the last backward() w.r.t. node `id`; empty if unreachable.
  [[nodiscard]] const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  [[nodiscard]] bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  [[nodiscard]] bool recording() const { return recording_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Adds `g` into the gradient buffer of `v` (used by backward closures).
  void accumulate(Var v, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  bool recording_;
};

/// Binds every parameter of a ParamStore to a leaf of one tape.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& params);

  [[nodiscard]] Var operator[](std::string_view name) const;
  [[nodiscard]] bool contains(std::string_view name) const;
  [[nodiscard]] Tape& tape() const { return *tape_; }

  /// Copies tape gradients into each Tensor::grad; unreachable params get zeros.
  void store_gradients(ParamStore& params) const;

 private:
  Tape* tape_;
  std::map<std::string, Var, std::less<>> vars_;
};

/// Runs the reverse sweep and writes d(loss)/d(param) into `params`.
void backward(Var loss, const ParamBinding& binding, ParamStore& params);

// ---- differentiable ops -------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var square(Var a);
/// x + 1 * row, row is 1 x cols(x).
Var add_row(Var x, Var row);
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps);
Var gelu(Var x);
Var mean_pool_time(Var x, int factor);
Var repeat_upsample(Var x, int factor, Index target_len);
Var slice_cols(Var x, Index start, Index count);
Var concat_cols(std::span<const Var> parts);
/// Row-major reshape to 1 x numel.
Var flatten(Var x);
Var sum(Var x);
Var mean(Var x);
/// mean((a - b)^2) as a 1x1 node.
Var mse(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace glumind
