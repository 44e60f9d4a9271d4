// Reverse-mode automatic differentiation over dense 2-D tensors.
//
// A Tape owns every value produced during one forward pass. Var is a cheap
// handle (tape pointer + node id) into it. Node ids grow monotonically, so
// the recording order is already a topological order and backward() can
// sweep it in reverse, touching each reachable node once. backward() clears
// the tape; read any forward values you need before calling it.

#ifndef SHIFTGCL_AUTODIFF_HPP
#define SHIFTGCL_AUTODIFF_HPP

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shiftgcl/tensor.hpp"

namespace shiftgcl {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Leaf gradients produced by one backward pass.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<std::optional<Tensor>> grads, double loss)
      : grads_(std::move(grads)), loss_(loss) {}

  /// Gradient of the loss with respect to a leaf. Unreached leaves get zeros.
  const Tensor& of(const Var& leaf) const;
  bool has(const Var& leaf) const;
  double loss() const { return loss_; }

 private:
  std::vector<std::optional<Tensor>> grads_;
  double loss_ = 0.0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape& tape, std::size_t self, const Tensor& upstream)>;

  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Non-differentiable input; gradients never propagate into it.
  Var constant(Tensor value);

  /// Records an op output. The backward closure is dropped when no input
  /// requires a gradient.
  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
             BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds g into the pending gradient of node `id`; used by backward closures.
  void accumulate(std::size_t id, Tensor g);

  /// Gradients of a 1x1 loss with respect to every leaf. Clears the tape.
  Gradients backward(const Var& loss);
  void clear();

 private:
  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> pending_;
};

enum class OpKind {
  kMatmul,
  kAdd,
  kSub,
  kElementwiseMul,
  kScalarMul,
  kRelu,
  kExp,
  kLog,
  kRowSoftmax,
  kRowL2Normalize,
  kTranspose,
  kConcatCols,
  kSumAll,
  kMeanAll,
  kRowSum,
  kGatherRows,
};

inline constexpr OpKind kAllOps[] = {
    OpKind::kMatmul,     OpKind::kAdd,        OpKind::kSub,        OpKind::kElementwiseMul,
    OpKind::kScalarMul,  OpKind::kRelu,       OpKind::kExp,        OpKind::kLog,
    OpKind::kRowSoftmax, OpKind::kRowL2Normalize, OpKind::kTranspose, OpKind::kConcatCols,
    OpKind::kSumAll,     OpKind::kMeanAll,    OpKind::kRowSum,     OpKind::kGatherRows,
};

std::string_view op_name(OpKind kind);
/// Number of tensor inputs the op takes.
std::size_t op_arity(OpKind kind);

struct OpAttrs {
  double scalar = 1.0;               // scalar_mul
  std::vector<std::size_t> indices;  // gather_rows
};

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var row_softmax(const Var& a);
Var row_l2_normalize(const Var& a);
Var transpose(const Var& a);
Var concat_cols(const Var& a, const Var& b);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var row_sum(const Var& a);
Var gather_rows(const Var& a, std::vector<std::size_t> indices);

/// Generic dispatch used by registry-driven tests and tools.
Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over entries of |analytic - central difference| /
/// max(1e-6, |analytic| + |numeric|), taken over all inputs of f. The floor
/// keeps exact-zero gradients, where the central difference only sees
/// rounding in f, from reading as relative error.
double finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h);
double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x,
                         double h);

}  // namespace shiftgcl

#endif  // SHIFTGCL_AUTODIFF_HPP
