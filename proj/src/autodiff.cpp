#include "shiftgcl/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace shiftgcl {

namespace k = kernels;

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var: not attached to a tape");
  return tape_->value(id_);
}

const Tensor& Gradients::of(const Var& leaf) const {
  if (leaf.id() >= grads_.size() || !grads_[leaf.id()]) {
    throw std::out_of_range("Gradients::of: node " + std::to_string(leaf.id()) +
                            " is not a differentiable leaf");
  }
  return *grads_[leaf.id()];
}

bool Gradients::has(const Var& leaf) const {
  return leaf.id() < grads_.size() && grads_[leaf.id()].has_value();
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{"leaf", std::move(value), {}, true, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, false, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  bool needs = false;
  for (std::size_t id : inputs) {
    if (id >= nodes_.size()) throw std::logic_error("Tape::record: input from a different tape");
    needs = needs || nodes_[id].requires_grad;
  }
  nodes_.push_back(Node{std::string(op), std::move(value), std::move(inputs), needs, false,
                        needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, Tensor g) {
  if (!nodes_[id].requires_grad) return;
  auto& slot = pending_[id];
  if (!slot) {
    slot = std::move(g);
  } else {
    auto dst = slot->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

Gradients Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const Node& root = nodes_.at(loss.id());
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ShapeError("backward: loss must be (1x1), got " + root.value.shape_str());
  }
  if (!root.requires_grad) throw std::invalid_argument("backward: loss is detached from every leaf");
  const double loss_value = root.value[0];

  pending_.assign(nodes_.size(), std::nullopt);
  pending_[loss.id()] = Tensor::scalar(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.is_leaf || !pending_[id]) continue;
    Tensor upstream = std::move(*pending_[id]);
    pending_[id].reset();
    node.backward(*this, id, upstream);
  }

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.is_leaf || !node.requires_grad) continue;
    grads[id] = pending_[id] ? std::move(*pending_[id])
                             : Tensor(node.value.rows(), node.value.cols());
  }
  clear();
  return Gradients(std::move(grads), loss_value);
}

void Tape::clear() {
  nodes_.clear();
  pending_.clear();
}

namespace {

Tape& common_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(const Var& a, const char* op) {
  if (a.tape() == nullptr) throw std::invalid_argument(std::string(op) + ": detached operand");
  return *a.tape();
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b, "matmul");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("matmul", k::matmul(a.value(), b.value()), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t, const Tensor& g) {
                    if (tp.requires_grad(ia)) tp.accumulate(ia, k::matmul_nt(g, tp.value(ib)));
                    if (tp.requires_grad(ib)) tp.accumulate(ib, k::matmul_tn(tp.value(ia), g));
                  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  const bool broadcast = !a.value().same_shape(b.value());
  return t.record("add", k::add(a.value(), b.value()), {ia, ib},
                  [ia, ib, broadcast](Tape& tp, std::size_t, const Tensor& g) {
                    tp.accumulate(ia, g);
                    tp.accumulate(ib, broadcast ? k::col_sum(g) : g);
                  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("sub", k::sub(a.value(), b.value()), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t, const Tensor& g) {
                    tp.accumulate(ia, g);
                    tp.accumulate(ib, k::scale(g, -1.0));
                  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b, "elementwise_mul");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("elementwise_mul", k::mul(a.value(), b.value()), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t, const Tensor& g) {
                    if (tp.requires_grad(ia)) tp.accumulate(ia, k::mul(g, tp.value(ib)));
                    if (tp.requires_grad(ib)) tp.accumulate(ib, k::mul(g, tp.value(ia)));
                  });
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a, "scalar_mul");
  const std::size_t ia = a.id();
  return t.record("scalar_mul", k::scale(a.value(), s), {ia},
                  [ia, s](Tape& tp, std::size_t, const Tensor& g) { tp.accumulate(ia, k::scale(g, s)); });
}

Var relu(const Var& a) {
  Tape& t = tape_of(a, "relu");
  const std::size_t ia = a.id();
  return t.record("relu", k::relu(a.value()), {ia}, [ia](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& x = tp.value(ia);
    Tensor dx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
    tp.accumulate(ia, std::move(dx));
  });
}

Var exp(const Var& a) {
  Tape& t = tape_of(a, "exp");
  const std::size_t ia = a.id();
  return t.record("exp", k::exp(a.value()), {ia}, [ia](Tape& tp, std::size_t self, const Tensor& g) {
    tp.accumulate(ia, k::mul(g, tp.value(self)));
  });
}

Var log(const Var& a) {
  Tape& t = tape_of(a, "log");
  const std::size_t ia = a.id();
  return t.record("log", k::log(a.value()), {ia}, [ia](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& x = tp.value(ia);
    Tensor dx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] / x[i];
    tp.accumulate(ia, std::move(dx));
  });
}

Var row_softmax(const Var& a) {
  Tape& t = tape_of(a, "row_softmax");
  const std::size_t ia = a.id();
  return t.record("row_softmax", k::row_softmax(a.value()), {ia},
                  [ia](Tape& tp, std::size_t self, const Tensor& g) {
                    const Tensor& y = tp.value(self);
                    Tensor dx(g.rows(), g.cols());
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
                      for (std::size_t c = 0; c < g.cols(); ++c) dx(r, c) = y(r, c) * (g(r, c) - dot);
                    }
                    tp.accumulate(ia, std::move(dx));
                  });
}

Var row_l2_normalize(const Var& a) {
  Tape& t = tape_of(a, "row_l2_normalize");
  const std::size_t ia = a.id();
  return t.record("row_l2_normalize", k::row_l2_normalize(a.value()), {ia},
                  [ia](Tape& tp, std::size_t self, const Tensor& g) {
                    const Tensor& x = tp.value(ia);
                    const Tensor& y = tp.value(self);
                    Tensor dx(g.rows(), g.cols());
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      double sq = 0.0, dot = 0.0;
                      for (std::size_t c = 0; c < g.cols(); ++c) {
                        sq += x(r, c) * x(r, c);
                        dot += g(r, c) * y(r, c);
                      }
                      // Zero rows stay zero and pass no gradient.
                      if (sq == 0.0) continue;
                      const double inv = 1.0 / std::sqrt(sq);
                      for (std::size_t c = 0; c < g.cols(); ++c) {
                        dx(r, c) = (g(r, c) - y(r, c) * dot) * inv;
                      }
                    }
                    tp.accumulate(ia, std::move(dx));
                  });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a, "transpose");
  const std::size_t ia = a.id();
  return t.record("transpose", k::transpose(a.value()), {ia},
                  [ia](Tape& tp, std::size_t, const Tensor& g) { tp.accumulate(ia, k::transpose(g)); });
}

Var concat_cols(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b, "concat_cols");
  const std::size_t ia = a.id(), ib = b.id();
  const std::size_t ca = a.cols(), cb = b.cols();
  return t.record("concat_cols", k::concat_cols(a.value(), b.value()), {ia, ib},
                  [ia, ib, ca, cb](Tape& tp, std::size_t, const Tensor& g) {
                    Tensor ga(g.rows(), ca), gb(g.rows(), cb);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      for (std::size_t c = 0; c < ca; ++c) ga(r, c) = g(r, c);
                      for (std::size_t c = 0; c < cb; ++c) gb(r, c) = g(r, ca + c);
                    }
                    tp.accumulate(ia, std::move(ga));
                    tp.accumulate(ib, std::move(gb));
                  });
}

Var sum_all(const Var& a) {
  Tape& t = tape_of(a, "sum_all");
  const std::size_t ia = a.id();
  const std::size_t r = a.rows(), c = a.cols();
  return t.record("sum_all", Tensor::scalar(k::sum_all(a.value())), {ia},
                  [ia, r, c](Tape& tp, std::size_t, const Tensor& g) { tp.accumulate(ia, Tensor(r, c, g[0])); });
}

Var mean_all(const Var& a) {
  Tape& t = tape_of(a, "mean_all");
  if (a.value().size() == 0) throw ShapeError("mean_all: empty tensor " + a.value().shape_str());
  const std::size_t ia = a.id();
  const std::size_t r = a.rows(), c = a.cols();
  const double inv = 1.0 / static_cast<double>(r * c);
  return t.record("mean_all", Tensor::scalar(k::sum_all(a.value()) * inv), {ia},
                  [ia, r, c, inv](Tape& tp, std::size_t, const Tensor& g) {
                    tp.accumulate(ia, Tensor(r, c, g[0] * inv));
                  });
}

Var row_sum(const Var& a) {
  Tape& t = tape_of(a, "row_sum");
  const std::size_t ia = a.id();
  const std::size_t c = a.cols();
  return t.record("row_sum", k::row_sum(a.value()), {ia}, [ia, c](Tape& tp, std::size_t, const Tensor& g) {
    Tensor dx(g.rows(), c);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t j = 0; j < c; ++j) dx(r, j) = g[r];
    tp.accumulate(ia, std::move(dx));
  });
}

Var gather_rows(const Var& a, std::vector<std::size_t> indices) {
  Tape& t = tape_of(a, "gather_rows");
  const std::size_t ia = a.id();
  const std::size_t rows = a.rows();
  Tensor out = k::gather_rows(a.value(), indices);
  return t.record("gather_rows", std::move(out), {ia},
                  [ia, rows, idx = std::move(indices)](Tape& tp, std::size_t, const Tensor& g) {
                    Tensor dx(rows, g.cols());
                    for (std::size_t i = 0; i < idx.size(); ++i)
                      for (std::size_t c = 0; c < g.cols(); ++c) dx(idx[i], c) += g(i, c);
                    tp.accumulate(ia, std::move(dx));
                  });
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kElementwiseMul: return "elementwise_mul";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kRowSoftmax: return "row_softmax";
    case OpKind::kRowL2Normalize: return "row_l2_normalize";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSumAll: return "sum_all";
    case OpKind::kMeanAll: return "mean_all";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kGatherRows: return "gather_rows";
  }
  return "unknown";
}

std::size_t op_arity(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul:
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kElementwiseMul:
    case OpKind::kConcatCols:
      return 2;
    default:
      return 1;
  }
}

Var apply(OpKind kind, std::span<const Var> in, const OpAttrs& attrs) {
  if (in.size() != op_arity(kind)) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": expected " +
                                std::to_string(op_arity(kind)) + " inputs, got " +
                                std::to_string(in.size()));
  }
  switch (kind) {
    case OpKind::kMatmul: return matmul(in[0], in[1]);
    case OpKind::kAdd: return add(in[0], in[1]);
    case OpKind::kSub: return sub(in[0], in[1]);
    case OpKind::kElementwiseMul: return mul(in[0], in[1]);
    case OpKind::kScalarMul: return scale(in[0], attrs.scalar);
    case OpKind::kRelu: return relu(in[0]);
    case OpKind::kExp: return exp(in[0]);
    case OpKind::kLog: return log(in[0]);
    case OpKind::kRowSoftmax: return row_softmax(in[0]);
    case OpKind::kRowL2Normalize: return row_l2_normalize(in[0]);
    case OpKind::kTranspose: return transpose(in[0]);
    case OpKind::kConcatCols: return concat_cols(in[0], in[1]);
    case OpKind::kSumAll: return sum_all(in[0]);
    case OpKind::kMeanAll: return mean_all(in[0]);
    case OpKind::kRowSum: return row_sum(in[0]);
    case OpKind::kGatherRows: return gather_rows(in[0], attrs.indices);
  }
  throw std::invalid_argument("apply: unknown op");
}

double finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& x : inputs) leaves.push_back(tape.leaf(x));
    Var loss = f(tape, leaves);
    Gradients grads = tape.backward(loss);
    for (const Var& v : leaves) analytic.push_back(grads.of(v));
  }

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& x : xs) leaves.push_back(tape.leaf(x));
    return f(tape, leaves).value().item();
  };

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    for (std::size_t i = 0; i < inputs[which].size(); ++i) {
      const double x0 = inputs[which][i];
      probe[which][i] = x0 + h;
      const double up = evaluate(probe);
      probe[which][i] = x0 - h;
      const double down = evaluate(probe);
      probe[which][i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[which][i];
      const double err = std::abs(a - numeric) / std::max(1e-6, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x, double h) {
  return finite_diff_check([&f](Tape& t, std::span<const Var> xs) { return f(t, xs[0]); },
                           std::vector<Tensor>{x}, h);
}

}  // namespace shiftgcl
