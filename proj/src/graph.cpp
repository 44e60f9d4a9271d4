#include "shiftgcl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace shiftgcl {

Graph build_graph(std::size_t n, std::span<const Edge> edges, Tensor features) {
  if (features.rows() != n) {
    throw ShapeError("build_graph: features have " + std::to_string(features.rows()) +
                     " rows for " + std::to_string(n) + " nodes");
  }
  std::vector<Edge> canon;
  canon.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.u >= n || e.v >= n) {
      throw std::out_of_range("build_graph: edge (" + std::to_string(e.u) + ", " +
                              std::to_string(e.v) + ") has an endpoint outside [0, " +
                              std::to_string(n) + ")");
    }
    if (e.u == e.v) continue;
    canon.push_back(e.u < e.v ? e : Edge{e.v, e.u});
  }
  std::sort(canon.begin(), canon.end());
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

  Graph g;
  g.n_ = n;
  g.edges_ = std::make_shared<const std::vector<Edge>>(std::move(canon));
  g.features_ = std::make_shared<const Tensor>(std::move(features));
  return g;
}

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> deg(n_, 0);
  for (const Edge& e : *edges_) {
    ++deg[e.u];
    ++deg[e.v];
  }
  return deg;
}

Graph Graph::with_edges(std::vector<Edge> canonical_edges) const {
  Graph g = *this;
  g.edges_ = std::make_shared<const std::vector<Edge>>(std::move(canonical_edges));
  return g;
}

Graph Graph::with_features(Tensor features) const {
  if (features.rows() != n_) {
    throw ShapeError("Graph::with_features: expected " + std::to_string(n_) + " rows, got " +
                     features.shape_str());
  }
  Graph g = *this;
  g.features_ = std::make_shared<const Tensor>(std::move(features));
  return g;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
                           std::vector<std::size_t> indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      offsets_(std::move(offsets)),
      indices_(std::move(indices)),
      values_(std::move(values)) {
  if (offsets_.size() != rows_ + 1 || indices_.size() != values_.size() ||
      offsets_.back() != values_.size()) {
    throw ShapeError("SparseMatrix: inconsistent CSR arrays");
  }
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
  for (std::size_t p = offsets_[i]; p < offsets_[i + 1]; ++p) {
    if (indices_[p] == j) return values_[p];
  }
  return 0.0;
}

Tensor SparseMatrix::to_dense() const {
  Tensor out(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t p = offsets_[i]; p < offsets_[i + 1]; ++p) out(i, indices_[p]) += values_[p];
  return out;
}

Tensor SparseMatrix::multiply(const Tensor& x) const {
  if (x.rows() != cols_) {
    throw ShapeError("spmm: sparse (" + std::to_string(rows_) + "x" + std::to_string(cols_) +
                     ") times dense " + x.shape_str());
  }
  Tensor out(rows_, x.cols());
  for (std::size_t i = 0; i < rows_; ++i) {
    auto dst = out.row(i);
    for (std::size_t p = offsets_[i]; p < offsets_[i + 1]; ++p) {
      const double w = values_[p];
      auto src = x.row(indices_[p]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

Tensor SparseMatrix::transpose_multiply(const Tensor& x) const {
  if (x.rows() != rows_) {
    throw ShapeError("spmm^T: sparse (" + std::to_string(rows_) + "x" + std::to_string(cols_) +
                     ")^T times dense " + x.shape_str());
  }
  Tensor out(cols_, x.cols());
  for (std::size_t i = 0; i < rows_; ++i) {
    auto src = x.row(i);
    for (std::size_t p = offsets_[i]; p < offsets_[i + 1]; ++p) {
      const double w = values_[p];
      auto dst = out.row(indices_[p]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> neighbor_lists(const Graph& g) {
  std::vector<std::vector<std::size_t>> nbrs(g.num_nodes());
  for (const Edge& e : g.edges()) {
    nbrs[e.u].push_back(e.v);
    nbrs[e.v].push_back(e.u);
  }
  for (auto& list : nbrs) std::sort(list.begin(), list.end());
  return nbrs;
}

}  // namespace

SparseMatrix normalized_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  auto nbrs = neighbor_lists(g);
  std::vector<double> deg(n);
  for (std::size_t i = 0; i < n; ++i) deg[i] = static_cast<double>(nbrs[i].size() + 1);

  std::vector<std::size_t> offsets{0}, indices;
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i) {
    // Self-loop merged into the sorted neighbor order.
    auto& list = nbrs[i];
    list.insert(std::lower_bound(list.begin(), list.end(), i), i);
    for (std::size_t j : list) {
      indices.push_back(j);
      values.push_back(1.0 / std::sqrt(deg[i] * deg[j]));
    }
    offsets.push_back(indices.size());
  }
  return SparseMatrix(n, n, std::move(offsets), std::move(indices), std::move(values));
}

SparseMatrix mean_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  auto nbrs = neighbor_lists(g);
  std::vector<std::size_t> offsets{0}, indices;
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = nbrs[i].empty() ? 0.0 : 1.0 / static_cast<double>(nbrs[i].size());
    for (std::size_t j : nbrs[i]) {
      indices.push_back(j);
      values.push_back(w);
    }
    offsets.push_back(indices.size());
  }
  return SparseMatrix(n, n, std::move(offsets), std::move(indices), std::move(values));
}

Var spmm(const SparseMatrix& adj, const Var& x) {
  if (x.tape() == nullptr) throw std::invalid_argument("spmm: detached operand");
  Tape& tape = *x.tape();
  const std::size_t ix = x.id();
  Tensor out = adj.multiply(x.value());
  return tape.record("spmm", std::move(out), {ix}, [ix, adj](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(ix, adj.transpose_multiply(g));
  });
}

}  // namespace shiftgcl
