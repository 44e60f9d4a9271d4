// Undirected graph container and the sparse propagation operators used by
// the encoders.

#ifndef SHIFTGCL_GRAPH_HPP
#define SHIFTGCL_GRAPH_HPP

#include <compare>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "shiftgcl/autodiff.hpp"
#include "shiftgcl/tensor.hpp"

namespace shiftgcl {

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Immutable after construction. Edge list is canonical: u < v, sorted,
/// unique, no self-loops. Edges and features are shared between copies, so
/// augmented views that only touch one of them reuse the other.
class Graph {
 public:
  Graph() = default;

  std::size_t num_nodes() const { return n_; }
  std::size_t feature_dim() const { return features_ ? features_->cols() : 0; }
  const std::vector<Edge>& edges() const { return *edges_; }
  const Tensor& features() const { return *features_; }
  std::size_t num_edges() const { return edges_->size(); }

  /// Degree in the stored (self-loop free) adjacency.
  std::vector<std::size_t> degrees() const;

  /// Same node set and features, different canonical edge subset.
  Graph with_edges(std::vector<Edge> canonical_edges) const;
  /// Same topology, replacement feature matrix with n rows.
  Graph with_features(Tensor features) const;

  bool shares_features_with(const Graph& o) const { return features_ == o.features_; }
  bool shares_edges_with(const Graph& o) const { return edges_ == o.edges_; }

 private:
  friend Graph build_graph(std::size_t n, std::span<const Edge> edges, Tensor features);

  std::size_t n_ = 0;
  std::shared_ptr<const std::vector<Edge>> edges_ = std::make_shared<std::vector<Edge>>();
  std::shared_ptr<const Tensor> features_ = std::make_shared<Tensor>();
};

/// Validates endpoints and feature rows, then canonicalizes the edge list.
Graph build_graph(std::size_t n, std::span<const Edge> edges, Tensor features);

/// Compressed sparse row matrix.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
               std::vector<std::size_t> indices, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }
  const std::vector<std::size_t>& offsets() const { return offsets_; }
  const std::vector<std::size_t>& indices() const { return indices_; }
  const std::vector<double>& values() const { return values_; }

  /// Entry (i, j), zero when not stored.
  double at(std::size_t i, std::size_t j) const;
  Tensor to_dense() const;

  Tensor multiply(const Tensor& x) const;
  /// this^T * x.
  Tensor transpose_multiply(const Tensor& x) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
};

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
SparseMatrix normalized_adjacency(const Graph& g);

/// Row-normalized A (no self-loops). Isolated nodes get an empty row, so
/// their mean-neighbor vector is zero.
SparseMatrix mean_adjacency(const Graph& g);

/// Differentiable sparse-dense product; gradient w.r.t. x is adj^T * upstream.
Var spmm(const SparseMatrix& adj, const Var& x);

}  // namespace shiftgcl

#endif  // SHIFTGCL_GRAPH_HPP
