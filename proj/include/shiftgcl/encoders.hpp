// GNN feature extractor and projector head.

#ifndef SHIFTGCL_ENCODERS_HPP
#define SHIFTGCL_ENCODERS_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shiftgcl/autodiff.hpp"
#include "shiftgcl/graph.hpp"
#include "shiftgcl/rng.hpp"

namespace shiftgcl {

enum class EncoderKind { kGcn, kSageMean };

std::string_view encoder_kind_name(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kGcn;
  std::size_t num_layers = 2;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  void validate() const;
};

struct EncoderParams {
  std::vector<Tensor> weights;
  /// sage-mean only: one neighbor weight per layer, parallel to `weights`.
  std::vector<Tensor> neighbor_weights;
};

struct ProjectorParams {
  Tensor w1;
  Tensor w2;
};

/// Encoder + projector parameters with stable names for checkpoints and the
/// optimizer.
struct Model {
  EncoderConfig config;
  EncoderParams encoder;
  ProjectorParams projector;

  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
};

/// Glorot-uniform U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

Model init_params(const EncoderConfig& config, std::uint64_t seed);

/// Propagation operator the encoder kind consumes: normalized adjacency for
/// gcn, row-mean neighbor matrix for sage-mean.
SparseMatrix propagation_for(const Graph& g, EncoderKind kind);

/// Model parameters as tape leaves, in named_params() order.
struct ModelVars {
  std::vector<Var> weights;
  std::vector<Var> neighbor_weights;
  Var proj_w1;
  Var proj_w2;

  std::vector<Var> all() const;
};

/// trainable=false binds constants, for forward-only passes.
ModelVars bind(Tape& tape, const Model& model, bool trainable = true);

/// gcn: H <- relu(A_hat H W) per layer; sage-mean: H <- relu(H W_self +
/// mean_nbr(H) W_nbr). The last layer is linear.
Var encode(const SparseMatrix& propagation, const Var& x, const ModelVars& vars,
           const EncoderConfig& config);
/// Z = row_l2_normalize(relu(H W1) W2).
Var project(const Var& h, const ModelVars& vars);

/// Untaped conveniences.
Tensor encode(const Graph& g, const Model& model);
Tensor project(const Tensor& h, const Model& model);

}  // namespace shiftgcl

#endif  // SHIFTGCL_ENCODERS_HPP
