// Stochastic view generation: edge dropping and column-wise feature masking.

#ifndef SHIFTGCL_AUGMENTATION_HPP
#define SHIFTGCL_AUGMENTATION_HPP

#include "shiftgcl/graph.hpp"
#include "shiftgcl/rng.hpp"

namespace shiftgcl {

struct ViewParams {
  double feature_mask = 0.0;  // p_f
  double edge_drop = 0.0;     // p_e

  void validate() const;
};

/// Each stored edge removed independently with probability p_e. Features
/// are shared with the input graph.
Graph drop_edges(const Graph& g, double p_e, Rng& rng);

/// One Bernoulli(1 - p_f) keep-draw per feature column, applied to every
/// node. Edges are shared with the input graph.
Graph mask_features(const Graph& g, double p_f, Rng& rng);

/// drop_edges followed by mask_features.
Graph sample_view(const Graph& g, const ViewParams& vp, Rng& rng);

}  // namespace shiftgcl

#endif  // SHIFTGCL_AUGMENTATION_HPP
