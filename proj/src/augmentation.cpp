#include "shiftgcl/augmentation.hpp"

#include <stdexcept>
#include <string>

namespace shiftgcl {

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1), got " + std::to_string(p));
  }
}

}  // namespace

void ViewParams::validate() const {
  check_probability(feature_mask, "feature-mask probability");
  check_probability(edge_drop, "edge-drop probability");
}

Graph drop_edges(const Graph& g, double p_e, Rng& rng) {
  check_probability(p_e, "edge-drop probability");
  std::vector<Edge> kept;
  kept.reserve(g.num_edges());
  for (const Edge& e : g.edges()) {
    if (!rng.bernoulli(p_e)) kept.push_back(e);
  }
  return g.with_edges(std::move(kept));
}

Graph mask_features(const Graph& g, double p_f, Rng& rng) {
  check_probability(p_f, "feature-mask probability");
  const Tensor& x = g.features();
  std::vector<bool> keep(x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) keep[c] = !rng.bernoulli(p_f);
  Tensor masked = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (!keep[c]) masked(r, c) = 0.0;
  return g.with_features(std::move(masked));
}

Graph sample_view(const Graph& g, const ViewParams& vp, Rng& rng) {
  vp.validate();
  return mask_features(drop_edges(g, vp.edge_drop, rng), vp.feature_mask, rng);
}

}  // namespace shiftgcl
