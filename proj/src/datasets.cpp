#include "shiftgcl/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "shiftgcl/encoders.hpp"
#include "shiftgcl/rng.hpp"

namespace shiftgcl {

using nlohmann::json;

std::string shift_kind_name(ShiftKind kind) {
  return kind == ShiftKind::kConcept ? "concept" : "covariate";
}

ShiftKind parse_shift_kind(std::string_view name) {
  if (name == "concept") return ShiftKind::kConcept;
  if (name == "covariate") return ShiftKind::kCovariate;
  throw std::invalid_argument("unknown shift kind '" + std::string(name) +
                              "' (expected concept or covariate)");
}

std::size_t Dataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

void Dataset::validate() const {
  const std::size_t n = graph.num_nodes();
  if (n == 0) throw std::invalid_argument("dataset has no nodes");
  if (labels.size() != n) {
    throw std::invalid_argument("dataset has " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(n) + " nodes");
  }
  masks.validate(n);
}

void CbasParams::validate() const {
  if (num_houses > 0 && base_nodes == 0) throw std::invalid_argument("cbas: houses need a base graph");
  if (base_nodes + num_houses == 0) throw std::invalid_argument("cbas: empty graph");
  if (!(spurious_strength >= 0.0 && spurious_strength <= 1.0)) {
    throw std::invalid_argument("cbas: spurious_strength must lie in [0, 1]");
  }
  if (!(noise_std >= 0.0)) throw std::invalid_argument("cbas: noise_std must be non-negative");
}

void SpuriousParams::validate() const {
  if (n_nodes < 2 || d1 == 0 || d2 == 0 || num_classes < 2 || num_envs < 3) {
    throw std::invalid_argument(
        "spurious: need n_nodes >= 2, positive feature dims, num_classes >= 2, num_envs >= 3");
  }
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

// Assigns nodes to splits by consecutive fractions of a random permutation.
SplitMasks random_split(std::size_t n, const std::array<double, 5>& fractions, Rng& rng) {
  SplitMasks masks;
  for (const char* name : SplitMasks::kNames) masks.by_name(name).assign(n, false);
  const auto perm = permutation(n, rng);
  std::size_t start = 0;
  double cumulative = 0.0;
  for (std::size_t s = 0; s < 5; ++s) {
    cumulative += fractions[s];
    const std::size_t end =
        s == 4 ? n : std::min(n, static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n))));
    Mask& mask = masks.by_name(SplitMasks::kNames[s]);
    for (std::size_t i = start; i < end; ++i) mask[perm[i]] = true;
    start = std::max(start, end);
  }
  return masks;
}

std::vector<Edge> barabasi_albert(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<Edge> edges;
  const std::size_t seed_nodes = std::min(n, m + 1);
  for (std::size_t u = 0; u < seed_nodes; ++u)
    for (std::size_t v = u + 1; v < seed_nodes; ++v) edges.push_back({u, v});
  // Every endpoint occurrence, so uniform draws are degree-proportional.
  std::vector<std::size_t> endpoints;
  for (const Edge& e : edges) {
    endpoints.push_back(e.u);
    endpoints.push_back(e.v);
  }
  for (std::size_t v = seed_nodes; v < n; ++v) {
    std::set<std::size_t> targets;
    while (targets.size() < m) targets.insert(endpoints[rng.below(endpoints.size())]);
    for (std::size_t t : targets) {
      edges.push_back({t, v});
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return edges;
}

constexpr std::size_t kColors = 4;

}  // namespace

Dataset generate_cbas(const CbasParams& p) {
  p.validate();
  Rng rng(p.seed);
  Rng topo_rng = rng.fork();
  Rng split_rng = rng.fork();
  Rng color_rng = rng.fork();

  const std::size_t n = p.base_nodes + 5 * p.num_houses;
  std::vector<Edge> edges = barabasi_albert(p.base_nodes, 2, topo_rng);
  Labels labels(n, kBase);
  for (std::size_t h = 0; h < p.num_houses; ++h) {
    const std::size_t top = p.base_nodes + 5 * h;
    const std::size_t m1 = top + 1, m2 = top + 2, b1 = top + 3, b2 = top + 4;
    labels[top] = kTop;
    labels[m1] = labels[m2] = kMiddle;
    labels[b1] = labels[b2] = kBottom;
    for (Edge e : {Edge{top, m1}, Edge{top, m2}, Edge{m1, m2}, Edge{m1, b1}, Edge{m2, b2}, Edge{b1, b2}}) {
      edges.push_back(e);
    }
    edges.push_back({topo_rng.below(p.base_nodes), b1});
  }

  SplitMasks masks = random_split(n, {0.5, 0.1, 0.1, 0.1, 0.2}, split_rng);

  Tensor features(n, kColors);
  for (std::size_t i = 0; i < n; ++i) {
    const bool ood = masks.ood_val[i] || masks.ood_test[i];
    std::size_t color;
    if (p.shift_kind == ShiftKind::kConcept) {
      const bool correlated = !ood && color_rng.bernoulli(p.spurious_strength);
      color = correlated ? labels[i] : color_rng.below(kColors);
    } else {
      color = (ood ? 2 : 0) + color_rng.below(2);
    }
    features(i, color) = 1.0;
    for (std::size_t c = 0; c < kColors; ++c) features(i, c) += p.noise_std * color_rng.normal();
  }

  Dataset d;
  d.graph = build_graph(n, edges, std::move(features));
  d.labels = std::move(labels);
  d.masks = std::move(masks);
  d.meta.name = "cbas";
  d.meta.shift_kind = shift_kind_name(p.shift_kind);
  d.meta.seed = p.seed;
  d.meta.params = {{"base_nodes", p.base_nodes},
                   {"num_houses", p.num_houses},
                   {"spurious_strength", p.spurious_strength},
                   {"noise_std", p.noise_std}};
  return d;
}

std::vector<EnvironmentGraph> generate_spurious(const SpuriousParams& p) {
  p.validate();
  Rng rng(p.seed);
  Rng topo_rng = rng.fork();
  Rng feat_rng = rng.fork();
  Rng split_rng = rng.fork();
  Rng spurious_rng = rng.fork();

  const std::size_t n = p.n_nodes;
  const double edge_p = std::min(1.0, 10.0 / static_cast<double>(n - 1));
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (topo_rng.bernoulli(edge_p)) edges.push_back({u, v});

  Tensor x1(n, p.d1);
  for (double& v : x1.data()) v = feat_rng.normal();
  const Graph base = build_graph(n, edges, x1);
  const SparseMatrix adj = normalized_adjacency(base);
  const Tensor propagated = adj.multiply(x1);

  Labels labels;
  bool ok = false;
  for (std::uint64_t attempt = 0; attempt < 100 && !ok; ++attempt) {
    Rng label_rng(p.seed + 1 + attempt);
    const Tensor scores = kernels::matmul(propagated, glorot_uniform(p.d1, p.num_classes, label_rng));
    labels.assign(n, 0);
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < n; ++i) {
      auto row = scores.row(i);
      labels[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      seen.insert(labels[i]);
    }
    ok = seen.size() == p.num_classes;
  }
  if (!ok) throw std::runtime_error("spurious: every labeling GCN left a class empty after 100 tries");

  const Tensor spurious_weight = glorot_uniform(p.num_classes + 1, p.d2, spurious_rng);
  const SplitMasks train_env_masks = random_split(n, {0.6, 0.2, 0.2, 0.0, 0.0}, split_rng);

  std::vector<EnvironmentGraph> out;
  for (std::size_t e = 0; e < p.num_envs; ++e) {
    Tensor cond(n, p.num_classes + 1);
    for (std::size_t i = 0; i < n; ++i) {
      cond(i, labels[i]) = 1.0;
      cond(i, p.num_classes) = static_cast<double>(e);
    }
    const Tensor x2 = kernels::matmul(adj.multiply(cond), spurious_weight);

    Dataset d;
    d.graph = base.with_features(kernels::concat_cols(x1, x2));
    d.labels = labels;
    if (e == 0) {
      d.masks = train_env_masks;
    } else {
      for (const char* name : SplitMasks::kNames) d.masks.by_name(name).assign(n, false);
      (e == 1 ? d.masks.ood_val : d.masks.ood_test).assign(n, true);
    }
    d.meta.name = "spurious";
    d.meta.shift_kind = "covariate";
    d.meta.seed = p.seed;
    d.meta.params = {{"n_nodes", p.n_nodes}, {"d1", p.d1},         {"d2", p.d2},
                     {"num_envs", p.num_envs}, {"num_classes", p.num_classes}, {"env_id", e}};
    out.push_back({e, std::move(d)});
  }
  return out;
}

json dataset_to_json(const Dataset& d) {
  json j;
  j["n"] = d.graph.num_nodes();
  json edges = json::array();
  for (const Edge& e : d.graph.edges()) edges.push_back({e.u, e.v});
  j["edges"] = std::move(edges);
  json features = json::array();
  const Tensor& x = d.graph.features();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    features.push_back(std::vector<double>(x.row(r).begin(), x.row(r).end()));
  }
  j["features"] = std::move(features);
  j["labels"] = d.labels;
  json masks = json::object();
  for (const char* name : SplitMasks::kNames) masks[name] = d.masks.by_name(name);
  j["masks"] = std::move(masks);
  j["meta"] = {{"name", d.meta.name},
               {"shift_kind", d.meta.shift_kind},
               {"params", d.meta.params},
               {"seed", d.meta.seed}};
  return j;
}

namespace {

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw DatasetFormatError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw DatasetFormatError("missing key '" + (path.empty() ? key : path + "." + key) + "'");
  return *it;
}

template <typename T>
T as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw DatasetFormatError(path + ": " + e.what());
  }
}

}  // namespace

Dataset dataset_from_json(const json& j) {
  const auto n = as<std::size_t>(require(j, "n", ""), "n");
  if (n == 0) throw DatasetFormatError("n: a dataset needs at least one node");

  std::vector<Edge> edges;
  const json& je = require(j, "edges", "");
  if (!je.is_array()) throw DatasetFormatError("edges: expected an array");
  for (std::size_t i = 0; i < je.size(); ++i) {
    const auto pair = as<std::vector<std::size_t>>(je[i], "edges[" + std::to_string(i) + "]");
    if (pair.size() != 2) throw DatasetFormatError("edges[" + std::to_string(i) + "]: expected [u, v]");
    edges.push_back({pair[0], pair[1]});
  }

  const json& jf = require(j, "features", "");
  if (!jf.is_array() || jf.size() != n) {
    throw DatasetFormatError("features: expected " + std::to_string(n) + " rows");
  }
  std::vector<double> data;
  std::size_t d = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = as<std::vector<double>>(jf[r], "features[" + std::to_string(r) + "]");
    if (r == 0) d = row.size();
    if (row.size() != d) throw DatasetFormatError("features[" + std::to_string(r) + "]: ragged row");
    data.insert(data.end(), row.begin(), row.end());
  }

  Dataset out;
  try {
    out.graph = build_graph(n, edges, Tensor(n, d, std::move(data)));
  } catch (const std::exception& e) {
    throw DatasetFormatError(std::string("edges: ") + e.what());
  }
  out.labels = as<Labels>(require(j, "labels", ""), "labels");
  const json& jm = require(j, "masks", "");
  for (const char* name : SplitMasks::kNames) {
    out.masks.by_name(name) = as<Mask>(require(jm, name, "masks"), std::string("masks.") + name);
  }
  if (auto it = j.find("meta"); it != j.end() && it->is_object()) {
    out.meta.name = it->value("name", "");
    out.meta.shift_kind = it->value("shift_kind", "");
    out.meta.params = it->value("params", json::object());
    out.meta.seed = it->value("seed", std::uint64_t{0});
  }
  try {
    out.validate();
  } catch (const std::invalid_argument& e) {
    throw DatasetFormatError(e.what());
  }
  return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << dataset_to_json(d).dump() << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DatasetFormatError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw DatasetFormatError(path.string() + ": " + e.what());
  }
  return dataset_from_json(j);
}

}  // namespace shiftgcl
