// Synthetic distribution-shift node-classification datasets and their JSON
// file format:
//
//   {"n": int, "edges": [[u, v], ...], "features": [[f64, ...], ...],
//    "labels": [int, ...],
//    "masks": {"train": [bool, ...], "id_val": ..., "id_test": ...,
//              "ood_val": ..., "ood_test": ...},
//    "meta": {...}}

#ifndef SHIFTGCL_DATASETS_HPP
#define SHIFTGCL_DATASETS_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftgcl/evaluation.hpp"
#include "shiftgcl/graph.hpp"

namespace shiftgcl {

enum class ShiftKind { kConcept, kCovariate };

std::string shift_kind_name(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view name);

struct DatasetMeta {
  std::string name;
  std::string shift_kind;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
};

struct Dataset {
  Graph graph;
  Labels labels;
  SplitMasks masks;
  DatasetMeta meta;

  std::size_t num_classes() const;
  /// Labels cover every node; masks are valid for n.
  void validate() const;
};

/// Class ids of the house benchmark.
enum CbasRole : std::size_t { kTop = 0, kMiddle = 1, kBottom = 2, kBase = 3 };

struct CbasParams {
  std::size_t base_nodes = 300;
  std::size_t num_houses = 80;
  ShiftKind shift_kind = ShiftKind::kConcept;
  double spurious_strength = 0.9;  // rho
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Barabasi-Albert base graph (m = 2) with 5-node house motifs attached by
/// one edge each; 4-dim one-hot color features plus Gaussian noise.
///
/// Concept shift: nodes are split at random; on train/ID nodes the color
/// equals the label with probability rho (uniform otherwise), on OOD nodes
/// it is uniform. Covariate shift: ID nodes draw colors from {0, 1}, OOD
/// nodes from {2, 3}, independent of the label.
Dataset generate_cbas(const CbasParams& p);

struct SpuriousParams {
  std::size_t n_nodes = 400;
  std::size_t d1 = 8;  // invariant features
  std::size_t d2 = 8;  // spurious features
  std::size_t num_envs = 10;
  std::size_t num_classes = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EnvironmentGraph {
  std::size_t env_id = 0;
  Dataset dataset;
};

/// One Erdos-Renyi graph (mean degree 10) shared by all environments with
/// invariant features X1 ~ N(0, 1). Labels are the argmax of a random
/// 1-layer GCN on (X1, A); spurious features X2 come from a second random
/// GCN on [onehot(Y), env id]. Environment 0 is split into train/ID-val/
/// ID-test, environment 1 is OOD validation, the rest are OOD test.
std::vector<EnvironmentGraph> generate_spurious(const SpuriousParams& p);

class DatasetFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace shiftgcl

#endif  // SHIFTGCL_DATASETS_HPP
