// Linear evaluation on frozen embeddings and ID/OOD metrics.

#ifndef SHIFTGCL_EVALUATION_HPP
#define SHIFTGCL_EVALUATION_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftgcl/tensor.hpp"

namespace shiftgcl {

using Labels = std::vector<std::size_t>;
using Mask = std::vector<bool>;

struct ProbeConfig {
  std::size_t epochs = 100;
  double lr = 1e-2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitMasks {
  Mask train;
  Mask id_val;
  Mask id_test;
  Mask ood_val;
  Mask ood_test;

  static constexpr const char* kNames[] = {"train", "id_val", "id_test", "ood_val", "ood_test"};

  const Mask& by_name(std::string_view name) const;
  Mask& by_name(std::string_view name);

  /// Lengths equal n and the five masks are pairwise disjoint.
  void validate(std::size_t n) const;
};

std::vector<std::size_t> mask_indices(const Mask& mask);

/// Softmax classifier: logits = X W + b.
struct LinearClassifier {
  Tensor weight;  // d x C
  Tensor bias;    // 1 x C

  std::size_t num_classes() const { return weight.cols(); }
  Tensor logits(const Tensor& x) const;
  std::vector<std::size_t> predict(const Tensor& x) const;
};

/// Full-batch Adam on softmax cross-entropy over the train nodes. Inputs are
/// standardized with train-node statistics internally and the transform is
/// folded back into the returned weights, so the classifier applies to raw
/// embeddings. Weights start at zero, which gives uniform class
/// probabilities at epoch 0. Throws when the train nodes hold one class.
LinearClassifier linear_probe(const Tensor& embeddings, const Labels& labels, const Mask& train_mask,
                              std::size_t num_classes, const ProbeConfig& cfg);

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> roc_auc;  // binary tasks only
};

/// macro-F1 averages over classes present in labels or predictions.
/// `positive_scores`, when non-empty, are scores for class 1 and enable
/// ROC-AUC (Mann-Whitney with midranks) when both classes are present.
Metrics metric_suite(std::span<const std::size_t> preds, std::span<const double> positive_scores,
                     std::span<const std::size_t> labels);

double roc_auc(std::span<const double> scores, std::span<const std::size_t> binary_labels);

struct SplitMetrics {
  std::optional<Metrics> id_val;
  std::optional<Metrics> id_test;
  std::optional<Metrics> ood_val;
  std::optional<Metrics> ood_test;
};

/// Metrics per evaluation split. Empty splits yield no metrics.
SplitMetrics evaluate(const LinearClassifier& clf, const Tensor& embeddings, const Labels& labels,
                      const SplitMasks& masks);

/// Model-selection score: accuracy for multiclass, ROC-AUC for binary
/// tasks (falling back to accuracy when AUC is undefined on the split).
double selection_score(const Metrics& m, std::size_t num_classes);

}  // namespace shiftgcl

#endif  // SHIFTGCL_EVALUATION_HPP
