#include "shiftgcl/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string_view>
#include <utility>
#include <stdexcept>

#include "shiftgcl/optim.hpp"

namespace shiftgcl {

void ProbeConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("probe lr must be positive");
}

const Mask& SplitMasks::by_name(std::string_view name) const {
  if (name == "train") return train;
  if (name == "id_val") return id_val;
  if (name == "id_test") return id_test;
  if (name == "ood_val") return ood_val;
  if (name == "ood_test") return ood_test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

Mask& SplitMasks::by_name(std::string_view name) {
  return const_cast<Mask&>(std::as_const(*this).by_name(name));
}

void SplitMasks::validate(std::size_t n) const {
  for (const char* name : kNames) {
    if (by_name(name).size() != n) {
      throw std::invalid_argument(std::string("mask '") + name + "' has length " +
                                  std::to_string(by_name(name).size()) + ", expected " +
                                  std::to_string(n));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    for (const char* name : kNames) count += by_name(name)[i] ? 1 : 0;
    if (count > 1) throw std::invalid_argument("masks overlap at node " + std::to_string(i));
  }
}

std::vector<std::size_t> mask_indices(const Mask& mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(i);
  return idx;
}

Tensor LinearClassifier::logits(const Tensor& x) const {
  return kernels::add(kernels::matmul(x, weight), bias);
}

std::vector<std::size_t> LinearClassifier::predict(const Tensor& x) const {
  const Tensor z = logits(x);
  std::vector<std::size_t> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

LinearClassifier linear_probe(const Tensor& embeddings, const Labels& labels, const Mask& train_mask,
                              std::size_t num_classes, const ProbeConfig& cfg) {
  cfg.validate();
  if (labels.size() != embeddings.rows() || train_mask.size() != embeddings.rows()) {
    throw ShapeError("linear_probe: labels/mask length does not match " + embeddings.shape_str());
  }
  const std::vector<std::size_t> idx = mask_indices(train_mask);
  if (idx.empty()) throw std::invalid_argument("linear_probe: empty training split");
  std::set<std::size_t> seen;
  for (std::size_t i : idx) {
    if (labels[i] >= num_classes) throw std::invalid_argument("linear_probe: label out of range");
    seen.insert(labels[i]);
  }
  if (seen.size() < 2) throw std::invalid_argument("linear_probe: training split holds a single class");

  const std::size_t m = idx.size(), d = embeddings.cols();
  Tensor x = kernels::gather_rows(embeddings, idx);
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += x(r, c);
  for (double& v : mean) v /= static_cast<double>(m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) sd[c] += (x(r, c) - mean[c]) * (x(r, c) - mean[c]);
  for (double& v : sd) {
    v = std::sqrt(v / static_cast<double>(m));
    if (!(v > 1e-12)) v = 1.0;
  }
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) x(r, c) = (x(r, c) - mean[c]) / sd[c];

  Tensor w(d, num_classes), b(1, num_classes);
  OptimizerState state;
  std::array<Tensor*, 2> params{&w, &b};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tensor p = kernels::row_softmax(kernels::add(kernels::matmul(x, w), b));
    for (std::size_t r = 0; r < m; ++r) p(r, labels[idx[r]]) -= 1.0;
    p = kernels::scale(p, 1.0 / static_cast<double>(m));
    std::array<Tensor, 2> grads{kernels::matmul_tn(x, p), kernels::col_sum(p)};
    adam_update(params, grads, state, cfg.lr);
  }

  // Fold the standardization into the affine map.
  LinearClassifier clf{Tensor(d, num_classes), b};
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t k = 0; k < num_classes; ++k) {
      clf.weight(c, k) = w(c, k) / sd[c];
      clf.bias[k] -= mean[c] * clf.weight(c, k);
    }
  }
  return clf;
}

// Midranks are kept doubled so every count is an integer. The result is
// rounded half-to-even onto a 2^-40 grid: the grid is closed under x -> 1 - x,
// so reversing the scores gives exactly 1 - auc.
double roc_auc(std::span<const double> scores, std::span<const std::size_t> binary_labels) {
  if (scores.size() != binary_labels.size()) throw ShapeError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<std::uint64_t> twice_rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) twice_rank[order[k]] = i + j + 2;
    i = j + 1;
  }
  std::uint64_t pos = 0, twice_rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (binary_labels[i] == 1) {
      ++pos;
      twice_rank_sum += twice_rank[i];
    }
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: needs both classes");
  constexpr int kGridBits = 40;
  using u128 = unsigned __int128;
  const u128 twice_u = twice_rank_sum - pos * (pos + 1);
  const u128 twice_pairs = static_cast<u128>(2) * pos * neg;
  const u128 num = twice_u << kGridBits;
  u128 q = num / twice_pairs;
  const u128 rem2 = 2 * (num % twice_pairs);
  if (rem2 > twice_pairs || (rem2 == twice_pairs && (q & 1) != 0)) ++q;
  return std::ldexp(static_cast<double>(static_cast<std::uint64_t>(q)), -kGridBits);
}

Metrics metric_suite(std::span<const std::size_t> preds, std::span<const double> positive_scores,
                     std::span<const std::size_t> labels) {
  if (preds.size() != labels.size()) throw ShapeError("metric_suite: preds/labels length mismatch");
  if (labels.empty()) throw std::invalid_argument("metric_suite: empty split");
  const std::size_t n = labels.size();

  Metrics m;
  std::set<std::size_t> classes(labels.begin(), labels.end());
  classes.insert(preds.begin(), preds.end());
  std::map<std::size_t, double> tp, fp, fn;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (preds[i] == labels[i]) {
      ++correct;
      tp[labels[i]] += 1.0;
    } else {
      fp[preds[i]] += 1.0;
      fn[labels[i]] += 1.0;
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  double f1_sum = 0.0;
  for (std::size_t c : classes) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    f1_sum += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  m.macro_f1 = f1_sum / static_cast<double>(classes.size());

  if (!positive_scores.empty()) {
    if (positive_scores.size() != n) throw ShapeError("metric_suite: scores length mismatch");
    const bool binary = std::all_of(labels.begin(), labels.end(), [](std::size_t y) { return y <= 1; });
    const bool both = std::set<std::size_t>(labels.begin(), labels.end()).size() == 2;
    if (binary && both) m.roc_auc = roc_auc(positive_scores, labels);
  }
  return m;
}

SplitMetrics evaluate(const LinearClassifier& clf, const Tensor& embeddings, const Labels& labels,
                      const SplitMasks& masks) {
  masks.validate(labels.size());
  const Tensor logits = clf.logits(embeddings);
  const Tensor probs = kernels::row_softmax(logits);
  const bool binary = clf.num_classes() == 2;

  auto split = [&](const Mask& mask) -> std::optional<Metrics> {
    const auto idx = mask_indices(mask);
    if (idx.empty()) return std::nullopt;
    std::vector<std::size_t> preds, ys;
    std::vector<double> scores;
    for (std::size_t i : idx) {
      auto row = logits.row(i);
      preds.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
      ys.push_back(labels[i]);
      if (binary) scores.push_back(probs(i, 1));
    }
    return metric_suite(preds, scores, ys);
  };

  SplitMetrics out;
  out.id_val = split(masks.id_val);
  out.id_test = split(masks.id_test);
  out.ood_val = split(masks.ood_val);
  out.ood_test = split(masks.ood_test);
  return out;
}

double selection_score(const Metrics& m, std::size_t num_classes) {
  if (num_classes == 2 && m.roc_auc) return *m.roc_auc;
  return m.accuracy;
}

}  // namespace shiftgcl
