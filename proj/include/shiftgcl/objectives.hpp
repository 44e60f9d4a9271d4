// Contrastive, clustering and compression objectives.
//
// All node-level contrastive losses share one form. For anchor u_i with
// positive v_i and the negative set N(i):
//
//   l(u_i) = log(1 + sum_{k in N(i)} e^{(u_i.v_k - u_i.v_i)/tau}
//                  + sum_{k in N(i)} e^{(u_i.u_k - u_i.v_i)/tau})
//
// which equals -log(e^{pos} / (e^{pos} + negatives)) and is exactly zero
// when N(i) is empty. The loss averages l over both views' anchors. The MI
// loss uses N(i) = {k != i}; the CMI loss restricts it to nodes sharing i's
// pseudo-label.

#ifndef SHIFTGCL_OBJECTIVES_HPP
#define SHIFTGCL_OBJECTIVES_HPP

#include <cstddef>
#include <vector>

#include "shiftgcl/autodiff.hpp"
#include "shiftgcl/rng.hpp"

namespace shiftgcl {

struct ObjectiveConfig {
  double tau = 0.2;
  double gamma = 0.1;
  double sinkhorn_lambda = 20.0;
  std::size_t sinkhorn_iters = 3;

  void validate() const;
};

/// d x K matrix of cluster centers, one unit-norm column per prototype.
class Prototypes {
 public:
  Prototypes() = default;
  explicit Prototypes(Tensor centers);

  static Prototypes random(std::size_t dim, std::size_t count, Rng& rng);

  const Tensor& centers() const { return centers_; }
  Tensor& mutable_centers() { return centers_; }
  std::size_t dim() const { return centers_.rows(); }
  std::size_t count() const { return centers_.cols(); }

  /// Rescales every column to unit norm; zero columns are left alone.
  void renormalize();

 private:
  Tensor centers_;
};

using PseudoLabels = std::vector<std::size_t>;

Var mi_loss(const Var& u, const Var& v, double tau);
Var cmi_loss(const Var& u, const Var& v, const PseudoLabels& labels, double tau);

struct RobustTerms {
  Var loss;  // mi - gamma * cmi
  Var mi;
  Var cmi;
};

/// mi_loss - gamma * cmi_loss, sharing the similarity matrices.
RobustTerms robust_terms(const Var& u, const Var& v, const PseudoLabels& labels,
                         const ObjectiveConfig& cfg);
Var robust_loss(const Var& u, const Var& v, const PseudoLabels& labels, const ObjectiveConfig& cfg);

/// row_softmax(Z C).
Var prototype_scores(const Var& z, const Var& centers);

/// Equal-partition transport codes. Starts from exp(lambda (S - max S)) and
/// alternately rescales columns to sum 1/K and rows to sum 1/n, `iters`
/// times. Rows of the result sum to 1/n. Not differentiable.
Tensor sinkhorn(const Tensor& scores, double lambda, std::size_t iters);

/// Swapped prediction with explicit codes (rows are distributions):
/// (1/n) sum_i [H(q_b_i, p_a_i) + H(q_a_i, p_b_i)].
Var swapped_prediction_loss(const Var& z_a, const Var& z_b, const Var& centers, const Tensor& q_a,
                            const Tensor& q_b);

/// Swapped prediction with Sinkhorn codes computed from the detached scores
/// Z C and rescaled so each row sums to 1.
Var clustering_loss(const Var& z_a, const Var& z_b, const Var& centers, const ObjectiveConfig& cfg);

/// Row-wise argmax of U C; ties go to the lowest cluster index.
PseudoLabels pseudo_labels(const Tensor& u, const Tensor& centers);

}  // namespace shiftgcl

#endif  // SHIFTGCL_OBJECTIVES_HPP
