#include "shiftgcl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace shiftgcl {

namespace k = kernels;

void ObjectiveConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive, got " + std::to_string(tau));
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be non-negative");
  if (!(sinkhorn_lambda > 0.0)) throw std::invalid_argument("sinkhorn lambda must be positive");
  if (sinkhorn_iters < 1) throw std::invalid_argument("sinkhorn iterations must be >= 1");
}

Prototypes::Prototypes(Tensor centers) : centers_(std::move(centers)) {}

Prototypes Prototypes::random(std::size_t dim, std::size_t count, Rng& rng) {
  Tensor c(dim, count);
  for (double& v : c.data()) v = rng.normal();
  Prototypes p(std::move(c));
  p.renormalize();
  return p;
}

void Prototypes::renormalize() {
  for (std::size_t j = 0; j < centers_.cols(); ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < centers_.rows(); ++i) sq += centers_(i, j) * centers_(i, j);
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t i = 0; i < centers_.rows(); ++i) centers_(i, j) *= inv;
  }
}

namespace {

void check_pair(const Var& u, const Var& v, double tau, const char* op) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument(std::string(op) + ": tau must be positive, got " + std::to_string(tau));
  }
  if (!u.value().same_shape(v.value())) {
    throw ShapeError(std::string(op) + ": views differ in shape " + u.value().shape_str() + " vs " +
                     v.value().shape_str());
  }
  if (u.rows() == 0) throw ShapeError(std::string(op) + ": empty view");
}

// All four anchor/candidate pairings share exp((similarity - positive) / tau)
// matrices; every mask only changes which candidates enter a denominator.
// The node outputs one averaged loss per mask as a 1 x m row.
Var masked_contrastive(const Var& u, const Var& v, std::vector<Tensor> masks, double tau) {
  Tape& tape = *u.tape();
  const std::size_t n = u.rows();
  const double inv_tau = 1.0 / tau;
  const Tensor& uv = u.value();
  const Tensor& vv = v.value();

  const Tensor s_uv = k::matmul_nt(uv, vv);
  const Tensor s_uu = k::matmul_nt(uv, uv);
  const Tensor s_vv = k::matmul_nt(vv, vv);
  std::vector<double> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = s_uv(i, i);

  // e_uv(i, k): anchor u_i, candidate v_k; e_vu(i, k): anchor v_i, candidate u_k.
  Tensor e_uv(n, n), e_uu(n, n), e_vu(n, n), e_vv(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < n; ++c) {
      e_uv(i, c) = std::exp((s_uv(i, c) - pos[i]) * inv_tau);
      e_uu(i, c) = std::exp((s_uu(i, c) - pos[i]) * inv_tau);
      e_vu(i, c) = std::exp((s_uv(c, i) - pos[i]) * inv_tau);
      e_vv(i, c) = std::exp((s_vv(i, c) - pos[i]) * inv_tau);
    }
  }

  const std::size_t m = masks.size();
  Tensor out(1, m);
  std::vector<std::vector<double>> den_u(m, std::vector<double>(n)), den_v(m, std::vector<double>(n));
  for (std::size_t j = 0; j < m; ++j) {
    const Tensor& mask = masks[j];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
      for (std::size_t x = 0; x < n; ++x) {
        const double w = mask(i, x);
        a += w * e_uv(i, x);
        b += w * e_uu(i, x);
        c += w * e_vu(i, x);
        d += w * e_vv(i, x);
      }
      den_u[j][i] = (1.0 + a) + b;
      den_v[j][i] = (1.0 + c) + d;
      if (!(den_u[j][i] > 0.0) || !(den_v[j][i] > 0.0)) {
        throw DomainError("contrastive loss: non-positive denominator");
      }
      total += std::log(den_u[j][i]) + std::log(den_v[j][i]);
    }
    out[j] = total / static_cast<double>(2 * n);
  }

  const std::size_t iu = u.id(), iv = v.id();
  return tape.record(
      "masked_contrastive", std::move(out), {iu, iv},
      [iu, iv, n, inv_tau, masks = std::move(masks), den_u = std::move(den_u),
       den_v = std::move(den_v), e_uv = std::move(e_uv), e_uu = std::move(e_uu),
       e_vu = std::move(e_vu), e_vv = std::move(e_vv)](Tape& tp, std::size_t, const Tensor& g) {
        const Tensor& uval = tp.value(iu);
        const Tensor& vval = tp.value(iv);
        // Per-candidate weights d loss / d (similarity), mixed over masks.
        Tensor w_uv(n, n), w_uu(n, n), w_vu(n, n), w_vv(n, n);
        const double base = inv_tau / static_cast<double>(2 * n);
        for (std::size_t j = 0; j < masks.size(); ++j) {
          const double cj = g[j] * base;
          if (cj == 0.0) continue;
          for (std::size_t i = 0; i < n; ++i) {
            const double fu = cj / den_u[j][i];
            const double fv = cj / den_v[j][i];
            for (std::size_t x = 0; x < n; ++x) {
              const double w = masks[j](i, x);
              if (w == 0.0) continue;
              w_uv(i, x) += fu * w * e_uv(i, x);
              w_uu(i, x) += fu * w * e_uu(i, x);
              w_vu(i, x) += fv * w * e_vu(i, x);
              w_vv(i, x) += fv * w * e_vv(i, x);
            }
          }
        }
        // Positive pairs collect the total outgoing weight of both anchors.
        std::vector<double> r(n, 0.0);
        Tensor cross(n, n), sym_u(n, n), sym_v(n, n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t x = 0; x < n; ++x) {
            r[i] += w_uv(i, x) + w_uu(i, x) + w_vu(i, x) + w_vv(i, x);
            cross(i, x) = w_uv(i, x) + w_vu(x, i);
            sym_u(i, x) = w_uu(i, x) + w_uu(x, i);
            sym_v(i, x) = w_vv(i, x) + w_vv(x, i);
          }
        }
        Tensor du = k::add(k::matmul(cross, vval), k::matmul(sym_u, uval));
        Tensor dv = k::add(k::matmul_tn(cross, uval), k::matmul(sym_v, vval));
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t c = 0; c < du.cols(); ++c) {
            du(i, c) -= r[i] * vval(i, c);
            dv(i, c) -= r[i] * uval(i, c);
          }
        }
        tp.accumulate(iu, std::move(du));
        tp.accumulate(iv, std::move(dv));
      });
}

// Picks entry j of a 1 x m row as a 1 x 1 loss.
Var pick(const Var& row, std::size_t j) { return gather_rows(transpose(row), {j}); }

Tensor all_negatives_mask(std::size_t n) {
  Tensor m(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 0.0;
  return m;
}

Tensor same_label_mask(const PseudoLabels& labels) {
  const std::size_t n = labels.size();
  Tensor m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = (i != j && labels[i] == labels[j]) ? 1.0 : 0.0;
  return m;
}

void check_labels(const Var& u, const PseudoLabels& labels) {
  if (labels.size() != u.rows()) {
    throw ShapeError("cmi_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(u.rows()) + " nodes");
  }
}

}  // namespace

Var mi_loss(const Var& u, const Var& v, double tau) {
  check_pair(u, v, tau, "mi_loss");
  return pick(masked_contrastive(u, v, {all_negatives_mask(u.rows())}, tau), 0);
}

Var cmi_loss(const Var& u, const Var& v, const PseudoLabels& labels, double tau) {
  check_pair(u, v, tau, "cmi_loss");
  check_labels(u, labels);
  return pick(masked_contrastive(u, v, {same_label_mask(labels)}, tau), 0);
}

RobustTerms robust_terms(const Var& u, const Var& v, const PseudoLabels& labels,
                         const ObjectiveConfig& cfg) {
  check_pair(u, v, cfg.tau, "robust_loss");
  check_labels(u, labels);
  if (!(cfg.gamma >= 0.0)) throw std::invalid_argument("robust_loss: gamma must be non-negative");
  Var both = masked_contrastive(u, v, {all_negatives_mask(u.rows()), same_label_mask(labels)}, cfg.tau);
  Var mi = pick(both, 0);
  Var cmi = pick(both, 1);
  return RobustTerms{sub(mi, scale(cmi, cfg.gamma)), mi, cmi};
}

Var robust_loss(const Var& u, const Var& v, const PseudoLabels& labels, const ObjectiveConfig& cfg) {
  return robust_terms(u, v, labels, cfg).loss;
}

Var prototype_scores(const Var& z, const Var& centers) {
  if (z.cols() != centers.rows()) {
    throw ShapeError("prototype_scores: embeddings " + z.value().shape_str() + " vs prototypes " +
                     centers.value().shape_str());
  }
  return row_softmax(matmul(z, centers));
}

Tensor sinkhorn(const Tensor& scores, double lambda, std::size_t iters) {
  if (!(lambda > 0.0)) throw std::invalid_argument("sinkhorn: lambda must be positive");
  if (iters < 1) throw std::invalid_argument("sinkhorn: iters must be >= 1");
  const std::size_t n = scores.rows(), kk = scores.cols();
  if (n == 0 || kk == 0) throw ShapeError("sinkhorn: empty score matrix " + scores.shape_str());

  const double mx = *std::max_element(scores.data().begin(), scores.data().end());
  Tensor q(n, kk);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::exp(lambda * (scores[i] - mx));

  const double col_target = 1.0 / static_cast<double>(kk);
  const double row_target = 1.0 / static_cast<double>(n);
  std::vector<double> col(kk);
  for (std::size_t it = 0; it < iters; ++it) {
    std::fill(col.begin(), col.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < kk; ++j) col[j] += q(i, j);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < kk; ++j)
        if (col[j] > 0.0) q(i, j) *= col_target / col[j];
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (double x : q.row(i)) row += x;
      if (row == 0.0) continue;
      const double f = row_target / row;
      for (double& x : q.row(i)) x *= f;
    }
  }
  return q;
}

Var swapped_prediction_loss(const Var& z_a, const Var& z_b, const Var& centers, const Tensor& q_a,
                            const Tensor& q_b) {
  if (!z_a.value().same_shape(z_b.value())) {
    throw ShapeError("clustering_loss: views differ in shape " + z_a.value().shape_str() + " vs " +
                     z_b.value().shape_str());
  }
  Tape& tape = *z_a.tape();
  Var log_p_a = log(prototype_scores(z_a, centers));
  Var log_p_b = log(prototype_scores(z_b, centers));
  Var cross = add(sum_all(mul(tape.constant(q_b), log_p_a)), sum_all(mul(tape.constant(q_a), log_p_b)));
  return scale(cross, -1.0 / static_cast<double>(z_a.rows()));
}

Var clustering_loss(const Var& z_a, const Var& z_b, const Var& centers, const ObjectiveConfig& cfg) {
  const double n = static_cast<double>(z_a.rows());
  Tensor q_a = k::scale(sinkhorn(k::matmul(z_a.value(), centers.value()), cfg.sinkhorn_lambda,
                                 cfg.sinkhorn_iters),
                        n);
  Tensor q_b = k::scale(sinkhorn(k::matmul(z_b.value(), centers.value()), cfg.sinkhorn_lambda,
                                 cfg.sinkhorn_iters),
                        n);
  return swapped_prediction_loss(z_a, z_b, centers, q_a, q_b);
}

PseudoLabels pseudo_labels(const Tensor& u, const Tensor& centers) {
  const Tensor scores = k::matmul(u, centers);
  PseudoLabels labels(scores.rows(), 0);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto row = scores.row(i);
    // max_element returns the first maximum.
    labels[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return labels;
}

}  // namespace shiftgcl
