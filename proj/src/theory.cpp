#include "shiftgcl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "shiftgcl/rng.hpp"

namespace shiftgcl {

namespace {

bool misclassified(double x1, double g) {
  const bool label = x1 >= 0.0;
  if (g == 0.0) return true;
  return (g > 0.0) != label;
}

}  // namespace

CaseResult appendix_case(double t, std::uint64_t n_samples, std::uint64_t seed) {
  if (!(t > 0.0)) throw std::invalid_argument("appendix_case: t must be positive");
  if (n_samples < 100000) throw std::invalid_argument("appendix_case: need at least 100000 samples");

  Rng rng(seed);
  const double c_far = 1.0 / t;
  double align_sum = 0.0, align_sq = 0.0;
  std::uint64_t err_c0 = 0, err_far = 0;
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    const double x1 = rng.normal();
    const double x2 = rng.normal();
    const double theta1 = rng.normal();
    const double theta2 = rng.normal();
    const double d = t * x2 * (theta1 - theta2);
    const double align = d * d;
    align_sum += align;
    align_sq += align * align;
    if (misclassified(x1, x1 + t * (0.0 * x2))) ++err_c0;
    if (misclassified(x1, x1 + t * (c_far * x2))) ++err_far;
  }
  const double n = static_cast<double>(n_samples);
  CaseResult r;
  r.t = t;
  r.n_samples = n_samples;
  r.align_estimate = align_sum / n;
  const double var = (align_sq - n * r.align_estimate * r.align_estimate) / (n - 1.0);
  r.align_std_error = std::sqrt(std::max(var, 0.0) / n);
  r.align_analytic = 2.0 * t * t;
  r.risk_c0 = static_cast<double>(err_c0) / n;
  r.risk_c_inv_t = static_cast<double>(err_far) / n;
  return r;
}

}  // namespace shiftgcl
