// Monte Carlo check of the binary special case in which a representation
// with small average alignment loss still has very different 0-1 risk
// across augmentation-induced domains.
//
// Data (X1, X2) ~ N(0, I2), label Y = [X1 >= 0], representation
// g(x1, x2) = x1 + t x2, augmentation (X1, theta X2) with theta ~ N(0, 1),
// domains G_c = (X1, c X2).

#ifndef SHIFTGCL_THEORY_HPP
#define SHIFTGCL_THEORY_HPP

#include <cstdint>

namespace shiftgcl {

struct CaseResult {
  double t = 0.0;
  double align_estimate = 0.0;
  double align_std_error = 0.0;
  double align_analytic = 0.0;  // 2 t^2
  double risk_c0 = 0.0;         // domain c = 0
  double risk_c_inv_t = 0.0;    // domain c = 1 / t
  std::uint64_t n_samples = 0;
};

/// Prediction is sign(g) thresholded at 0; g == 0 counts as an error.
CaseResult appendix_case(double t, std::uint64_t n_samples, std::uint64_t seed);

}  // namespace shiftgcl

#endif  // SHIFTGCL_THEORY_HPP
