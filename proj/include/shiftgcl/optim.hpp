#ifndef SHIFTGCL_OPTIM_HPP
#define SHIFTGCL_OPTIM_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "shiftgcl/tensor.hpp"

namespace shiftgcl {

/// Adam moments, lazily shaped on the first update.
struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step, in place.
void adam_update(std::span<Tensor* const> params, std::span<const Tensor> grads,
                 OptimizerState& state, double lr);

}  // namespace shiftgcl

#endif  // SHIFTGCL_OPTIM_HPP
