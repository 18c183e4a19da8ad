// Central finite-difference verification of reverse-mode gradients.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dtrm/tensor.hpp"

namespace dtrm {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
};

// loss_fn must rebuild the graph from the current leaf values on every call.
// Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator so that
// vanishing gradients are compared absolutely.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& leaves,
                           double step = 1e-5);

}  // namespace dtrm
