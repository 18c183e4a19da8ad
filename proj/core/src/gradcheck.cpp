#include "dtrm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtrm {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& leaves,
                           double step) {
  // Analytic gradients from one reverse pass.
  for (const auto& [name, leaf] : leaves) {
    if (!leaf.requires_grad || !leaf.grad) {
      throw std::invalid_argument("grad_check: leaf '" + name + "' does not require grad");
    }
    const_cast<Tensor&>(leaf).zero_grad();
  }
  Tensor loss = loss_fn();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& [name, leaf] : leaves) analytic.push_back(*leaf.grad);

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Tensor& leaf = leaves[li].second;
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double saved = (*leaf.data)[i];
      (*leaf.data)[i] = saved + step;
      const double up = loss_fn().value();
      (*leaf.data)[i] = saved - step;
      const double down = loss_fn().value();
      (*leaf.data)[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::runtime_error("grad_check: non-finite loss during probing");
      }
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[li][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_leaf = leaves[li].first;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace dtrm
