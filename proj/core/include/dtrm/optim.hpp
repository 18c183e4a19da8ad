// AdamW with decoupled weight decay.
#pragma once

#include <cstdint>
#include <vector>

#include "dtrm/tensor.hpp"

namespace dtrm {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  // Applies decay to the parameter first (not folded into the gradient),
  // then the bias-corrected moment update. Parameters whose requires_grad
  // is currently false are skipped entirely.
  void step();
  void zero_grad();
  std::int64_t step_count() const { return step_count_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamWConfig cfg_;
  std::int64_t step_count_ = 0;
};

}  // namespace dtrm
