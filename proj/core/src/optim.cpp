#include "dtrm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dtrm {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.defined()) throw std::invalid_argument("adamw: undefined parameter");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    if (!p.requires_grad || !p.grad) continue;  // frozen params stay bit-identical
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    const std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) {
      double& w = (*p.data)[i];
      const double g = (*p.grad)[i];
      if (cfg_.weight_decay != 0.0) w -= cfg_.lr * cfg_.weight_decay * w;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      if (!std::isfinite(w)) throw std::runtime_error("adamw: non-finite parameter");
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace dtrm
