#include "dtrm/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dtrm/ops.hpp"

namespace dtrm {

std::size_t numel_of(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor: non-positive extent");
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : *t.data) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(op) + ": non-finite value produced");
    }
  }
}

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(numel_of(shape), 0.0);
  t.requires_grad = requires_grad && grad_enabled();
  if (t.requires_grad) {
    t.grad = std::make_shared<std::vector<double>>(t.data->size(), 0.0);
  }
  return t;
}

Tensor Tensor::full(const std::vector<int>& shape, double value, bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  for (double& v : *t.data) v = value;
  return t;
}

Tensor Tensor::from_values(const std::vector<int>& shape, std::vector<double> values,
                           bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape does not match value count");
  }
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  t.requires_grad = requires_grad && grad_enabled();
  if (t.requires_grad) {
    t.grad = std::make_shared<std::vector<double>>(t.data->size(), 0.0);
  }
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

std::size_t Tensor::numel() const { return data ? data->size() : 0; }

int Tensor::rows() const {
  if (shape.size() != 2) throw std::invalid_argument("tensor: rows() needs a 2-D tensor");
  return shape[0];
}

int Tensor::cols() const {
  if (shape.size() != 2) throw std::invalid_argument("tensor: cols() needs a 2-D tensor");
  return shape[1];
}

double Tensor::value() const {
  if (numel() != 1) throw std::invalid_argument("tensor: value() needs a single element");
  return (*data)[0];
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

Tensor Tensor::detached_copy() const {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(*data);
  t.requires_grad = false;
  return t;
}

}  // namespace dtrm
