// Dense row-major f64 tensors with reverse-mode automatic differentiation.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace dtrm {

struct Node;

// Lightweight handle: copies share storage. Values are immutable after an op
// produces them; only optimizer steps write into existing parameter storage.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // producing op, null for leaves

  Tensor() = default;

  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor full(const std::vector<int>& shape, double value, bool requires_grad = false);
  static Tensor from_values(const std::vector<int>& shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return data != nullptr; }
  std::size_t numel() const;
  int rows() const;  // first extent of a 2-D tensor
  int cols() const;  // last extent of a 2-D tensor
  double value() const;  // requires numel() == 1
  double at(std::size_t i) const { return (*data)[i]; }

  void zero_grad();
  Tensor detached_copy() const;  // fresh storage, no graph, no grad
};

// Recorded operation: parents plus a closure that routes the output gradient
// into the parents' gradient buffers (additive).
struct Node {
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backward;
};

// Thread-local gradient recording mode. Disabled inside NoGradGuard scopes.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse pass from a scalar loss: topological order over the recorded graph,
// each node visited exactly once, gradients accumulated across fan-out.
void backward(const Tensor& loss);

std::size_t numel_of(const std::vector<int>& shape);
void check_finite(const Tensor& t, const char* op);

}  // namespace dtrm
