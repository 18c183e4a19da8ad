#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "dtrm/tensor.hpp"

namespace dtrm {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.requires_grad || !loss.grad) {
    throw std::invalid_argument("backward: loss does not require grad");
  }

  // Iterative post-order DFS; nodes deduplicated so each recorded op runs its
  // backward exactly once even when tensor handles are shared.
  std::vector<Tensor> topo;
  std::unordered_set<const Node*> visited;
  struct Frame {
    Tensor t;
    std::size_t next_parent = 0;
  };
  std::vector<Frame> stack;
  if (loss.node && visited.insert(loss.node.get()).second) {
    stack.push_back({loss, 0});
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    Node* n = f.t.node.get();
    if (f.next_parent < n->parents.size()) {
      const Tensor& p = n->parents[f.next_parent++];
      if (p.node && visited.insert(p.node.get()).second) {
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.t);
      stack.pop_back();
    }
  }

  (*loss.grad)[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    it->node->backward(*it);
  }
}

}  // namespace dtrm
