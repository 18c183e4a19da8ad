#include <stdexcept>

#include "dtrm/ops.hpp"

namespace dtrm {

namespace {

bool want_grad(const Tensor& t) { return grad_enabled() && t.requires_grad; }

// c[m×n] += a[m×k] * b[k×n], ikj order for contiguous access
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[k×n] += a^T[k×m] * b[m×n] given a[m×k]
void matmul_at_b_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m×k] += a[m×n] * b^T[n×k] given b[k×n]
void matmul_a_bt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * n;
    double* crow = c + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<std::size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2) {
    throw std::invalid_argument("matmul: expects 2-D tensors");
  }
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k) throw std::invalid_argument("matmul: inner dimensions mismatch");

  Tensor out = Tensor::zeros({m, n}, want_grad(a) || want_grad(b));
  matmul_acc(a.data->data(), b.data->data(), out.data->data(), m, k, n);
  check_finite(out, "matmul");

  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {a, b};
    out.node->backward = [m, k, n](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      if (pa.requires_grad) {
        matmul_a_bt_acc(o.grad->data(), pb.data->data(), pa.grad->data(), m, n, k);
      }
      if (pb.requires_grad) {
        matmul_at_b_acc(pa.data->data(), o.grad->data(), pb.grad->data(), m, k, n);
      }
    };
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.shape.size() != 2) throw std::invalid_argument("transpose: expects a 2-D tensor");
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::zeros({n, m}, want_grad(a));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      (*out.data)[static_cast<std::size_t>(j) * m + i] =
          (*a.data)[static_cast<std::size_t>(i) * n + j];
    }
  }
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {a};
    out.node->backward = [m, n](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          (*pa.grad)[static_cast<std::size_t>(i) * n + j] +=
              (*o.grad)[static_cast<std::size_t>(j) * m + i];
        }
      }
    };
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.shape.size() != 2) throw std::invalid_argument("linear: weight must be 2-D");
  const int k = w.shape[0], n = w.shape[1];
  if (b.shape.size() != 1 || b.shape[0] != n) {
    throw std::invalid_argument("linear: bias must be [out_dim]");
  }
  const bool vec_in = x.shape.size() == 1;
  const int m = vec_in ? 1 : x.shape[0];
  const int xk = vec_in ? x.shape[0] : x.shape[1];
  if (!vec_in && x.shape.size() != 2) throw std::invalid_argument("linear: input must be 1-D or 2-D");
  if (xk != k) throw std::invalid_argument("linear: input dim mismatch");

  Tensor out = Tensor::zeros(vec_in ? std::vector<int>{n} : std::vector<int>{m, n},
                             want_grad(x) || want_grad(w) || want_grad(b));
  for (int i = 0; i < m; ++i) {
    double* orow = out.data->data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) orow[j] = (*b.data)[j];
  }
  matmul_acc(x.data->data(), w.data->data(), out.data->data(), m, k, n);
  check_finite(out, "linear");

  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x, w, b};
    out.node->backward = [m, k, n](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      const Tensor& pw = o.node->parents[1];
      const Tensor& pb = o.node->parents[2];
      if (px.requires_grad) {
        matmul_a_bt_acc(o.grad->data(), pw.data->data(), px.grad->data(), m, n, k);
      }
      if (pw.requires_grad) {
        matmul_at_b_acc(px.data->data(), o.grad->data(), pw.grad->data(), m, k, n);
      }
      if (pb.requires_grad) {
        for (int i = 0; i < m; ++i) {
          const double* grow = o.grad->data() + static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j) (*pb.grad)[j] += grow[j];
        }
      }
    };
  }
  return out;
}

}  // namespace dtrm
