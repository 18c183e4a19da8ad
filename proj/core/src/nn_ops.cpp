#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dtrm/ops.hpp"
#include "dtrm/rng.hpp"

namespace dtrm {

namespace {

bool want_grad(const Tensor& t) { return grad_enabled() && t.requires_grad; }

void ensure_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

// rows = numel / last extent
std::pair<std::size_t, int> lastdim_slices(const Tensor& x) {
  const int d = x.shape.back();
  return {x.numel() / static_cast<std::size_t>(d), d};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  ensure_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape, want_grad(a) || want_grad(b));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  check_finite(out, "add");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {a, b};
    out.node->backward = [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const std::size_t n2 = o.numel();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < n2; ++i) (*pb.grad)[i] += (*o.grad)[i];
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  ensure_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape, want_grad(a) || want_grad(b));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  check_finite(out, "sub");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {a, b};
    out.node->backward = [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const std::size_t n2 = o.numel();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < n2; ++i) (*pb.grad)[i] -= (*o.grad)[i];
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  ensure_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape, want_grad(a) || want_grad(b));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  check_finite(out, "mul");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {a, b};
    out.node->backward = [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const std::size_t n2 = o.numel();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i] * (*pb.data)[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < n2; ++i) (*pb.grad)[i] += (*o.grad)[i] * (*pa.data)[i];
    };
  }
  return out;
}

Tensor min_elem(const Tensor& a, const Tensor& b) {
  ensure_same_shape(a, b, "min_elem");
  Tensor out = Tensor::zeros(a.shape, want_grad(a) || want_grad(b));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::min((*a.data)[i], (*b.data)[i]);
  check_finite(out, "min_elem");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {a, b};
    out.node->backward = [](const Tensor& o) {
      const Tensor& pa = o.node->parents[0];
      const Tensor& pb = o.node->parents[1];
      const std::size_t n2 = o.numel();
      for (std::size_t i = 0; i < n2; ++i) {
        if ((*pa.data)[i] <= (*pb.data)[i]) {
          if (pa.requires_grad) (*pa.grad)[i] += (*o.grad)[i];
        } else if (pb.requires_grad) {
          (*pb.grad)[i] += (*o.grad)[i];
        }
      }
    };
  }
  return out;
}

Tensor shift(const Tensor& x, double s) {
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*x.data)[i] + s;
  check_finite(out, "shift");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const std::size_t n2 = o.numel();
      for (std::size_t i = 0; i < n2; ++i) (*px.grad)[i] += (*o.grad)[i];
    };
  }
  return out;
}

Tensor scale(const Tensor& x, double s) {
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*x.data)[i] * s;
  check_finite(out, "scale");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [s](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const std::size_t n2 = o.numel();
      for (std::size_t i = 0; i < n2; ++i) (*px.grad)[i] += (*o.grad)[i] * s;
    };
  }
  return out;
}

Tensor exp_elem(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::exp((*x.data)[i]);
  check_finite(out, "exp_elem");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const std::size_t n2 = o.numel();
      for (std::size_t i = 0; i < n2; ++i) (*px.grad)[i] += (*o.grad)[i] * (*o.data)[i];
    };
  }
  return out;
}

Tensor tanh_elem(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::tanh((*x.data)[i]);
  check_finite(out, "tanh_elem");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const std::size_t n2 = o.numel();
      for (std::size_t i = 0; i < n2; ++i) {
        const double t = (*o.data)[i];
        (*px.grad)[i] += (*o.grad)[i] * (1.0 - t * t);
      }
    };
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  const std::size_t n = out.numel();
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = (*x.data)[i];
    (*out.data)[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  check_finite(out, "gelu");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [inv_sqrt2](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const std::size_t n2 = o.numel();
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < n2; ++i) {
        const double v = (*px.data)[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        (*px.grad)[i] += (*o.grad)[i] * (cdf + v * pdf);
      }
    };
  }
  return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = std::clamp((*x.data)[i], lo, hi);
  check_finite(out, "clamp");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [lo, hi](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const std::size_t n2 = o.numel();
      for (std::size_t i = 0; i < n2; ++i) {
        const double v = (*px.data)[i];
        if (v >= lo && v <= hi) (*px.grad)[i] += (*o.grad)[i];
      }
    };
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::zeros({1}, want_grad(x));
  double acc = 0.0;
  for (double v : *x.data) acc += v;
  (*out.data)[0] = acc;
  check_finite(out, "sum_all");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const double g = (*o.grad)[0];
      for (double& gv : *px.grad) gv += g;
    };
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor flatten(const Tensor& x) {
  Tensor out = Tensor::zeros({static_cast<int>(x.numel())}, want_grad(x));
  *out.data = *x.data;
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const std::size_t n2 = o.numel();
      for (std::size_t i = 0; i < n2; ++i) (*px.grad)[i] += (*o.grad)[i];
    };
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const int d = rows[0].shape.back();
  bool any_grad = false;
  for (const Tensor& r : rows) {
    if (r.shape.size() != 1 || r.shape[0] != d) {
      throw std::invalid_argument("stack_rows: rows must be 1-D of equal length");
    }
    any_grad = any_grad || want_grad(r);
  }
  const int n = static_cast<int>(rows.size());
  Tensor out = Tensor::zeros({n, d}, any_grad);
  for (int i = 0; i < n; ++i) {
    std::copy(rows[i].data->begin(), rows[i].data->end(),
              out.data->begin() + static_cast<std::size_t>(i) * d);
  }
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = rows;
    out.node->backward = [d](const Tensor& o) {
      for (std::size_t i = 0; i < o.node->parents.size(); ++i) {
        const Tensor& p = o.node->parents[i];
        if (!p.requires_grad) continue;
        const double* g = o.grad->data() + i * static_cast<std::size_t>(d);
        for (int j = 0; j < d; ++j) (*p.grad)[j] += g[j];
      }
    };
  }
  return out;
}

Tensor row(const Tensor& x, int r) {
  if (x.shape.size() != 2) throw std::invalid_argument("row: expects a 2-D tensor");
  const int m = x.shape[0], d = x.shape[1];
  if (r < 0 || r >= m) throw std::invalid_argument("row: index out of range");
  Tensor out = Tensor::zeros({d}, want_grad(x));
  std::copy(x.data->begin() + static_cast<std::size_t>(r) * d,
            x.data->begin() + static_cast<std::size_t>(r + 1) * d, out.data->begin());
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [r, d](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      for (int j = 0; j < d; ++j) {
        (*px.grad)[static_cast<std::size_t>(r) * d + j] += (*o.grad)[j];
      }
    };
  }
  return out;
}

Tensor concat_vec(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_vec: no parts");
  int total = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    if (p.shape.size() != 1) throw std::invalid_argument("concat_vec: parts must be 1-D");
    total += p.shape[0];
    any_grad = any_grad || want_grad(p);
  }
  Tensor out = Tensor::zeros({total}, any_grad);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data->begin(), p.data->end(), out.data->begin() + off);
    off += p.numel();
  }
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = parts;
    out.node->backward = [](const Tensor& o) {
      std::size_t off2 = 0;
      for (const Tensor& p : o.node->parents) {
        if (p.requires_grad) {
          for (std::size_t j = 0; j < p.numel(); ++j) (*p.grad)[j] += (*o.grad)[off2 + j];
        }
        off2 += p.numel();
      }
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& indices) {
  if (table.shape.size() != 2) throw std::invalid_argument("gather_rows: table must be 2-D");
  const int v = table.shape[0], d = table.shape[1];
  for (int idx : indices) {
    if (idx < 0 || idx >= v) throw std::invalid_argument("gather_rows: index out of range");
  }
  const int n = static_cast<int>(indices.size());
  Tensor out = Tensor::zeros({n, d}, want_grad(table));
  for (int i = 0; i < n; ++i) {
    std::copy(table.data->begin() + static_cast<std::size_t>(indices[i]) * d,
              table.data->begin() + static_cast<std::size_t>(indices[i] + 1) * d,
              out.data->begin() + static_cast<std::size_t>(i) * d);
  }
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {table};
    out.node->backward = [indices, d](const Tensor& o) {
      const Tensor& pt = o.node->parents[0];
      if (!pt.requires_grad) return;
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* g = o.grad->data() + i * static_cast<std::size_t>(d);
        double* tg = pt.grad->data() + static_cast<std::size_t>(indices[i]) * d;
        for (int j = 0; j < d; ++j) tg[j] += g[j];
      }
    };
  }
  return out;
}

Tensor pick(const Tensor& x, const std::vector<int>& cols) {
  if (x.shape.size() != 2) throw std::invalid_argument("pick: expects a 2-D tensor");
  const int m = x.shape[0], n = x.shape[1];
  if (static_cast<int>(cols.size()) != m) throw std::invalid_argument("pick: one column per row");
  for (int c : cols) {
    if (c < 0 || c >= n) throw std::invalid_argument("pick: column out of range");
  }
  Tensor out = Tensor::zeros({m}, want_grad(x));
  for (int i = 0; i < m; ++i) {
    (*out.data)[i] = (*x.data)[static_cast<std::size_t>(i) * n + cols[i]];
  }
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [cols, n](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        (*px.grad)[i * n + cols[i]] += (*o.grad)[i];
      }
    };
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  auto [slices, d] = lastdim_slices(x);
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  for (std::size_t s = 0; s < slices; ++s) {
    const double* in = x.data->data() + s * d;
    double* o = out.data->data() + s * d;
    double mx = in[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, in[j]);
    double denom = 0.0;
    for (int j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - mx);
      denom += o[j];
    }
    for (int j = 0; j < d; ++j) o[j] /= denom;
  }
  check_finite(out, "softmax_lastdim");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const int d2 = o.shape.back();
      const std::size_t slices2 = o.numel() / d2;
      for (std::size_t s = 0; s < slices2; ++s) {
        const double* y = o.data->data() + s * d2;
        const double* gy = o.grad->data() + s * d2;
        double dot = 0.0;
        for (int j = 0; j < d2; ++j) dot += y[j] * gy[j];
        double* gx = px.grad->data() + s * d2;
        for (int j = 0; j < d2; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    };
  }
  return out;
}

Tensor log_softmax_lastdim(const Tensor& x) {
  auto [slices, d] = lastdim_slices(x);
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  for (std::size_t s = 0; s < slices; ++s) {
    const double* in = x.data->data() + s * d;
    double* o = out.data->data() + s * d;
    double mx = in[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, in[j]);
    double denom = 0.0;
    for (int j = 0; j < d; ++j) denom += std::exp(in[j] - mx);
    const double lse = mx + std::log(denom);
    for (int j = 0; j < d; ++j) o[j] = in[j] - lse;
  }
  check_finite(out, "log_softmax_lastdim");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const int d2 = o.shape.back();
      const std::size_t slices2 = o.numel() / d2;
      for (std::size_t s = 0; s < slices2; ++s) {
        const double* y = o.data->data() + s * d2;
        const double* gy = o.grad->data() + s * d2;
        double gsum = 0.0;
        for (int j = 0; j < d2; ++j) gsum += gy[j];
        double* gx = px.grad->data() + s * d2;
        for (int j = 0; j < d2; ++j) gx[j] += gy[j] - std::exp(y[j]) * gsum;
      }
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const int d = x.shape.back();
  if (gain.shape != std::vector<int>{d} || bias.shape != std::vector<int>{d}) {
    throw std::invalid_argument("layer_norm: gain/bias must match last dim");
  }
  auto [slices, dd] = lastdim_slices(x);
  (void)dd;
  Tensor out = Tensor::zeros(x.shape, want_grad(x) || want_grad(gain) || want_grad(bias));
  std::vector<double> mean(slices), inv_std(slices);
  for (std::size_t s = 0; s < slices; ++s) {
    const double* in = x.data->data() + s * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += in[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= d;
    mean[s] = mu;
    inv_std[s] = 1.0 / std::sqrt(var + eps);
    double* o = out.data->data() + s * d;
    for (int j = 0; j < d; ++j) {
      o[j] = (in[j] - mu) * inv_std[s] * (*gain.data)[j] + (*bias.data)[j];
    }
  }
  check_finite(out, "layer_norm");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x, gain, bias};
    out.node->backward = [mean = std::move(mean), inv_std = std::move(inv_std),
                          d](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      const Tensor& pg = o.node->parents[1];
      const Tensor& pb = o.node->parents[2];
      const std::size_t slices2 = o.numel() / d;
      for (std::size_t s = 0; s < slices2; ++s) {
        const double* in = px.data->data() + s * d;
        const double* gy = o.grad->data() + s * d;
        const double mu = mean[s];
        const double is = inv_std[s];
        if (pg.requires_grad || pb.requires_grad) {
          for (int j = 0; j < d; ++j) {
            const double xhat = (in[j] - mu) * is;
            if (pg.requires_grad) (*pg.grad)[j] += gy[j] * xhat;
            if (pb.requires_grad) (*pb.grad)[j] += gy[j];
          }
        }
        if (px.requires_grad) {
          // dL/dx for y = g*(x-mu)/std + b with population variance
          double sum_g = 0.0, sum_gx = 0.0;
          for (int j = 0; j < d; ++j) {
            const double gj = gy[j] * (*pg.data)[j];
            const double xhat = (in[j] - mu) * is;
            sum_g += gj;
            sum_gx += gj * xhat;
          }
          double* gx = px.grad->data() + s * d;
          for (int j = 0; j < d; ++j) {
            const double gj = gy[j] * (*pg.data)[j];
            const double xhat = (in[j] - mu) * is;
            gx[j] += is * (gj - sum_g / d - xhat * sum_gx / d);
          }
        }
      }
    };
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool train) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!train || p == 0.0) return x;
  Tensor out = Tensor::zeros(x.shape, want_grad(x));
  const std::size_t n = out.numel();
  auto mask = std::make_shared<std::vector<double>>(n);
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i) {
    (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
    (*out.data)[i] = (*x.data)[i] * (*mask)[i];
  }
  check_finite(out, "dropout");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x};
    out.node->backward = [mask](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      const std::size_t n2 = o.numel();
      for (std::size_t i = 0; i < n2; ++i) (*px.grad)[i] += (*o.grad)[i] * (*mask)[i];
    };
  }
  return out;
}

Tensor softmax_entropy_rows(const Tensor& logits) {
  if (logits.shape.size() != 2) throw std::invalid_argument("softmax_entropy_rows: 2-D input");
  const int m = logits.shape[0], c = logits.shape[1];
  Tensor out = Tensor::zeros({m}, want_grad(logits));
  // H = logsumexp - sum(p * z); cached probabilities drive the backward
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m) * c);
  for (int i = 0; i < m; ++i) {
    const double* z = logits.data->data() + static_cast<std::size_t>(i) * c;
    double* pr = probs->data() + static_cast<std::size_t>(i) * c;
    double mx = z[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, z[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      pr[j] = std::exp(z[j] - mx);
      denom += pr[j];
    }
    double h = 0.0;
    for (int j = 0; j < c; ++j) {
      pr[j] /= denom;
      if (pr[j] > 0.0) h -= pr[j] * std::log(pr[j]);
    }
    (*out.data)[i] = h;
  }
  check_finite(out, "softmax_entropy_rows");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {logits};
    out.node->backward = [probs, c](const Tensor& o) {
      const Tensor& pl = o.node->parents[0];
      if (!pl.requires_grad) return;
      const int m2 = o.shape[0];
      // dH/dz_j = -p_j * (log p_j + H)
      for (int i = 0; i < m2; ++i) {
        const double* pr = probs->data() + static_cast<std::size_t>(i) * c;
        const double h = (*o.data)[i];
        const double g = (*o.grad)[i];
        double* gz = pl.grad->data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
          const double lp = pr[j] > 0.0 ? std::log(pr[j]) : 0.0;
          gz[j] += -g * pr[j] * (lp + h);
        }
      }
    };
  }
  return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  ensure_same_shape(pred, target, "mse_loss");
  Tensor out = Tensor::zeros({1}, want_grad(pred) || want_grad(target));
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (*pred.data)[i] - (*target.data)[i];
    acc += e * e;
  }
  (*out.data)[0] = acc / static_cast<double>(n);
  check_finite(out, "mse_loss");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {pred, target};
    out.node->backward = [](const Tensor& o) {
      const Tensor& pp = o.node->parents[0];
      const Tensor& pt = o.node->parents[1];
      const std::size_t n2 = pp.numel();
      const double g = (*o.grad)[0] * 2.0 / static_cast<double>(n2);
      for (std::size_t i = 0; i < n2; ++i) {
        const double e = (*pp.data)[i] - (*pt.data)[i];
        if (pp.requires_grad) (*pp.grad)[i] += g * e;
        if (pt.requires_grad) (*pt.grad)[i] -= g * e;
      }
    };
  }
  return out;
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets) {
  Tensor z = logits.shape.size() == 1
                 ? logits
                 : logits;  // shape handled below
  const int c = z.shape.back();
  const int m = z.shape.size() == 1 ? 1 : z.shape[0];
  if (static_cast<int>(targets.size()) != m) {
    throw std::invalid_argument("cross_entropy_logits: one target per row");
  }
  for (int t : targets) {
    if (t < 0 || t >= c) throw std::invalid_argument("cross_entropy_logits: target out of range");
  }
  Tensor out = Tensor::zeros({1}, want_grad(z));
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m) * c);
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    const double* in = z.data->data() + static_cast<std::size_t>(i) * c;
    double* pr = probs->data() + static_cast<std::size_t>(i) * c;
    double mx = in[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      pr[j] = std::exp(in[j] - mx);
      denom += pr[j];
    }
    for (int j = 0; j < c; ++j) pr[j] /= denom;
    acc -= in[targets[i]] - mx - std::log(denom);
  }
  (*out.data)[0] = acc / m;
  check_finite(out, "cross_entropy_logits");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {z};
    out.node->backward = [probs, targets, c, m](const Tensor& o) {
      const Tensor& pz = o.node->parents[0];
      if (!pz.requires_grad) return;
      const double g = (*o.grad)[0] / m;
      for (int i = 0; i < m; ++i) {
        const double* pr = probs->data() + static_cast<std::size_t>(i) * c;
        double* gz = pz.grad->data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
          gz[j] += g * (pr[j] - (j == targets[i] ? 1.0 : 0.0));
        }
      }
    };
  }
  return out;
}

Tensor neg_sqdist(const Tensor& pred, const Tensor& table) {
  if (pred.shape.size() != 1 || table.shape.size() != 2 || table.shape[1] != pred.shape[0]) {
    throw std::invalid_argument("neg_sqdist: pred [d] and table [C×d] required");
  }
  const int c = table.shape[0], d = table.shape[1];
  Tensor out = Tensor::zeros({c}, want_grad(pred) || want_grad(table));
  for (int i = 0; i < c; ++i) {
    const double* trow = table.data->data() + static_cast<std::size_t>(i) * d;
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
      const double e = (*pred.data)[j] - trow[j];
      acc += e * e;
    }
    (*out.data)[i] = -acc;
  }
  check_finite(out, "neg_sqdist");
  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {pred, table};
    out.node->backward = [c, d](const Tensor& o) {
      const Tensor& pp = o.node->parents[0];
      const Tensor& pt = o.node->parents[1];
      for (int i = 0; i < c; ++i) {
        const double g = (*o.grad)[i];
        if (g == 0.0) continue;
        const double* trow = pt.data->data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
          const double e = (*pp.data)[j] - trow[j];
          if (pp.requires_grad) (*pp.grad)[j] += -2.0 * g * e;
          if (pt.requires_grad) (*pt.grad)[static_cast<std::size_t>(i) * d + j] += 2.0 * g * e;
        }
      }
    };
  }
  return out;
}

}  // namespace dtrm
