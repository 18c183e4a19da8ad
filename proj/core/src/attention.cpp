#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "dtrm/ops.hpp"
#include "dtrm/transformer.hpp"

namespace dtrm {

namespace {

struct AttnBuffers {
  // All [T×d] in per-head column layout except weights [H×T×T].
  std::vector<double> q, k, v, ctx, weights;
  int t = 0, d = 0, heads = 0, window = 0;
};

int visible_begin(int t, int window) { return std::max(0, t - window + 1); }

}  // namespace

Tensor causal_attention(const Tensor& x, const AttentionParams& params,
                        const TransformerConfig& cfg, std::size_t* mul_count,
                        std::vector<double>* attn_weights) {
  cfg.validate();
  if (x.shape.size() != 2 || x.shape[1] != cfg.model_dim) {
    throw std::invalid_argument("causal_attention: input must be [T×model_dim]");
  }
  const int t_len = x.shape[0];
  if (t_len > cfg.max_sequence_len) {
    throw std::invalid_argument("causal_attention: sequence exceeds max_sequence_len");
  }
  const int d = cfg.model_dim;
  const int heads = cfg.num_heads;
  const int hd = d / heads;
  const bool shared = cfg.shared_heads();
  const int window = cfg.sparse() ? cfg.window : t_len;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  auto buf = std::make_shared<AttnBuffers>();
  buf->t = t_len;
  buf->d = d;
  buf->heads = heads;
  buf->window = window;
  buf->q.assign(static_cast<std::size_t>(t_len) * d, 0.0);
  buf->k.assign(static_cast<std::size_t>(t_len) * d, 0.0);
  buf->v.assign(static_cast<std::size_t>(t_len) * d, 0.0);
  buf->ctx.assign(static_cast<std::size_t>(t_len) * d, 0.0);
  buf->weights.assign(static_cast<std::size_t>(heads) * t_len * t_len, 0.0);

  const double* xd = x.data->data();

  // Projections. Dense: per-head column blocks of [d×d] weights.
  // Shared: one [d×hd] projection reused by every head; queries get the
  // per-head bias, keys/values are identical across heads.
  for (int t = 0; t < t_len; ++t) {
    const double* xrow = xd + static_cast<std::size_t>(t) * d;
    double* qrow = buf->q.data() + static_cast<std::size_t>(t) * d;
    double* krow = buf->k.data() + static_cast<std::size_t>(t) * d;
    double* vrow = buf->v.data() + static_cast<std::size_t>(t) * d;
    if (!shared) {
      for (int c = 0; c < d; ++c) {
        qrow[c] = (*params.bq.data)[c];
        krow[c] = (*params.bk.data)[c];
        vrow[c] = (*params.bv.data)[c];
      }
      for (int j = 0; j < d; ++j) {
        const double xv = xrow[j];
        const double* wq = params.wq.data->data() + static_cast<std::size_t>(j) * d;
        const double* wk = params.wk.data->data() + static_cast<std::size_t>(j) * d;
        const double* wv = params.wv.data->data() + static_cast<std::size_t>(j) * d;
        for (int c = 0; c < d; ++c) {
          qrow[c] += xv * wq[c];
          krow[c] += xv * wk[c];
          vrow[c] += xv * wv[c];
        }
      }
    } else {
      // base projections into the first head slice, then replicate
      for (int c = 0; c < hd; ++c) {
        krow[c] = (*params.bk.data)[c];
        vrow[c] = (*params.bv.data)[c];
        qrow[c] = 0.0;
      }
      for (int j = 0; j < d; ++j) {
        const double xv = xrow[j];
        const double* wq = params.wq.data->data() + static_cast<std::size_t>(j) * hd;
        const double* wk = params.wk.data->data() + static_cast<std::size_t>(j) * hd;
        const double* wv = params.wv.data->data() + static_cast<std::size_t>(j) * hd;
        for (int c = 0; c < hd; ++c) {
          qrow[c] += xv * wq[c];
          krow[c] += xv * wk[c];
          vrow[c] += xv * wv[c];
        }
      }
      for (int h = heads - 1; h >= 0; --h) {
        double* qh = qrow + static_cast<std::size_t>(h) * hd;
        double* kh = krow + static_cast<std::size_t>(h) * hd;
        double* vh = vrow + static_cast<std::size_t>(h) * hd;
        for (int c = 0; c < hd; ++c) {
          qh[c] = qrow[c] + (*params.bq.data)[static_cast<std::size_t>(h) * hd + c];
          kh[c] = krow[c];
          vh[c] = vrow[c];
        }
      }
    }
  }

  // Scores, masked softmax, weighted sums. Only pairs inside the visible
  // window are ever touched; mul_count tallies exactly these multiplies.
  std::vector<double> scores(static_cast<std::size_t>(t_len));
  for (int h = 0; h < heads; ++h) {
    const std::size_t hoff = static_cast<std::size_t>(h) * hd;
    double* wmat = buf->weights.data() + static_cast<std::size_t>(h) * t_len * t_len;
    for (int t = 0; t < t_len; ++t) {
      const int s0 = visible_begin(t, window);
      const double* qv = buf->q.data() + static_cast<std::size_t>(t) * d + hoff;
      double mx = -1e300;
      for (int s = s0; s <= t; ++s) {
        const double* kv = buf->k.data() + static_cast<std::size_t>(s) * d + hoff;
        double acc = 0.0;
        for (int c = 0; c < hd; ++c) acc += qv[c] * kv[c];
        if (mul_count) *mul_count += static_cast<std::size_t>(hd);
        scores[s] = acc * inv_sqrt_hd;
        mx = std::max(mx, scores[s]);
      }
      double denom = 0.0;
      for (int s = s0; s <= t; ++s) {
        scores[s] = std::exp(scores[s] - mx);
        denom += scores[s];
      }
      double* wrow = wmat + static_cast<std::size_t>(t) * t_len;
      double* crow = buf->ctx.data() + static_cast<std::size_t>(t) * d + hoff;
      for (int s = s0; s <= t; ++s) {
        const double a = scores[s] / denom;
        wrow[s] = a;
        const double* vv = buf->v.data() + static_cast<std::size_t>(s) * d + hoff;
        for (int c = 0; c < hd; ++c) crow[c] += a * vv[c];
        if (mul_count) *mul_count += static_cast<std::size_t>(hd);
      }
    }
  }

  if (attn_weights) *attn_weights = buf->weights;

  // Output projection.
  const bool need_grad =
      grad_enabled() &&
      (x.requires_grad || params.wq.requires_grad || params.bq.requires_grad ||
       params.wk.requires_grad || params.bk.requires_grad || params.wv.requires_grad ||
       params.bv.requires_grad || params.wo.requires_grad || params.bo.requires_grad);
  Tensor out = Tensor::zeros({t_len, d}, need_grad);
  for (int t = 0; t < t_len; ++t) {
    double* orow = out.data->data() + static_cast<std::size_t>(t) * d;
    for (int c = 0; c < d; ++c) orow[c] = (*params.bo.data)[c];
    const double* crow = buf->ctx.data() + static_cast<std::size_t>(t) * d;
    for (int j = 0; j < d; ++j) {
      const double cv = crow[j];
      const double* wo = params.wo.data->data() + static_cast<std::size_t>(j) * d;
      for (int c = 0; c < d; ++c) orow[c] += cv * wo[c];
    }
  }
  check_finite(out, "causal_attention");

  if (out.requires_grad) {
    out.node = std::make_shared<Node>();
    out.node->parents = {x,         params.wq, params.bq, params.wk, params.bk,
                         params.wv, params.bv, params.wo, params.bo};
    const bool is_shared = shared;
    out.node->backward = [buf, hd, inv_sqrt_hd, is_shared](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      const Tensor& pwq = o.node->parents[1];
      const Tensor& pbq = o.node->parents[2];
      const Tensor& pwk = o.node->parents[3];
      const Tensor& pbk = o.node->parents[4];
      const Tensor& pwv = o.node->parents[5];
      const Tensor& pbv = o.node->parents[6];
      const Tensor& pwo = o.node->parents[7];
      const Tensor& pbo = o.node->parents[8];
      const int t_len = buf->t;
      const int d = buf->d;
      const int heads = buf->heads;
      const int window = buf->window;
      const double* gy = o.grad->data();

      // dWo, dbo, dC
      std::vector<double> dctx(static_cast<std::size_t>(t_len) * d, 0.0);
      for (int t = 0; t < t_len; ++t) {
        const double* grow = gy + static_cast<std::size_t>(t) * d;
        const double* crow = buf->ctx.data() + static_cast<std::size_t>(t) * d;
        if (pbo.requires_grad) {
          for (int c = 0; c < d; ++c) (*pbo.grad)[c] += grow[c];
        }
        if (pwo.requires_grad) {
          for (int j = 0; j < d; ++j) {
            double* wgrow = pwo.grad->data() + static_cast<std::size_t>(j) * d;
            const double cv = crow[j];
            for (int c = 0; c < d; ++c) wgrow[c] += cv * grow[c];
          }
        }
        double* dcrow = dctx.data() + static_cast<std::size_t>(t) * d;
        for (int j = 0; j < d; ++j) {
          const double* wo = pwo.data->data() + static_cast<std::size_t>(j) * d;
          double acc = 0.0;
          for (int c = 0; c < d; ++c) acc += grow[c] * wo[c];
          dcrow[j] = acc;
        }
      }

      // Through the attention weights back to Q, K, V.
      std::vector<double> dq(static_cast<std::size_t>(t_len) * d, 0.0);
      std::vector<double> dk(static_cast<std::size_t>(t_len) * d, 0.0);
      std::vector<double> dv(static_cast<std::size_t>(t_len) * d, 0.0);
      std::vector<double> da(static_cast<std::size_t>(t_len));
      for (int h = 0; h < heads; ++h) {
        const std::size_t hoff = static_cast<std::size_t>(h) * hd;
        const double* wmat = buf->weights.data() + static_cast<std::size_t>(h) * t_len * t_len;
        for (int t = 0; t < t_len; ++t) {
          const int s0 = visible_begin(t, window);
          const double* dcrow = dctx.data() + static_cast<std::size_t>(t) * d + hoff;
          const double* wrow = wmat + static_cast<std::size_t>(t) * t_len;
          double dot = 0.0;
          for (int s = s0; s <= t; ++s) {
            const double* vv = buf->v.data() + static_cast<std::size_t>(s) * d + hoff;
            double acc = 0.0;
            for (int c = 0; c < hd; ++c) acc += dcrow[c] * vv[c];
            da[s] = acc;
            dot += acc * wrow[s];
            double* dvrow = dv.data() + static_cast<std::size_t>(s) * d + hoff;
            for (int c = 0; c < hd; ++c) dvrow[c] += wrow[s] * dcrow[c];
          }
          // softmax backward, then score chain rule
          const double* qv = buf->q.data() + static_cast<std::size_t>(t) * d + hoff;
          double* dqrow = dq.data() + static_cast<std::size_t>(t) * d + hoff;
          for (int s = s0; s <= t; ++s) {
            const double ds = wrow[s] * (da[s] - dot) * inv_sqrt_hd;
            const double* kv = buf->k.data() + static_cast<std::size_t>(s) * d + hoff;
            double* dkrow = dk.data() + static_cast<std::size_t>(s) * d + hoff;
            for (int c = 0; c < hd; ++c) {
              dqrow[c] += ds * kv[c];
              dkrow[c] += ds * qv[c];
            }
          }
        }
      }

      // Back through the projections.
      const double* xd2 = px.data->data();
      if (!is_shared) {
        for (int t = 0; t < t_len; ++t) {
          const double* xrow = xd2 + static_cast<std::size_t>(t) * d;
          const double* dqrow = dq.data() + static_cast<std::size_t>(t) * d;
          const double* dkrow = dk.data() + static_cast<std::size_t>(t) * d;
          const double* dvrow = dv.data() + static_cast<std::size_t>(t) * d;
          for (int c = 0; c < d; ++c) {
            if (pbq.requires_grad) (*pbq.grad)[c] += dqrow[c];
            if (pbk.requires_grad) (*pbk.grad)[c] += dkrow[c];
            if (pbv.requires_grad) (*pbv.grad)[c] += dvrow[c];
          }
          for (int j = 0; j < d; ++j) {
            const double xv = xrow[j];
            if (pwq.requires_grad) {
              double* gq = pwq.grad->data() + static_cast<std::size_t>(j) * d;
              for (int c = 0; c < d; ++c) gq[c] += xv * dqrow[c];
            }
            if (pwk.requires_grad) {
              double* gk = pwk.grad->data() + static_cast<std::size_t>(j) * d;
              for (int c = 0; c < d; ++c) gk[c] += xv * dkrow[c];
            }
            if (pwv.requires_grad) {
              double* gv = pwv.grad->data() + static_cast<std::size_t>(j) * d;
              for (int c = 0; c < d; ++c) gv[c] += xv * dvrow[c];
            }
          }
          if (px.requires_grad) {
            double* gx = px.grad->data() + static_cast<std::size_t>(t) * d;
            for (int j = 0; j < d; ++j) {
              const double* wq = pwq.data->data() + static_cast<std::size_t>(j) * d;
              const double* wk = pwk.data->data() + static_cast<std::size_t>(j) * d;
              const double* wv = pwv.data->data() + static_cast<std::size_t>(j) * d;
              double acc = 0.0;
              for (int c = 0; c < d; ++c) {
                acc += dqrow[c] * wq[c] + dkrow[c] * wk[c] + dvrow[c] * wv[c];
              }
              gx[j] += acc;
            }
          }
        }
      } else {
        // Collapse the per-head gradients onto the shared projections.
        for (int t = 0; t < t_len; ++t) {
          const double* xrow = xd2 + static_cast<std::size_t>(t) * d;
          std::vector<double> dq_sum(hd, 0.0), dk_sum(hd, 0.0), dv_sum(hd, 0.0);
          for (int h = 0; h < heads; ++h) {
            const std::size_t hoff = static_cast<std::size_t>(h) * hd;
            const double* dqrow = dq.data() + static_cast<std::size_t>(t) * d + hoff;
            const double* dkrow = dk.data() + static_cast<std::size_t>(t) * d + hoff;
            const double* dvrow = dv.data() + static_cast<std::size_t>(t) * d + hoff;
            for (int c = 0; c < hd; ++c) {
              dq_sum[c] += dqrow[c];
              dk_sum[c] += dkrow[c];
              dv_sum[c] += dvrow[c];
            }
            if (pbq.requires_grad) {
              for (int c = 0; c < hd; ++c) (*pbq.grad)[hoff + c] += dqrow[c];
            }
          }
          for (int c = 0; c < hd; ++c) {
            if (pbk.requires_grad) (*pbk.grad)[c] += dk_sum[c];
            if (pbv.requires_grad) (*pbv.grad)[c] += dv_sum[c];
          }
          for (int j = 0; j < d; ++j) {
            const double xv = xrow[j];
            if (pwq.requires_grad) {
              double* gq = pwq.grad->data() + static_cast<std::size_t>(j) * hd;
              for (int c = 0; c < hd; ++c) gq[c] += xv * dq_sum[c];
            }
            if (pwk.requires_grad) {
              double* gk = pwk.grad->data() + static_cast<std::size_t>(j) * hd;
              for (int c = 0; c < hd; ++c) gk[c] += xv * dk_sum[c];
            }
            if (pwv.requires_grad) {
              double* gv = pwv.grad->data() + static_cast<std::size_t>(j) * hd;
              for (int c = 0; c < hd; ++c) gv[c] += xv * dv_sum[c];
            }
          }
          if (px.requires_grad) {
            double* gx = px.grad->data() + static_cast<std::size_t>(t) * d;
            for (int j = 0; j < d; ++j) {
              const double* wq = pwq.data->data() + static_cast<std::size_t>(j) * hd;
              const double* wk = pwk.data->data() + static_cast<std::size_t>(j) * hd;
              const double* wv = pwv.data->data() + static_cast<std::size_t>(j) * hd;
              double acc = 0.0;
              for (int c = 0; c < hd; ++c) {
                acc += dq_sum[c] * wq[c] + dk_sum[c] * wk[c] + dv_sum[c] * wv[c];
              }
              gx[j] += acc;
            }
          }
        }
      }
    };
  }
  return out;
}

std::size_t attention_multiply_count(const TransformerConfig& cfg, int seq_len) {
  TransformerConfig probe = cfg;
  probe.max_sequence_len = std::max(cfg.max_sequence_len, seq_len);
  probe.validate();
  const int d = probe.model_dim;
  const int hd = d / probe.num_heads;
  AttentionParams p;
  if (probe.shared_heads()) {
    p.wq = Tensor::zeros({d, hd});
    p.bq = Tensor::zeros({d});
    p.wk = Tensor::zeros({d, hd});
    p.bk = Tensor::zeros({hd});
    p.wv = Tensor::zeros({d, hd});
    p.bv = Tensor::zeros({hd});
  } else {
    p.wq = Tensor::zeros({d, d});
    p.bq = Tensor::zeros({d});
    p.wk = Tensor::zeros({d, d});
    p.bk = Tensor::zeros({d});
    p.wv = Tensor::zeros({d, d});
    p.bv = Tensor::zeros({d});
  }
  p.wo = Tensor::zeros({d, d});
  p.bo = Tensor::zeros({d});

  NoGradGuard ng;
  Tensor x = Tensor::zeros({seq_len, d});
  std::size_t count = 0;
  causal_attention(x, p, probe, &count);
  return count;
}

}  // namespace dtrm
