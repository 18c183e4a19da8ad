#include "dtrm/transformer.hpp"

#include <stdexcept>

#include "dtrm/ops.hpp"
#include "dtrm/rng.hpp"

namespace dtrm {

AttentionKind attention_kind_from_string(const std::string& s) {
  if (s == "dense") return AttentionKind::kDense;
  if (s == "sparse") return AttentionKind::kSparse;
  if (s == "shared_heads") return AttentionKind::kSharedHeads;
  if (s == "sparse_shared") return AttentionKind::kSparseShared;
  throw std::invalid_argument("unknown attention variant: " + s);
}

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kDense: return "dense";
    case AttentionKind::kSparse: return "sparse";
    case AttentionKind::kSharedHeads: return "shared_heads";
    case AttentionKind::kSparseShared: return "sparse_shared";
  }
  throw std::invalid_argument("unknown attention variant");
}

void TransformerConfig::validate() const {
  if (num_blocks < 1) throw std::invalid_argument("transformer: num_blocks must be >= 1");
  if (model_dim < 1 || num_heads < 1 || ffn_dim < 1) {
    throw std::invalid_argument("transformer: dims must be positive");
  }
  if (model_dim % num_heads != 0) {
    throw std::invalid_argument("transformer: model_dim not divisible by num_heads");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("transformer: dropout_rate must be in [0,1)");
  }
  if (sparse() && (window < 1 || window > max_sequence_len)) {
    throw std::invalid_argument("transformer: window must be in [1, max_sequence_len]");
  }
}

namespace {

Tensor init_weight(Rng& rng, int rows, int cols, double std_dev) {
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (double& v : *t.data) v = rng.normal(0.0, std_dev);
  return t;
}

Tensor init_bias(const std::vector<int>& shape) { return Tensor::zeros(shape, true); }

}  // namespace

Transformer::Transformer(TransformerConfig cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.model_dim;
  const int hd = d / cfg_.num_heads;
  const double std_dev = 0.02;
  blocks_.reserve(cfg_.num_blocks);
  for (int i = 0; i < cfg_.num_blocks; ++i) {
    BlockParams b;
    b.ln1_g = Tensor::full({d}, 1.0, true);
    b.ln1_b = init_bias({d});
    if (cfg_.shared_heads()) {
      b.attn.wq = init_weight(rng, d, hd, std_dev);
      b.attn.bq = init_bias({cfg_.num_heads, hd});
      b.attn.wk = init_weight(rng, d, hd, std_dev);
      b.attn.bk = init_bias({hd});
      b.attn.wv = init_weight(rng, d, hd, std_dev);
      b.attn.bv = init_bias({hd});
    } else {
      b.attn.wq = init_weight(rng, d, d, std_dev);
      b.attn.bq = init_bias({d});
      b.attn.wk = init_weight(rng, d, d, std_dev);
      b.attn.bk = init_bias({d});
      b.attn.wv = init_weight(rng, d, d, std_dev);
      b.attn.bv = init_bias({d});
    }
    b.attn.wo = init_weight(rng, d, d, std_dev);
    b.attn.bo = init_bias({d});
    b.ln2_g = Tensor::full({d}, 1.0, true);
    b.ln2_b = init_bias({d});
    b.ffn_w1 = init_weight(rng, d, cfg_.ffn_dim, std_dev);
    b.ffn_b1 = init_bias({cfg_.ffn_dim});
    b.ffn_w2 = init_weight(rng, cfg_.ffn_dim, d, std_dev);
    b.ffn_b2 = init_bias({d});
    blocks_.push_back(std::move(b));
  }
}

Tensor Transformer::forward(const Tensor& tokens, bool train, Rng* dropout_rng) const {
  if (train && cfg_.dropout_rate > 0.0 && dropout_rng == nullptr) {
    throw std::invalid_argument("transformer: training forward needs a dropout rng");
  }
  Tensor x = tokens;
  for (const BlockParams& b : blocks_) {
    Tensor h = layer_norm(x, b.ln1_g, b.ln1_b, cfg_.layer_norm_eps);
    Tensor a = causal_attention(h, b.attn, cfg_);
    if (train && cfg_.dropout_rate > 0.0) a = dropout(a, cfg_.dropout_rate, *dropout_rng, true);
    x = add(x, a);
    Tensor f = layer_norm(x, b.ln2_g, b.ln2_b, cfg_.layer_norm_eps);
    f = linear(f, b.ffn_w1, b.ffn_b1);
    f = gelu(f);
    f = linear(f, b.ffn_w2, b.ffn_b2);
    if (train && cfg_.dropout_rate > 0.0) f = dropout(f, cfg_.dropout_rate, *dropout_rng, true);
    x = add(x, f);
  }
  return x;
}

std::vector<std::pair<std::string, Tensor>> Transformer::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const BlockParams& b = blocks_[i];
    const std::string p = "b" + std::to_string(i) + ".";
    out.emplace_back(p + "ln1.g", b.ln1_g);
    out.emplace_back(p + "ln1.b", b.ln1_b);
    out.emplace_back(p + "attn.wq", b.attn.wq);
    out.emplace_back(p + "attn.bq", b.attn.bq);
    out.emplace_back(p + "attn.wk", b.attn.wk);
    out.emplace_back(p + "attn.bk", b.attn.bk);
    out.emplace_back(p + "attn.wv", b.attn.wv);
    out.emplace_back(p + "attn.bv", b.attn.bv);
    out.emplace_back(p + "attn.wo", b.attn.wo);
    out.emplace_back(p + "attn.bo", b.attn.bo);
    out.emplace_back(p + "ln2.g", b.ln2_g);
    out.emplace_back(p + "ln2.b", b.ln2_b);
    out.emplace_back(p + "ffn.w1", b.ffn_w1);
    out.emplace_back(p + "ffn.b1", b.ffn_b1);
    out.emplace_back(p + "ffn.w2", b.ffn_w2);
    out.emplace_back(p + "ffn.b2", b.ffn_b2);
  }
  return out;
}

std::size_t count_parameters(const TransformerConfig& cfg) {
  cfg.validate();
  const std::size_t d = static_cast<std::size_t>(cfg.model_dim);
  const std::size_t hd = d / cfg.num_heads;
  const std::size_t f = static_cast<std::size_t>(cfg.ffn_dim);
  std::size_t attn;
  if (cfg.shared_heads()) {
    // one shared Q/K/V triplet; queries keep a per-head bias
    attn = 3 * d * hd + d /*bq*/ + 2 * hd /*bk,bv*/ + d * d + d /*wo,bo*/;
  } else {
    attn = 3 * (d * d + d) + d * d + d;
  }
  const std::size_t block = 2 * d /*ln1*/ + attn + 2 * d /*ln2*/ + (d * f + f) + (f * d + d);
  return static_cast<std::size_t>(cfg.num_blocks) * block;
}

}  // namespace dtrm
