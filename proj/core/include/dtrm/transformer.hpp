// Causal transformer encoder with three interchangeable attention variants:
// dense, sparse sliding-window, and head-parameter-shared.
#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dtrm/tensor.hpp"

namespace dtrm {

class Rng;

enum class AttentionKind { kDense, kSparse, kSharedHeads, kSparseShared };

AttentionKind attention_kind_from_string(const std::string& s);
std::string to_string(AttentionKind kind);

struct TransformerConfig {
  int num_blocks = 3;
  int model_dim = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  double dropout_rate = 0.1;
  AttentionKind attention = AttentionKind::kDense;
  int window = 8;  // sliding-window width for the sparse variants
  int max_sequence_len = 64;
  double layer_norm_eps = 1e-8;

  bool sparse() const {
    return attention == AttentionKind::kSparse || attention == AttentionKind::kSparseShared;
  }
  bool shared_heads() const {
    return attention == AttentionKind::kSharedHeads || attention == AttentionKind::kSparseShared;
  }
  void validate() const;
};

// Dense variant: wq/wk/wv are [d×d] with per-head column blocks, biases [d].
// Shared variant: one [d×hd] projection triplet for all heads; per-head
// diversity comes from the per-head query bias bq stored as [H×hd]; bk/bv
// collapse to [hd].
struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct BlockParams {
  Tensor ln1_g, ln1_b;
  AttentionParams attn;
  Tensor ln2_g, ln2_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// Fused causal self-attention over x [T×d]. Position t attends to positions
// [t-w+1, t] for sparse variants and [0, t] otherwise. mul_count, when given,
// accumulates the mask-dependent multiplies (score dots and weighted sums);
// projection costs are excluded so the count isolates the attention scaling.
// attn_weights, when given, receives the [H×T×T] weight matrix (zeros outside
// each row's visible window).
Tensor causal_attention(const Tensor& x, const AttentionParams& params,
                        const TransformerConfig& cfg, std::size_t* mul_count = nullptr,
                        std::vector<double>* attn_weights = nullptr);

class Transformer {
 public:
  Transformer(TransformerConfig cfg, Rng& rng);

  // Pre-norm residual blocks: x + Attn(LN(x)), then x + FFN(LN(x)).
  // Dropout is applied to the two sublayer outputs when train is set.
  Tensor forward(const Tensor& tokens, bool train = false, Rng* dropout_rng = nullptr) const;

  const TransformerConfig& config() const { return cfg_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  BlockParams& block(int i) { return blocks_.at(i); }
  const BlockParams& block(int i) const { return blocks_.at(i); }

  // Parameter handles, stable order; names are "b<i>.<group>.<leaf>".
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

 private:
  TransformerConfig cfg_;
  std::vector<BlockParams> blocks_;
};

// Exact learnable-scalar count of a trunk with this config.
std::size_t count_parameters(const TransformerConfig& cfg);

// Mask-dependent multiply count of one attention layer at sequence length T,
// measured from an instrumented run.
std::size_t attention_multiply_count(const TransformerConfig& cfg, int seq_len);

}  // namespace dtrm
