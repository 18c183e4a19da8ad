// Differentiable operations on Tensor. Shapes are validated, outputs are
// checked finite, and every op records a backward closure when grads are on.
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dtrm/tensor.hpp"

namespace dtrm {

class Rng;

// elementwise, same shape
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor min_elem(const Tensor& a, const Tensor& b);  // ties route grad to a

// scalar broadcast
Tensor shift(const Tensor& x, double s);  // x + s
Tensor scale(const Tensor& x, double s);  // x * s

Tensor exp_elem(const Tensor& x);
Tensor tanh_elem(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// reductions
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// linear algebra (2-D, row-major)
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// x [m×k] or [k] times w [k×n] plus bias [n]; 1-D input yields 1-D output
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// shape plumbing
Tensor flatten(const Tensor& x);                       // any shape -> [numel]
Tensor stack_rows(const std::vector<Tensor>& rows);    // n tensors [d] -> [n×d]
Tensor row(const Tensor& x, int r);                    // [m×d] -> [d]
Tensor concat_vec(const std::vector<Tensor>& parts);   // 1-D tensors -> 1-D

// indexing
Tensor gather_rows(const Tensor& table, const std::vector<int>& indices);  // [V×d] -> [n×d]
Tensor pick(const Tensor& x, const std::vector<int>& cols);  // [m×n], per-row column -> [m]

// normalization & regularization
Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);
// zero mean / unit variance per last-dim slice, then affine; gain/bias are [d]
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
// inverted dropout: scales kept values by 1/(1-p); identity when !train or p==0
Tensor dropout(const Tensor& x, double p, Rng& rng, bool train);

// per-row entropy of softmax(logits): [m×C] -> [m]
Tensor softmax_entropy_rows(const Tensor& logits);

// losses
Tensor mse_loss(const Tensor& pred, const Tensor& target);  // mean over elements
// mean over rows of -log softmax(logits)[target]; logits [m×C] or [C]
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets);
// -||pred - table[c]||^2 per table row: pred [d], table [C×d] -> [C]
Tensor neg_sqdist(const Tensor& pred, const Tensor& table);

}  // namespace dtrm
