#pragma once

#include "rcn/tensor.hpp"

namespace rcn {

// Single-head dot-product self-attention over a sequence of objects:
// softmax((X Wq^T)(X Wk^T)^T / sqrt(d_k)) (X Wv^T). Weights are [d_out, d_in].
Tensor self_attention(const Tensor& X, const Tensor& wq, const Tensor& wk, const Tensor& wv);

}  // namespace rcn
