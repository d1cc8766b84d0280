#pragma once

#include <cstddef>
#include <random>

#include "sdvit/tensor.hpp"

namespace sdvit {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
// a * s for a one-element tensor s.
Tensor scale_by(const Tensor& a, const Tensor& s);

// x + y where y's shape is a suffix of x's shape (bias / positional add).
Tensor add_broadcast(const Tensor& x, const Tensor& y);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// [M,K] x [K,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] * weight[in, out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Exact erf-based GELU.
Tensor gelu(const Tensor& x);

// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-6f);

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, float p, std::mt19937_64& rng);

// Softmax over the last axis of logits / temperature.
Tensor softmax(const Tensor& logits, float temperature = 1.0f);
Tensor log_softmax(const Tensor& logits, float temperature = 1.0f);

// cls[D], patches[B,P,D] -> [B,P+1,D] with cls at token 0 of every sample.
Tensor prepend_token(const Tensor& cls, const Tensor& patches);
// x[B,T,D] -> [B,D] at token index `token`.
Tensor select_token(const Tensor& x, std::size_t token);

struct AttentionResult {
  Tensor output;   // [B,T,D]
  Tensor weights;  // [B,H,T,T], not part of the graph
};

// Scaled dot-product attention over `num_heads` heads; q, k, v are [B,T,D].
AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t num_heads);

}  // namespace sdvit
