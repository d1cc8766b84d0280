#pragma once

#include <span>

#include "sdvit/tensor.hpp"

namespace sdvit {

/// Coefficients of the linear loss combination used by every distillation
/// regime. Defaults are the task-loss 1 / soft-label CE 0.5 recipe.
struct LossSpec {
  float w_task = 1.0f;
  float w_distil_ce = 0.5f;
  float w_cosine = 0.0f;
  float w_mse = 0.0f;
  float w_kl = 0.0f;
  float temperature = 1.0f;

  // Throws InvalidArgument on negative/non-finite weights or temperature <= 0.
  void validate() const;
};

inline constexpr float kLogClampEps = 1e-8f;
inline constexpr float kNormFloor = 1e-8f;

// Mean over the batch of -sum(target * log_softmax(logits / T)).
// Soft targets are treated as constants; rows must sum to 1 +- 1e-5.
Tensor cross_entropy(const Tensor& logits, const Tensor& soft_targets, float temperature = 1.0f);
// Hard-label form; builds a one-hot target and shares the soft code path.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, float temperature = 1.0f);

// Mean over the batch of sum p * (log p - log q), both clamped below at 1e-8.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

// Mean over rows of 1 - cos(a_i, b_i).
Tensor cosine_distance_loss(const Tensor& a, const Tensor& b);

Tensor mse_loss(const Tensor& a, const Tensor& b);

Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

}  // namespace sdvit
