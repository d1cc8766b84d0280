#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "sdvit/tensor.hpp"

namespace sdvit {

struct AdamWHyper {
  float learning_rate = 5e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
  float max_grad_norm = 0.0f;  // global-norm clipping; 0 disables
};

struct MomentSlot {
  std::vector<float> first_moment;
  std::vector<float> second_moment;
  std::int64_t steps = 0;  // per-parameter count used for bias correction
};

struct OptimState {
  AdamWHyper hyper;
  std::int64_t step_count = 0;
  // Keyed by parameter storage; slots are created on a parameter's first update.
  std::unordered_map<const TensorImpl*, MomentSlot> slots;
};

// One decoupled-weight-decay Adam update over `params`, reading their grads.
// Throws StateError if any parameter has no grad.
void adamw_step(std::span<Tensor> params, OptimState& state);

// Clears the grads of every tensor in `params`.
void zero_grads(std::span<Tensor> params);

}  // namespace sdvit
