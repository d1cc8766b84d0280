#include "sdvit/optim.hpp"

#include <cmath>
#include <string>

#include "sdvit/errors.hpp"

namespace sdvit {

void adamw_step(std::span<Tensor> params, OptimState& state) {
  const AdamWHyper& h = state.hyper;
  if (!std::isfinite(h.learning_rate) || !std::isfinite(h.beta1) || !std::isfinite(h.beta2) ||
      !std::isfinite(h.eps) || !std::isfinite(h.weight_decay)) {
    throw InvalidArgument("adamw_step: non-finite hyperparameter");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw StateError("adamw_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }

  float clip = 1.0f;
  if (h.max_grad_norm > 0.0f) {
    double sq = 0.0;
    for (const Tensor& p : params)
      for (float g : p.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > h.max_grad_norm) clip = static_cast<float>(h.max_grad_norm / (norm + 1e-6));
  }

  for (Tensor& p : params) {
    MomentSlot& slot = state.slots[p.impl()];
    if (slot.first_moment.empty()) {
      slot.first_moment.assign(p.numel(), 0.0f);
      slot.second_moment.assign(p.numel(), 0.0f);
    }
    const auto t = static_cast<double>(++slot.steps);
    const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(h.beta1), t));
    const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(h.beta2), t));
    const float decay = 1.0f - h.learning_rate * h.weight_decay;
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float gi = g[i] * clip;
      float& m = slot.first_moment[i];
      float& v = slot.second_moment[i];
      m = h.beta1 * m + (1.0f - h.beta1) * gi;
      v = h.beta2 * v + (1.0f - h.beta2) * gi * gi;
      const float m_hat = m / bc1;
      const float v_hat = v / bc2;
      w[i] = w[i] * decay - h.learning_rate * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
  ++state.step_count;
}

void zero_grads(std::span<Tensor> params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace sdvit
