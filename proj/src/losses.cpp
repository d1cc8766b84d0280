#include "sdvit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdvit/errors.hpp"

namespace sdvit {

void LossSpec::validate() const {
  const float weights[] = {w_task, w_distil_ce, w_cosine, w_mse, w_kl};
  for (float w : weights) {
    if (!std::isfinite(w) || w < 0.0f) throw InvalidArgument("loss weights must be finite and >= 0");
  }
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw InvalidArgument("loss temperature must be > 0");
  }
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw InvalidArgument("one_hot: empty label list");
  Tensor out({labels.size(), num_classes});
  auto data = out.data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InvalidArgument("label " + std::to_string(y) + " out of range [0, " + std::to_string(num_classes) +
                            ") at index " + std::to_string(i));
    }
    data[i * num_classes + static_cast<std::size_t>(y)] = 1.0f;
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const Tensor& soft_targets, float temperature) {
  if (logits.ndim() != 2 || soft_targets.shape() != logits.shape()) {
    throw InvalidArgument("cross_entropy: logits " + shape_str(logits.shape()) + " vs targets " +
                          shape_str(soft_targets.shape()));
  }
  if (!(temperature > 0.0f)) throw InvalidArgument("cross_entropy: temperature must be > 0");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  auto z = logits.data();
  auto t = soft_targets.data();
  for (std::size_t r = 0; r < batch; ++r) {
    float row_sum = 0.0f;
    for (std::size_t c = 0; c < classes; ++c) row_sum += t[r * classes + c];
    if (std::abs(row_sum - 1.0f) > 1e-5f) {
      throw InvalidArgument("cross_entropy: target row " + std::to_string(r) + " sums to " +
                            std::to_string(row_sum));
    }
  }
  for (float v : z) {
    if (std::isnan(v)) throw NumericError("cross_entropy: NaN in logits");
  }

  const float inv_t = 1.0f / temperature;
  std::vector<float> probs(batch * classes);
  std::vector<float> target(t.begin(), t.end());
  float total = 0.0f;
  for (std::size_t r = 0; r < batch; ++r) {
    const float* x = z.data() + r * classes;
    float mx = x[0] * inv_t;
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, x[c] * inv_t);
    float sum_exp = 0.0f;
    for (std::size_t c = 0; c < classes; ++c) sum_exp += std::exp(x[c] * inv_t - mx);
    const float lse = mx + std::log(sum_exp);
    float row = 0.0f;
    for (std::size_t c = 0; c < classes; ++c) {
      const float logp = x[c] * inv_t - lse;
      probs[r * classes + c] = std::exp(logp);
      row -= target[r * classes + c] * logp;
    }
    total += row;
  }
  const float inv_b = 1.0f / static_cast<float>(batch);
  return make_result({1}, {total * inv_b}, "cross_entropy", {logits},
                     [batch, classes, inv_t, inv_b, probs = std::move(probs),
                      target = std::move(target)](TensorImpl& self) {
                       float* g = parent_grad(self, 0);
                       if (!g) return;
                       const float up = self.grad[0] * inv_b * inv_t;
                       for (std::size_t r = 0; r < batch; ++r) {
                         float mass = 0.0f;
                         for (std::size_t c = 0; c < classes; ++c) mass += target[r * classes + c];
                         for (std::size_t c = 0; c < classes; ++c) {
                           const std::size_t i = r * classes + c;
                           g[i] += up * (mass * probs[i] - target[i]);
                         }
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, float temperature) {
  if (logits.ndim() != 2 || logits.dim(0) != labels.size()) {
    throw InvalidArgument("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                          shape_str(logits.shape()));
  }
  return cross_entropy(logits, one_hot(labels, logits.dim(1)), temperature);
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.ndim() != 2 || p.shape() != q.shape()) {
    throw InvalidArgument("kl_divergence: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(q.shape()));
  }
  const std::size_t batch = p.dim(0);
  auto pv = p.data(), qv = q.data();
  float total = 0.0f;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const float pc = std::max(pv[i], kLogClampEps);
    const float qc = std::max(qv[i], kLogClampEps);
    total += pv[i] * (std::log(pc) - std::log(qc));
  }
  const float inv_b = 1.0f / static_cast<float>(batch);
  return make_result({1}, {total * inv_b}, "kl_divergence", {p, q}, [inv_b](TensorImpl& self) {
    const auto& pv = self.parents[0]->data;
    const auto& qv = self.parents[1]->data;
    const float up = self.grad[0] * inv_b;
    if (float* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const float log_q = std::log(std::max(qv[i], kLogClampEps));
        const float dp = pv[i] > kLogClampEps ? std::log(pv[i]) + 1.0f : std::log(kLogClampEps);
        g[i] += up * (dp - log_q);
      }
    }
    if (float* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (qv[i] > kLogClampEps) g[i] -= up * pv[i] / qv[i];
      }
    }
  });
}

Tensor cosine_distance_loss(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || a.shape() != b.shape()) {
    throw InvalidArgument("cosine_distance_loss: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
  const std::size_t rows = a.dim(0), d = a.dim(1);
  auto av = a.data(), bv = b.data();
  std::vector<float> na(rows), nb(rows), dots(rows);
  float total = 0.0f;
  for (std::size_t r = 0; r < rows; ++r) {
    float saa = 0.0f, sbb = 0.0f, sab = 0.0f;
    for (std::size_t j = 0; j < d; ++j) {
      const float x = av[r * d + j], y = bv[r * d + j];
      saa += x * x;
      sbb += y * y;
      sab += x * y;
    }
    na[r] = std::sqrt(saa);
    nb[r] = std::sqrt(sbb);
    if (!(na[r] >= kNormFloor) || !(nb[r] >= kNormFloor)) {
      throw NumericError("cosine_distance_loss: zero-norm row " + std::to_string(r));
    }
    dots[r] = sab;
    total += 1.0f - sab / (na[r] * nb[r]);
  }
  const float inv_rows = 1.0f / static_cast<float>(rows);
  return make_result({1}, {total * inv_rows}, "cosine_distance_loss", {a, b},
                     [rows, d, inv_rows, na = std::move(na), nb = std::move(nb),
                      dots = std::move(dots)](TensorImpl& self) {
                       const auto& av = self.parents[0]->data;
                       const auto& bv = self.parents[1]->data;
                       const float up = self.grad[0] * inv_rows;
                       float* ga = parent_grad(self, 0);
                       float* gb = parent_grad(self, 1);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const float inv_ab = 1.0f / (na[r] * nb[r]);
                         const float cos = dots[r] * inv_ab;
                         for (std::size_t j = 0; j < d; ++j) {
                           const float x = av[r * d + j], y = bv[r * d + j];
                           if (ga) ga[r * d + j] -= up * (y * inv_ab - cos * x / (na[r] * na[r]));
                           if (gb) gb[r * d + j] -= up * (x * inv_ab - cos * y / (nb[r] * nb[r]));
                         }
                       }
                     });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument("mse_loss: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto av = a.data(), bv = b.data();
  float total = 0.0f;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const float diff = av[i] - bv[i];
    total += diff * diff;
  }
  const float inv_n = 1.0f / static_cast<float>(av.size());
  return make_result({1}, {total * inv_n}, "mse_loss", {a, b}, [inv_n](TensorImpl& self) {
    const auto& av = self.parents[0]->data;
    const auto& bv = self.parents[1]->data;
    const float up = 2.0f * self.grad[0] * inv_n;
    float* ga = parent_grad(self, 0);
    float* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const float diff = av[i] - bv[i];
      if (ga) ga[i] += up * diff;
      if (gb) gb[i] -= up * diff;
    }
  });
}

}  // namespace sdvit
