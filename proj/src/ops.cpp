#include "sdvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sdvit/errors.hpp"
#include "sdvit/kernels.hpp"

namespace sdvit {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

void check_finite(const Tensor& t, const char* op) {
  for (float v : t.data()) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN in input");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](TensorImpl& self) {
    accumulate_grad(self, 0, self.grad);
    accumulate_grad(self, 1, self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [](TensorImpl& self) {
    accumulate_grad(self, 0, self.grad);
    if (float* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](TensorImpl& self) {
    const auto& xa = self.parents[0]->data;
    const auto& xb = self.parents[1]->data;
    if (float* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * xb[i];
    }
    if (float* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * xa[i];
    }
  });
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.data().begin(), a.data().end());
  for (float& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), "scale", {a}, [factor](TensorImpl& self) {
    if (float* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw InvalidArgument("scale_by: factor must have one element, got " + shape_str(s.shape()));
  const float factor = s.data()[0];
  std::vector<float> out(a.data().begin(), a.data().end());
  for (float& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), "scale_by", {a, s}, [factor](TensorImpl& self) {
    const auto& av = self.parents[0]->data;
    if (float* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
    if (float* g = parent_grad(self, 1)) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * av[i];
      g[0] += acc;
    }
  });
}

Tensor add_broadcast(const Tensor& x, const Tensor& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw InvalidArgument("add_broadcast: " + shape_str(ys) + " is not a suffix of " + shape_str(xs));
  }
  const std::size_t inner = y.numel();
  const std::size_t outer = x.numel() / inner;
  std::vector<float> out(x.data().begin(), x.data().end());
  auto yv = y.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += yv[i];
  return make_result(xs, std::move(out), "add_broadcast", {x, y}, [outer, inner](TensorImpl& self) {
    accumulate_grad(self, 0, self.grad);
    if (float* g = parent_grad(self, 1)) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[o * inner + i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (float v : a.data()) total += v;
  return make_result({1}, {static_cast<float>(total)}, "sum", {a}, [](TensorImpl& self) {
    if (float* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0f / static_cast<float>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw InvalidArgument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes size");
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), "reshape", {a},
                     [](TensorImpl& self) { accumulate_grad(self, 0, self.grad); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw InvalidArgument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(m * n);
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](TensorImpl& self) {
    const float* xa = self.parents[0]->data.data();
    const float* xb = self.parents[1]->data.data();
    if (float* g = parent_grad(self, 0)) kernels::gemm_nt(self.grad.data(), xb, g, m, n, k, true);
    if (float* g = parent_grad(self, 1)) kernels::gemm_tn(xa, self.grad.data(), g, k, m, n, true);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.ndim() != 2 || bias.ndim() != 1 || weight.dim(1) != bias.dim(0) || last_dim(x) != weight.dim(0)) {
    throw InvalidArgument("linear: incompatible shapes x" + shape_str(x.shape()) + " w" +
                          shape_str(weight.shape()) + " b" + shape_str(bias.shape()));
  }
  const std::size_t in = weight.dim(0), outd = weight.dim(1);
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  std::vector<float> out(rows * outd);
  auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * outd);
  kernels::gemm_nn(x.data().data(), weight.data().data(), out.data(), rows, in, outd, true);
  return make_result(std::move(out_shape), std::move(out), "linear", {x, weight, bias},
                     [rows, in, outd](TensorImpl& self) {
                       const float* xv = self.parents[0]->data.data();
                       const float* wv = self.parents[1]->data.data();
                       const float* dy = self.grad.data();
                       if (float* g = parent_grad(self, 0)) kernels::gemm_nt(dy, wv, g, rows, outd, in, true);
                       if (float* g = parent_grad(self, 1)) kernels::gemm_tn(xv, dy, g, in, rows, outd, true);
                       if (float* g = parent_grad(self, 2)) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < outd; ++j) g[j] += dy[r * outd + j];
                       }
                     });
}

Tensor gelu(const Tensor& x) {
  std::vector<float> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5f * xv[i] * (1.0f + std::erf(xv[i] * std::numbers::sqrt2_v<float> * 0.5f));
  }
  return make_result(x.shape(), std::move(out), "gelu", {x}, [](TensorImpl& self) {
    float* g = parent_grad(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->data;
    constexpr float inv_sqrt_2pi = 0.3989422804014327f;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const float v = xv[i];
      const float cdf = 0.5f * (1.0f + std::erf(v * std::numbers::sqrt2_v<float> * 0.5f));
      const float pdf = inv_sqrt_2pi * std::exp(-0.5f * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const std::size_t d = last_dim(x);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw InvalidArgument("layer_norm: gamma/beta must be [" + std::to_string(d) + "]");
  }
  const std::size_t rows = x.numel() / d;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<float> out(x.numel());
  std::vector<float> xhat(x.numel());
  std::vector<float> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = xv.data() + r * d;
    float mu = 0.0f;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<float>(d);
    const float rs = 1.0f / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const float h = (row[j] - mu) * rs;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](TensorImpl& self) {
        const float* dy = self.grad.data();
        const float* gv = self.parents[1]->data.data();
        if (float* gx = parent_grad(self, 0)) {
          const float inv_d = 1.0f / static_cast<float>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            float mean_dh = 0.0f, mean_dh_h = 0.0f;
            for (std::size_t j = 0; j < d; ++j) {
              const float dh = dy[r * d + j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const float dh = dy[r * d + j] * gv[j];
              gx[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
        if (float* gg = parent_grad(self, 1)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += dy[r * d + j] * xhat[r * d + j];
        }
        if (float* gb = parent_grad(self, 2)) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += dy[r * d + j];
        }
      });
}

Tensor dropout(const Tensor& x, float p, std::mt19937_64& rng) {
  if (p < 0.0f || p >= 1.0f) throw InvalidArgument("dropout: p must be in [0, 1)");
  if (p == 0.0f) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const float factor = 1.0f / (1.0f - p);
  std::vector<float> mask(x.numel());
  std::vector<float> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? factor : 0.0f;
    out[i] = xv[i] * mask[i];
  }
  return make_result(x.shape(), std::move(out), "dropout", {x}, [mask = std::move(mask)](TensorImpl& self) {
    if (float* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
    }
  });
}

namespace {

void softmax_rows(std::span<const float> in, std::span<float> out, std::size_t cols, float temperature) {
  const std::size_t rows = in.size() / cols;
  const float inv_t = 1.0f / temperature;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = in.data() + r * cols;
    float* y = out.data() + r * cols;
    float mx = x[0] * inv_t;
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j] * inv_t);
    float z = 0.0f;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] * inv_t - mx);
      z += y[j];
    }
    const float inv_z = 1.0f / z;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv_z;
  }
}

void check_temperature(float temperature, const char* op) {
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw InvalidArgument(std::string(op) + ": temperature must be > 0, got " + std::to_string(temperature));
  }
}

}  // namespace

Tensor softmax(const Tensor& logits, float temperature) {
  check_temperature(temperature, "softmax");
  check_finite(logits, "softmax");
  const std::size_t cols = last_dim(logits);
  std::vector<float> out(logits.numel());
  softmax_rows(logits.data(), out, cols, temperature);
  const float inv_t = 1.0f / temperature;
  return make_result(logits.shape(), std::move(out), "softmax", {logits}, [cols, inv_t](TensorImpl& self) {
    float* g = parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.data;
    const std::size_t rows = y.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      float dot = 0.0f;
      for (std::size_t j = 0; j < cols; ++j) dot += self.grad[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        g[r * cols + j] += inv_t * y[r * cols + j] * (self.grad[r * cols + j] - dot);
      }
    }
  });
}

Tensor log_softmax(const Tensor& logits, float temperature) {
  check_temperature(temperature, "log_softmax");
  check_finite(logits, "log_softmax");
  const std::size_t cols = last_dim(logits);
  const std::size_t rows = logits.numel() / cols;
  const float inv_t = 1.0f / temperature;
  auto xv = logits.data();
  std::vector<float> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = xv.data() + r * cols;
    float mx = x[0] * inv_t;
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j] * inv_t);
    float z = 0.0f;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(x[j] * inv_t - mx);
    const float lse = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = x[j] * inv_t - lse;
  }
  return make_result(logits.shape(), std::move(out), "log_softmax", {logits}, [cols, inv_t](TensorImpl& self) {
    float* g = parent_grad(self, 0);
    if (!g) return;
    const std::size_t rows = self.data.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      float gsum = 0.0f;
      for (std::size_t j = 0; j < cols; ++j) gsum += self.grad[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        const float p = std::exp(self.data[r * cols + j]);
        g[r * cols + j] += inv_t * (self.grad[r * cols + j] - p * gsum);
      }
    }
  });
}

Tensor prepend_token(const Tensor& cls, const Tensor& patches) {
  if (patches.ndim() != 3 || cls.shape() != Shape{patches.dim(2)}) {
    throw InvalidArgument("prepend_token: cls " + shape_str(cls.shape()) + " vs patches " +
                          shape_str(patches.shape()));
  }
  const std::size_t b = patches.dim(0), p = patches.dim(1), d = patches.dim(2);
  std::vector<float> out(b * (p + 1) * d);
  auto cv = cls.data();
  auto pv = patches.data();
  for (std::size_t s = 0; s < b; ++s) {
    float* dst = out.data() + s * (p + 1) * d;
    std::copy(cv.begin(), cv.end(), dst);
    std::copy(pv.begin() + s * p * d, pv.begin() + (s + 1) * p * d, dst + d);
  }
  return make_result({b, p + 1, d}, std::move(out), "prepend_token", {cls, patches}, [b, p, d](TensorImpl& self) {
    const float* dy = self.grad.data();
    if (float* g = parent_grad(self, 0)) {
      for (std::size_t s = 0; s < b; ++s)
        for (std::size_t j = 0; j < d; ++j) g[j] += dy[s * (p + 1) * d + j];
    }
    if (float* g = parent_grad(self, 1)) {
      for (std::size_t s = 0; s < b; ++s)
        for (std::size_t i = 0; i < p * d; ++i) g[s * p * d + i] += dy[s * (p + 1) * d + d + i];
    }
  });
}

Tensor select_token(const Tensor& x, std::size_t token) {
  if (x.ndim() != 3 || token >= x.dim(1)) {
    throw InvalidArgument("select_token: token " + std::to_string(token) + " invalid for " + shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  std::vector<float> out(b * d);
  auto xv = x.data();
  for (std::size_t s = 0; s < b; ++s) {
    std::copy_n(xv.begin() + (s * t + token) * d, d, out.begin() + s * d);
  }
  return make_result({b, d}, std::move(out), "select_token", {x}, [b, t, d, token](TensorImpl& self) {
    if (float* g = parent_grad(self, 0)) {
      for (std::size_t s = 0; s < b; ++s)
        for (std::size_t j = 0; j < d; ++j) g[(s * t + token) * d + j] += self.grad[s * d + j];
    }
  });
}

AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t num_heads) {
  if (q.ndim() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw InvalidArgument("multi_head_attention: q/k/v must share a [B,T,D] shape");
  }
  const std::size_t b = q.dim(0), t = q.dim(1), d = q.dim(2);
  if (num_heads == 0 || d % num_heads != 0) {
    throw InvalidArgument("multi_head_attention: hidden dim " + std::to_string(d) + " not divisible by heads " +
                          std::to_string(num_heads));
  }
  const std::size_t h = num_heads, dh = d / h;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  auto qv = q.data(), kv = k.data(), vv = v.data();
  std::vector<float> probs(b * h * t * t);
  std::vector<float> out(b * t * d, 0.0f);
  std::vector<float> scores(t);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t hh = 0; hh < h; ++hh) {
      for (std::size_t i = 0; i < t; ++i) {
        const float* qi = qv.data() + (s * t + i) * d + hh * dh;
        float mx = -INFINITY;
        for (std::size_t j = 0; j < t; ++j) {
          const float* kj = kv.data() + (s * t + j) * d + hh * dh;
          float dot = 0.0f;
          for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * kj[e];
          scores[j] = dot * inv_sqrt;
          mx = std::max(mx, scores[j]);
        }
        float z = 0.0f;
        for (std::size_t j = 0; j < t; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        float* prow = probs.data() + ((s * h + hh) * t + i) * t;
        float* oi = out.data() + (s * t + i) * d + hh * dh;
        for (std::size_t j = 0; j < t; ++j) {
          prow[j] = scores[j] / z;
          const float* vj = vv.data() + (s * t + j) * d + hh * dh;
          for (std::size_t e = 0; e < dh; ++e) oi[e] += prow[j] * vj[e];
        }
      }
    }
  }
  Tensor weights({b, h, t, t}, probs);
  Tensor output = make_result(
      q.shape(), std::move(out), "multi_head_attention", {q, k, v},
      [b, t, d, h, dh, inv_sqrt, probs = std::move(probs)](TensorImpl& self) {
        const float* qv = self.parents[0]->data.data();
        const float* kv = self.parents[1]->data.data();
        const float* vv = self.parents[2]->data.data();
        float* gq = parent_grad(self, 0);
        float* gk = parent_grad(self, 1);
        float* gv = parent_grad(self, 2);
        const float* dy = self.grad.data();
        std::vector<float> dp(t);
        for (std::size_t s = 0; s < b; ++s) {
          for (std::size_t hh = 0; hh < h; ++hh) {
            for (std::size_t i = 0; i < t; ++i) {
              const float* prow = probs.data() + ((s * h + hh) * t + i) * t;
              const float* dyi = dy + (s * t + i) * d + hh * dh;
              float dot = 0.0f;
              for (std::size_t j = 0; j < t; ++j) {
                const float* vj = vv + (s * t + j) * d + hh * dh;
                float acc = 0.0f;
                for (std::size_t e = 0; e < dh; ++e) acc += dyi[e] * vj[e];
                dp[j] = acc;
                dot += acc * prow[j];
                if (gv) {
                  float* gvj = gv + (s * t + j) * d + hh * dh;
                  for (std::size_t e = 0; e < dh; ++e) gvj[e] += prow[j] * dyi[e];
                }
              }
              const float* qi = qv + (s * t + i) * d + hh * dh;
              float* gqi = gq ? gq + (s * t + i) * d + hh * dh : nullptr;
              for (std::size_t j = 0; j < t; ++j) {
                const float ds = prow[j] * (dp[j] - dot) * inv_sqrt;
                const float* kj = kv + (s * t + j) * d + hh * dh;
                if (gqi) {
                  for (std::size_t e = 0; e < dh; ++e) gqi[e] += ds * kj[e];
                }
                if (gk) {
                  float* gkj = gk + (s * t + j) * d + hh * dh;
                  for (std::size_t e = 0; e < dh; ++e) gkj[e] += ds * qi[e];
                }
              }
            }
          }
        }
      });
  return {std::move(output), std::move(weights)};
}

}  // namespace sdvit
