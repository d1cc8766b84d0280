#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sdvit/ops.hpp"
#include "sdvit/tensor.hpp"

namespace sdvit::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = dist(rng);
  return t;
}

// sum(y * w) with a fixed positive weight per element, so every output
// element carries a distinct, non-vanishing upstream gradient.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  return sum(mul(y, random_tensor(y.shape(), seed, 0.5f, 1.5f)));
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data(), y = b.data();
  return std::equal(x.begin(), x.end(), y.begin());
}

}  // namespace sdvit::testing
